import { StudioClient } from "./api.js";
import { StudioApp } from "./studio.js";

// service base URL: ?service=... beats the default
const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8321";

new StudioApp(document, new StudioClient(baseUrl));
