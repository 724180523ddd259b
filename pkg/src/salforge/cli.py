"""Command-line surface. Mirrors the HTTP endpoints for scripted use and
adds report commands that render CSV plus PNG figures to a directory."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .config import build_backend, load_bundle, load_config
from .errors import ForgeError

DEFAULT_SWEEP_VALUES = "0.5,0.65,0.8,1.0,1.25,1.55,2.0"


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _load_models(ctx, critic_path=None, attenuate=None, amplify=None):
    """Config-file bundle with per-flag checkpoint overrides."""
    from dataclasses import replace

    config = ctx.obj["config"]
    overrides = {}
    if critic_path:
        overrides["critic_path"] = str(critic_path)
    estimators = dict(config.estimator_paths)
    if attenuate:
        estimators["attenuate"] = str(attenuate)
    if amplify:
        estimators["amplify"] = str(amplify)
    overrides["estimator_paths"] = estimators
    return load_bundle(replace(config, **overrides))


def _http(method: str, url: str, **kwargs):
    import httpx

    response = httpx.request(method, url, timeout=600.0, **kwargs)
    try:
        body = response.json()
    except ValueError:
        body = {"raw": response.text}
    _echo_json(body)
    if response.status_code >= 400:
        sys.exit(1)
    return body


class _Group(click.Group):
    # domain errors become clean one-line messages, not tracebacks
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ForgeError as exc:
            raise click.ClickException(str(exc)) from exc


@click.group(cls=_Group)
@click.option("--config", "config_path", type=click.Path(), envvar="FORGE_CONFIG",
              default=None, help="TOML or JSON config file.")
@click.pass_context
def main(ctx, config_path):
    """Saliency-guided regional photo editing toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = load_config(config_path)


# ---- data ------------------------------------------------------------------


@main.group()
def corpus():
    """Toy corpus management."""


@corpus.command("build")
@click.option("--out", required=True, type=click.Path())
@click.option("--count", default=60, show_default=True)
@click.option("--size", default=96, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--face-fraction", default=0.2, show_default=True)
@click.option("--maskless-fraction", default=0.1, show_default=True)
def corpus_build(out, count, size, seed, face_fraction, maskless_fraction):
    from .corpus import build_toy_corpus

    rows = build_toy_corpus(
        out,
        n_images=count,
        size=size,
        seed=seed,
        face_fraction=face_fraction,
        maskless_fraction=maskless_fraction,
    )
    images = len({r["image"] for r in rows})
    _echo_json({"corpus": str(out), "images": images, "regions": len(rows)})


@main.group()
def dataset():
    """Training-sample datasets."""


@dataset.command("gen")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--count", default=100, show_default=True, help="Samples per class.")
@click.option("--seed", default=0, show_default=True)
def dataset_gen(corpus_dir, out, count, seed):
    from .sampling import generate_dataset, write_dataset

    manifest = write_dataset(generate_dataset(corpus_dir, count, rng_seed=seed), out)
    _echo_json({"dataset": str(out), "samples": manifest["total"]})


# ---- training ----------------------------------------------------------------


@main.group()
def critic():
    """Realism critic training."""


@critic.command("train")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--report-dir", type=click.Path(), default=None)
@click.option("--resolution", type=int, default=None)
@click.option("--base-width", type=int, default=None)
@click.option("--depth", type=int, default=None)
@click.option("--mlp-hidden", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", "rng_seed", type=int, default=None)
def critic_train(dataset_dir, out, report_dir, **kwargs):
    from .critic import CriticConfig, save_critic, train_critic
    from .report import write_training_report

    config = CriticConfig(**{k: v for k, v in kwargs.items() if v is not None})
    model, report = train_critic(dataset_dir, config)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_critic(out, model)
    written = []
    if report_dir:
        written = [str(p) for p in write_training_report(report, report_dir, "critic")]
    _echo_json(
        {
            "checkpoint": str(out),
            "final_auc": report.final_auc,
            "separation": report.separation,
            "wall_time_s": report.wall_time_s,
            "reports": written,
        }
    )


@main.group()
def estimator():
    """Parameter estimator training and inspection."""


@estimator.command("train")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--critic", "critic_path", required=True, type=click.Path(exists=True))
@click.option("--direction", type=click.Choice(["attenuate", "amplify"]), required=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--report-dir", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice(["fixed_critic", "adversarial"]), default=None)
@click.option("--base-level", type=float, default=None, help="Analytic saliency floor.")
@click.option("--resolution", type=int, default=None)
@click.option("--width-mult", type=float, default=None)
@click.option("--decoder-hidden", type=str, default=None, help="e.g. 64,32")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--weight-decay", type=float, default=None)
@click.option("--seed", "rng_seed", type=int, default=None)
@click.pass_context
def estimator_train(ctx, corpus_dir, critic_path, direction, out, report_dir,
                    mode, base_level, decoder_hidden, **kwargs):
    from .critic import load_critic
    from .estimator import EstimatorConfig, save_estimator, train_estimator
    from .report import write_training_report

    fields = {k: v for k, v in kwargs.items() if v is not None}
    if decoder_hidden:
        fields["decoder_hidden"] = tuple(int(v) for v in decoder_hidden.split(","))
    config = EstimatorConfig(direction=direction, **fields)

    saliency_cfg = dict(ctx.obj["config"].saliency)
    if base_level is not None:
        saliency_cfg = {"backend": "analytic", "base_level": base_level}
    objective = ctx.obj["config"].objective
    if mode:
        objective = objective.with_mode(mode)

    model, report = train_estimator(
        corpus_dir,
        load_critic(critic_path),
        build_backend(saliency_cfg),
        config,
        objective,
    )
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_estimator(out, model)
    written = []
    if report_dir:
        written = [str(p) for p in write_training_report(report, report_dir, "estimator")]
    _echo_json(
        {
            "checkpoint": str(out),
            "direction": direction,
            "mode": objective.mode,
            "holdout": report.holdout,
            "diverged": report.diverged,
            "wall_time_s": report.wall_time_s,
            "reports": written,
        }
    )


@estimator.command("dist")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--bins", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
def estimator_dist(checkpoint, corpus_dir, out_dir, bins, seed):
    from .estimator import export_param_distribution, load_estimator
    from .report import write_param_distribution

    model = load_estimator(checkpoint)
    dist = export_param_distribution(model, corpus_dir, bins=bins, rng_seed=seed)
    paths = write_param_distribution(dist, out_dir)
    _echo_json({"direction": dist.direction, "reports": [str(p) for p in paths]})


# ---- inference ---------------------------------------------------------------


@main.command()
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--mask", required=True, type=click.Path(exists=True))
@click.option("--critic", "critic_path", type=click.Path(exists=True), default=None)
@click.pass_context
def score(ctx, image, mask, critic_path):
    """Realism score of a masked image."""
    from .critic import score as critic_score
    from .io import load_image, load_mask

    bundle = _load_models(ctx, critic_path=critic_path)
    if bundle.critic is None:
        raise click.UsageError("no critic configured; pass --critic or a config file")
    _echo_json({"r": critic_score(load_image(image), load_mask(mask), bundle.critic)})


@main.command()
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--backend", "backend_name", default=None)
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--base-level", type=float, default=None)
@click.pass_context
def saliency(ctx, image, out, backend_name, checkpoint, base_level):
    """Export a saliency heatmap PNG."""
    from .io import load_image, save_saliency_png
    from .saliency import predict

    cfg = dict(ctx.obj["config"].saliency)
    if backend_name:
        cfg = {"backend": backend_name}
    if checkpoint:
        cfg["checkpoint"] = checkpoint
    if base_level is not None:
        cfg["base_level"] = base_level
    sal = predict(load_image(image), build_backend(cfg))
    save_saliency_png(sal, out)
    _echo_json({"out": str(out), "min": float(sal.values.min()), "max": float(sal.values.max())})


@main.command()
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--mask", required=True, type=click.Path(exists=True))
@click.option("--direction", type=click.Choice(["attenuate", "amplify"]), default="attenuate")
@click.option("--perm", default=None, help="Comma-separated operator order.")
@click.option("--estimator-attenuate", type=click.Path(exists=True), default=None)
@click.option("--estimator-amplify", type=click.Path(exists=True), default=None)
@click.pass_context
def estimate(ctx, image, mask, direction, perm, estimator_attenuate, estimator_amplify):
    """Predict edit parameters without applying them."""
    from .estimator import estimate_params
    from .io import load_image, load_mask
    from .types import EditPermutation

    bundle = _load_models(ctx, attenuate=estimator_attenuate, amplify=estimator_amplify)
    order = EditPermutation(tuple(perm.split(","))) if perm else EditPermutation.canonical()
    params = estimate_params(
        load_image(image), load_mask(mask), order, bundle.estimator_for(direction)
    )
    _echo_json({"direction": direction, "perm": list(order.order), "params": params.present()})


def _plan_document(plan, masks_by_ref) -> dict:
    from .io import mask_to_b64

    doc = plan.to_json()
    doc["masks"] = {ref: mask_to_b64(m) for ref, m in masks_by_ref.items()}
    return doc


@main.command()
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--mask", required=True, type=click.Path(exists=True))
@click.option("--direction", type=click.Choice(["attenuate", "amplify"]), default="attenuate")
@click.option("--strategy", type=click.Choice(["random", "best_saliency", "best_realism"]),
              default="random", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--step-out", type=click.Path(), default=None, help="Write the step record JSON.")
@click.option("--critic", "critic_path", type=click.Path(exists=True), default=None)
@click.option("--estimator-attenuate", type=click.Path(exists=True), default=None)
@click.option("--estimator-amplify", type=click.Path(exists=True), default=None)
@click.pass_context
def edit(ctx, image, mask, direction, strategy, seed, out, step_out,
         critic_path, estimator_attenuate, estimator_amplify):
    """Estimate and apply one regional edit."""
    from .io import load_image, load_mask, save_image
    from .pipeline import edit_region

    bundle = _load_models(ctx, critic_path=critic_path,
                          attenuate=estimator_attenuate, amplify=estimator_amplify)
    result = edit_region(load_image(image), load_mask(mask), direction, strategy,
                         bundle, rng_seed=seed)
    save_image(result.image, out)
    if step_out:
        Path(step_out).write_text(json.dumps(result.step.to_json(), indent=2))
    _echo_json({"out": str(out), "delta_r": result.step.delta_r,
                "s_change": result.step.s_change, "perm": list(result.step.perm.order)})


@main.command("edit-multi")
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help='JSON list of {"mask": path, "direction": ...}.')
@click.option("--strategy", type=click.Choice(["random", "best_saliency", "best_realism"]),
              default="random", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--plan-out", required=True, type=click.Path())
@click.option("--critic", "critic_path", type=click.Path(exists=True), default=None)
@click.option("--estimator-attenuate", type=click.Path(exists=True), default=None)
@click.option("--estimator-amplify", type=click.Path(exists=True), default=None)
@click.pass_context
def edit_multi_cmd(ctx, image, spec_path, strategy, seed, out, plan_out,
                   critic_path, estimator_attenuate, estimator_amplify):
    """Apply a sequence of regional edits and export the replayable plan."""
    from .io import load_image, load_mask, mask_hash, save_image
    from .pipeline import edit_multi

    bundle = _load_models(ctx, critic_path=critic_path,
                          attenuate=estimator_attenuate, amplify=estimator_amplify)
    spec = json.loads(Path(spec_path).read_text())
    if not isinstance(spec, list):
        raise click.UsageError("spec must be a JSON list")
    pairs = []
    masks_by_ref = {}
    for entry in spec:
        m = load_mask(entry["mask"])
        masks_by_ref[mask_hash(m)] = m
        pairs.append((m, entry.get("direction", "attenuate")))
    result = edit_multi(load_image(image), pairs, strategy, bundle, rng_seed=seed)
    save_image(result.image, out)
    Path(plan_out).write_text(json.dumps(_plan_document(result.plan, masks_by_ref), indent=2))
    _echo_json({"out": str(out), "plan": str(plan_out), "steps": len(result.plan.steps)})


@main.command()
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--masks-dir", type=click.Path(exists=True), default=None,
              help="Directory of <ref>.png masks when the plan has none embedded.")
def replay(image, plan_path, out, masks_dir):
    """Re-run an exported plan bit-exactly."""
    from .io import load_image, load_mask, mask_from_b64, save_image
    from .pipeline import replay_plan
    from .types import EditPlan

    doc = json.loads(Path(plan_path).read_text())
    plan = EditPlan.from_json(doc)
    embedded = {ref: mask_from_b64(text) for ref, text in doc.get("masks", {}).items()}

    def resolve(ref):
        if ref in embedded:
            return embedded[ref]
        if masks_dir:
            path = Path(masks_dir) / f"{ref}.png"
            if path.exists():
                return load_mask(path)
        return None

    final = replay_plan(load_image(image), plan, resolve)
    save_image(final, out)
    _echo_json({"out": str(out), "steps": len(plan.steps)})


# ---- reports -----------------------------------------------------------------


@main.command()
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--mask", required=True, type=click.Path(exists=True))
@click.option("--critic", "critic_path", type=click.Path(exists=True), default=None)
@click.option("--operator", "operators", multiple=True,
              type=click.Choice(["exposure", "saturation", "color_curve", "white_balance"]))
@click.option("--values", default=DEFAULT_SWEEP_VALUES, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_context
def sweep(ctx, image, mask, critic_path, operators, values, out_dir):
    """Sweep operator values and chart the critic's response."""
    from .critic import realism_sweep
    from .io import load_image, load_mask
    from .report import write_sweep_report

    bundle = _load_models(ctx, critic_path=critic_path)
    if bundle.critic is None:
        raise click.UsageError("no critic configured; pass --critic or a config file")
    img, m = load_image(image), load_mask(mask)
    ops = operators or ("exposure", "saturation", "color_curve", "white_balance")
    results = [realism_sweep(img, m, op, _floats(values), bundle.critic) for op in ops]
    paths = write_sweep_report(results, out_dir)
    _echo_json({"reports": [str(p) for p in paths]})


@main.command()
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--mask", required=True, type=click.Path(exists=True))
@click.option("--direction", type=click.Choice(["attenuate", "amplify"]), default="attenuate")
@click.option("--strategy", type=click.Choice(["random", "best_saliency", "best_realism"]),
              default="random", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--params", default="saturation,exposure", show_default=True)
@click.option("--span", default=0.5, show_default=True, help="Max absolute offset.")
@click.option("--cells", default=5, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--critic", "critic_path", type=click.Path(exists=True), default=None)
@click.option("--estimator-attenuate", type=click.Path(exists=True), default=None)
@click.option("--estimator-amplify", type=click.Path(exists=True), default=None)
@click.pass_context
def heatmap(ctx, image, mask, direction, strategy, seed, params, span, cells,
            out_dir, critic_path, estimator_attenuate, estimator_amplify):
    """Estimate an edit, then map dR over offsets of two parameters."""
    from .io import load_image, load_mask
    from .pipeline import edit_region, optimality_heatmap
    from .report import write_heatmap_report

    bundle = _load_models(ctx, critic_path=critic_path,
                          attenuate=estimator_attenuate, amplify=estimator_amplify)
    img, m = load_image(image), load_mask(mask)
    result = edit_region(img, m, direction, strategy, bundle, rng_seed=seed)
    pair = tuple(params.split(","))
    if len(pair) != 2:
        raise click.UsageError("--params must name exactly two operators")
    offsets = tuple(np.linspace(-span, span, cells))
    hm = optimality_heatmap(img, m, result.step, bundle.critic, pair, offsets, offsets)
    paths = write_heatmap_report(hm, out_dir)
    _echo_json(
        {
            "reports": [str(p) for p in paths],
            "center_delta_r": hm.delta_r[hm.center],
            "center_in_top_quartile": hm.center_in_top_quartile(),
        }
    )


# ---- service -----------------------------------------------------------------


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service."""
    from dataclasses import replace

    from .service import serve as run_service

    config = ctx.obj["config"]
    overrides = {}
    if host:
        overrides["host"] = host
    if port:
        overrides["port"] = port
    run_service(replace(config, **overrides))


@main.group()
def session():
    """Talk to a running service's session API."""


_URL = click.option("--url", default="http://127.0.0.1:8321", show_default=True)


@session.command("new")
@_URL
@click.option("--image", required=True, type=click.Path(exists=True))
def session_new(url, image):
    from .io import image_to_b64, load_image

    _http("POST", f"{url}/sessions", json={"image": image_to_b64(load_image(image))})


@session.command("step")
@_URL
@click.option("--id", "session_id", required=True)
@click.option("--mask", required=True, type=click.Path(exists=True))
@click.option("--direction", type=click.Choice(["attenuate", "amplify"]), default="attenuate")
@click.option("--strategy", type=click.Choice(["random", "best_saliency", "best_realism"]),
              default="random", show_default=True)
@click.option("--seed", default=0, show_default=True)
def session_step(url, session_id, mask, direction, strategy, seed):
    from .io import load_mask, mask_to_b64

    _http(
        "POST",
        f"{url}/sessions/{session_id}/step",
        json={
            "mask": mask_to_b64(load_mask(mask)),
            "direction": direction,
            "strategy": strategy,
            "seed": seed,
        },
    )


@session.command("undo")
@_URL
@click.option("--id", "session_id", required=True)
def session_undo(url, session_id):
    _http("POST", f"{url}/sessions/{session_id}/undo")


@session.command("show")
@_URL
@click.option("--id", "session_id", required=True)
@click.option("--out", type=click.Path(), default=None, help="Write the current image PNG.")
def session_show(url, session_id, out):
    body = _http("GET", f"{url}/sessions/{session_id}")
    if out and body.get("current_png"):
        from .io import b64_decode

        Path(out).write_bytes(b64_decode(body["current_png"]))


@main.group()
def job():
    """Talk to a running service's job API."""


@job.command("submit")
@_URL
@click.option("--kind", required=True,
              type=click.Choice(["critic_train", "estimator_train", "dataset_gen"]))
@click.option("--payload", "payload_path", required=True, type=click.Path(exists=True),
              help="JSON file with the job configuration.")
def job_submit(url, kind, payload_path):
    config = json.loads(Path(payload_path).read_text())
    _http("POST", f"{url}/jobs", json={"kind": kind, "config": config})


@job.command("status")
@_URL
@click.option("--id", "job_id", required=True)
def job_status(url, job_id):
    _http("GET", f"{url}/jobs/{job_id}")


@job.command("cancel")
@_URL
@click.option("--id", "job_id", required=True)
def job_cancel(url, job_id):
    _http("POST", f"{url}/jobs/{job_id}/cancel")


if __name__ == "__main__":
    main()
