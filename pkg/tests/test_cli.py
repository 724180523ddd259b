"""Command-line interface: every subcommand run against tiny checkpoints in
a temp directory. Service subcommands are exercised by routing httpx into an
in-process test client.
"""
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from salforge.cli import main


@pytest.fixture(scope="module")
def env(tiny_bundle, tiny_corpus_dir, tmp_path_factory):
    """Checkpoints on disk plus a config file pointing at them."""
    from salforge.corpus import load_corpus_index
    from salforge.critic import save_critic
    from salforge.estimator import save_estimator

    root = tmp_path_factory.mktemp("cli_env")
    save_critic(root / "critic.ckpt", tiny_bundle.critic)
    save_estimator(root / "att.ckpt", tiny_bundle.estimators["attenuate"])
    save_estimator(root / "amp.ckpt", tiny_bundle.estimators["amplify"])
    (root / "cfg.json").write_text(json.dumps({
        "models": {"critic": str(root / "critic.ckpt"),
                   "estimators": {"attenuate": str(root / "att.ckpt"),
                                  "amplify": str(root / "amp.ckpt")}},
        "saliency": {"backend": "analytic", "base_level": 0.2},
    }))
    item = next(it for it in load_corpus_index(tiny_corpus_dir) if it.mask_path)
    return {"root": root, "config": str(root / "cfg.json"),
            "image": str(item.image_path), "mask": str(item.mask_path)}


@pytest.fixture
def runner():
    return CliRunner()


def invoke_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return json.loads(result.output)


class TestData:
    def test_corpus_build(self, runner, tmp_path):
        out = invoke_ok(runner, ["corpus", "build", "--out", str(tmp_path / "c"),
                                 "--count", "4", "--size", "32", "--seed", "1"])
        assert out["images"] == 4
        assert (tmp_path / "c" / "meta.jsonl").exists()

    def test_dataset_gen(self, runner, tiny_corpus_dir, tmp_path):
        out = invoke_ok(runner, ["dataset", "gen", "--corpus", str(tiny_corpus_dir),
                                 "--out", str(tmp_path / "ds"), "--count", "3"])
        assert out["samples"] == 6  # 3 per class, two classes
        assert (tmp_path / "ds" / "manifest.json").exists()


class TestTrainCommands:
    def test_critic_train_writes_checkpoint_and_report(self, runner, tiny_dataset_dir,
                                                       tmp_path):
        out = invoke_ok(runner, [
            "critic", "train", "--dataset", str(tiny_dataset_dir),
            "--out", str(tmp_path / "critic.ckpt"), "--report-dir", str(tmp_path / "rep"),
            "--resolution", "32", "--base-width", "8", "--depth", "2",
            "--mlp-hidden", "16", "--epochs", "1",
        ])
        assert Path(out["checkpoint"]).exists()
        assert 0.0 <= out["final_auc"] <= 1.0
        assert (tmp_path / "rep" / "critic_curves.png").exists()

    def test_estimator_train(self, runner, env, tiny_corpus_dir, tmp_path):
        out = invoke_ok(runner, [
            "estimator", "train", "--corpus", str(tiny_corpus_dir),
            "--critic", str(Path(env["root"]) / "critic.ckpt"),
            "--direction", "attenuate", "--out", str(tmp_path / "e.ckpt"),
            "--resolution", "32", "--width-mult", "0.25", "--decoder-hidden", "16",
            "--epochs", "1", "--base-level", "0.2",
        ])
        assert Path(out["checkpoint"]).exists()
        assert out["mode"] == "fixed_critic"
        assert "direction_aligned_fraction" in out["holdout"]

    def test_estimator_dist(self, runner, env, tiny_corpus_dir, tmp_path):
        out = invoke_ok(runner, [
            "estimator", "dist", "--checkpoint", str(Path(env["root"]) / "att.ckpt"),
            "--corpus", str(tiny_corpus_dir), "--out-dir", str(tmp_path / "d"),
            "--bins", "5",
        ])
        assert out["direction"] == "attenuate"
        assert all(Path(p).exists() for p in out["reports"])


class TestInference:
    def test_score(self, runner, env):
        out = invoke_ok(runner, ["--config", env["config"], "score",
                                 "--image", env["image"], "--mask", env["mask"]])
        assert isinstance(out["r"], float)

    def test_score_without_critic_fails(self, runner, env):
        result = runner.invoke(main, ["score", "--image", env["image"],
                                      "--mask", env["mask"]])
        assert result.exit_code != 0
        assert "critic" in result.output

    def test_saliency(self, runner, env, tmp_path):
        out = invoke_ok(runner, ["--config", env["config"], "saliency",
                                 "--image", env["image"], "--out", str(tmp_path / "s.png")])
        assert Path(out["out"]).exists()
        assert 0.0 <= out["min"] <= out["max"] <= 1.0

    def test_estimate(self, runner, env):
        out = invoke_ok(runner, ["--config", env["config"], "estimate",
                                 "--image", env["image"], "--mask", env["mask"],
                                 "--perm", "saturation,exposure"])
        assert out["perm"] == ["saturation", "exposure"]
        assert set(out["params"]) == {"saturation", "exposure"}

    def test_edit_writes_image_and_step(self, runner, env, tmp_path):
        out = invoke_ok(runner, ["--config", env["config"], "edit",
                                 "--image", env["image"], "--mask", env["mask"],
                                 "--strategy", "best_saliency",
                                 "--out", str(tmp_path / "e.png"),
                                 "--step-out", str(tmp_path / "step.json")])
        assert Path(out["out"]).exists()
        step = json.loads((tmp_path / "step.json").read_text())
        assert step["direction"] == "attenuate"


class TestPlans:
    @pytest.fixture()
    def plan_files(self, runner, env, tmp_path):
        spec = [{"mask": env["mask"], "direction": "attenuate"},
                {"mask": env["mask"], "direction": "amplify"}]
        (tmp_path / "spec.json").write_text(json.dumps(spec))
        out = invoke_ok(runner, ["--config", env["config"], "edit-multi",
                                 "--image", env["image"], "--spec", str(tmp_path / "spec.json"),
                                 "--seed", "5", "--out", str(tmp_path / "multi.png"),
                                 "--plan-out", str(tmp_path / "plan.json")])
        assert out["steps"] == 2
        return tmp_path

    def test_replay_with_embedded_masks(self, runner, env, plan_files):
        from salforge.io import load_image

        out = invoke_ok(runner, ["replay", "--image", env["image"],
                                 "--plan", str(plan_files / "plan.json"),
                                 "--out", str(plan_files / "replayed.png")])
        assert out["steps"] == 2
        a = load_image(plan_files / "multi.png")
        b = load_image(plan_files / "replayed.png")
        assert np.array_equal(a.pixels, b.pixels)

    def test_replay_with_masks_dir(self, runner, env, plan_files):
        from salforge.io import load_image

        doc = json.loads((plan_files / "plan.json").read_text())
        masks = doc.pop("masks")
        (plan_files / "bare.json").write_text(json.dumps(doc))
        masks_dir = plan_files / "masks"
        masks_dir.mkdir()
        from salforge.io import mask_from_b64, save_mask

        for ref, text in masks.items():
            save_mask(mask_from_b64(text), masks_dir / f"{ref}.png")
        out = invoke_ok(runner, ["replay", "--image", env["image"],
                                 "--plan", str(plan_files / "bare.json"),
                                 "--masks-dir", str(masks_dir),
                                 "--out", str(plan_files / "replayed2.png")])
        a = load_image(plan_files / "multi.png")
        b = load_image(plan_files / "replayed2.png")
        assert np.array_equal(a.pixels, b.pixels)

    def test_replay_missing_masks_fails(self, runner, env, plan_files):
        doc = json.loads((plan_files / "plan.json").read_text())
        doc.pop("masks")
        (plan_files / "bare.json").write_text(json.dumps(doc))
        result = runner.invoke(main, ["replay", "--image", env["image"],
                                      "--plan", str(plan_files / "bare.json"),
                                      "--out", str(plan_files / "x.png")])
        assert result.exit_code != 0


class TestReports:
    def test_sweep(self, runner, env, tmp_path):
        out = invoke_ok(runner, ["--config", env["config"], "sweep",
                                 "--image", env["image"], "--mask", env["mask"],
                                 "--operator", "exposure",
                                 "--values", "0.5,1.0,2.0",
                                 "--out-dir", str(tmp_path / "rep")])
        assert {Path(p).name for p in out["reports"]} == {"sweep.csv", "sweep.png"}

    def test_heatmap(self, runner, env, tmp_path):
        out = invoke_ok(runner, ["--config", env["config"], "heatmap",
                                 "--image", env["image"], "--mask", env["mask"],
                                 "--cells", "3", "--span", "0.2",
                                 "--out-dir", str(tmp_path / "rep")])
        assert {Path(p).name for p in out["reports"]} == {"heatmap.csv", "heatmap.png"}
        assert isinstance(out["center_in_top_quartile"], bool)


class TestServiceCommands:
    @pytest.fixture()
    def routed(self, tiny_bundle, tmp_path, monkeypatch):
        """Route the CLI's HTTP calls into an in-process app."""
        import httpx
        from fastapi.testclient import TestClient

        from salforge.config import ForgeConfig
        from salforge.service import create_app
        from salforge.store import Store

        app = create_app(config=ForgeConfig(home=tmp_path), bundle=tiny_bundle,
                         store=Store(tmp_path))
        client = TestClient(app)

        def fake_request(method, url, timeout=None, **kwargs):
            return client.request(method, url, **kwargs)

        monkeypatch.setattr(httpx, "request", fake_request)
        return client

    def test_session_flow(self, runner, env, routed, tmp_path):
        created = invoke_ok(runner, ["session", "new", "--image", env["image"]])
        sid = created["id"]

        stepped = invoke_ok(runner, ["session", "step", "--id", sid,
                                     "--mask", env["mask"],
                                     "--strategy", "best_saliency"])
        assert stepped["active_steps"] == 1

        shown_path = tmp_path / "current.png"
        shown = invoke_ok(runner, ["session", "show", "--id", sid,
                                   "--out", str(shown_path)])
        assert shown["current_ref"] == stepped["current_ref"]
        assert shown_path.exists()

        undone = invoke_ok(runner, ["session", "undo", "--id", sid])
        assert undone["active_steps"] == 0

        result = runner.invoke(main, ["session", "undo", "--id", sid])
        assert result.exit_code == 1  # nothing to undo -> server 409 -> exit 1
        assert "state_conflict" in result.output

    def test_job_flow(self, runner, routed, tiny_corpus_dir, tmp_path):
        payload = tmp_path / "job.json"
        payload.write_text(json.dumps({"corpus_dir": str(tiny_corpus_dir),
                                       "out_dir": str(tmp_path / "ds"),
                                       "count_per_class": 2}))
        created = invoke_ok(runner, ["job", "submit", "--kind", "dataset_gen",
                                     "--payload", str(payload)])
        jid = created["id"]
        import time

        for _ in range(100):
            shown = invoke_ok(runner, ["job", "status", "--id", jid])
            if shown["status"] in ("done", "failed"):
                break
            time.sleep(0.05)
        assert shown["status"] == "done"

        cancelled = invoke_ok(runner, ["job", "cancel", "--id", jid])
        assert cancelled["cancelled"] is False
