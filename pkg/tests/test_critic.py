"""Realism critic: config validation, scoring semantics, training mechanics,
checkpoint round trips, and value sweeps. Uses a deliberately tiny model;
quality thresholds live in the acceptance suite.
"""
import numpy as np
import pytest

from salforge.critic import (
    CriticConfig,
    RealismCritic,
    delta_realism,
    load_critic,
    realism_sweep,
    roc_auc,
    save_critic,
    score,
    train_critic,
)
from salforge.errors import ConfigurationError, InputError, InvalidParameterError, ShapeError
from salforge.types import ImageGrid, RegionMask


class TestConfig:
    def test_defaults_valid(self):
        CriticConfig()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"resolution": 8},
            {"resolution": 48, "depth": 5},  # 48 % 32 != 0
            {"batch_size": 7},
            {"batch_size": 0},
            {"epochs": 0},
            {"holdout_fraction": 0.0},
            {"holdout_fraction": 0.5},
            {"lr": 0.0},
            {"dropout": 1.0},
            {"weight_decay": -1e-4},
            {"base_width": 2},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigurationError):
            CriticConfig(**kwargs)

    def test_dict_round_trip(self):
        config = CriticConfig(resolution=32, depth=2, base_width=8, epochs=3)
        assert CriticConfig.from_dict(config.to_dict()) == config


@pytest.fixture(scope="module")
def model():
    return RealismCritic(CriticConfig(resolution=32, base_width=8, depth=2, mlp_hidden=16))


class TestScoring:
    def test_score_is_deterministic(self, model, make_image, make_mask):
        img, mask = make_image(32, 32), make_mask(32, 32, "disk")
        assert score(img, mask, model) == score(img, mask, model)

    def test_identity_delta_is_exactly_zero(self, model, make_image, make_mask):
        img, mask = make_image(32, 32), make_mask(32, 32, "disk")
        assert delta_realism(img, img, mask, model) == 0.0

    def test_input_resized_to_resolution(self, model, make_image, make_mask):
        # any spatial size is accepted; scores differ but evaluation runs
        img, mask = make_image(48, 48), make_mask(48, 48, "half")
        assert np.isfinite(score(img, mask, model))

    def test_shape_mismatch_rejected(self, model, make_image, make_mask):
        with pytest.raises(ShapeError):
            score(make_image(32, 32), make_mask(16, 16), model)

    def test_mask_influences_score(self, model, make_image, make_mask):
        img = make_image(32, 32)
        s_full = score(img, make_mask(32, 32, "full"), model)
        s_disk = score(img, make_mask(32, 32, "disk"), model)
        assert s_full != s_disk


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([2.0, 3.0], [0.0, 1.0]) == 1.0

    def test_reversed_separation(self):
        assert roc_auc([0.0, 1.0], [2.0, 3.0]) == 0.0

    def test_ties_count_half(self):
        assert roc_auc([1.0], [1.0]) == 0.5

    def test_random_interleave(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=500)
        b = rng.normal(size=500)
        assert abs(roc_auc(a, b) - 0.5) < 0.06


class TestTraining:
    def test_report_shape(self, tiny_critic):
        model, report = tiny_critic
        assert report.n_train > 0 and report.n_holdout > 0
        assert len(report.epochs) == model.config.epochs
        for row in report.epochs:
            assert {"epoch", "train_loss", "holdout_auc"} <= set(row)
        assert 0.0 <= report.final_auc <= 1.0
        assert report.wall_time_s > 0

    def test_needs_both_classes(self, tiny_dataset_dir):
        from salforge.sampling import load_dataset

        samples = [s for s in load_dataset(tiny_dataset_dir) if s.label == "real"]
        with pytest.raises(InputError):
            train_critic(samples, CriticConfig(resolution=32, depth=2, base_width=8, epochs=1))

    def test_progress_callback_monotone(self, tiny_dataset_dir):
        seen = []
        train_critic(
            tiny_dataset_dir,
            CriticConfig(resolution=32, base_width=8, depth=2, mlp_hidden=16, epochs=2),
            progress=seen.append,
        )
        assert seen == sorted(seen) and seen[-1] == 1.0


class TestCheckpoint:
    def test_round_trip_scores_match(self, tiny_critic, tmp_path, make_image, make_mask):
        model, _ = tiny_critic
        path = tmp_path / "critic.ckpt"
        save_critic(path, model)
        loaded = load_critic(path)
        img, mask = make_image(32, 32), make_mask(32, 32, "disk")
        assert score(img, mask, loaded) == score(img, mask, model)

    def test_missing_file_raises(self, tmp_path):
        from salforge.errors import CheckpointError

        with pytest.raises(CheckpointError):
            load_critic(tmp_path / "absent.ckpt")

    def test_wrong_kind_rejected(self, tiny_estimators, tmp_path):
        from salforge.errors import CheckpointError
        from salforge.estimator import save_estimator

        path = tmp_path / "est.ckpt"
        save_estimator(path, tiny_estimators["attenuate"])
        with pytest.raises(CheckpointError):
            load_critic(path)


class TestSweep:
    def test_identity_value_gives_zero_delta(self, model, make_image, make_mask):
        img, mask = make_image(32, 32), make_mask(32, 32, "disk")
        res = realism_sweep(img, mask, "exposure", [0.8, 1.0, 1.2], model)
        assert res.delta_r[res.values.index(1.0)] == 0.0

    def test_records_base_score(self, model, make_image, make_mask):
        img, mask = make_image(32, 32), make_mask(32, 32, "disk")
        res = realism_sweep(img, mask, "saturation", [0.5], model)
        assert res.r_base == score(img, mask, model)

    def test_unknown_operator(self, model, make_image, make_mask):
        with pytest.raises(InvalidParameterError):
            realism_sweep(make_image(32, 32), make_mask(32, 32), "vignette", [1.0], model)

    def test_out_of_range_value(self, model, make_image, make_mask):
        with pytest.raises(InvalidParameterError):
            realism_sweep(make_image(32, 32), make_mask(32, 32), "exposure", [-1.0], model)

    def test_empty_grid(self, model, make_image, make_mask):
        with pytest.raises(InvalidParameterError):
            realism_sweep(make_image(32, 32), make_mask(32, 32), "exposure", [], model)
