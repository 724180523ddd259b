"""Parameter estimator: config validation, permutation conditioning of the
decoders, output bounds, checkpoint round trips, and the distribution export.
"""
import numpy as np
import pytest
import torch

from salforge.errors import CheckpointError, ConfigurationError, StateError
from salforge.estimator import (
    EstimatorConfig,
    ParamEstimator,
    encode_permutation,
    estimate_params,
    export_param_distribution,
    load_estimator,
    save_estimator,
)
from salforge.types import CANONICAL_OPERATORS, EditPermutation, all_full_permutations


def small_config(**kwargs):
    base = dict(direction="attenuate", resolution=32, width_mult=0.25,
                decoder_hidden=(16,), epochs=1)
    base.update(kwargs)
    return EstimatorConfig(**base)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"direction": "boost"},
            {"resolution": 30},
            {"width_mult": 0.01},
            {"bounds": {"exposure": (0.5, 2.0)}},
            {"bounds": {"exposure": (1.1, 2.0), "saturation": (0.0, 2.0),
                        "color_curve": (0.5, 2.0), "white_balance": (0.7, 1.3)}},
            {"bounds": {"exposure": (0.5, 2.0), "saturation": (0.0, 2.0),
                        "color_curve": (0.5, 2.0), "white_balance": (0.7, 2.5)}},
            {"weight_decay": -0.1},
            {"holdout_fraction": 0.6},
            {"lr": -1.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigurationError):
            small_config(**kwargs)

    def test_dict_round_trip_preserves_tuples(self):
        config = small_config(decoder_hidden=(16, 8))
        back = EstimatorConfig.from_dict(config.to_dict())
        assert back == config
        assert isinstance(back.decoder_hidden, tuple)
        assert all(isinstance(v, tuple) for v in back.bounds.values())


class TestPermutationEncoding:
    def test_one_hot_shape_and_sum(self):
        enc = encode_permutation(EditPermutation.canonical())
        assert enc.shape == (16,) and enc.sum() == 4.0

    def test_distinct_permutations_distinct_codes(self):
        perms = all_full_permutations()
        codes = {encode_permutation(p).tobytes() for p in perms}
        assert len(codes) == len(perms) == 24

    def test_partial_permutation_rows_empty(self):
        enc = encode_permutation(EditPermutation(("exposure",))).reshape(4, 4)
        assert enc[0].sum() == 1.0 and enc[1:].sum() == 0.0


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(0)
    return ParamEstimator(small_config())


class TestForward:
    def test_outputs_within_bounds(self, model, make_image, make_mask):
        img, mask = make_image(32, 32), make_mask(32, 32, "disk")
        for perm in all_full_permutations()[::6]:
            params = estimate_params(img, mask, perm, model)
            for op in CANONICAL_OPERATORS:
                lo, hi = model.config.bounds[op]
                assert lo < getattr(params, op) < hi

    def test_partial_perm_predicts_only_those_ops(self, model, make_image, make_mask):
        perm = EditPermutation(("saturation", "exposure"))
        params = estimate_params(make_image(32, 32), make_mask(32, 32), perm, model)
        assert set(params.present()) == {"saturation", "exposure"}
        assert params.color_curve is None and params.white_balance is None

    def test_perm_changes_output(self, model, make_image, make_mask):
        # cascaded decoders see both the order encoding and upstream values
        img, mask = make_image(32, 32), make_mask(32, 32, "disk")
        perms = all_full_permutations()
        vals = []
        for perm in (perms[0], perms[-1]):
            p = estimate_params(img, mask, perm, model)
            vals.append([p.exposure, p.saturation, p.color_curve, p.white_balance])
        assert np.abs(np.array(vals[0]) - np.array(vals[1])).max() > 0

    def test_none_model_raises(self, make_image, make_mask):
        with pytest.raises(StateError):
            estimate_params(make_image(), make_mask(), EditPermutation.canonical(), None)


class TestTraining:
    def test_report_contents(self, tiny_corpus_dir, tiny_critic, tiny_backend):
        from salforge.estimator import train_estimator
        from salforge.objective import ObjectiveConfig

        critic, _ = tiny_critic
        model, report = train_estimator(
            tiny_corpus_dir, critic, tiny_backend, small_config(epochs=2), ObjectiveConfig()
        )
        assert report.direction == "attenuate"
        assert report.n_train > 0 and report.n_holdout > 0
        assert len(report.epochs) == 2
        hold = report.holdout
        assert {"n", "s_mean", "delta_r_mean",
                "direction_aligned_fraction", "within_margin_fraction"} <= set(hold)
        assert not report.diverged
        assert report.critic_updates == 0  # fixed-critic mode never steps the critic

    def test_progress_callback(self, tiny_corpus_dir, tiny_critic, tiny_backend):
        from salforge.estimator import train_estimator
        from salforge.objective import ObjectiveConfig

        critic, _ = tiny_critic
        seen = []
        train_estimator(
            tiny_corpus_dir, critic, tiny_backend, small_config(epochs=2),
            ObjectiveConfig(), progress=seen.append,
        )
        assert seen == [0.5, 1.0]

    def test_adversarial_mode_updates_critic(self, tiny_corpus_dir, tiny_critic, tiny_backend):
        from salforge.estimator import train_estimator
        from salforge.objective import ObjectiveConfig

        critic, _ = tiny_critic
        _, report = train_estimator(
            tiny_corpus_dir, critic, tiny_backend, small_config(epochs=1),
            ObjectiveConfig(mode="adversarial"),
        )
        assert report.critic_updates > 0


class TestCheckpoint:
    def test_round_trip_predictions_match(self, tiny_estimators, tmp_path,
                                          make_image, make_mask):
        model = tiny_estimators["attenuate"]
        path = tmp_path / "est.ckpt"
        save_estimator(path, model)
        loaded = load_estimator(path)
        img, mask = make_image(32, 32), make_mask(32, 32, "disk")
        perm = EditPermutation.canonical()
        assert estimate_params(img, mask, perm, loaded) == estimate_params(
            img, mask, perm, model
        )

    def test_direction_guard(self, tiny_estimators, tmp_path):
        path = tmp_path / "amp.ckpt"
        save_estimator(path, tiny_estimators["amplify"])
        load_estimator(path, expect_direction="amplify")
        with pytest.raises(StateError):
            load_estimator(path, expect_direction="attenuate")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_estimator(tmp_path / "absent.ckpt")


class TestDistribution:
    def test_export_shapes(self, tiny_estimators, tiny_corpus_dir):
        dist = export_param_distribution(tiny_estimators["attenuate"], tiny_corpus_dir, bins=10)
        assert dist.direction == "attenuate"
        assert set(dist.histograms) == set(CANONICAL_OPERATORS)
        for op, hist in dist.histograms.items():
            assert len(hist["counts"]) == 10
            assert len(hist["edges"]) == 11
            assert sum(hist["counts"]) > 0

    def test_bins_validated(self, tiny_estimators, tiny_corpus_dir):
        with pytest.raises(ConfigurationError):
            export_param_distribution(tiny_estimators["attenuate"], tiny_corpus_dir, bins=1)
