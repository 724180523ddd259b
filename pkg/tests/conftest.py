import numpy as np
import pytest

from salforge.types import ImageGrid, RegionMask

# Trained-model fixtures live at session scope so the whole suite pays for
# each training run once. "tiny_*" fixtures are deliberately undertrained
# (seconds) and only exercise mechanics; the "toy_*" fixtures reproduce the
# full recipe that the acceptance thresholds were measured against.


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_image():
    def build(h=16, w=16, seed=0, lo=0.2, hi=0.8):
        r = np.random.default_rng(seed)
        return ImageGrid(r.uniform(lo, hi, (h, w, 3)))

    return build


@pytest.fixture
def make_mask():
    def build(h=16, w=16, kind="full", seed=0):
        if kind == "full":
            weights = np.ones((h, w))
        elif kind == "half":
            weights = np.zeros((h, w))
            weights[:, : w // 2] = 1.0
        elif kind == "disk":
            yy, xx = np.mgrid[0:h, 0:w]
            weights = (((yy - h / 2) ** 2 + (xx - w / 2) ** 2) <= (min(h, w) / 4) ** 2).astype(
                np.float64
            )
        elif kind == "soft":
            r = np.random.default_rng(seed)
            weights = r.uniform(0.0, 1.0, (h, w))
        else:
            raise ValueError(kind)
        return RegionMask(weights)

    return build


@pytest.fixture(scope="session")
def tiny_corpus_dir(tmp_path_factory):
    from salforge.corpus import build_toy_corpus

    root = tmp_path_factory.mktemp("tiny_corpus")
    build_toy_corpus(root, n_images=8, size=32, seed=3)
    return root


@pytest.fixture(scope="session")
def tiny_dataset_dir(tiny_corpus_dir, tmp_path_factory):
    from salforge.sampling import generate_dataset, write_dataset

    out = tmp_path_factory.mktemp("tiny_dataset")
    write_dataset(generate_dataset(tiny_corpus_dir, 30, rng_seed=0), out)
    return out


@pytest.fixture(scope="session")
def tiny_critic(tiny_dataset_dir):
    from salforge.critic import CriticConfig, train_critic

    config = CriticConfig(
        resolution=32, base_width=16, depth=2, mlp_hidden=32,
        lr=2e-4, batch_size=16, epochs=3, rng_seed=0,
    )
    return train_critic(tiny_dataset_dir, config)


@pytest.fixture(scope="session")
def tiny_backend():
    from salforge.saliency import get_backend

    return get_backend("analytic", base_level=0.2)


def _tiny_estimator_config(direction):
    from salforge.estimator import EstimatorConfig

    # lr high enough that predictions move visibly away from identity, so
    # edited previews differ from their source after PNG quantization
    return EstimatorConfig(
        direction=direction, resolution=32, width_mult=0.25,
        decoder_hidden=(16,), lr=3e-3, batch_size=8, epochs=3, rng_seed=0,
    )


@pytest.fixture(scope="session")
def tiny_estimators(tiny_corpus_dir, tiny_critic, tiny_backend):
    from salforge.estimator import train_estimator
    from salforge.objective import ObjectiveConfig

    critic, _ = tiny_critic
    out = {}
    for direction in ("attenuate", "amplify"):
        model, _ = train_estimator(
            tiny_corpus_dir, critic, tiny_backend,
            _tiny_estimator_config(direction), ObjectiveConfig(),
        )
        out[direction] = model
    return out


@pytest.fixture(scope="session")
def tiny_bundle(tiny_critic, tiny_estimators, tiny_backend):
    from salforge.pipeline import ModelBundle

    critic, _ = tiny_critic
    return ModelBundle(critic=critic, estimators=dict(tiny_estimators), backend=tiny_backend)


# ---- full toy recipe (acceptance scale) --------------------------------------


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory):
    from salforge.corpus import build_toy_corpus

    root = tmp_path_factory.mktemp("toy_corpus")
    build_toy_corpus(root, n_images=60, size=64, seed=7)
    return root


@pytest.fixture(scope="session")
def toy_dataset(toy_corpus_dir):
    from salforge.sampling import generate_dataset

    return list(generate_dataset(toy_corpus_dir, count_per_class=500, rng_seed=11))


@pytest.fixture(scope="session")
def toy_critic(toy_dataset):
    from salforge.critic import CriticConfig, train_critic

    config = CriticConfig(
        resolution=64, base_width=48, depth=3, mlp_hidden=128,
        lr=2e-4, batch_size=16, epochs=25, rng_seed=0, holdout_fraction=0.2,
    )
    return train_critic(toy_dataset, config)


@pytest.fixture(scope="session")
def toy_backend():
    from salforge.saliency import get_backend

    return get_backend("analytic", base_level=0.2)


def _toy_estimator_config(direction):
    from salforge.estimator import EstimatorConfig

    return EstimatorConfig(
        direction=direction, resolution=64, width_mult=0.125,
        decoder_hidden=(32, 16), lr=1e-4, weight_decay=5e-2,
        batch_size=8, epochs=40, rng_seed=0, holdout_fraction=0.3,
    )


@pytest.fixture(scope="session")
def toy_attenuate(toy_corpus_dir, toy_critic, toy_backend):
    from salforge.estimator import train_estimator
    from salforge.objective import ObjectiveConfig

    critic, _ = toy_critic
    return train_estimator(
        toy_corpus_dir, critic, toy_backend,
        _toy_estimator_config("attenuate"), ObjectiveConfig(),
    )


@pytest.fixture(scope="session")
def toy_amplify(toy_corpus_dir, toy_critic, toy_backend):
    from salforge.estimator import train_estimator
    from salforge.objective import ObjectiveConfig

    critic, _ = toy_critic
    return train_estimator(
        toy_corpus_dir, critic, toy_backend,
        _toy_estimator_config("amplify"), ObjectiveConfig(),
    )


@pytest.fixture(scope="session")
def toy_bundle(toy_critic, toy_attenuate, toy_amplify, toy_backend):
    from salforge.pipeline import ModelBundle

    critic, _ = toy_critic
    return ModelBundle(
        critic=critic,
        estimators={"attenuate": toy_attenuate[0], "amplify": toy_amplify[0]},
        backend=toy_backend,
    )


@pytest.fixture(scope="session")
def toy_eval_items(toy_corpus_dir):
    """First 20 masked corpus items, the shared witness set for sweep,
    permutation, and heatmap checks."""
    from salforge.corpus import load_corpus_index

    items = [it for it in load_corpus_index(toy_corpus_dir) if it.mask_path][:20]
    assert len(items) == 20
    return items
