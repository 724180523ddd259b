"""Range-table plan sampling, dataset generation, and shard round trips."""
import json

import numpy as np
import pytest

from salforge import sampling
from salforge.corpus import build_toy_corpus, load_corpus_index
from salforge.errors import ConfigurationError, InputError
from salforge.sampling import (
    ClassRanges,
    RangeTable,
    class_key,
    default_range_table,
    generate_dataset,
    load_dataset,
    sample_plan,
    synthetic_mask,
    write_dataset,
)


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    build_toy_corpus(root, n_images=8, size=32, seed=11)
    return root


def in_any(value, spans):
    return any(lo <= value <= hi for lo, hi in spans)


class TestRangeTable:
    def test_default_classes(self):
        table = default_range_table()
        assert set(table.classes) == {"real", "fake", "fake_face"}
        assert table.for_class("real").count == (1, 3)
        assert "white_balance" not in table.for_class("real").intervals
        assert "white_balance" not in table.for_class("fake_face").intervals
        assert table.for_class("fake").intervals["white_balance"] == ((0.9, 1.0),)

    def test_hash_is_stable_and_sensitive(self):
        a = default_range_table()
        b = default_range_table()
        assert a.table_hash() == b.table_hash()
        altered = RangeTable(
            classes={
                **a.classes,
                "real": ClassRanges(intervals={"exposure": ((0.8, 1.2),)}, count=(1, 1)),
            }
        )
        assert altered.table_hash() != a.table_hash()

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            ClassRanges(intervals={"vignette": ((0.5, 1.0),)}, count=(1, 1))
        with pytest.raises(ConfigurationError):
            ClassRanges(intervals={"exposure": ((1.5, 0.5),)}, count=(1, 1))
        with pytest.raises(ConfigurationError):
            ClassRanges(intervals={"exposure": ((0.5, 1.0),)}, count=(1, 2))
        with pytest.raises(ConfigurationError):
            RangeTable(classes={"real": ClassRanges(intervals={"exposure": ((0.9, 1.1),)}, count=(1, 1))})

    def test_class_key(self):
        assert class_key("real", True) == "real"
        assert class_key("fake", False) == "fake"
        assert class_key("fake", True) == "fake_face"
        with pytest.raises(ConfigurationError):
            class_key("synthetic", False)


class TestPlanSampling:
    def test_plans_respect_ranges_bulk(self):
        """10k sampled plans: every value inside its class interval union,
        operator counts inside bounds, no white balance for real/fake_face."""
        table = default_range_table()
        for label, face in (("real", False), ("fake", False), ("fake", True)):
            ranges = table.for_class(class_key(label, face))
            for seed in range(3334):
                perm, params = sample_plan(seed, label, face, table)
                present = params.present()
                assert set(perm.order) == set(present)
                assert ranges.count[0] <= len(perm.order) <= ranges.count[1]
                for op, value in present.items():
                    assert op in ranges.intervals, (label, face, op)
                    assert in_any(value, ranges.intervals[op]), (label, op, value)

    def test_deterministic_for_seed(self):
        assert sample_plan(42, "fake") == sample_plan(42, "fake")
        assert sample_plan(42, "fake") != sample_plan(43, "fake")

    def test_union_weighting_by_length(self):
        """Exposure 'fake' spans [0.5,0.75] and [1.5,2.0]; the second is twice
        as long, so about 2/3 of draws land there."""
        low = high = 0
        for seed in range(4000):
            _, params = sample_plan(seed, "fake", False)
            if params.exposure is None:
                continue
            if params.exposure <= 0.75:
                low += 1
            else:
                high += 1
        frac_high = high / (low + high)
        assert 0.60 <= frac_high <= 0.73

    def test_order_varies(self):
        orders = {sample_plan(seed, "fake")[0].order for seed in range(200)}
        assert len(orders) > 10


class TestSyntheticMask:
    def test_area_fraction_in_bounds(self):
        for seed in range(50):
            mask = synthetic_mask(np.random.default_rng(seed), 48, 48)
            frac = mask.weights.mean()
            assert 0.02 <= frac <= 0.30
            assert set(np.unique(mask.weights)) <= {0.0, 1.0}

    def test_small_frames(self):
        mask = synthetic_mask(np.random.default_rng(0), 8, 8)
        assert mask.weights.shape == (8, 8)
        assert mask.weights.max() == 1.0


class TestGenerateDataset:
    def test_balanced_and_deterministic(self, tiny_corpus):
        samples = list(generate_dataset(tiny_corpus, count_per_class=6, rng_seed=5))
        assert len(samples) == 12
        labels = [s.label for s in samples]
        assert labels.count("real") == labels.count("fake") == 6
        again = list(generate_dataset(tiny_corpus, count_per_class=6, rng_seed=5))
        for a, b in zip(samples, again):
            assert np.array_equal(a.edited.pixels, b.edited.pixels)
            assert a.params == b.params and a.perm == b.perm

    def test_edit_reproducible_from_metadata(self, tiny_corpus):
        from salforge.ops import compose_edits

        for s in list(generate_dataset(tiny_corpus, count_per_class=3, rng_seed=9)):
            redone = compose_edits(s.base, s.params, s.perm, s.mask)
            assert np.array_equal(redone.pixels, s.edited.pixels)

    def test_real_edits_are_subtle(self, tiny_corpus):
        for s in generate_dataset(tiny_corpus, count_per_class=8, rng_seed=7):
            if s.label == "real":
                assert np.abs(s.edited.pixels - s.base.pixels).max() < 0.5

    def test_skips_unreadable_images(self, tmp_path):
        build_toy_corpus(tmp_path, n_images=4, size=24, seed=3)
        # corrupt one image in place
        victims = sorted((tmp_path / "images").glob("*.png"))
        victims[0].write_bytes(b"broken")
        samples = list(generate_dataset(tmp_path, count_per_class=5, rng_seed=1))
        assert len(samples) == 10

    def test_bad_count(self, tiny_corpus):
        with pytest.raises(InputError):
            list(generate_dataset(tiny_corpus, count_per_class=0))

    def test_empty_corpus(self, tmp_path):
        (tmp_path / "images").mkdir()
        with pytest.raises(InputError):
            load_corpus_index(tmp_path)


class TestDatasetShards:
    def test_write_then_load_roundtrip(self, tiny_corpus, tmp_path):
        samples = list(generate_dataset(tiny_corpus, count_per_class=5, rng_seed=2))
        manifest = write_dataset(samples, tmp_path / "ds", shard_size=4)
        assert manifest["total"] == 10
        assert manifest["counts"] == {"real": 5, "fake": 5}
        assert len(manifest["shards"]) == 3  # ceil(10 / 4)
        back = load_dataset(tmp_path / "ds")
        assert len(back) == 10
        for a, b in zip(samples, back):
            assert a.label == b.label
            assert a.perm == b.perm
            assert a.params == b.params
            # shards store float32; exactness only to that precision
            assert np.abs(a.edited.pixels - b.edited.pixels).max() < 1e-7
            assert a.mask.contains_face == b.mask.contains_face

    def test_manifest_provenance(self, tiny_corpus, tmp_path):
        table = default_range_table()
        samples = list(generate_dataset(tiny_corpus, count_per_class=2, rng_seed=4, table=table))
        manifest = write_dataset(
            samples, tmp_path / "ds", manifest_extra={"range_table": table.table_hash(), "rng_seed": 4}
        )
        on_disk = json.loads((tmp_path / "ds" / "manifest.json").read_text())
        assert on_disk == manifest
        assert on_disk["range_table"] == table.table_hash()

    def test_load_requires_manifest(self, tmp_path):
        with pytest.raises(InputError):
            load_dataset(tmp_path)

    def test_bad_format_version(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"format": 99, "shards": []}))
        with pytest.raises(InputError):
            load_dataset(tmp_path)


class TestCorpus:
    def test_toy_corpus_layout(self, tiny_corpus):
        items = load_corpus_index(tiny_corpus)
        assert len(items) >= 8
        with_mask = [it for it in items if it.mask_path is not None]
        assert with_mask, "expected at least some masked items"
        from salforge.corpus import load_item

        img, mask = load_item(with_mask[0])
        assert img.pixels.shape == (32, 32, 3)
        assert mask.weights.shape == (32, 32)
        assert mask.weights.max() == 1.0

    def test_corpus_without_meta(self, tmp_path, make_image):
        from salforge import io

        (tmp_path / "images").mkdir()
        io.save_image(make_image(seed=1), tmp_path / "images" / "x.png")
        items = load_corpus_index(tmp_path)
        assert len(items) == 1
        assert items[0].mask_path is None

    def test_masked_regions_are_salient(self, tiny_corpus):
        """Toy scenes must give the saliency proxy something to work with."""
        from salforge.corpus import load_item
        from salforge.saliency import AnalyticSaliency, masked_mean, predict

        backend = AnalyticSaliency()
        items = [it for it in load_corpus_index(tiny_corpus) if it.mask_path][:5]
        assert items
        hits = 0
        for item in items:
            img, mask = load_item(item)
            values = predict(img, backend).values
            inside = masked_mean(values, mask.weights)
            outside = masked_mean(values, 1.0 - mask.weights)
            if inside > outside:
                hits += 1
        assert hits >= len(items) - 1
