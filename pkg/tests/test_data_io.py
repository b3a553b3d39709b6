"""Loaders, manifest validation, and the synthetic generator."""

from hashlib import sha256

import numpy as np
import pytest

from vista.core import DataError, TimeSeries
from vista.data_io import (
    DatasetManifest,
    SynthSpec,
    load_series,
    save_labels,
    save_series_csv,
    synth_generate,
    synth_pair,
)


def write_fixture(tmp_path, train, test, labels, fmt="csv", extra=""):
    if fmt == "csv":
        np.savetxt(tmp_path / "train.csv", train, delimiter=",", fmt="%.17g")
        np.savetxt(tmp_path / "test.csv", test, delimiter=",", fmt="%.17g")
    else:
        np.save(tmp_path / "train.npy", train)
        np.save(tmp_path / "test.npy", test)
    np.savetxt(tmp_path / "labels.txt", labels, fmt="%d")
    manifest = tmp_path / "data.manifest"
    manifest.write_text(
        f"name = fixture\n"
        f"train_path = train.{fmt if fmt == 'npy' else 'csv'}\n"
        f"test_path = test.{fmt if fmt == 'npy' else 'csv'}\n"
        f"label_path = labels.txt\n"
        f"format = {fmt}\n" + extra,
        encoding="utf-8",
    )
    return manifest


class TestLoaders:
    def test_small_csv_fixture_exact(self, tmp_path):
        train = np.array([[1.5, -2.0], [0.25, 3.0], [9.0, 0.125]])
        test = train * 2
        manifest = write_fixture(tmp_path, train, test, np.array([0, 1, 0]))
        tr, te = load_series(DatasetManifest.load(manifest))
        assert np.array_equal(tr.values, train)
        assert np.array_equal(te.values, test)
        assert te.labels.tolist() == [0, 1, 0]

    def test_csv_header_skipped(self, tmp_path):
        (tmp_path / "train.csv").write_text("a,b\n1,2\n3,4\n", encoding="utf-8")
        (tmp_path / "test.csv").write_text("a,b\n5,6\n", encoding="utf-8")
        np.savetxt(tmp_path / "labels.txt", [1], fmt="%d")
        manifest = tmp_path / "m.manifest"
        manifest.write_text(
            "train_path = train.csv\ntest_path = test.csv\nlabel_path = labels.txt\n",
            encoding="utf-8",
        )
        tr, te = load_series(DatasetManifest.load(manifest))
        assert tr.values.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_npy_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        train = rng.normal(size=(20, 4))
        test = rng.normal(size=(10, 4))
        manifest = write_fixture(tmp_path, train, test, rng.integers(0, 2, size=10), fmt="npy")
        tr, te = load_series(DatasetManifest.load(manifest))
        assert np.array_equal(tr.values, train)
        assert np.array_equal(te.values, test)

    def test_csv_write_read_roundtrip_full_precision(self, tmp_path):
        rng = np.random.default_rng(1)
        series = TimeSeries(values=rng.normal(size=(50, 3)) * 1e6, name="rt")
        save_series_csv(series, tmp_path / "s.csv")
        back = np.loadtxt(tmp_path / "s.csv", delimiter=",", ndmin=2)
        assert np.array_equal(back, series.values)

    def test_dim_mismatch_detected(self, tmp_path):
        rng = np.random.default_rng(2)
        manifest = write_fixture(
            tmp_path,
            rng.normal(size=(6, 3)),
            rng.normal(size=(4, 3)),
            rng.integers(0, 2, size=4),
            extra="expected_dims = 55\n",
        )
        with pytest.raises(DataError, match="55"):
            load_series(DatasetManifest.load(manifest))

    def test_count_mismatch_detected(self, tmp_path):
        rng = np.random.default_rng(3)
        manifest = write_fixture(
            tmp_path,
            rng.normal(size=(6, 2)),
            rng.normal(size=(4, 2)),
            rng.integers(0, 2, size=4),
            extra="expected_train = 100\nexpected_test = 4\n",
        )
        with pytest.raises(DataError, match="train length 6"):
            load_series(DatasetManifest.load(manifest))

    def test_truncated_file_caught_by_counts(self, tmp_path):
        rng = np.random.default_rng(4)
        train = rng.normal(size=(6, 2))
        manifest = write_fixture(
            tmp_path,
            train[:5],  # truncated relative to the declared count
            rng.normal(size=(4, 2)),
            rng.integers(0, 2, size=4),
            extra="expected_train = 6\nexpected_test = 4\n",
        )
        with pytest.raises(DataError, match="manifest expects 6"):
            load_series(DatasetManifest.load(manifest))

    def test_label_length_mismatch(self, tmp_path):
        rng = np.random.default_rng(5)
        manifest = write_fixture(
            tmp_path, rng.normal(size=(6, 2)), rng.normal(size=(4, 2)), np.array([0, 1])
        )
        with pytest.raises(DataError, match="2 labels for 4 test points"):
            load_series(DatasetManifest.load(manifest))

    def test_non_finite_rejected(self, tmp_path):
        train = np.array([[1.0], [np.nan], [2.0]])
        manifest = write_fixture(tmp_path, train, np.ones((2, 1)), np.array([0, 1]))
        with pytest.raises(DataError, match="non-finite"):
            load_series(DatasetManifest.load(manifest))

    def test_checksum_verified(self, tmp_path):
        rng = np.random.default_rng(6)
        train = rng.normal(size=(6, 2))
        test = rng.normal(size=(4, 2))
        digest = "0" * 64
        manifest = write_fixture(
            tmp_path, train, test, rng.integers(0, 2, size=4), extra=f"sha256.train.csv = {digest}\n"
        )
        with pytest.raises(DataError, match="checksum mismatch"):
            load_series(DatasetManifest.load(manifest))
        good = sha256((tmp_path / "train.csv").read_bytes()).hexdigest()
        manifest = write_fixture(
            tmp_path, train, test, rng.integers(0, 2, size=4), extra=f"sha256.train.csv = {good}\n"
        )
        load_series(DatasetManifest.load(manifest))

    def test_multi_entity_concatenation_records_boundaries(self, tmp_path):
        rng = np.random.default_rng(7)
        a, b = rng.normal(size=(8, 2)), rng.normal(size=(5, 2))
        np.savetxt(tmp_path / "e1.csv", a, delimiter=",", fmt="%.17g")
        np.savetxt(tmp_path / "e2.csv", b, delimiter=",", fmt="%.17g")
        np.savetxt(tmp_path / "t.csv", rng.normal(size=(4, 2)), delimiter=",", fmt="%.17g")
        np.savetxt(tmp_path / "labels.txt", rng.integers(0, 2, size=4), fmt="%d")
        manifest = tmp_path / "m.manifest"
        manifest.write_text(
            "train_path = e1.csv, e2.csv\ntest_path = t.csv\nlabel_path = labels.txt\n",
            encoding="utf-8",
        )
        tr, _ = load_series(DatasetManifest.load(manifest))
        assert tr.T == 13
        assert tr.entity_starts == (0, 8)

    def test_column_selection(self, tmp_path):
        rng = np.random.default_rng(8)
        train = rng.normal(size=(6, 4))
        test = rng.normal(size=(3, 4))
        manifest = write_fixture(
            tmp_path, train, test, rng.integers(0, 2, size=3), extra="columns = 0, 2\n"
        )
        tr, _ = load_series(DatasetManifest.load(manifest))
        assert np.array_equal(tr.values, train[:, [0, 2]])


class TestShippedManifests:
    # published layout constants for the five public benchmarks
    EXPECTED = {
        "msl": (55, 58317, 73729),
        "smap": (25, 135183, 427617),
        "smd": (38, 708405, 708420),
        "psm": (25, 132481, 87841),
        "swat": (51, 496800, 449919),
    }

    @pytest.mark.parametrize("name", sorted(EXPECTED))
    def test_manifest_declares_published_constants(self, name):
        from pathlib import Path

        manifest_path = Path(__file__).resolve().parents[1] / "manifests" / f"{name}.manifest"
        manifest = DatasetManifest.load(manifest_path)
        dims, train, test = self.EXPECTED[name]
        assert manifest.expected_dims == dims
        assert manifest.expected_counts == (train, test)


class TestSynth:
    def test_zero_contamination_all_normal(self):
        s = synth_generate(SynthSpec(seed=1, length=256, dims=2, contamination=0.0))
        assert s.labels.sum() == 0

    def test_deterministic(self):
        a = synth_generate(SynthSpec(seed=5, length=512, dims=3))
        b = synth_generate(SynthSpec(seed=5, length=512, dims=3))
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.labels, b.labels)

    def test_spike_rate_in_band(self):
        s = synth_generate(
            SynthSpec(seed=7, length=4096, dims=3, anomaly_kinds=("spike",), contamination=0.05)
        )
        rate = float(s.labels.mean())
        assert 0.04 <= rate <= 0.06

    @pytest.mark.parametrize("kinds", [("level_shift",), ("period_stretch",), None])
    def test_mixed_rate_near_target(self, kinds):
        spec = SynthSpec(
            seed=11, length=8192, dims=3, contamination=0.05,
            anomaly_kinds=kinds or ("spike", "level_shift", "period_stretch"),
        )
        s = synth_generate(spec)
        assert 0.03 <= float(s.labels.mean()) <= 0.065

    def test_pair_shares_process_but_not_noise(self):
        train, test = synth_pair(SynthSpec(seed=3, length=1024, dims=2, contamination=0.02))
        assert train.labels is None
        assert test.labels.sum() > 0
        assert not np.array_equal(train.values, test.values)
        # same per-variable scale structure
        ratio = train.values.std(axis=0) / test.values.std(axis=0)
        assert np.all((ratio > 0.8) & (ratio < 1.25))

    def test_scales_span_orders_of_magnitude(self):
        s = synth_generate(SynthSpec(seed=21, length=512, dims=8, scale_range=(0.1, 10.0)))
        spread = s.values.std(axis=0)
        assert spread.max() / spread.min() > 3.0

    def test_labels_mark_injected_points(self):
        train, test = synth_pair(
            SynthSpec(seed=13, length=1024, dims=1, anomaly_kinds=("level_shift",),
                      contamination=0.05, scale_range=(1.0, 1.0))
        )
        # labeled intervals deviate from the clean twin more than unlabeled
        delta = np.abs(test.values[:, 0] - np.median(test.values[:, 0]))
        labeled = delta[test.labels == 1].mean()
        clean = delta[test.labels == 0].mean()
        assert labeled > clean

    def test_save_labels_roundtrip(self, tmp_path):
        labels = np.array([0, 1, 1, 0, 1], dtype=np.int8)
        save_labels(labels, tmp_path / "l.txt")
        assert np.loadtxt(tmp_path / "l.txt", dtype=int).tolist() == labels.tolist()
