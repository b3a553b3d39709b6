"""Extractor contract, weight file handling, and feature aggregation."""

import numpy as np
import pytest

from vista.core import ConfigError
from vista.features import (
    LAYER_GEOMETRY,
    FeatureExtractor,
    SignalFeatureMap,
    aggregate_variables,
    extract_feature_grids,
    extract_signal_features,
    load_extractor,
    resnet18_tensor_specs,
    seeded_tensors,
    selected_dimension,
    selected_grid,
)
from vista.nn import bilinear_resize, xorshift_normal, xorshift_uniform
from vista.tcm import Tcm32
from vista.weights import WeightFileError, read_weights, write_manifest, write_weights


def tcm_of(array32: np.ndarray, variable=0) -> Tcm32:
    return Tcm32(tensor=array32, variable_index=variable, window_start=0)


class TestXorshift:
    def test_deterministic_and_stream_separated(self):
        a = xorshift_uniform(42, 1000)
        b = xorshift_uniform(42, 1000)
        c = xorshift_uniform(42, 1000, stream=1)
        assert (a == b).all()
        assert not (a == c).all()
        assert ((a > 0) & (a <= 1)).all()

    def test_normal_moments(self):
        z = xorshift_normal(7, 200_000)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01


class TestGraphContract:
    def test_tensor_count_and_key_shapes(self):
        specs = dict(resnet18_tensor_specs())
        assert len(specs) == 40
        assert specs["conv1.weight"] == (64, 3, 7, 7)
        assert specs["layer2.0.downsample.weight"] == (128, 64, 1, 1)
        assert specs["layer4.1.conv2.weight"] == (512, 512, 3, 3)
        assert "layer1.0.downsample.weight" not in specs

    def test_declared_geometry(self):
        ext = load_extractor("seeded:0")
        maps = ext.forward(np.zeros((1, 3, 32, 32), dtype=np.float32))
        for layer, (h, w, ch) in LAYER_GEOMETRY.items():
            assert maps[layer].shape == (1, ch, h, w)

    def test_seeded_determinism(self):
        x = np.random.default_rng(0).normal(size=(2, 3, 32, 32)).astype(np.float32)
        a = load_extractor("seeded:42").forward(x)
        b = load_extractor("seeded:42").forward(x)
        for k in a:
            assert (a[k] == b[k]).all()
        c = load_extractor("seeded:43").forward(x)
        assert not (a[4] == c[4]).all()

    def test_zero_input_gives_zero_features(self):
        # seeded weights have zero biases, so zeros propagate through
        maps = load_extractor("seeded:5").forward(np.zeros((1, 3, 32, 32), dtype=np.float32))
        for k in maps:
            assert (maps[k] == 0).all()

    def test_bad_seed_spec(self):
        with pytest.raises(ConfigError, match="seed must be an integer"):
            load_extractor("seeded:abc")

    def test_missing_tensor_rejected(self):
        tensors = seeded_tensors(0)
        del tensors["layer3.1.conv2.bias"]
        with pytest.raises(WeightFileError, match="layer3.1.conv2.bias"):
            FeatureExtractor(tensors, source="test")

    def test_wrong_shape_rejected(self):
        tensors = seeded_tensors(0)
        tensors["conv1.weight"] = tensors["conv1.weight"][:, :, :5, :5]
        with pytest.raises(WeightFileError, match="conv1.weight"):
            FeatureExtractor(tensors, source="test")

    def test_extra_tensor_rejected(self):
        tensors = seeded_tensors(0)
        tensors["fc.weight"] = np.zeros((10, 512), dtype=np.float32)
        with pytest.raises(WeightFileError, match="fc.weight"):
            FeatureExtractor(tensors, source="test")


class TestWeightFile:
    def test_roundtrip_bitwise(self, tmp_path):
        tensors = seeded_tensors(3)
        path = tmp_path / "w.vstw"
        write_weights(path, tensors)
        back = read_weights(path)
        assert list(back) == list(tensors)
        for name in tensors:
            assert np.array_equal(back[name], tensors[name])

    def test_loaded_extractor_matches_header_geometry(self, tmp_path):
        path = tmp_path / "w.vstw"
        write_weights(path, seeded_tensors(1))
        ext = load_extractor(str(path))
        assert ext.layer_geometry == LAYER_GEOMETRY

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.vstw"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(WeightFileError, match="not a VSTW"):
            read_weights(path)

    def test_truncated_tensor_names_offender(self, tmp_path):
        tensors = seeded_tensors(0)
        path = tmp_path / "w.vstw"
        write_weights(path, tensors)
        blob = path.read_bytes()
        path.write_bytes(blob[:-17])  # cut into the final tensor's payload
        last_name = list(tensors)[-1]
        with pytest.raises(WeightFileError, match=f"'{last_name}' truncated"):
            read_weights(path)

    def test_manifest_checksum_detects_flip(self, tmp_path):
        tensors = seeded_tensors(0)
        path = tmp_path / "w.vstw"
        write_weights(path, tensors)
        write_manifest(path, tensors)
        read_weights(path)  # clean load passes
        blob = bytearray(path.read_bytes())
        blob[5000] ^= 0x01  # flip one bit inside a tensor payload
        path.write_bytes(bytes(blob))
        with pytest.raises(WeightFileError, match="checksum mismatch"):
            read_weights(path)


@pytest.fixture(scope="module")
def ext():
    return load_extractor("seeded:0")


class TestExtraction:

    def test_single_layer_four_no_interpolation(self, ext):
        fmap = extract_signal_features(tcm_of(np.ones((32, 32, 3))), ext, layers=(4,))
        assert fmap.grid.shape == (1, 1, 512)

    def test_deeper_map_replicated_into_shallow_grid(self, ext):
        x = np.random.default_rng(1).normal(size=(1, 3, 32, 32)).astype(np.float32)
        maps = ext.forward(x)
        grid = extract_feature_grids(x, ext, (3, 4))[0]
        assert grid.shape == (2, 2, 768)
        f4 = maps[4][0, :, 0, 0]
        for i in range(2):
            for j in range(2):
                assert np.array_equal(grid[i, j, 256:], f4)
                assert np.array_equal(grid[i, j, :256], maps[3][0, :, i, j])

    @pytest.mark.parametrize(
        "layers", [(2,), (3,), (4,), (2, 3), (2, 4), (3, 4)]
    )
    def test_geometry_for_all_layer_combinations(self, ext, layers):
        x = np.random.default_rng(2).normal(size=(1, 3, 32, 32)).astype(np.float32)
        grid = extract_feature_grids(x, ext, layers)[0]
        h, w, _ = LAYER_GEOMETRY[min(layers)]
        assert grid.shape == (h, w, selected_dimension(layers))
        assert selected_grid(layers) == (h, w)

    def test_extraction_is_pure(self, ext):
        x = np.random.default_rng(3).normal(size=(2, 3, 32, 32)).astype(np.float32)
        a = extract_feature_grids(x, ext, (3, 4))
        b = extract_feature_grids(x.copy(), ext, (3, 4))
        assert (a == b).all()

    def test_invalid_layer_selection(self, ext):
        with pytest.raises(ConfigError, match="subset"):
            extract_feature_grids(np.zeros((1, 3, 32, 32), dtype=np.float32), ext, (1, 3))

    def test_bilinear_resize_constant_and_oracle(self):
        const = np.full((1, 1), 3.5)
        assert np.allclose(bilinear_resize(const, 2, 2), 3.5)
        grid = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = bilinear_resize(grid, 4, 4)
        # half-pixel centers: output cell (1,1) samples (0.25, 0.25)
        assert out[0, 0] == 0.0 and out[3, 3] == 3.0
        assert out[1, 1] == pytest.approx(0.75, abs=1e-12)
        assert np.all(np.diff(out, axis=0) >= -1e-12)


class TestAggregation:
    def _maps(self, count, shape=(2, 2, 8), seed=0):
        rng = np.random.default_rng(seed)
        return [
            SignalFeatureMap(grid=rng.normal(size=shape).astype(np.float32), variable_index=i)
            for i in range(count)
        ]

    def test_single_variable_identity(self):
        (m,) = self._maps(1)
        agg = aggregate_variables([m], 1)
        assert np.array_equal(agg.grid, m.grid)

    def test_negation_cancels(self):
        (m,) = self._maps(1, seed=1)
        neg = SignalFeatureMap(grid=-m.grid, variable_index=1)
        agg = aggregate_variables([m, neg], 2)
        assert np.allclose(agg.grid, 0.0)

    def test_triple_sum_matches_elementwise_oracle(self):
        maps = self._maps(3, seed=2)
        agg = aggregate_variables(maps, 3)
        expected = maps[0].grid + maps[1].grid + maps[2].grid
        assert np.allclose(agg.grid, expected)

    def test_permutation_invariance_within_tolerance(self):
        maps = self._maps(5, seed=3)
        a = aggregate_variables(maps, 5).grid
        b = aggregate_variables(maps[::-1], 5).grid
        # 1e-6 relative to the summand scale (elements may nearly cancel)
        assert np.abs(a - b).max() <= 1e-6 * max(np.abs(m.grid).max() for m in maps)

    def test_count_and_shape_mismatches(self):
        maps = self._maps(2)
        with pytest.raises(ConfigError, match="expected 3"):
            aggregate_variables(maps, 3)
        bad = SignalFeatureMap(grid=np.zeros((1, 1, 8), dtype=np.float32), variable_index=7)
        with pytest.raises(ConfigError, match="variable 7"):
            aggregate_variables([maps[0], bad], 2)
