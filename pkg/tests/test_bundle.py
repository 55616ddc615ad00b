"""Bundle loading and validation tests."""

import json

import numpy as np
import pytest

from ecgtap.bundle import infer_shapes, load_bundle
from ecgtap.errors import (
    BundleError,
    ChecksumMismatchError,
    CyclicGraphError,
    TapNotFoundError,
    UnresolvedWeightError,
)

from helpers import build_fixture_bundle, write_bundle


def tiny_nodes():
    return [
        {
            "name": "c1",
            "op": "conv2d",
            "inputs": ["input"],
            "attrs": {"stride": [1, 1], "padding": [1, 1]},
            "weights": {"weight": "c1.w"},
        },
        {"name": "r1", "op": "relu", "inputs": ["c1"], "attrs": {}, "weights": {}},
    ]


def tiny_tensors(rng=None):
    rng = rng or np.random.default_rng(0)
    return {"c1.w": rng.normal(size=(4, 3, 3, 3)).astype(np.float32)}


def tiny_taps():
    return [{"name": "c1", "conv_index": 1, "channels": 4}]


class TestLoadBundle:
    def test_tiny_bundle_shapes(self, tmp_path):
        path = write_bundle(tmp_path / "b", tiny_nodes(), tiny_taps(), tiny_tensors(), [3, 8, 8])
        bundle = load_bundle(path)
        # 8x8 input, 3x3 kernel, stride 1, pad 1 -> 8x8 out, 4 channels
        assert bundle.shapes["c1"] == (4, 8, 8)
        assert bundle.shapes["r1"] == (4, 8, 8)
        assert bundle.conv_count == 1
        assert [t.name for t in bundle.taps] == ["c1"]

    def test_zip_bundle(self, tmp_path):
        path = write_bundle(
            tmp_path / "z", tiny_nodes(), tiny_taps(), tiny_tensors(), [3, 8, 8], zipped=True
        )
        assert path.suffix == ".zip"
        bundle = load_bundle(path)
        assert bundle.shapes["r1"] == (4, 8, 8)

    def test_fixture_bundle_loads(self, tmp_path):
        path = build_fixture_bundle(tmp_path / "fx")
        bundle = load_bundle(path)
        assert bundle.shapes["conv1"] == (8, 56, 56)
        assert bundle.shapes["pool1"] == (8, 28, 28)
        assert bundle.shapes["conv2"] == (16, 14, 14)
        assert bundle.shapes["cat"] == (32, 14, 14)
        assert bundle.shapes["ap"] == (32, 7, 7)
        assert bundle.shapes["gap"] == (32, 1, 1)

    def test_checksum_mismatch(self, tmp_path):
        path = write_bundle(
            tmp_path / "b", tiny_nodes(), tiny_taps(), tiny_tensors(), [3, 8, 8], tamper_sha=True
        )
        with pytest.raises(ChecksumMismatchError):
            load_bundle(path)

    def test_unresolved_weight(self, tmp_path):
        nodes = tiny_nodes()
        nodes[0]["weights"]["weight"] = "missing.w"
        path = write_bundle(tmp_path / "b", nodes, tiny_taps(), tiny_tensors(), [3, 8, 8])
        with pytest.raises(UnresolvedWeightError, match="missing.w"):
            load_bundle(path)

    def test_weight_overrun(self, tmp_path):
        path = write_bundle(tmp_path / "b", tiny_nodes(), tiny_taps(), tiny_tensors(), [3, 8, 8])
        idx = json.loads((path / "weights.idx.json").read_text())
        idx["c1.w"]["offset"] = 4
        (path / "weights.idx.json").write_text(json.dumps(idx))
        with pytest.raises(UnresolvedWeightError, match="extends past"):
            load_bundle(path)

    def test_cycle_detected(self, tmp_path):
        nodes = tiny_nodes()
        nodes.append({"name": "r2", "op": "relu", "inputs": ["r3"], "attrs": {}, "weights": {}})
        nodes.append({"name": "r3", "op": "relu", "inputs": ["r2"], "attrs": {}, "weights": {}})
        path = write_bundle(tmp_path / "b", nodes, tiny_taps(), tiny_tensors(), [3, 8, 8])
        with pytest.raises(CyclicGraphError, match="r2"):
            load_bundle(path)

    def test_tap_not_found(self, tmp_path):
        taps = [{"name": "ghost", "conv_index": 1, "channels": 4}]
        path = write_bundle(tmp_path / "b", tiny_nodes(), taps, tiny_tensors(), [3, 8, 8])
        with pytest.raises(TapNotFoundError, match="ghost"):
            load_bundle(path)

    def test_tap_channel_mismatch(self, tmp_path):
        taps = [{"name": "c1", "conv_index": 1, "channels": 99}]
        path = write_bundle(tmp_path / "b", tiny_nodes(), taps, tiny_tensors(), [3, 8, 8])
        with pytest.raises(BundleError, match="declared 99"):
            load_bundle(path)

    def test_conv_count_mismatch(self, tmp_path):
        path = write_bundle(
            tmp_path / "b", tiny_nodes(), tiny_taps(), tiny_tensors(), [3, 8, 8], conv_count=161
        )
        with pytest.raises(BundleError, match="conv count mismatch"):
            load_bundle(path)

    def test_unknown_input_name(self, tmp_path):
        nodes = tiny_nodes()
        nodes[1]["inputs"] = ["nowhere"]
        path = write_bundle(tmp_path / "b", nodes, tiny_taps(), tiny_tensors(), [3, 8, 8])
        with pytest.raises(BundleError, match="unknown input"):
            load_bundle(path)

    def test_channel_mismatch_in_conv(self, tmp_path):
        tensors = {"c1.w": np.zeros((4, 5, 3, 3), dtype=np.float32)}
        path = write_bundle(tmp_path / "b", tiny_nodes(), tiny_taps(), tensors, [3, 8, 8])
        with pytest.raises(BundleError, match="does not accept 3"):
            load_bundle(path)

    def test_missing_member(self, tmp_path):
        path = write_bundle(tmp_path / "b", tiny_nodes(), tiny_taps(), tiny_tensors(), [3, 8, 8])
        (path / "weights.idx.json").unlink()
        with pytest.raises(BundleError, match="member missing"):
            load_bundle(path)

    def test_missing_batchnorm_role(self, tmp_path):
        nodes = tiny_nodes()
        nodes.append(
            {
                "name": "bn",
                "op": "batchnorm",
                "inputs": ["r1"],
                "attrs": {"epsilon": 1e-5},
                "weights": {"gamma": "c1.w"},
            }
        )
        path = write_bundle(tmp_path / "b", nodes, tiny_taps(), tiny_tensors(), [3, 8, 8])
        with pytest.raises(BundleError, match="missing required weight role"):
            load_bundle(path)

    def test_nodes_reordered_to_topological(self, tmp_path):
        nodes = list(reversed(tiny_nodes()))
        path = write_bundle(tmp_path / "b", nodes, tiny_taps(), tiny_tensors(), [3, 8, 8])
        bundle = load_bundle(path)
        assert [n.name for n in bundle.nodes] == ["c1", "r1"]


class TestInferShapes:
    def test_matches_hand_computation(self, tmp_path):
        bundle = load_bundle(
            build_fixture_bundle(tmp_path / "fx")
        )
        # conv1: (224 + 2*2 - 5)//4 + 1 = 56; pool1: (56 + 2 - 3)//2 + 1 = 28
        # conv2: (28 + 2 - 3)//2 + 1 = 14; ap: (14 - 2)//2 + 1 = 7
        shapes = infer_shapes(bundle.nodes, (3, 224, 224), bundle.weights)
        assert shapes["conv1"] == (8, 56, 56)
        assert shapes["ap"] == (32, 7, 7)

    def test_spatial_collapse_rejected(self, tmp_path):
        nodes = tiny_nodes()
        nodes[0]["attrs"] = {"stride": [1, 1], "padding": [0, 0]}
        path = write_bundle(tmp_path / "b", nodes, tiny_taps(), tiny_tensors(), [3, 2, 2])
        with pytest.raises(BundleError, match="collapses"):
            load_bundle(path)
