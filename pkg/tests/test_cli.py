"""End-to-end command line tests on a synthetic on-disk setup."""

import json

import numpy as np
import pytest

from ecgtap.cli import main
from ecgtap.matio import load_matrix, save_matrix

from helpers import build_fixture_bundle, write_synthetic_database

CONFIG_TEMPLATE = """\
jobs = 2

[dataset]
seed = 7
channel = 0

[dataset.quotas]
normal = 20
af = 20

[dataset.jitter]
normal = 100
af = 0

[[dataset.databases]]
name = "afdb"
root = "afdb"
classes = ["af"]

[[dataset.databases]]
name = "nsrdb"
root = "nsrdb"
classes = ["normal"]

[features]
bundle = "bundle"
k = 8

[svm]
max_epochs = 200
shuffle_seed = 5

[evaluation]
folds = 5
seed = 3

[output]
dir = "{out}"
"""


@pytest.fixture()
def workspace(tmp_path):
    write_synthetic_database(tmp_path / "afdb", records=5, rhythm_aux="(AFIB", base_freq=30.0, seed=1)
    write_synthetic_database(tmp_path / "nsrdb", records=5, rhythm_aux=None, beat_codes=True, base_freq=5.0, seed=2)
    build_fixture_bundle(tmp_path / "bundle")
    config = tmp_path / "experiment.toml"
    config.write_text(CONFIG_TEMPLATE.format(out="out"))
    return tmp_path, config


class TestBuildDataset:
    def test_builds_container_and_manifest(self, workspace, capsys):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "wrote 40 instances" in out
        assert (root / "out" / "dataset.ecgw").is_file()
        manifest = (root / "out" / "manifest.csv").read_text().splitlines()
        assert len(manifest) == 41

    def test_idempotent(self, workspace):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        first = (root / "out" / "dataset.ecgw").read_bytes()
        first_manifest = (root / "out" / "manifest.csv").read_bytes()
        assert main(["build-dataset", "--config", str(config)]) == 0
        assert (root / "out" / "dataset.ecgw").read_bytes() == first
        assert (root / "out" / "manifest.csv").read_bytes() == first_manifest

    def test_dry_run_counts_match_manifest(self, workspace, capsys):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config), "--dry-run"]) == 0
        out = capsys.readouterr().out
        assert not (root / "out").exists()
        counts = {}
        for line in out.splitlines():
            if line and not line.startswith(" "):
                cls, rest = line.split(":", 1)
                counts[cls] = int(rest.split()[0])
        assert counts == {"NORMAL": 60, "AF": 20}

        assert main(["build-dataset", "--config", str(config)]) == 0
        manifest = (root / "out" / "manifest.csv").read_text().splitlines()[1:]
        per_class = {}
        for line in manifest:
            label = line.split(",")[0]
            per_class[label] = per_class.get(label, 0) + 1
        # quota 20 per class; anchors are plentiful enough for both
        assert per_class == {"NORMAL": 20, "AF": 20}
        assert counts["AF"] >= per_class["AF"]
        assert counts["NORMAL"] >= per_class["NORMAL"]

    def test_missing_database_root(self, workspace, caplog):
        root, config = workspace
        config.write_text(CONFIG_TEMPLATE.format(out="out").replace('root = "afdb"', 'root = "gone"'))
        assert main(["build-dataset", "--config", str(config)]) == 2
        assert any("gone" in rec.message for rec in caplog.records)

    def test_missing_config_is_usage_error(self):
        assert main(["build-dataset"]) == 1

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_config_file_not_found(self, tmp_path):
        assert main(["build-dataset", "--config", str(tmp_path / "nope.toml")]) == 2


class TestExtract:
    def test_extract_writes_matrices(self, workspace, capsys):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        assert main(["extract", "--config", str(config)]) == 0
        features = root / "out" / "features"
        index = json.loads((features / "features.json").read_text())
        assert index["rows"] == 40
        assert [t["conv_index"] for t in index["taps"]] == [1, 2]
        m1 = load_matrix(features / "layer001.bin")
        assert m1.shape == (40, 8)
        m2 = load_matrix(features / "layer002.bin")
        assert m2.shape == (40, 16)

    def test_extract_idempotent(self, workspace):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        assert main(["extract", "--config", str(config)]) == 0
        blobs = {
            p.name: p.read_bytes() for p in sorted((root / "out" / "features").iterdir())
        }
        assert main(["extract", "--config", str(config)]) == 0
        for p in sorted((root / "out" / "features").iterdir()):
            assert p.read_bytes() == blobs[p.name]

    def test_layers_filter(self, workspace):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        assert main(["extract", "--config", str(config), "--layers", "2"]) == 0
        features = root / "out" / "features"
        index = json.loads((features / "features.json").read_text())
        assert [t["conv_index"] for t in index["taps"]] == [2]
        assert not (features / "layer001.bin").exists()

    def test_bad_bundle_is_model_error(self, workspace):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        (root / "bundle" / "weights.bin").write_bytes(b"corrupt")
        assert main(["extract", "--config", str(config)]) == 3

    def test_missing_dataset_is_data_error(self, workspace):
        _, config = workspace
        assert main(["extract", "--config", str(config)]) == 2


class TestEvaluateAndRunAll:
    def test_full_sequence(self, workspace, capsys):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        assert main(["extract", "--config", str(config)]) == 0
        assert main(["evaluate", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "best configuration:" in out
        report = json.loads((root / "out" / "report.json").read_text())
        assert report["n_instances"] == 40
        assert len(report["configurations"]) == 2 * 2 + 2
        assert (root / "out" / "accuracy_per_layer.svg").is_file()
        assert (root / "out" / "confusion_best.svg").is_file()

    def test_run_all_and_determinism(self, tmp_path, capsys):
        write_synthetic_database(tmp_path / "afdb", records=5, rhythm_aux="(AFIB", base_freq=30.0, seed=1)
        write_synthetic_database(tmp_path / "nsrdb", records=5, rhythm_aux=None, beat_codes=True, base_freq=5.0, seed=2)
        build_fixture_bundle(tmp_path / "bundle")
        cfg_a = tmp_path / "a.toml"
        cfg_a.write_text(CONFIG_TEMPLATE.format(out="out_a"))
        cfg_b = tmp_path / "b.toml"
        cfg_b.write_text(CONFIG_TEMPLATE.format(out="out_b"))
        assert main(["run-all", "--config", str(cfg_a)]) == 0
        assert main(["run-all", "--config", str(cfg_b)]) == 0
        for name in ("dataset.ecgw", "manifest.csv", "report.json",
                     "table_per_class.csv", "table_comparison.csv",
                     "accuracy_per_layer.svg", "confusion_best.svg"):
            a = (tmp_path / "out_a" / name).read_bytes()
            b = (tmp_path / "out_b" / name).read_bytes()
            assert a == b, f"{name} differs between identical runs"

    def test_no_selection_flag(self, workspace):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        assert main(["extract", "--config", str(config)]) == 0
        assert main(["evaluate", "--config", str(config), "--no-selection"]) == 0
        report = json.loads((root / "out" / "report.json").read_text())
        tap_cfgs = [c for c in report["configurations"] if c["kind"] == "tap"]
        assert len(tap_cfgs) == 2
        assert all(not c["selection"] for c in tap_cfgs)

    def test_evaluate_layers_filter(self, workspace):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        assert main(["extract", "--config", str(config)]) == 0
        assert main(["evaluate", "--config", str(config), "--layers", "1"]) == 0
        report = json.loads((root / "out" / "report.json").read_text())
        tap_cfgs = [c for c in report["configurations"] if c["kind"] == "tap"]
        assert {c["conv_index"] for c in tap_cfgs} == {1}

    def test_seed_override_changes_folds(self, workspace):
        root, config = workspace
        assert main(["build-dataset", "--config", str(config)]) == 0
        assert main(["extract", "--config", str(config)]) == 0
        assert main(["evaluate", "--config", str(config)]) == 0
        base = json.loads((root / "out" / "report.json").read_text())
        assert main(["evaluate", "--config", str(config), "--seed", "99"]) == 0
        other = json.loads((root / "out" / "report.json").read_text())
        assert base["folds"]["fold_of_row"] != other["folds"]["fold_of_row"]


def test_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.normal(size=(17, 9)).astype(np.float32)
    save_matrix(tmp_path / "m.bin", m)
    np.testing.assert_array_equal(load_matrix(tmp_path / "m.bin"), m)
