"""End-to-end CLI coverage through click's test runner."""
import json
from pathlib import Path

import yaml
from click.testing import CliRunner

from zoomseg.cli import main
from zoomseg.fixtures import make_fixtures
from zoomseg.tensorio import load_tensor


def write_config(path: Path, **overrides) -> Path:
    data = {
        "seed": 3,
        "classes": 4,
        "plan": {
            "image": [64, 64],
            "levels": [[64, 64], [32, 32], [16, 16]],
        },
        "backend": {
            "kind": "oracle",
            "blur_sigma_at_coarsest": 2.0,
            "label_noise_rate": 0.02,
        },
        "k": 65536,
    }
    data.update(overrides)
    path.write_text(yaml.safe_dump(data))
    return path


def make_dataset(root: Path, count=2, size=64, classes=4):
    make_fixtures(root, seed=12, count=count, size=size, num_classes=classes)
    return root


class TestTilePlan:
    def test_prints_counts_and_writes_csv(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.yaml")
        csv_path = tmp_path / "wins.csv"
        result = CliRunner().invoke(main, ["tile-plan", "--config", str(cfg), "--csv", str(csv_path)])
        assert result.exit_code == 0, result.output
        assert "scale 1: 1 windows" in result.output
        assert "scale 3: 16 windows" in result.output
        rows = csv_path.read_text().strip().splitlines()
        assert rows[0] == "scale,index,x,y,w,h"
        assert len(rows) == 1 + 1 + 4 + 16

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({
            "classes": 4,
            "plan": {"image": [64, 64], "levels": [[64, 64], [48, 48]], "proc": [16, 16]},
        }))
        result = CliRunner().invoke(main, ["tile-plan", "--config", str(bad)])
        assert result.exit_code == 2

    def test_env_var_supplies_config(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path / "cfg.yaml")
        monkeypatch.setenv("ZOOMSEG_CONFIG", str(cfg))
        result = CliRunner().invoke(main, ["tile-plan"])
        assert result.exit_code == 0, result.output


class TestFixturesCmd:
    def test_generates_dataset(self, tmp_path):
        out = tmp_path / "data"
        result = CliRunner().invoke(
            main,
            ["fixtures", "--out", str(out), "--seed", "4", "--count", "2", "--size", "32"],
        )
        assert result.exit_code == 0, result.output
        assert len(list((out / "images").glob("*.png"))) == 2


class TestRun:
    def test_run_writes_outputs(self, tmp_path):
        data = make_dataset(tmp_path / "data")
        cfg = write_config(tmp_path / "cfg.yaml")
        out = tmp_path / "out"
        result = CliRunner().invoke(main, [
            "run",
            "--image", str(data / "images" / "fix_000.png"),
            "--labels", str(data / "labels" / "fix_000.png"),
            "--config", str(cfg),
            "--out", str(out),
            "--save-stages", str(out / "stages"),
        ])
        assert result.exit_code == 0, result.output
        final = load_tensor(out / "fix_000.mgt")
        assert final.shape == (64, 64, 4)
        assert (out / "fix_000_labels.png").exists()
        stage_files = sorted((out / "stages").glob("*.mgt"))
        assert len(stage_files) == 3
        manifest = json.loads((out / "fix_000_manifest.json").read_text())
        assert manifest["seed"] == 3
        assert len(manifest["stages"]) == 3
        assert all(s["miou"] is not None for s in manifest["stages"])
        lines = (out / "fix_000_stages.jsonl").read_text().strip().splitlines()
        assert len(lines) == 3

    def test_oracle_without_labels_is_backend_error(self, tmp_path):
        data = make_dataset(tmp_path / "data")
        cfg = write_config(tmp_path / "cfg.yaml")
        result = CliRunner().invoke(main, [
            "run",
            "--image", str(data / "images" / "fix_000.png"),
            "--config", str(cfg),
        ])
        assert result.exit_code == 2

    def test_backend_failure_exit_code(self, tmp_path):
        data = make_dataset(tmp_path / "data")
        cfg = write_config(
            tmp_path / "cfg.yaml",
            backend={"kind": "external", "command": ["/no/such/server/binary"]},
        )
        result = CliRunner().invoke(main, [
            "run",
            "--image", str(data / "images" / "fix_000.png"),
            "--config", str(cfg),
        ])
        assert result.exit_code == 3

    def test_fast_flag_requires_config_section(self, tmp_path):
        data = make_dataset(tmp_path / "data")
        cfg = write_config(tmp_path / "cfg.yaml")
        result = CliRunner().invoke(main, [
            "run",
            "--image", str(data / "images" / "fix_000.png"),
            "--labels", str(data / "labels" / "fix_000.png"),
            "--config", str(cfg),
            "--fast",
        ])
        assert result.exit_code == 2


class TestEval:
    def test_eval_perfect_prediction(self, tmp_path):
        data = make_dataset(tmp_path / "data")
        out_json = tmp_path / "m.json"
        cdf_csv = tmp_path / "cdf.csv"
        result = CliRunner().invoke(main, [
            "eval",
            "--pred-dir", str(data / "labels"),
            "--gt-dir", str(data / "labels"),
            "--classes", "4",
            "--out-json", str(out_json),
            "--cdf-csv", str(cdf_csv),
            "--bins", "4",
        ])
        assert result.exit_code == 0, result.output
        metrics = json.loads(out_json.read_text())
        assert metrics["miou"] == 1.0
        assert metrics["images"] == 2
        rows = cdf_csv.read_text().strip().splitlines()
        assert rows[0] == "iou_edge,fraction_le"
        assert rows[-1].endswith("1.0")

    def test_eval_empty_dirs_is_io_error(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        result = CliRunner().invoke(main, [
            "eval", "--pred-dir", str(tmp_path / "a"),
            "--gt-dir", str(tmp_path / "b"), "--classes", "2",
        ])
        assert result.exit_code == 4


class TestAblate:
    def test_sweep_writes_csv(self, tmp_path):
        data = make_dataset(tmp_path / "data", count=1, size=32)
        cfg = write_config(
            tmp_path / "cfg.yaml",
            plan={"image": [32, 32], "levels": [[32, 32], [16, 16]]},
        )
        out_csv = tmp_path / "ablate.csv"
        result = CliRunner().invoke(main, [
            "ablate", "--config", str(cfg), "--data", str(data),
            "--out", str(out_csv),
            "--strategies", "product,linear",
            "--alphas", "0.5",
            "--kernels", "1,3",
            "--ks", "64",
        ])
        assert result.exit_code == 0, result.output
        rows = out_csv.read_text().strip().splitlines()
        assert rows[0] == "strategy,alpha,kernel,k,miou"
        # product x {1,3} + linear(0.5) x {1,3}, one k each
        assert len(rows) == 1 + 4
        for row in rows[1:]:
            assert 0.0 <= float(row.split(",")[-1]) <= 1.0
