#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""命令行端到端测试：小规模配置下跑完整流水线"""
import json
import sys
from pathlib import Path

import pytest

# 添加 src 目录到路径
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from fellerpy import __version__
from fellerpy.cli import (COMMANDS, EXIT_FAIL, EXIT_INPUT, EXIT_PASS, FellerExperiment, build_parser,
                         main)
from fellerpy.exceptions import NoStabilization

PIPELINE = ("verify-semigroup", "bounds", "simulate", "corrupt", "regularize", "audit", "fdd")


def write_config(folder: Path, **overrides) -> Path:
    data = {
        "generator": [[-1, 1], [1, -1]],
        "gamma": [1, 0],
        "horizon": 1.5,
        "k_max": 20,
        "n_paths": 30,
        "seed": 42,
        "corruption_count": 1,
        "n_audit": 50,
        "markov_pairs": [[0.2, 0.3]],
        "grid_size": 10,
        "export_k": 4,
    }
    data.update(overrides)
    file = folder / "exp.json"
    file.write_text(json.dumps(data), encoding="utf-8")
    return file


def run_pipeline(config: Path, out: Path, *extra) -> dict:
    codes = {}
    for command in PIPELINE:
        codes[command] = main([command, "--config", str(config), "--out", str(out), *extra])
    return codes


def read_report(out: Path, command: str) -> dict:
    return json.loads((out / f"{command}.json").read_text(encoding="utf-8"))


@pytest.fixture(autouse=True)
def isolated_home(tmp_path, monkeypatch):
    # 配置库写在 ~/.fellerpy 下
    monkeypatch.setenv("HOME", str(tmp_path / "home"))


class TestParser:

    def test_commands(self):
        assert set(COMMANDS) == set(PIPELINE)
        args = build_parser().parse_args(["audit", "--config", "x.json", "--diagnostic"])
        assert args.diagnostic
        args = build_parser().parse_args(["simulate", "--config", "x.json", "--seed", "7"])
        assert args.seed == 7 and args.out == "out"

    def test_diagnostic_only_for_audit(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["simulate", "--config", "x.json", "--diagnostic"])


@pytest.mark.integration
class TestPipeline:

    def test_zero_generator_passes_everything(self, tmp_path):
        config = write_config(tmp_path, generator=[[0, 0], [0, 0]], gamma=[0.5, 0.5])
        codes = run_pipeline(config, tmp_path / "out")
        assert codes == {command: EXIT_PASS for command in PIPELINE}
        audit = read_report(tmp_path / "out", "audit")
        assert all(r["max_deviation"] == 0.0 for r in audit["markov"])

    def test_artifacts(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "out"
        codes = run_pipeline(config, out)
        for command in ("verify-semigroup", "bounds", "simulate", "corrupt", "regularize", "fdd"):
            assert codes[command] == EXIT_PASS
        assert codes["audit"] in (EXIT_PASS, EXIT_FAIL)

        manifest = json.loads((out / "paths" / "manifest.json").read_text(encoding="utf-8"))
        assert len(manifest["paths"]) == 30
        assert (out / "paths" / "path_00000.corrupt.csv").exists()
        assert (out / "regularized" / "partition.txt").read_text().splitlines()[0] == "0"
        assert (out / "bounds_grid.csv").exists()
        assert (out / "fdd_increments.csv").exists()
        assert (out / "fellerpy.log").exists()

        for command in PIPELINE:
            report = read_report(out, command)
            assert report["version"] == __version__
            assert report["config_hash"] == manifest["config_hash"]

        audit = read_report(out, "audit")["paths"]
        assert audit["cadlag_failures"] == 0
        assert audit["modification_rate"] == 1.0
        assert audit["rational_continuity_rate"] == 1.0
        assert audit["corruption_time_mismatches"] == 0
        bounds = read_report(out, "bounds")
        assert bounds["increment_bound_holds"] and bounds["variation_bound_holds"]

    def test_deterministic(self, tmp_path):
        config = write_config(tmp_path)
        run_pipeline(config, tmp_path / "a")
        run_pipeline(config, tmp_path / "b")
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                       if p.is_file() and p.name != "fellerpy.log")
        assert files
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel

    def test_diagnostic_shows_corruption(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "out"
        for command in ("simulate", "corrupt"):
            assert main([command, "--config", str(config), "--out", str(out)]) == EXIT_PASS
        main(["audit", "--config", str(config), "--out", str(out), "--diagnostic"])
        report = read_report(out, "audit")
        assert report["diagnostic"] is True
        assert report["paths"]["diagnostic_modification_rate"] < 1.0

    def test_overrides_and_store(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "out"
        code = main(["simulate", "--config", str(config), "--out", str(out), "--seed", "5",
                     "--n-paths", "4", "--store-name", "small"])
        assert code == EXIT_PASS
        assert read_report(out, "simulate")["n_paths"] == 4
        # 按名字再次载入保存过的配置
        assert main(["fdd", "--config", "small", "--out", str(out)]) == EXIT_PASS


@pytest.mark.integration
class TestInputErrors:

    def test_negative_rate(self, tmp_path):
        config = write_config(tmp_path, generator=[[1, -1], [1, -1]])
        assert main(["verify-semigroup", "--config", str(config), "--out",
                     str(tmp_path / "out")]) == EXIT_INPUT

    def test_missing_config(self, tmp_path):
        assert main(["bounds", "--config", str(tmp_path / "nope.json"), "--out",
                     str(tmp_path / "out")]) == EXIT_INPUT

    def test_missing_upstream(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["corrupt", "--config", str(config), "--out", str(out)]) == EXIT_INPUT
        assert main(["audit", "--config", str(config), "--out", str(out)]) == EXIT_INPUT

    def test_corrupt_needs_count(self, tmp_path):
        config = write_config(tmp_path, corruption_count=0)
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(config), "--out", str(out)]) == EXIT_PASS
        assert main(["corrupt", "--config", str(config), "--out", str(out)]) == EXIT_INPUT

    def test_malformed_upstream(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(config), "--out", str(out)]) == EXIT_PASS
        (out / "paths" / "path_00000.csv").write_text("when,where\n0,0\n", encoding="utf-8")
        assert main(["regularize", "--config", str(config), "--out", str(out)]) == EXIT_INPUT


@pytest.mark.integration
class TestRunFailures:

    def test_library_error_after_validation_is_failure(self, tmp_path, monkeypatch):
        config = write_config(tmp_path)
        out = tmp_path / "out"
        for command in ("simulate", "corrupt"):
            assert main([command, "--config", str(config), "--out", str(out)]) == EXIT_PASS

        def unstable(self, diagnostic=False):
            raise NoStabilization(0.5, "right", [0, 0, 1, 1])

        monkeypatch.setattr(FellerExperiment, "_audit_paths", unstable)
        assert main(["audit", "--config", str(config), "--out", str(out)]) == EXIT_FAIL
