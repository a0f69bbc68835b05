import json
import subprocess
import sys

import numpy as np
import pytest

from mixspec.cli import main
from mixspec.config import CONFIG_KEYS

from synthetic import write_planted


@pytest.fixture
def planted_cfg(tmp_path):
    path, _ = write_planted(tmp_path, n=60, seed=1)
    return path


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_subcommand(self):
        assert main([]) == 1

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["pipeline", "--config", str(tmp_path / "none.toml")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_invalid_config_lists_every_error(self, planted_cfg, capsys):
        code = main(["pipeline", "--config", str(planted_cfg), "--set", "fit.learning_rate=-1",
                     "--set", "bogus=2", "--set", "factorize.k=100"])
        err = capsys.readouterr().err
        assert code == 1
        assert "fit.learning_rate" in err and "bogus" in err and "k < p1 + p2" in err

    def test_stage_failure(self, planted_cfg, tmp_path, capsys):
        code = main(["pipeline", "--config", str(planted_cfg), "--out", str(tmp_path / "o"),
                     "--set", "clusters=[500]", "-q"])
        assert code == 2
        assert "[cluster]" in capsys.readouterr().err

    def test_missing_artifact(self, planted_cfg, tmp_path, capsys):
        assert main(["embed", "--config", str(planted_cfg), "--out", str(tmp_path / "empty"), "-q"]) == 2
        assert "[embed]" in capsys.readouterr().err

    def test_help_documents_keys(self, capsys):
        assert main(["cluster", "--help"]) == 0
        out = capsys.readouterr().out
        for key, default, _ in CONFIG_KEYS:
            assert key in out


class TestRuns:
    def test_pipeline_outputs(self, planted_cfg, tmp_path):
        out = tmp_path / "run"
        assert main(["pipeline", "--config", str(planted_cfg), "--out", str(out), "--seed", "2", "-q"]) == 0
        for name in ("report.json", "tables.csv", "fig2.csv", "fig3.csv", "embedding.csv"):
            assert (out / name).is_file()
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["seeds"] == [2]
        assert report["config"]["out"] == str(out.resolve())

    def test_stages_match_pipeline(self, planted_cfg, tmp_path):
        work, full = tmp_path / "work", tmp_path / "full"
        for stage in ("ingest", "factorize", "fit-graph", "embed", "cluster", "evaluate"):
            assert main([stage, "--config", str(planted_cfg), "--out", str(work), "-q"]) == 0, stage
        assert main(["pipeline", "--config", str(planted_cfg), "--out", str(full), "-q"]) == 0
        staged = np.genfromtxt(work / "metrics.csv", delimiter=",", names=True, dtype=None, encoding=None)
        table = np.genfromtxt(full / "tables.csv", delimiter=",", names=True, dtype=None, encoding=None)
        for row in np.atleast_1d(staged):
            match = [t for t in np.atleast_1d(table) if t["method"] == row["method"] and t["L"] == row["L"]]
            assert match[0]["R"] == row["R"] and match[0]["E"] == row["E"]

    def test_benchmark(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        pa, _ = write_planted(a, n=50, seed=0)
        pb, _ = write_planted(b, n=50, seed=1)
        pb.write_text(pb.read_text().replace('name = "planted"', 'name = "other"'))
        bench = tmp_path / "bench.toml"
        bench.write_text(f'configs = ["{pa}", "{pb}", "missing.toml"]\nout = "bench_out"\n')
        assert main(["benchmark", "--config", str(bench), "-q"]) == 1
        bench.write_text(f'configs = ["{pa}", "{pb}"]\nout = "bench_out"\n[set]\nrestarts = 2\n')
        assert main(["benchmark", "--config", str(bench), "-q"]) == 0
        assert (tmp_path / "bench_out" / "planted" / "tables.csv").is_file()
        assert (tmp_path / "bench_out" / "other" / "tables.csv").is_file()
        summary = json.loads((tmp_path / "bench_out" / "benchmark.json").read_text())
        assert [s["status"] for s in summary] == ["ok", "ok"]

    def test_console_entry_point(self, planted_cfg, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "mixspec.cli", "ingest", "--config", str(planted_cfg),
                               "--out", str(tmp_path / "w")], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert json.loads((tmp_path / "w" / "ingest.json").read_text())["n"] == 60
