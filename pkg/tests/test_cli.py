import json

import pytest

from argp.cli import main
from argp.config import DEFAULTS, ConfigError, build_experiment, load_config


def run(argv):
    return main([str(a) for a in argv])


class TestConfig:
    def test_defaults_validate(self):
        cfg = load_config(None)
        assert cfg == DEFAULTS

    def test_unknown_key_rejected_with_path(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"sensor": {"alpa": 0.01}}))
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert "alpa" in str(info.value)
        assert info.value.json_path.startswith("$")

    def test_wrong_type_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"kernel": {"sigma2": "big"}}))
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert "sigma2" in info.value.json_path

    def test_tree_consistency_enforced(self, tmp_path):
        path = tmp_path / "tree.json"
        path.write_text(json.dumps({"tree": {"N": 2, "depth_t": 3, "leaves_per_axis": 32}}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_depth_form_accepted(self, tmp_path):
        path = tmp_path / "tree.json"
        path.write_text(json.dumps({"tree": {"N": 2, "depth_t": 3}}))
        exp = build_experiment(load_config(path))
        assert exp.tree.leaves_per_axis == 8

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"prior_mean": 0.6}))
        cfg = load_config(path, {"prior_mean": 0.9})
        assert cfg["prior_mean"] == 0.9


class TestWorldGen:
    def test_deterministic_files(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["world", "gen", "--seed", 1, "--out", a]) == 0
        assert run(["world", "gen", "--seed", 1, "--out", b]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.meta.json").exists()

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        monkeypatch.setenv("ARGP_SEED", "77")
        assert run(["world", "gen", "--out", a]) == 0
        monkeypatch.delenv("ARGP_SEED")
        assert run(["world", "gen", "--seed", 77, "--out", b]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestBenchCommand:
    def test_row_count_example(self, tmp_path):
        out = tmp_path / "results.csv"
        code = run(["bench", "table1", "--sizes", "8", "--methods", "argp,fr",
                    "--trials", 3, "--seed", 7, "--jobs", 1, "--synthetic-time",
                    "--out", out, "--summary", tmp_path / "summary.json"])
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 6  # header + 2 methods x 3 trials
        assert lines[0].startswith("method,map_size,seed")
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert "argp" in summary["8"]

    def test_bitwise_identical_reruns(self, tmp_path):
        args = ["bench", "table1", "--sizes", "8", "--methods", "argp,fr",
                "--trials", 2, "--seed", 3, "--jobs", 1, "--synthetic-time"]
        assert run(args + ["--out", tmp_path / "r1.csv"]) == 0
        assert run(args + ["--out", tmp_path / "r2.csv"]) == 0
        assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()

    def test_invalid_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"merge": {"confidence_term": "nope"}}))
        code = run(["bench", "table1", "--config", bad, "--sizes", "8",
                    "--trials", 1, "--out", tmp_path / "r.csv"])
        assert code == 2


class TestMapCommands:
    def test_map_run_outputs(self, tmp_path):
        out = tmp_path / "mission.csv"
        metrics = tmp_path / "metrics.json"
        snap = tmp_path / "map.json"
        code = run(["map", "run", "--seed", 5, "--leaves-per-axis", 8,
                    "--synthetic-time", "--out", out, "--metrics", metrics,
                    "--dump-map", snap, "--cov", "diag"])
        assert code == 0
        assert out.read_text().splitlines()[0] == \
            "step,x,y,z,t_flight,t_planning,t_mapping,hs_trace,leaf_count"
        doc = json.loads(snap.read_text())
        assert "cov_diag" in doc and "cov" not in doc
        assert len(doc["cells"]) == len(doc["mean"])
        m = json.loads(metrics.read_text())
        assert set(m) >= {"method", "rmse", "rmse_hotspots", "leaf_count_final"}

    def test_map_dump(self, tmp_path):
        snap = tmp_path / "map.json"
        code = run(["map", "dump", "--seed", 2, "--leaves-per-axis", 8,
                    "--synthetic-time", "--method", "fr", "--out", snap])
        assert code == 0
        doc = json.loads(snap.read_text())
        assert len(doc["cells"]) == 64
        assert len(doc["cov"]) == 64

    def test_map_run_on_external_field(self, tmp_path):
        field = tmp_path / "field.csv"
        assert run(["world", "gen", "--seed", 4, "--out", field]) == 0
        code = run(["map", "run", "--seed", 4, "--leaves-per-axis", 8,
                    "--synthetic-time", "--field", field,
                    "--metrics", tmp_path / "m.json"])
        assert code == 0

    def test_runtime_failure_is_structured_exit_1(self, tmp_path, capsys):
        broken = tmp_path / "broken.csv"
        broken.write_text("0.1,0.2\n0.3\n")
        code = run(["map", "run", "--seed", 1, "--leaves-per-axis", 8,
                    "--field", broken, "--synthetic-time"])
        assert code == 1
        err = capsys.readouterr().err.strip()
        doc = json.loads(err.splitlines()[-1])
        assert "error" in doc and "type" in doc


class TestPlanCommand:
    def test_greedy_missions_written(self, tmp_path):
        out = tmp_path / "missions"
        code = run(["plan", "greedy", "--map", "argp", "--budget", 30,
                    "--trials", 2, "--seed", 6, "--synthetic-time",
                    "--out-dir", out])
        assert code == 0
        files = sorted(p.name for p in out.iterdir())
        assert "mission_argp_000.csv" in files
        assert "mission_argp_001.csv" in files
        assert "timeseries.csv" in files and "summary.json" in files
        header = (out / "mission_argp_000.csv").read_text().splitlines()[0]
        assert header == "step,x,y,z,t_flight,t_planning,t_mapping,hs_trace,leaf_count"


class TestAtomicWrites:
    def test_overwrites_in_place_and_leaves_no_temp(self, tmp_path):
        from argp.fileio import atomic_write_text

        target = tmp_path / "deep" / "out.txt"
        atomic_write_text(target, "first")
        atomic_write_text(target, "second")
        assert target.read_text() == "second"
        assert [p.name for p in (tmp_path / "deep").iterdir()] == ["out.txt"]


class TestHelp:
    @pytest.mark.parametrize("path", [
        [], ["world"], ["world", "gen"], ["map"], ["map", "run"], ["map", "dump"],
        ["bench"], ["bench", "table1"], ["plan"], ["plan", "greedy"],
    ])
    def test_every_subcommand_has_help(self, path):
        assert run(path + ["--help"]) == 0

    def test_flags_listed_with_defaults(self, capsys):
        run(["bench", "table1", "--help"])
        text = capsys.readouterr().out
        for flag in ("--sizes", "--methods", "--trials", "--seed", "--out",
                     "--summary", "--jobs", "--synthetic-time", "--slow"):
            assert flag in text
        assert "default" in text
