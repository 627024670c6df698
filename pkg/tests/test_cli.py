import json
import os

import pytest

from ambsim import cli


def minimal_config(tmp_path, **run_overrides):
    payload = {
        "mode": "amb",
        "objective": {"kind": "linear_regression", "dim": 6, "noise_var": 0.01, "seed": 2},
        "topology": {"kind": "complete", "n": 3},
        "run": {"tau": 4, "seed": 11, **run_overrides},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path


def full_config(tmp_path, outdir, **extra):
    payload = {
        "mode": "amb",
        "objective": {"kind": "linear_regression", "dim": 8, "noise_var": 0.001, "seed": 3},
        "topology": {"kind": "testbed"},
        "consensus": {"scheme": "lazy-metropolis", "rounds": 4, "exact_batch_norm": False},
        "timing": {"kind": "shifted_exponential", "rate": 0.6667, "shift": 1.0,
                   "reference_batch": 60},
        "schedule": {"offset": 12.0, "work_scale": 600.0},
        "run": {"tau": 5, "compute_time": 2.5, "communication_time": 1.0, "batch": 600,
                "radius": 6.0, "seed": 21, "holdout": 100},
        "output": {"directory": str(outdir), "repeats": 1},
    }
    payload.update(extra)
    path = tmp_path / "full.json"
    path.write_text(json.dumps(payload))
    return path


class TestParsing:
    def test_minimal_config_fills_defaults(self, tmp_path):
        spec = cli.parse_config(minimal_config(tmp_path))
        assert spec.consensus["rounds"] == 5
        assert spec.consensus["scheme"] == "lazy-metropolis"
        assert spec.timing["kind"] == "deterministic"
        assert spec.schedule == {"offset": "auto", "work_scale": "auto"}
        assert spec.run["communication_time"] == 0.5
        assert spec.output["repeats"] == 1

    def test_unknown_top_level_key(self, tmp_path):
        path = minimal_config(tmp_path)
        payload = json.loads(path.read_text())
        payload["foo"] = 1
        path.write_text(json.dumps(payload))
        with pytest.raises(cli.ConfigError, match="'foo'"):
            cli.parse_config(path)

    def test_unknown_nested_key_names_path(self, tmp_path):
        path = minimal_config(tmp_path)
        payload = json.loads(path.read_text())
        payload["objective"]["bar"] = 1
        path.write_text(json.dumps(payload))
        with pytest.raises(cli.ConfigError, match="objective.bar"):
            cli.parse_config(path)

    def test_missing_required_key(self, tmp_path):
        path = minimal_config(tmp_path)
        payload = json.loads(path.read_text())
        del payload["run"]["tau"]
        path.write_text(json.dumps(payload))
        with pytest.raises(cli.ConfigError, match="run.tau"):
            cli.parse_config(path)

    def test_round_trip(self, tmp_path):
        spec = cli.parse_config(full_config(tmp_path, tmp_path / "out"))
        back = tmp_path / "roundtrip.json"
        cli.write_config(spec, back)
        assert cli.parse_config(back) == spec

    def test_reference_experiment_config_echoes(self, tmp_path):
        # The 10-node deployment settings: 5 rounds, window 14.5, comm 4.5.
        path = full_config(tmp_path, tmp_path / "out")
        payload = json.loads(path.read_text())
        payload["consensus"]["rounds"] = 5
        payload["run"].update({"compute_time": 14.5, "communication_time": 4.5,
                               "batch": 60000})
        path.write_text(json.dumps(payload))
        spec = cli.parse_config(path)
        cfg = cli.build_run_config(spec, seed=1)
        assert cfg.graph.n == 10
        assert cfg.compute_time == 14.5
        assert cfg.comm_time == 4.5
        assert cfg.rounds == 5

    def test_invalid_topology_reference(self, tmp_path):
        path = minimal_config(tmp_path)
        payload = json.loads(path.read_text())
        payload["topology"] = {"kind": "edge_list", "path": str(tmp_path / "missing.txt")}
        path.write_text(json.dumps(payload))
        spec = cli.parse_config(path)
        with pytest.raises(OSError):
            cli.build_run_config(spec, seed=1)


class TestRunExperiment:
    def test_writes_documented_files(self, tmp_path):
        outdir = tmp_path / "out"
        spec = cli.parse_config(full_config(tmp_path, outdir))
        assert cli.run_experiment(spec) == 0
        trace = (outdir / "amb_seed21.csv").read_text().splitlines()
        assert trace[0] == cli.TRACE_HEADER
        assert len(trace) == 6
        nodes = (outdir / "amb_seed21_nodes.csv").read_text().splitlines()
        assert nodes[0] == cli.NODES_HEADER
        assert len(nodes) == 1 + 5 * 10
        summary = (outdir / "summary.csv").read_text().splitlines()
        assert summary[0] == cli.SUMMARY_HEADER

    def test_repeats_create_seed_stamped_files(self, tmp_path):
        outdir = tmp_path / "out"
        spec = cli.parse_config(full_config(tmp_path, outdir,
                                            output={"directory": str(outdir), "repeats": 3}))
        cli.run_experiment(spec)
        for seed in (21, 22, 23):
            assert (outdir / f"amb_seed{seed}.csv").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        spec = cli.parse_config(full_config(tmp_path, out_a))
        cli.run_experiment(spec)
        import dataclasses
        spec_b = dataclasses.replace(spec, output={**spec.output, "directory": str(out_b)})
        cli.run_experiment(spec_b)
        for name in ("amb_seed21.csv", "amb_seed21_nodes.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_seed_env_override(self, tmp_path, monkeypatch):
        outdir = tmp_path / "out"
        spec = cli.parse_config(full_config(tmp_path, outdir))
        monkeypatch.setenv("AMB_SEED", "99")
        cli.run_experiment(spec)
        assert (outdir / "amb_seed99.csv").exists()

    def test_compare_writes_pair_and_comparison(self, tmp_path):
        outdir = tmp_path / "out"
        path = full_config(tmp_path, outdir)
        assert cli.main(["compare", str(path)]) == 0
        compare = (outdir / "compare.csv").read_text().splitlines()
        assert compare[0] == cli.COMPARE_HEADER
        assert len(compare) == 2
        assert (outdir / "amb_seed21.csv").exists()
        assert (outdir / "fmb_seed21.csv").exists()


class TestSubcommands:
    def test_run_exit_codes(self, tmp_path, capsys):
        path = minimal_config(tmp_path)
        payload = json.loads(path.read_text())
        payload["output"] = {"directory": str(tmp_path / "o")}
        path.write_text(json.dumps(payload))
        assert cli.main(["run", str(path)]) == 0
        assert cli.main(["run", str(tmp_path / "nope.json")]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_key_is_a_clean_failure(self, tmp_path, capsys):
        path = minimal_config(tmp_path)
        payload = json.loads(path.read_text())
        payload["mystery"] = True
        path.write_text(json.dumps(payload))
        assert cli.main(["run", str(path)]) == 1
        assert "mystery" in capsys.readouterr().err

    def test_topology_subcommand(self, tmp_path, capsys):
        edgefile = tmp_path / "g.txt"
        edgefile.write_text("3\n0 1\n1 2\n")
        assert cli.main(["topology", str(edgefile)]) == 0
        out = capsys.readouterr().out
        assert "lambda2 (lazy-metropolis)" in out
        assert "rounds" in out

    def test_bounds_subcommand(self, tmp_path, capsys):
        path = full_config(tmp_path, tmp_path / "out")
        assert cli.main(["bounds", str(path)]) == 0
        out = capsys.readouterr().out
        assert "sample-path bound" in out
        assert "empirical regret" in out

    def test_gnuplot_subcommand(self, capsys):
        assert cli.main(["gnuplot", "trace.csv"]) == 0
        assert "plot 'trace.csv'" in capsys.readouterr().out
