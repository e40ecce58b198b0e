import json
import math

import numpy as np
import pytest

from sgsp import cli
from sgsp.config import SgspConfig
from sgsp.environments import HART_MIXED_NE, HART_PURE_NE, build_hart_game
from sgsp.game import ConfigurationError, policy_to_list, save_game
from sgsp.harness import (
    HART_REFERENCES,
    NON_NASH,
    ExperimentConfig,
    classify_outcome,
    load_traces,
    run_cell,
    run_cells,
    summarize,
)
from sgsp.trace import RunTrace, read_trace


def hart_policy(*rows):
    return [np.array([r], dtype=float) for r in rows]


class TestClassify:
    def test_near_mixed(self):
        pi = hart_policy((0.49, 0.51, 0), (0.5, 0.5, 0))
        assert classify_outcome(pi, HART_REFERENCES, 0.1) == "mixed-NE"

    def test_exact_references(self):
        assert classify_outcome(hart_policy(*HART_PURE_NE), HART_REFERENCES) == "pure-NE"
        assert classify_outcome(hart_policy(*HART_MIXED_NE), HART_REFERENCES) == "mixed-NE"

    def test_non_nash(self):
        assert classify_outcome(hart_policy((1, 0, 0), (1, 0, 0)), HART_REFERENCES) == NON_NASH

    def test_oscillation_overrides(self):
        pi = hart_policy(*HART_PURE_NE)
        recent = [pi, hart_policy((0.1, 0, 0.9), (0, 0, 1)), pi]
        assert classify_outcome(pi, HART_REFERENCES, 0.1, recent) == NON_NASH

    def test_needs_references(self):
        with pytest.raises(ConfigurationError):
            classify_outcome(hart_policy(*HART_PURE_NE), [])


class TestConfig:
    def test_empty_seeds(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"experiment": "hart", "algorithm": "on-sgsp", "seeds": []})

    def test_unknown_names(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"experiment": "chess", "algorithm": "on-sgsp", "seeds": [1]})
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"experiment": "hart", "algorithm": "foe-q", "seeds": [1]})

    def test_custom_needs_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"experiment": "custom", "algorithm": "on-sgsp", "seeds": [1], "game_file": str(tmp_path / "none.json")})

    def test_sgsp_fields(self):
        cfg = ExperimentConfig.from_dict({"experiment": "hart", "algorithm": "on-sgsp", "seeds": [1], "sgsp": {"nu": 0.01, "step_b": {"warm_value": 0.3, "exponent": 0.9}}})
        assert cfg.sgsp.nu == 0.01 and cfg.sgsp.step_b.warm_value == 0.3


def fake_trace(alg, outcome, final):
    tr = RunTrace(metadata={"algorithm": alg, "wall_clock_s": 1.0}, final={"outcome": outcome})
    tr.record(0, "distance", 3.0)
    tr.record(10, "distance", final)
    return tr


class TestSummarize:
    def test_identical_traces_zero_std(self):
        rows = summarize([fake_trace("on-sgsp", "nash", 2.0) for _ in range(100)])
        dist = next(r for r in rows if r["quantity"] == "final distance")
        assert dist["value"] == 2.0 and dist["std"] == 0.0

    def test_percentages_sum_to_100(self):
        traces = [fake_trace("nashq", lab, 1.0) for lab in ["a", "b", "b", NON_NASH, "a", "a", "c"]]
        rows = summarize(traces)
        total = sum(r["value"] for r in rows if r["quantity"].startswith("outcome %"))
        assert math.isclose(total, 100.0)

    def test_needs_traces(self):
        with pytest.raises(ConfigurationError):
            summarize([])


class TestCells:
    def test_run_cells_writes_artifacts(self, tmp_path):
        cfg = ExperimentConfig.from_dict({
            "experiment": "hart", "algorithms": ["on-sgsp", "nashq", "friendq", "off-sgsp"], "seeds": [0, 1],
            "steps": 300, "output_dir": str(tmp_path), "sgsp": {"snapshot_every": 100},
        })
        results = run_cells(cfg, workers=1)
        assert all(err is None for _, _, err in results)
        for alg in cfg.algorithms:
            for seed in cfg.seeds:
                assert (tmp_path / f"{alg}_seed{seed}.csv").exists()
                doc = json.loads((tmp_path / f"{alg}_seed{seed}.json").read_text())
                assert doc["metadata"]["seed"] == seed
                assert doc["metadata"]["rng"].endswith("PCG64")
        assert (tmp_path / "summary.csv").exists() and (tmp_path / "summary.txt").exists()
        assert len(load_traces(tmp_path)) == 8

    def test_parallel_matches_sequential(self, tmp_path):
        doc = {"experiment": "stg", "size": 3, "algorithms": ["on-sgsp"], "seeds": [0, 1], "steps": 2000,
               "sgsp": {"snapshot_every": 500}}
        a = ExperimentConfig.from_dict({**doc, "output_dir": str(tmp_path / "a")})
        b = ExperimentConfig.from_dict({**doc, "output_dir": str(tmp_path / "b")})
        run_cells(a, workers=1)
        run_cells(b, workers=2)
        for seed in (0, 1):
            name = f"on-sgsp_seed{seed}.csv"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_trace_csv_round_trip(self, tmp_path):
        cfg = ExperimentConfig.from_dict({"experiment": "stg-delta", "size": 4, "algorithm": "on-sgsp", "seeds": [3], "steps": 1000, "sgsp": {"snapshot_every": 250}})
        trace = run_cell(cfg, "on-sgsp", 3)
        trace.write(tmp_path, "x")
        back = read_trace(tmp_path / "x.csv")
        assert back.row_lines() == trace.row_lines()
        steps, _ = back.series("distance")
        assert np.all(np.diff(steps) > 0)


class TestCli:
    def test_run_and_summarize(self, tmp_path, capsys):
        cfg = {"experiment": "hart", "algorithm": "on-sgsp", "seeds": [0], "steps": 200, "output_dir": "out"}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        # relative output directories resolve against the working directory
        import os

        cwd = os.getcwd()
        os.chdir(tmp_path)
        try:
            assert cli.main(["run", str(path)]) == 0
            assert cli.main(["summarize", "out"]) == 0
        finally:
            os.chdir(cwd)
        assert "on-sgsp" in capsys.readouterr().out

    def test_invalid_config_exit_2(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"experiment": "hart", "algorithm": "on-sgsp", "seeds": []}))
        assert cli.main(["run", str(path)]) == 2
        path.write_text("{not json")
        assert cli.main(["run", str(path)]) == 2

    def test_abort_exit_1(self, tmp_path):
        from sgsp.game import StochasticGame

        game = StochasticGame(np.array([[1]]), np.ones((1, 1, 1)), np.array([[[1e308]]]), 0.99)
        save_game(game, tmp_path / "g.json")
        cfg = {"experiment": "custom", "game_file": "g.json", "algorithm": "off-sgsp", "seeds": [0], "steps": 50,
               "output_dir": str(tmp_path / "out"), "sgsp": {"step_c": {"warm_value": 1.0, "exponent": 1.0}}}
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        with np.errstate(all="ignore"):
            assert cli.main(["run", str(tmp_path / "cfg.json")]) == 1
        assert (tmp_path / "out" / "off-sgsp_seed0.json").exists()

    def test_verify(self, tmp_path, capsys):
        game = build_hart_game(0.8)
        save_game(game, tmp_path / "g.json")
        pi = hart_policy(*HART_MIXED_NE)
        (tmp_path / "p.json").write_text(json.dumps(policy_to_list(game, pi)))
        assert cli.main(["verify", str(tmp_path / "g.json"), str(tmp_path / "p.json"), "--tol", "1e-6"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["certified"] and out["is_nash"]
        (tmp_path / "q.json").write_text(json.dumps({"policy": [[[1, 0, 0]], [[1, 0, 0]]], "values": [[0.0], [5.0]]}))
        assert cli.main(["verify", str(tmp_path / "g.json"), str(tmp_path / "q.json")]) == 0
        out = json.loads(capsys.readouterr().out)
        assert not out["certified"] and not out["is_nash"]

    def test_verify_bad_input(self, tmp_path):
        (tmp_path / "g.json").write_text("{}")
        (tmp_path / "p.json").write_text("[]")
        assert cli.main(["verify", str(tmp_path / "g.json"), str(tmp_path / "p.json")]) == 2
