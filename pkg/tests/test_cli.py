import json

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from platoon_codesign.cli import (EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_OK,
                                  EXIT_SCHEMA, main)
from platoon_codesign.config import ConfigError, ScenarioConfig, load_schema
from platoon_codesign.sim import read_csv

SMALL = {"vehicles": {"count": 3}, "sim": {"horizon": 2.0}}


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


@pytest.fixture(scope="module")
def synthesized(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("synth")
    cfg = write_config(tmp, dict(SMALL, output=str(tmp / "out")))
    assert main(["synthesize", "--config", cfg]) == EXIT_OK
    return cfg, tmp / "out" / "result.json"


class TestConfig:
    def test_defaults(self):
        cfg = ScenarioConfig.from_dict({})
        assert cfg.count == 9 and cfg.formulation == "II" and cfg.gamma_bar == 10.0
        assert cfg.base.m == 1500.0 and cfg.base.tau == 0.25

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"vehicles": {"cnt": 3}})

    def test_override_out_of_range(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"vehicles": {"count": 2,
                                                   "overrides": [{"index": 3, "m": 1.0}]}})

    def test_matrix_shape(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"vehicles": {"count": 2},
                                      "costs": {"matrix": [[0.0]]}})

    def test_overrides_applied(self):
        cfg = ScenarioConfig.from_dict({"vehicles": {"count": 3,
                                                     "overrides": [{"index": 2, "m": 1800.0}]}})
        assert [v.m for v in cfg.vehicle_params()] == [1500.0, 1800.0, 1500.0]

    def test_schema_is_closed(self):
        assert load_schema()["additionalProperties"] is False

    @settings(max_examples=25, deadline=None)
    @given(count=st.integers(1, 12), formulation=st.sampled_from(["I", "II"]),
           mode=st.sampled_from(["centralized", "decentralized"]),
           seed=st.integers(0, 1000), gamma_bar=st.floats(0.5, 50.0),
           ss=st.booleans(), horizon=st.floats(0.5, 10.0))
    def test_round_trip(self, count, formulation, mode, seed, gamma_bar, ss, horizon):
        data = {"vehicles": {"count": count}, "formulation": formulation,
                "mode": mode, "string_stability": ss, "gamma_bar": gamma_bar,
                "noise": {"seed": seed}, "sim": {"horizon": horizon},
                "events": [{"time": horizon / 2, "kind": "merge"}]}
        cfg = ScenarioConfig.from_dict(data)
        again = ScenarioConfig.from_dict(yaml.safe_load(cfg.dump()))
        assert again == cfg
        assert again.to_dict() == cfg.to_dict()

    def test_hash_ignores_noise(self):
        a = ScenarioConfig.from_dict({})
        assert a.synthesis_hash() == a.replace(noise=a.noise.__class__(seed=9)).synthesis_hash()
        assert a.synthesis_hash() != a.replace(gamma_bar=5.0).synthesis_hash()


class TestSynthesize:
    def test_outputs(self, synthesized, capsys):
        cfg, result = synthesized
        data = json.loads(result.read_text())
        assert data["gamma_tilde"] < 10.0
        assert data["config_hash"] == ScenarioConfig.load(cfg).synthesis_hash()
        assert (result.parent / "report.txt").exists()

    def test_infeasible_bound(self, tmp_path):
        cfg = write_config(tmp_path, dict(SMALL, gamma_bar=1e-6, output=str(tmp_path)))
        assert main(["synthesize", "--config", cfg]) == EXIT_INFEASIBLE

    def test_schema_error(self, tmp_path):
        cfg = write_config(tmp_path, {"bogus": 1})
        assert main(["synthesize", "--config", cfg]) == EXIT_SCHEMA

    def test_missing_config(self, tmp_path):
        assert main(["synthesize", "--config", str(tmp_path / "nope.yaml")]) == EXIT_SCHEMA

    def test_string_stability_flag(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(SMALL, output=str(tmp_path)))
        code = main(["synthesize", "--config", cfg, "--mode", "decentralized",
                     "--string-stability"])
        assert code == EXIT_OK
        data = json.loads((tmp_path / "result.json").read_text())
        assert data["string_stability"] is True
        segs, gh = data["segments"], data["gamma_hat"]
        rank = {f: k for k, f in enumerate(sorted(f for s in segs for f in s["followers"]))}
        for seg in segs:
            g = [gh[rank[f]] for f in seg["followers"]]
            assert all(b < a for a, b in zip(g, g[1:]))


class TestCheck:
    def test_fresh_result_passes(self, synthesized, capsys):
        _, result = synthesized
        assert main(["check", "--result", str(result)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and out.count("PASS") >= 6

    def test_structure_fault(self, synthesized, tmp_path, capsys):
        _, result = synthesized
        data = json.loads(result.read_text())
        data["gains"]["K"][0][1][0][0] = 0.5
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(data))
        assert main(["check", "--result", str(bad)]) == EXIT_NUMERICAL
        lines = capsys.readouterr().out.splitlines()
        assert any(l.startswith("FAIL") and "structure" in l for l in lines)

    def test_gain_fault(self, synthesized, tmp_path, capsys):
        _, result = synthesized
        data = json.loads(result.read_text())
        data["gamma_tilde"] = 12.0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(data))
        assert main(["check", "--result", str(bad)]) == EXIT_NUMERICAL
        lines = capsys.readouterr().out.splitlines()
        assert any(l.startswith("FAIL") and "gain_bound" in l for l in lines)

    def test_parse_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["check", "--result", str(bad)]) == EXIT_SCHEMA


class TestSimulate:
    def test_outputs(self, synthesized, tmp_path, capsys):
        cfg, result = synthesized
        code = main(["simulate", "--config", cfg, "--result", str(result),
                     "--out", str(tmp_path), "--seed", "7"])
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "metrics.json").read_text())
        assert summary["metrics"]["collisions"] == 0
        assert summary["dissipation"]["ok"] in (True, False)
        assert len(list(tmp_path.glob("*.svg"))) == 5
        header, _ = read_csv(tmp_path / "trace.csv")
        assert header[0] == "t" and len(header) == 1 + 8 * 3

    def test_zero_noise_zero_errors(self, tmp_path):
        data = dict(SMALL, noise={"enabled": False}, output=str(tmp_path),
                    leader={"segments": [[0.0, 2.0, 20.0, 0.0]]},
                    sim={"horizon": 2.0, "jitter": 0.0})
        cfg = write_config(tmp_path, data)
        assert main(["synthesize", "--config", cfg]) == EXIT_OK
        assert main(["simulate", "--config", cfg,
                     "--result", str(tmp_path / "result.json")]) == EXIT_OK
        header, rows = read_csv(tmp_path / "trace.csv")
        err_cols = [k for k, h in enumerate(header) if h.split("_")[0] in ("ex", "ev", "ea")]
        assert np.max(np.abs(rows[:, err_cols])) < 1e-9

    def test_formulation_mismatch(self, synthesized, tmp_path):
        cfg, result = synthesized
        assert main(["simulate", "--config", cfg, "--result", str(result),
                     "--formulation", "I", "--out", str(tmp_path)]) == EXIT_SCHEMA

    def test_hash_mismatch(self, synthesized, tmp_path):
        _, result = synthesized
        other = write_config(tmp_path, dict(SMALL, gamma_bar=9.0, output=str(tmp_path)))
        args = ["simulate", "--config", other, "--result", str(result)]
        assert main(args) == EXIT_SCHEMA
        assert main(args + ["--force"]) == EXIT_OK

    def test_merge_event(self, tmp_path, capsys):
        data = dict(SMALL, mode="decentralized", output=str(tmp_path),
                    events=[{"time": 1.0, "kind": "merge"}])
        cfg = write_config(tmp_path, data)
        assert main(["synthesize", "--config", cfg]) == EXIT_OK
        assert main(["simulate", "--config", cfg,
                     "--result", str(tmp_path / "result.json")]) == EXIT_OK
        summary = json.loads((tmp_path / "metrics.json").read_text())
        assert [e["kind"] for e in summary["events"]] == ["merge"]
        v1 = json.loads((tmp_path / "result.v1.json").read_text())
        assert len(v1["certificates"]) == 4


def test_demo_single_mode(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(SMALL, output=str(tmp_path)))
    assert main(["demo", "--config", cfg, "--mode", "centralized"]) == EXIT_OK
    assert (tmp_path / "centralized" / "trace.csv").exists()
    assert "centralized" in capsys.readouterr().out
