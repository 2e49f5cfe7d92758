import csv
import io
import json
import math

import pytest

from twopath.cli import ConfigError, RunConfig, main, parse_grid


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def csv_rows(text):
    return list(csv.DictReader(io.StringIO("".join(l + "\n" for l in text.splitlines() if not l.startswith("#")))))


def probs(text):
    return {r["outcome"]: float(r["probability"]) for r in csv_rows(text)}


class TestExact:
    def test_double_slit(self, capsys):
        code, out, _ = run_cli(capsys, "exact", "--scenario", "double-slit", "--format", "csv")
        assert code == 0
        assert out.splitlines()[0] == "outcome,probability"
        assert probs(out) == {"screen=A": 1.0, "screen=B": 0.0}

    def test_bomb(self, capsys):
        _, out, _ = run_cli(capsys, "exact", "--scenario", "bomb", "--bomb", "real", "--format", "csv")
        assert sorted(probs(out).values()) == pytest.approx([0.25] * 4)

    def test_which_path_epsilon(self, capsys):
        _, out, _ = run_cli(capsys, "exact", "--scenario", "which-path", "--epsilon", "0.2")
        assert "# marginal screen: A=0.6  B=0.4" in out

    def test_table_default(self, capsys):
        _, out, _ = run_cli(capsys, "exact", "--scenario", "single-slit-left")
        assert out.splitlines()[0].split() == ["outcome", "probability"]

    def test_grid_rejected(self, capsys):
        code, _, err = run_cli(capsys, "exact", "--scenario", "decoherence", "--tau", "0:1:0.5")
        assert code == 2 and err.count("\n") == 1


class TestRun:
    def test_double_slit_all_a(self, capsys):
        code, out, _ = run_cli(capsys, "run", "--scenario", "double-slit", "--trials", "10", "--format", "csv")
        rows = {r["outcome"]: r for r in csv_rows(out)}
        assert code == 0 and rows["screen=A"]["count"] == "10" and rows["screen=B"]["count"] == "0"

    def test_which_path_collapse(self, capsys):
        code, out, _ = run_cli(capsys, "run", "--scenario", "which-path", "--policy", "collapse",
                               "--trials", "20000", "--seed", "42", "--format", "csv")
        assert code == 0
        assert out.strip().endswith("# trials=20000 seed=42 oracle=pass")
        assert all(r["check"] == "pass" for r in csv_rows(out))

    def test_bomb_protocol(self, capsys):
        code, out, _ = run_cli(capsys, "bomb-protocol", "--bomb", "real", "--bombs", "20000",
                               "--max-rounds", "50", "--seed", "7", "--format", "csv")
        rows = {r["outcome"]: float(r["freq"]) for r in csv_rows(out)}
        assert code == 0
        assert rows["verdict=CertifiedGood"] == pytest.approx(1 / 3, abs=0.02)
        assert rows["verdict=Exploded"] == pytest.approx(2 / 3, abs=0.02)

    def test_seed_from_environment(self, capsys, monkeypatch):
        monkeypatch.setenv("SIM_SEED", "123")
        _, a, _ = run_cli(capsys, "run", "--scenario", "single-slit-left", "--trials", "500")
        _, b, _ = run_cli(capsys, "run", "--scenario", "single-slit-left", "--trials", "500", "--seed", "123")
        assert "seed=123" in a and a == b

    def test_bad_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("SIM_SEED", "abc")
        code, _, err = run_cli(capsys, "run", "--scenario", "double-slit", "--trials", "5")
        assert code == 2 and "SIM_SEED" in err

    def test_trials_bombs_conflict(self, capsys):
        code, _, _ = run_cli(capsys, "bomb-protocol", "--trials", "5", "--bombs", "6")
        assert code == 2


class TestSweep:
    def test_decoherence(self, capsys):
        code, out, _ = run_cli(capsys, "sweep", "--scenario", "decoherence", "--lambda", "1",
                               "--tau-star", "2", "--tau", "0:5:0.1", "--format", "csv")
        assert code == 0
        assert out.splitlines()[0] == "tau,p_A_exact_unitary,p_A_exact_policy,p_B_exact_unitary,c_tau"
        rows = csv_rows(out)
        assert len(rows) == 51
        for r in rows:
            t = float(r["tau"])
            assert float(r["p_A_exact_unitary"]) == pytest.approx(0.5 + 0.5 * math.exp(-t), abs=1e-11)
            expected = 0.5 + 0.5 * math.exp(-t) if t < 2 - 1e-9 else 0.5
            assert float(r["p_A_exact_policy"]) == pytest.approx(expected, abs=1e-11)
            assert float(r["c_tau"]) == pytest.approx(math.exp(-t), abs=1e-11)

    def test_rotating_idler(self, capsys):
        _, out, _ = run_cli(capsys, "sweep", "--scenario", "rotating-idler", "--omega", "1",
                            "--tau", f"0:{4 * math.pi}:{math.pi / 8}", "--format", "csv")
        assert out.splitlines()[0] == "tau,p_A,p_B"
        rows = csv_rows(out)
        assert len(rows) == 33
        for k, r in enumerate(rows):
            assert float(r["p_A"]) == pytest.approx(0.5 + 0.5 * math.cos(k * math.pi / 8), abs=1e-11)

    def test_finite_env(self, capsys):
        _, out, _ = run_cli(capsys, "sweep", "--scenario", "finite-env", "--env-dim", "4", "--env-seed", "3",
                            "--tau", "0:2:0.5", "--format", "csv")
        assert out.splitlines()[0] == "t,re_c,im_c,abs_c,abs_c_paperform"
        first = csv_rows(out)[0]
        assert float(first["re_c"]) == 1 and float(first["abs_c"]) == 1

    def test_number_format(self, capsys):
        _, out, _ = run_cli(capsys, "sweep", "--scenario", "decoherence", "--tau", "1", "--format", "csv")
        assert out.splitlines()[1].split(",")[-1] == "%.12g" % math.exp(-1)

    def test_non_sweep_kind(self, capsys):
        code, _, _ = run_cli(capsys, "sweep", "--scenario", "double-slit")
        assert code == 2


class TestEnvOverlap:
    def test_avogadro(self, capsys):
        _, out, _ = run_cli(capsys, "env-overlap", "--lambda-atom", "0.99", "--n", "6.022e23")
        value = float(out.splitlines()[1].split(",")[1])
        assert out.splitlines()[1].startswith("log10_overlap,")
        assert -2.7e21 <= value <= -2.6e21
        assert value == pytest.approx(-2.6285e21, rel=1e-4)

    def test_exact_one(self, capsys):
        _, out, _ = run_cli(capsys, "env-overlap", "--lambda-atom", "1.0", "--n", "1e23")
        assert out.splitlines()[1] == "log10_overlap,0"

    def test_small(self, capsys):
        _, out, _ = run_cli(capsys, "env-overlap", "--lambda-atom", "0.5", "--n", "10")
        assert float(out.splitlines()[1].split(",")[1]) == pytest.approx(-3.0103, abs=1e-4)

    def test_invalid(self, capsys):
        code, _, err = run_cli(capsys, "env-overlap", "--lambda-atom", "2", "--n", "10")
        assert code == 2 and err.count("\n") == 1


class TestConfig:
    def test_roundtrip(self):
        cfg = RunConfig({"kind": "decoherence", "policy": {"kind": "threshold", "tau_star": 2.0}, "tau": [0.0, 1.0]},
                        trials=77, seed=5, output="csv", out_path="x.csv")
        assert RunConfig.from_json(cfg.to_json()) == cfg

    def test_flags_override_config(self, capsys, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(RunConfig({"kind": "which-path", "epsilon": 0.6}, output="csv").to_json())
        _, out, _ = run_cli(capsys, "exact", "--config", str(path), "--epsilon", "0.2")
        assert sum(p for k, p in probs(out).items() if k.endswith("screen=A")) == pytest.approx(0.6)

    def test_out_path(self, capsys, tmp_path):
        target = tmp_path / "o.csv"
        code, out, _ = run_cli(capsys, "exact", "--scenario", "double-slit", "--format", "csv", "--out", str(target))
        assert code == 0 and out == ""
        assert target.read_text().startswith("outcome,probability\n")

    @pytest.mark.parametrize("text", ["{", "[]", json.dumps({"bogus": 1}), json.dumps({"scenario": {}, "trials": 1}),
                                      json.dumps({"scenario": {"kind": "bomb"}, "trials": 0})])
    def test_bad_configs(self, text):
        with pytest.raises(ConfigError):
            RunConfig.from_json(text)

    def test_bad_config_exit(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        code, _, err = run_cli(capsys, "exact", "--config", str(path))
        assert code == 2 and err.count("\n") == 1

    def test_missing_config_file(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "exact", "--config", str(tmp_path / "none.json"))
        assert code == 2

    @pytest.mark.parametrize("argv", [
        ["exact", "--scenario", "double-slit", "--epsilon", "0.2"],
        ["exact", "--scenario", "which-path", "--policy", "unitary", "--tau-star", "1"],
        ["exact", "--scenario", "nope"],
        ["run", "--scenario", "double-slit", "--trials", "0"],
    ])
    def test_invalid_flags(self, capsys, argv):
        with pytest.raises(SystemExit) as info:
            code = main(argv)
            raise SystemExit(code)
        assert info.value.code == 2
        assert capsys.readouterr().err.count("\n") == 1

    def test_parse_grid(self):
        assert parse_grid("0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)
        assert parse_grid("2.5") == (2.5,)
        for bad in ("a", "0:1", "1:0:0.1", "0:1:0"):
            with pytest.raises(ConfigError):
                parse_grid(bad)
