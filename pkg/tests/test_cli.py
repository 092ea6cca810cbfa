import json

import pytest

from bilevel_kit import ConfigurationError, cli
from bilevel_kit.config import KEY_DOCS, ExperimentConfig, build_problem, load, loads, make_schedule, solve_configs

CE_CFG = """\
name = ce  # comparison on the counter-example
problem = counter_example
schemes = RHG, BDA
K = 16
T = 40
y0 = 2
"""


class TestConfig:
    def test_defaults_and_parse(self):
        cfg = loads(CE_CFG)
        assert cfg.schemes == ("LL_ONLY", "BDA")
        assert cfg.y0 == (2.0,) and cfg.T == 40 and cfg.s_u == 0.7

    def test_roundtrip(self):
        cfg = loads(CE_CFG).replace(truncation=5, s_l=None, checkgrad_K=(2, 3), warm_start=True, x0=(0.25, -1e-17))
        assert loads(cfg.dumps()) == cfg

    def test_roundtrip_defaults(self):
        assert loads(ExperimentConfig().dumps()) == ExperimentConfig()

    def test_every_key_documented(self):
        assert set(KEY_DOCS) == set(ExperimentConfig.__dataclass_fields__)

    @pytest.mark.parametrize("text", [
        "bogus = 1", "K = 1.5", "K", "K = 3\nK = 4", "warm_start = maybe", "schemes = adam",
        "problem = nope", "alpha_rule = cosine", "schemes = ",
    ])
    def test_strict(self, text):
        with pytest.raises(ConfigurationError):
            loads(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load(tmp_path / "nope.cfg")

    def test_auto_steps(self):
        cfg = loads("problem = quadratic\nquadratic_instance = singleton\ns_u = auto\ns_l = auto\n"
                    "alpha_rule = theoretical\n")
        p, _ = build_problem(cfg)
        s = make_schedule(cfg, p)
        assert s.s_l == pytest.approx(1.0 / p.constants.L_f)
        assert s.s_u == pytest.approx(2.0 / (p.constants.L_F + p.constants.sigma))

    def test_bad_vector_length(self):
        cfg = loads("problem = quadratic\nquadratic_instance = rank2_of_4\nx0 = 1, 2, 3\n")
        p, _ = build_problem(cfg)
        with pytest.raises(ConfigurationError):
            solve_configs(cfg, p)

    def test_bad_parameter_value(self):
        cfg = loads("alpha_rule = constant\nalpha_a = 2\n")
        with pytest.raises(ConfigurationError):
            make_schedule(cfg, build_problem(cfg)[0])


@pytest.fixture
def ce_config(tmp_path):
    path = tmp_path / "ce.cfg"
    path.write_text(CE_CFG)
    return path


class TestRun:
    def test_two_traces_and_summary(self, ce_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(ce_config), "--out", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["ce_BDA.csv", "ce_BDA.json", "ce_LL_ONLY.csv",
                                                         "ce_LL_ONLY.json"]
        text = capsys.readouterr().out
        assert "ce_BDA" in text and "ce_LL_ONLY" in text
        doc = json.loads((out / "ce_BDA.json").read_text())
        assert loads(doc["experiment"]) == loads(CE_CFG)
        assert doc["columns"][-4:] == ["F_gap", "f_gap", "x_relsq", "y_relsq"]

    def test_rerun_byte_identical(self, ce_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(["run", "--config", str(ce_config), "--out", str(a)])
        cli.main(["run", "--config", str(ce_config), "--out", str(b), "--threads", "2"])
        for name in ("ce_BDA.csv", "ce_LL_ONLY.csv", "ce_BDA.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_malformed_config_writes_nothing(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("K = lots\n")
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(bad), "--out", str(out)]) == 2
        assert not out.exists()

    def test_numerical_failure_exit3_no_files(self, tmp_path):
        cfg = tmp_path / "boom.cfg"
        cfg.write_text("problem = counter_example\ns_l = 100\nK = 400\nT = 5\n")
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 3
        assert not out.exists() or not any(out.iterdir())

    def test_env_default_out(self, ce_config, tmp_path, monkeypatch):
        monkeypatch.setenv("BILEVEL_KIT_OUT", str(tmp_path / "env"))
        assert cli.main(["run", "--config", str(ce_config)]) == 0
        assert (tmp_path / "env" / "ce_BDA.csv").exists()

    def test_write_failure_cleans_up(self, tmp_path, monkeypatch):
        runs = cli.reproduction_runs("alpha-ablation")[:2]
        runs = [cli.Run(r.label, r.problem, r.config.__class__(**{**r.config.__dict__, "T": 2})) for r in runs]
        traces = cli.execute(runs)
        real = cli.RunTrace.write_json
        calls = {"n": 0}

        def failing(self, *a, **kw):
            calls["n"] += 1
            if calls["n"] == 2:
                raise OSError("disk full")
            return real(self, *a, **kw)

        monkeypatch.setattr(cli.RunTrace, "write_json", failing)
        with pytest.raises(OSError):
            cli.write_outputs(runs, traces, tmp_path / "o", timing=False)
        assert not any((tmp_path / "o").iterdir())


class TestReproduce:
    @pytest.mark.parametrize("name,count", [("counterexample-K", 6), ("counterexample-init", 8), ("alpha-ablation", 3)])
    def test_enumeration(self, name, count):
        runs = cli.reproduction_runs(name)
        assert len(runs) == count
        assert len({r.label for r in runs}) == count
        assert all(r.config.schedule.s_u == 0.7 and r.config.schedule.s_l == 0.2 for r in runs)

    def test_alpha_ablation_rules(self):
        rules = [r.config.schedule.alpha_rule for r in cli.reproduction_runs("alpha-ablation")]
        assert [type(r).__name__ for r in rules] == ["Constant", "Constant", "Reciprocal"]
        assert (rules[0].a, rules[1].a, rules[2].c) == (0.0, 0.5, 0.9)

    def test_counterexample_K_writes_six(self, tmp_path):
        assert cli.main(["reproduce", "counterexample-K", "--out", str(tmp_path), "--threads", "3"]) == 0
        assert len(list(tmp_path.glob("*.csv"))) == 6

    @pytest.mark.slow
    def test_hyperclean_weight_table(self, tmp_path):
        assert cli.main(["reproduce", "hyperclean-synth", "--out", str(tmp_path), "--threads", "3"]) == 0
        lines = (tmp_path / "hyperclean_weights.csv").read_text().splitlines()
        assert lines[0] == "run,mean_weight_corrupted,mean_weight_clean,val_accuracy,test_accuracy"
        assert len(lines) == 5
        row = lines[3].split(",")
        assert row[0] == "hc_BDA" and float(row[1]) < float(row[2])

    def test_unknown_name(self, tmp_path):
        assert cli.main(["reproduce", "fig9", "--out", str(tmp_path)]) == 2
        assert not any(tmp_path.iterdir())


class TestCheckgrad:
    def test_counter_example_passes(self, ce_config, capsys):
        assert cli.main(["checkgrad", "--config", str(ce_config)]) == 0
        text = capsys.readouterr().out
        for K in (1, 5, 20):
            assert f"hypergrad_BDA_K{K}" in text

    def test_fault_injection_named(self, tmp_path, capsys):
        cfg = tmp_path / "f.cfg"
        cfg.write_text(CE_CFG + "fault_inject = grad_y_f\n")
        assert cli.main(["checkgrad", "--config", str(cfg)]) == 4
        last = capsys.readouterr().out.strip().splitlines()[-1]
        assert last.startswith("failing checks:") and "grad_y_f" in last

    def test_lasso_includes_prox(self, tmp_path, capsys):
        cfg = tmp_path / "l.cfg"
        cfg.write_text("problem = lasso\nschemes = PROX_BDA\ns_u = 0.5\ns_l = 0.5\n")
        assert cli.main(["checkgrad", "--config", str(cfg)]) == 0
        assert "hypergrad_PROX_BDA_K20" in capsys.readouterr().out

    def test_unknown_fault_target(self, tmp_path):
        cfg = tmp_path / "f.cfg"
        cfg.write_text("fault_inject = nothing\n")
        assert cli.main(["checkgrad", "--config", str(cfg)]) == 2


def test_module_entry_point(ce_config, tmp_path):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "bilevel_kit", "reproduce", "nope"], capture_output=True, text=True)
    assert res.returncode == 2 and "unknown reproduction" in res.stderr
