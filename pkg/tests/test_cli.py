import csv
import json

import numpy as np
import pytest

from dmlkit.cli import main
from dmlkit.config import build_config, parse_tune, parse_value, read_toml
from dmlkit.dataset import load_csv
from dmlkit.dgp import generate
from dmlkit.errors import ConfigError
from dmlkit.estimator import DmlConfig, fit
from dmlkit.learners import LassoCV, Ols, RandomForest
from dmlkit.simulate import Campaign, run_campaign

OLS_CONFIG = """
[learner.ml_l]
kind = "ols"

[learner.ml_m]
kind = "ols"
"""


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def plr_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["gen", "--dgp", "plr_ccddhnr2018", "--dgp-param", "n_obs=100",
                 "--seed", "3", "--out", str(out)]) == 0
    return out


@pytest.fixture
def ols_toml(tmp_path):
    path = tmp_path / "ols.toml"
    path.write_text(OLS_CONFIG)
    return path


def test_gen_writes_data_roles_truth(plr_dir):
    ds = load_csv(plr_dir / "data.csv", plr_dir / "roles.toml")
    assert ds.n_obs == 100
    assert ds.d_cols == ["d"]
    truth = json.loads((plr_dir / "truth.json").read_text())
    assert truth["theta_true"] == [0.5]
    assert truth["dgp"] == "plr_ccddhnr2018"
    np.testing.assert_array_equal(ds.values, generate("plr_ccddhnr2018", seed=3, n_obs=100).dataset.values)


def test_gen_same_seed_is_byte_identical(tmp_path, plr_dir):
    again = tmp_path / "again"
    main(["gen", "--dgp", "plr_ccddhnr2018", "--dgp-param", "n_obs=100", "--seed", "3",
          "--out", str(again)])
    for name in ("data.csv", "roles.toml", "truth.json"):
        assert (again / name).read_bytes() == (plr_dir / name).read_bytes()


def test_gen_unknown_dgp_and_bad_param(tmp_path, capsys):
    assert main(["gen", "--dgp", "nope", "--out", str(tmp_path)]) == 2
    assert main(["gen", "--dgp", "iivm", "--dgp-param", "bogus=1", "--out", str(tmp_path)]) == 2
    assert main(["gen", "--dgp", "iivm", "--dgp-param", "novalue", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_estimate_round_trip_matches_in_process(tmp_path, plr_dir, ols_toml, capsys):
    out = tmp_path / "est"
    code = main(["estimate", "--data", str(plr_dir / "data.csv"), "--roles", str(plr_dir / "roles.toml"),
                 "--model", "plr", "--n-folds", "4", "--seed", "11",
                 "--learner-config", str(ols_toml), "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "Std. Error" in printed and "Pr(>|t|)" in printed
    rows = read_rows(out / "summary.csv")
    assert len(rows) == 1
    assert list(rows[0]) == ["treatment", "estimate", "se", "t", "p", "ci_low", "ci_high"]
    ds = generate("plr_ccddhnr2018", seed=3, n_obs=100).dataset
    ref = fit(ds, DmlConfig("plr", n_folds=4, seed=11, learners={"ml_l": Ols(), "ml_m": Ols()}))
    assert float(rows[0]["estimate"]) == ref.coef[0]
    assert float(rows[0]["se"]) == ref.se[0]
    assert not (out / "joint_ci.csv").exists()


def test_estimate_with_forest_config(tmp_path, plr_dir):
    cfg = tmp_path / "forest.toml"
    cfg.write_text('[learner.ml_l]\nkind = "random_forest"\nnum_trees = 10\nmtry = 5\n'
                   'min_node_size = 2\nmax_depth = 3\n'
                   '[learner.ml_m]\nkind = "random_forest"\nnum_trees = 10\nmtry = 5\n')
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(plr_dir / "data.csv"), "--roles", str(plr_dir / "roles.toml"),
                 "--learner-config", str(cfg), "--n-folds", "2", "--out", str(out)]) == 0
    assert len(read_rows(out / "summary.csv")) == 1


def test_estimate_bootstrap_outputs(tmp_path, ols_toml):
    data = tmp_path / "data"
    main(["gen", "--dgp", "multi_treatment", "--dgp-param", "n_obs=200", "--dgp-param", "p1=4",
          "--dgp-param", "s=2", "--out", str(data)])
    out = tmp_path / "est"
    code = main(["estimate", "--data", str(data / "data.csv"), "--roles", str(data / "roles.toml"),
                 "--learner-config", str(ols_toml), "--n-folds", "2", "--bootstrap", "wild:200",
                 "--p-adjust", "romano-wolf", "--out", str(out)])
    assert code == 0
    joint = read_rows(out / "joint_ci.csv")
    summary = read_rows(out / "summary.csv")
    assert len(joint) == 4
    for j, s in zip(joint, summary):
        # the joint band contains the pointwise one
        assert float(j["ci_low"]) <= float(s["ci_low"]) and float(j["ci_high"]) >= float(s["ci_high"])
    adj = read_rows(out / "p_adjusted.csv")
    assert {r["method"] for r in adj} == {"romano-wolf"}
    assert all(float(r["p_adjusted"]) >= float(r["p_raw"]) for r in adj)


def test_estimate_holm_without_bootstrap(tmp_path, plr_dir, ols_toml):
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(plr_dir / "data.csv"), "--roles", str(plr_dir / "roles.toml"),
                 "--learner-config", str(ols_toml), "--p-adjust", "holm", "--out", str(out)]) == 0
    rows = read_rows(out / "p_adjusted.csv")
    assert rows[0]["method"] == "holm"
    assert rows[0]["p_adjusted"] == rows[0]["p_raw"]


def test_estimate_usage_errors(tmp_path, plr_dir, ols_toml):
    base = ["estimate", "--data", str(plr_dir / "data.csv"), "--roles", str(plr_dir / "roles.toml"),
            "--learner-config", str(ols_toml), "--out", str(tmp_path / "e")]
    assert main(base + ["--p-adjust", "romano-wolf"]) == 2
    assert main(base + ["--bootstrap", "gamma:10"]) == 2
    assert main(base + ["--bootstrap", "normal:x"]) == 2
    assert main(base + ["--level", "1.5"]) == 2
    assert main(base + ["--model", "tobit"]) == 2
    assert main(base + ["--n-folds", "1"]) == 2
    assert main(["estimate", "--data", str(tmp_path / "missing.csv"), "--roles",
                 str(plr_dir / "roles.toml"), "--out", str(tmp_path / "e")]) == 2
    assert main([]) == 2


def test_estimate_irm_with_continuous_treatment_exits_1(tmp_path, plr_dir, capsys):
    code = main(["estimate", "--data", str(plr_dir / "data.csv"), "--roles", str(plr_dir / "roles.toml"),
                 "--model", "irm", "--out", str(tmp_path / "e")])
    assert code == 1
    assert "NonBinaryTreatment" in capsys.readouterr().err


def test_estimate_external_plan(tmp_path, plr_dir, ols_toml):
    from dmlkit.resampling import draw_folds, save_plan

    plan = draw_folds(100, 4, 1, seed=5)
    save_plan(tmp_path / "plan.json", plan)
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(plr_dir / "data.csv"), "--roles", str(plr_dir / "roles.toml"),
                 "--learner-config", str(ols_toml), "--n-folds", "4", "--plan", str(tmp_path / "plan.json"),
                 "--out", str(out)]) == 0
    ds = generate("plr_ccddhnr2018", seed=3, n_obs=100).dataset
    ref = fit(ds, DmlConfig("plr", n_folds=4, learners={"ml_l": Ols(), "ml_m": Ols()}), plan)
    assert float(read_rows(out / "summary.csv")[0]["estimate"]) == ref.coef[0]


def test_simulate_writes_report(tmp_path, ols_toml, capsys):
    out = tmp_path / "sim"
    code = main(["simulate", "--dgp", "plr_ccddhnr2018", "--dgp-param", "n_obs=200", "--reps", "6",
                 "--learner-config", str(ols_toml), "--n-folds", "2", "--seed", "4", "--out", str(out)])
    assert code == 0
    report = read_rows(out / "report.csv")[0]
    assert int(report["reps"]) == 6
    assert 0.0 <= float(report["coverage"]) <= 1.0
    draws = read_rows(out / "draws.csv")
    assert len(draws) == 6
    hist = read_rows(out / "hist.csv")
    assert len(hist) == 30
    assert sum(int(r["count"]) for r in hist) == 6
    assert float(hist[0]["bin_low"]) == -4.0 and float(hist[-1]["bin_high"]) == 4.0
    assert "coverage" in capsys.readouterr().out


def test_simulate_multiplicity_columns(tmp_path, ols_toml):
    out = tmp_path / "sim"
    code = main(["simulate", "--dgp", "multi_treatment", "--dgp-param", "n_obs=150",
                 "--dgp-param", "p1=5", "--dgp-param", "s=2", "--reps", "3", "--p-adjust", "all",
                 "--bootstrap", "normal:100", "--learner-config", str(ols_toml), "--n-folds", "2",
                 "--out", str(out)])
    assert code == 0
    report = read_rows(out / "report.csv")[0]
    for m in ("ci", "romano-wolf", "bonferroni", "holm"):
        assert 0.0 <= float(report[f"fwer_{m}"]) <= 1.0
        assert f"reject_{m}" in read_rows(out / "draws.csv")[0]


def test_simulate_usage_errors(tmp_path):
    out = str(tmp_path / "s")
    assert main(["simulate", "--dgp", "nope", "--out", out]) == 2
    assert main(["simulate", "--dgp", "iivm", "--variant", "sideways", "--out", out]) == 2
    assert main(["simulate", "--dgp", "iivm", "--p-adjust", "sidak", "--out", out]) == 2
    assert main(["simulate", "--dgp", "iivm", "--variant", "naive", "--out", out]) == 2


def test_parse_value():
    assert parse_value("3") == 3
    assert parse_value("0.5") == 0.5
    assert parse_value("[1.0, 2.0]") == [1.0, 2.0]
    assert parse_value("true") is True
    assert parse_value("as_printed") == "as_printed"


def test_build_config_defaults_and_overrides():
    cfg = build_config({"n_folds": 3}, model="plr", n_folds=4, seed=None)
    assert cfg.n_folds == 4
    assert cfg.score == "partialling_out"
    assert isinstance(cfg.learners["ml_l"], LassoCV)
    irm = build_config({}, model="irm")
    assert irm.learners["ml_m"].kind == "logistic_lasso_cv"
    iv = build_config({"learner": {"ml_l": {"kind": "ols"}}}, model="plr", score="iv_type")
    assert isinstance(iv.learners["ml_g"], Ols)


def test_build_config_rejects_unknowns():
    with pytest.raises(ConfigError):
        build_config({"folds": 3})
    with pytest.raises(ConfigError):
        build_config({"learner": {"ml_l": {"kind": "svm"}}})
    with pytest.raises(ConfigError):
        build_config({"learner": {"ml_l": "ols"}})
    with pytest.raises(ConfigError):
        parse_tune({"grid": {"lam": {"lower": 0.1}}})
    with pytest.raises(ConfigError):
        parse_tune({"rounds": 3})


def test_toml_file_with_grid(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text('model = "plr"\n[learner.ml_l]\nkind = "lasso"\n[tune.ml_l]\ncv_folds = 3\n'
                    'grid.lam = { lower = 0.05, upper = 0.1, resolution = 11 }\n')
    cfg = build_config(read_toml(path))
    grid = cfg.tune["ml_l"].grid["lam"]
    assert len(grid) == 11
    assert grid[0] == pytest.approx(0.05) and grid[-1] == pytest.approx(0.1)
    bad = tmp_path / "bad.toml"
    bad.write_text("model = \n")
    with pytest.raises(ConfigError):
        read_toml(bad)


def test_campaign_validation():
    cfg = DmlConfig("plr", learners={"ml_l": Ols(), "ml_m": Ols()})
    with pytest.raises(ConfigError):
        Campaign("plr_ccddhnr2018", cfg, reps=0)
    with pytest.raises(ConfigError):
        Campaign("plr_ccddhnr2018", cfg, p_adjust=("ci",))
    with pytest.raises(ConfigError):
        Campaign("nope", cfg)


def test_campaign_nosplit_and_crossfit_arms():
    cfg = DmlConfig("plr", n_folds=2, learners={"ml_l": RandomForest(20, mtry=5, min_node_size=1),
                                                "ml_m": RandomForest(20, mtry=5, min_node_size=1)})
    params = {"n_obs": 200}
    rows = {}
    for variant in ("orthogonal", "nosplit", "no-crossfit"):
        rows[variant] = run_campaign(Campaign("plr_ccddhnr2018", cfg, 3, params, variant, seed=2))
    assert not np.array_equal(rows["nosplit"].estimates, rows["orthogonal"].estimates)
    # one scored half carries the whole estimate
    assert rows["no-crossfit"].ses.mean() > rows["orthogonal"].ses.mean()
