"""Acceptance criteria, one test each.

Every test prints a single ``CRITERION k: PASS|FAIL ...`` line; the lines are
repeated in the terminal summary.  Tolerances, replication counts, seeds and
runtime budgets are fixed here and must not be tuned after the fact.
"""

import time

import numpy as np
import pytest

from dmlkit.cli import main
from dmlkit.dgp import gen_iivm, gen_irm_belloni, gen_pliv_chs, gen_plr_ccddhnr2018
from dmlkit.estimator import DmlConfig, ScorePanel, fit, solve_dml2
from dmlkit.learners import LassoCV, LogisticLassoCV, RandomForest
from dmlkit.resampling import load_plan, save_plan, validate_external_plan
from dmlkit.scores import BUILTIN_SCORES, CustomScore, check_orthogonality
from dmlkit.simulate import Campaign, run_campaign

pytestmark = pytest.mark.acceptance

RESULTS = []


def report(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def lasso_plr():
    return {"ml_l": LassoCV(), "ml_m": LassoCV()}


def binary_learners(model):
    out = {"ml_g": LassoCV(), "ml_m": LogisticLassoCV()}
    if model == "iivm":
        out["ml_r"] = LogisticLassoCV()
    return out


# -- 1 -------------------------------------------------------------------------

def test_c1_closed_form_solver():
    rng = np.random.default_rng(1001)
    t0 = time.perf_counter()
    worst_rel, worst_sum = 0.0, 0.0
    for _ in range(1000):
        n = int(rng.integers(5, 400))
        psi_a = -rng.exponential(1.0, n) - 0.01
        psi_b = rng.standard_normal(n) * rng.exponential(2.0)
        panel = ScorePanel(psi_a[:, None, None], psi_b[:, None, None], np.ones((n, 1), dtype=bool))
        theta = solve_dml2(panel)
        ref = -np.sum(psi_b) / np.sum(psi_a)
        worst_rel = max(worst_rel, abs(theta - ref) / max(abs(ref), 1e-300))
        worst_sum = max(worst_sum, abs(np.sum(psi_a * theta + psi_b)))
    elapsed = time.perf_counter() - t0
    ok = worst_rel <= 1e-12 and worst_sum <= 1e-10 and elapsed < 1.0
    report(1, ok, f"max rel err {worst_rel:.2e} (<=1e-12), max |sum psi| {worst_sum:.2e} (<=1e-10), "
                  f"{elapsed:.2f}s (<1s)")
    assert ok


# -- 2 -------------------------------------------------------------------------

N_ORTHO = 100_000


def _data(sample):
    ds = sample.dataset
    out = {"y": ds.column(ds.y_col), "d": ds.column(ds.d_cols[0])}
    if ds.z_cols:
        out["z"] = ds.column(ds.z_cols[0])
    return out


def _directions(score, truth, base):
    """Per-component directions: ``base`` for regressions, base * [q(1-q)]^2 for probabilities."""
    out = {}
    for comp in score.nuisances:
        if comp in score.probabilities:
            q = truth[comp]
            w = (q * (1.0 - q)) ** 2
            out[comp] = w if np.ndim(q) == 0 else base * w
        else:
            out[comp] = base
    return out


def test_c2_orthogonality_suite():
    t0 = time.perf_counter()
    plr = gen_plr_ccddhnr2018(n_obs=N_ORTHO, seed=2001)
    pliv = gen_pliv_chs(n_obs=N_ORTHO, seed=2002)
    irm = gen_irm_belloni(n_obs=N_ORTHO, seed=2003)
    iivm = gen_iivm(n_obs=N_ORTHO, seed=2004)
    cases = [
        (("plr", "partialling_out"), plr, 0.5),
        (("plr", "iv_type"), plr, 0.5),
        (("pliv", "partialling_out"), pliv, 0.5),
        (("pliv", "iv_type"), pliv, 0.5),
        (("irm", "ate"), irm, 0.5),
        (("irm", "atte"), irm, irm.params["atte"]),
        (("iivm", "late"), iivm, 0.5),
    ]
    tol = 5.0 / np.sqrt(N_ORTHO)
    worst = 0.0
    worst_case = ""
    for key, sample, theta in cases:
        score = BUILTIN_SCORES[key]
        data = _data(sample)
        x1 = sample.dataset.column("X1")
        for label, base in (("1", 1.0), ("sign(x1)", np.sign(x1))):
            derivs = check_orthogonality(score, data, sample.oracle, theta,
                                         directions=_directions(score, sample.oracle, base))
            for comp, v in derivs.items():
                if abs(v) > worst:
                    worst, worst_case = abs(v), f"{key[0]}/{key[1]} d/d{comp} along {label}"
    naive = check_orthogonality(BUILTIN_SCORES[("plr", "naive")], _data(plr), plr.oracle, 0.5,
                                directions={"g_hat": np.sign(plr.dataset.column("X1"))})["g_hat"]
    elapsed = time.perf_counter() - t0
    ok = worst < tol and abs(naive) > 0.5 and elapsed < 120
    report(2, ok, f"max |derivative| {worst:.4f} at {worst_case} (<{tol:.4f}); "
                  f"naive |derivative| {abs(naive):.3f} (>0.5); {elapsed:.0f}s (<120s)")
    assert ok


# -- 3 to 5: coverage ------------------------------------------------------------

def _coverage_run(dgp, cfg, reps, params, seed, band, budget, bias_tol=None):
    t0 = time.perf_counter()
    agg = run_campaign(Campaign(dgp, cfg, reps, params, seed=seed)).aggregates()
    elapsed = time.perf_counter() - t0
    lo, hi = band
    ok = lo <= agg["coverage"] <= hi and elapsed < budget
    detail = f"{dgp} coverage {agg['coverage']:.3f} in [{lo}, {hi}] over {reps} reps"
    if bias_tol is not None:
        ok = ok and abs(agg["mean_studentized"]) < bias_tol
        detail += f", mean studentized {agg['mean_studentized']:+.3f} (|.|<{bias_tol})"
    detail += f"; {elapsed:.0f}s (<{budget}s)"
    return ok, detail


def test_c3_plr_coverage():
    cfg = DmlConfig("plr", n_folds=5, dml_procedure="dml2", learners=lasso_plr())
    ok, detail = _coverage_run("plr_ccddhnr2018", cfg, 300, {"n_obs": 500, "dim_x": 20}, 3001,
                               (0.91, 0.98), 15 * 60)
    report(3, ok, detail)
    assert ok


def test_c4_pliv_coverage():
    cfg = DmlConfig("pliv", learners={"ml_l": LassoCV(), "ml_m": LassoCV(), "ml_r": LassoCV()})
    ok, detail = _coverage_run("pliv_chs", cfg, 200, {"n_obs": 500, "delta": 1.0}, 4001,
                               (0.90, 0.99), 15 * 60)
    report(4, ok, detail)
    assert ok


def test_c5_irm_iivm_coverage():
    irm_ok, irm_detail = _coverage_run(
        "irm_belloni", DmlConfig("irm", learners=binary_learners("irm")), 200,
        {"n_obs": 1000, "dim_x": 20}, 5001, (0.90, 0.99), 30 * 60, bias_tol=0.15)
    iivm_ok, iivm_detail = _coverage_run(
        "iivm", DmlConfig("iivm", learners=binary_learners("iivm")), 200,
        {"n_obs": 1000, "dim_x": 20}, 5002, (0.90, 0.99), 30 * 60, bias_tol=0.15)
    ok = irm_ok and iivm_ok
    report(5, ok, f"{irm_detail} | {iivm_detail}")
    assert ok


# -- 6 -------------------------------------------------------------------------

def test_c6_fwer_table():
    cfg = DmlConfig("plr", learners=lasso_plr())
    camp = Campaign("multi_treatment", cfg, 200, {"coef_rule": "as_printed"}, level=0.9,
                    bootstrap=("normal", 1000), p_adjust=("ci", "romano-wolf", "bonferroni", "holm"),
                    seed=6001)
    t0 = time.perf_counter()
    agg = run_campaign(camp).aggregates()
    elapsed = time.perf_counter() - t0
    methods = camp.p_adjust
    fwer = {m: agg[f"fwer_{m}"] for m in methods}
    correct = {m: agg[f"correct_rejections_{m}"] for m in methods}
    ok = (all(0.03 <= v <= 0.18 for v in fwer.values())
          and all(v == 12.0 for v in correct.values()) and elapsed < 30 * 60)
    table = ", ".join(f"{m} {fwer[m]:.3f}/{correct[m]:.2f}" for m in methods)
    report(6, ok, f"FWER/correct rejections: {table} (FWER in [0.03, 0.18], correct = 12.00); "
                  f"{elapsed:.0f}s (<1800s)")
    assert ok


# -- 7 -------------------------------------------------------------------------

# the example's forest (100 trees, mtry = 20, min node 2, depth 5) for the score comparison;
# fully grown trees for the sample-splitting comparisons, where overfitting is the point
PAPER_FOREST = RandomForest(100, mtry=20, min_node_size=2, max_depth=5)
DEEP_FOREST = RandomForest(100, mtry=20, min_node_size=1, max_depth=None)
C7_REPS = 100


def _bias_campaign(forest, variant, seed, score="partialling_out"):
    learners = {"ml_l": forest, "ml_m": forest, "ml_g": forest}
    cfg = DmlConfig("plr", score, n_folds=2, learners=learners)
    return run_campaign(Campaign("plr_ccddhnr2018", cfg, C7_REPS, {"n_obs": 500}, variant,
                                 seed=seed)).aggregates()


def test_c7_bias_demonstrations():
    t0 = time.perf_counter()
    naive = _bias_campaign(PAPER_FOREST, "naive", 7001)
    ortho = _bias_campaign(PAPER_FOREST, "orthogonal", 7001, score="iv_type")
    crossfit = _bias_campaign(DEEP_FOREST, "orthogonal", 7002)
    nosplit = _bias_campaign(DEEP_FOREST, "nosplit", 7002)
    halves = _bias_campaign(DEEP_FOREST, "no-crossfit", 7002)
    elapsed = time.perf_counter() - t0
    a = naive["mean_studentized"] > 1.0 and abs(ortho["mean_studentized"]) < 0.3
    b = nosplit["mean_studentized"] < -0.5 and abs(crossfit["mean_studentized"]) < 0.3
    c = crossfit["mean_se"] < halves["mean_se"]
    ok = a and b and c and elapsed < 20 * 60
    report(7, ok,
           f"(a) {'ok' if a else 'FAIL'} naive {naive['mean_studentized']:+.3f} (>1), "
           f"orthogonal {ortho['mean_studentized']:+.3f} (|.|<0.3); "
           f"(b) {'ok' if b else 'FAIL'} no-split {nosplit['mean_studentized']:+.3f} (<-0.5), "
           f"cross-fit {crossfit['mean_studentized']:+.3f} (|.|<0.3); "
           f"(c) {'ok' if c else 'FAIL'} se cross-fit {crossfit['mean_se']:.4f} < "
           f"no-cross-fit {halves['mean_se']:.4f}; {elapsed:.0f}s (<1200s)")
    assert ok


# -- 8 -------------------------------------------------------------------------

def partialling_out_routine(y, d, l_hat, m_hat, g_hat, context):
    v = d - m_hat
    return -(v * v), (y - l_hat) * v


def test_c8_custom_score_equivalence():
    ds = gen_plr_ccddhnr2018(n_obs=500, seed=8001).dataset
    learners = {"ml_l": LassoCV(), "ml_m": RandomForest(50, mtry=10, max_depth=5)}
    builtin = fit(ds, DmlConfig("plr", n_folds=5, n_rep=3, learners=learners, seed=8))
    custom = fit(ds, DmlConfig("plr", CustomScore(partialling_out_routine), n_folds=5, n_rep=3,
                               learners=learners, seed=8))
    ok = (np.array_equal(builtin.coef, custom.coef) and np.array_equal(builtin.se, custom.se)
          and np.array_equal(builtin.per_rep_coefs, custom.per_rep_coefs))
    report(8, ok, f"built-in coef/se {float(builtin.coef[0])!r}/{float(builtin.se[0])!r} vs custom "
                  f"{float(custom.coef[0])!r}/{float(custom.se[0])!r} (bit-identical)")
    assert ok


# -- 9 -------------------------------------------------------------------------

def _same_fit(a, b):
    fields = ("coef", "se", "t_stat", "p_value", "per_rep_coefs", "per_rep_ses", "sigma2_hat", "J0_hat")
    same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in fields)
    same = same and np.array_equal(a.panel.psi_a, b.panel.psi_a)
    same = same and np.array_equal(a.panel.psi_b, b.panel.psi_b)
    same = same and np.array_equal(a.panel.mask, b.panel.mask)
    return same and a.fold_plan == b.fold_plan


def test_c9_external_plan_equivalence(tmp_path):
    ds = gen_plr_ccddhnr2018(n_obs=300, seed=9001).dataset
    cfg = DmlConfig("plr", n_folds=4, n_rep=2, seed=9,
                    learners={"ml_l": RandomForest(30, mtry=8), "ml_m": LassoCV()})
    internal = fit(ds, cfg)
    external = fit(ds, cfg, validate_external_plan(internal.fold_plan.to_dict()["splits"], ds.n_obs))
    save_plan(tmp_path / "plan.json", internal.fold_plan)
    from_file = fit(ds, cfg, load_plan(tmp_path / "plan.json"))
    ok = _same_fit(internal, external) and _same_fit(internal, from_file)
    report(9, ok, "internal plan vs external plan (in memory and via JSON): bit-identical DmlFit")
    assert ok


# -- 10 ------------------------------------------------------------------------

FOREST_TOML = """
[learner.ml_l]
kind = "random_forest"
num_trees = 20
mtry = 5
max_depth = 4

[learner.ml_m]
kind = "random_forest"
num_trees = 20
mtry = 5
max_depth = 4
"""


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c10_cli_determinism(tmp_path):
    cfg = tmp_path / "forest.toml"
    cfg.write_text(FOREST_TOML)
    data = tmp_path / "data"
    assert main(["gen", "--dgp", "multi_treatment", "--dgp-param", "n_obs=200", "--dgp-param", "p1=6",
                 "--dgp-param", "s=3", "--seed", "10", "--out", str(data)]) == 0
    outputs = {}
    for workers in (1, 2, 1):
        est = tmp_path / f"est_{workers}_{len(outputs)}"
        sim = tmp_path / f"sim_{workers}_{len(outputs)}"
        assert main(["estimate", "--data", str(data / "data.csv"), "--roles", str(data / "roles.toml"),
                     "--learner-config", str(cfg), "--n-folds", "3", "--n-rep", "2", "--seed", "10",
                     "--bootstrap", "normal:300", "--p-adjust", "romano-wolf",
                     "--workers", str(workers), "--out", str(est)]) == 0
        assert main(["simulate", "--dgp", "plr_ccddhnr2018", "--dgp-param", "n_obs=200", "--reps", "4",
                     "--learner-config", str(cfg), "--n-folds", "2", "--seed", "10",
                     "--workers", str(workers), "--out", str(sim)]) == 0
        outputs[(workers, len(outputs))] = (_tree_bytes(est), _tree_bytes(sim))
    runs = list(outputs.values())
    ok = all(r == runs[0] for r in runs[1:]) and len(runs[0][0]) == 3 and len(runs[0][1]) == 3
    report(10, ok, f"estimate ({len(runs[0][0])} files) and simulate ({len(runs[0][1])} files) "
                   f"byte-identical across reruns with 1 and 2 workers")
    assert ok
