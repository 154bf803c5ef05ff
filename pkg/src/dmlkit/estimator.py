"""Cross-fitted estimation of the causal parameter from linear orthogonal scores.

Workflow of :func:`fit`: for every repetition of the fold plan and every
treatment, fit the nuisance learners on each training part, predict on the
matching test part, evaluate the score, then solve

* DML1: theta_k = -sum_k psi_b / sum_k psi_a per fold, averaged over folds
* DML2: theta = -sum psi_b / sum psi_a pooled over all scored observations

and estimate the variance with J0 = mean(psi_a),
sigma^2 = mean((psi_a theta + psi_b)^2) / J0^2.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np
from scipy.stats import norm

from . import scores as sc
from .dataset import Dataset, TreatmentView, treatment_view
from .errors import (
    ConfigError,
    DegenerateFold,
    DegenerateScore,
    EmptyArm,
    FitNotRun,
    InvalidLevel,
    NoInstrument,
    NonBinaryTreatment,
)
from .learners import for_task, tune_grid_search
from .learners.tuning import TuneSettings
from .resampling import (
    FoldPlan,
    derive_seed,
    draw_folds,
    draw_no_crossfit,
    learner_seed,
)

MODELS = ("plr", "pliv", "irm", "iivm")
PROCEDURES = ("dml1", "dml2")
DEGENERATE_TOL = 1e-12

# task name -> index used in learner seed derivation
TASK_INDEX = {name: i for i, name in enumerate(("l", "m", "r", "g", "g0", "g1", "r0", "r1"))}

_TUNE_STREAM = 4
_PRELIM_STREAM = 3


@dataclass(frozen=True)
class Task:
    """One nuisance regression: slot, target variable, optional arm subset."""

    name: str
    slot: str
    target: str            # "y", "d", "z" or "y_minus_theta_d"
    kind: str = "regression"
    arm: Optional[tuple] = None  # (variable, value) restricting the training rows


def nuisance_tasks(model: str, score) -> list:
    """Nuisance tasks needed by ``(model, score)``; ``score`` is a name or CustomScore."""
    custom = isinstance(score, sc.CustomScore)
    if model == "plr":
        tasks = [Task("l", "ml_l", "y"), Task("m", "ml_m", "d")]
        if not custom and score in ("iv_type", "naive"):
            tasks.append(Task("g", "ml_g", "y_minus_theta_d"))
        return tasks
    if model == "pliv":
        tasks = [Task("l", "ml_l", "y"), Task("m", "ml_m", "z"), Task("r", "ml_r", "d")]
        if score == "iv_type":
            tasks.append(Task("g", "ml_g", "y_minus_theta_d"))
        return tasks
    if model == "irm":
        tasks = [Task("g0", "ml_g", "y", arm=("d", 0))]
        if score == "ate":
            tasks.append(Task("g1", "ml_g", "y", arm=("d", 1)))
        tasks.append(Task("m", "ml_m", "d", kind="classification"))
        return tasks
    if model == "iivm":
        return [
            Task("g0", "ml_g", "y", arm=("z", 0)),
            Task("g1", "ml_g", "y", arm=("z", 1)),
            Task("m", "ml_m", "z", kind="classification"),
            Task("r0", "ml_r", "d", kind="classification", arm=("z", 0)),
            Task("r1", "ml_r", "d", kind="classification", arm=("z", 1)),
        ]
    raise ConfigError(f"unknown model {model!r}; choose from {MODELS}")


def required_slots(model: str, score) -> list:
    slots = []
    for t in nuisance_tasks(model, score):
        if t.slot not in slots:
            slots.append(t.slot)
    return slots


@dataclass(frozen=True)
class DmlConfig:
    model: str = "plr"
    score: Union[str, sc.CustomScore, None] = None
    dml_procedure: str = "dml2"
    n_folds: int = 5
    n_rep: int = 1
    apply_cross_fitting: bool = True
    clip_eps: float = 0.01
    learners: Mapping = field(default_factory=dict)
    tune: Mapping = field(default_factory=dict)  # slot -> TuneSettings
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.score is None:
            object.__setattr__(self, "score", sc.DEFAULT_SCORE[self.model])
        if isinstance(self.score, sc.CustomScore):
            if self.model != "plr":
                raise ConfigError("custom scores are supported for the PLR model only")
        else:
            sc.get_score(self.model, self.score)
        if self.dml_procedure not in PROCEDURES:
            raise ConfigError(f"dml_procedure must be one of {PROCEDURES}")
        if self.n_folds < 2:
            raise ConfigError(f"n_folds must be >= 2, got {self.n_folds}")
        if self.n_rep < 1:
            raise ConfigError(f"n_rep must be >= 1, got {self.n_rep}")
        if not 0 <= self.clip_eps < 0.5:
            raise ConfigError(f"clip_eps must lie in [0, 0.5), got {self.clip_eps}")
        object.__setattr__(self, "learners", dict(self.learners))
        object.__setattr__(self, "tune", dict(self.tune))
        missing = [s for s in required_slots(self.model, self.score) if s not in self.learners]
        if missing:
            raise ConfigError(
                f"model {self.model!r} with score {self.score_name!r} needs learners for {missing}"
            )
        for slot, ts in self.tune.items():
            if slot not in self.learners:
                raise ConfigError(f"tuning settings given for unknown slot {slot!r}")
            if not isinstance(ts, TuneSettings):
                raise ConfigError(f"tune[{slot!r}] must be TuneSettings")

    @property
    def score_name(self) -> str:
        return self.score.name if isinstance(self.score, sc.CustomScore) else self.score

    @property
    def tasks(self) -> list:
        return nuisance_tasks(self.model, self.score)


@dataclass
class ScorePanel:
    """psi_a, psi_b of shape (n_obs, n_rep, n_treat); entries outside ``mask`` are 0."""

    psi_a: np.ndarray
    psi_b: np.ndarray
    mask: np.ndarray  # (n_obs, n_rep) observations that enter the score

    @property
    def shape(self):
        return self.psi_a.shape

    def psi(self, theta):
        """psi at per-(rep, treatment) parameters ``theta`` of shape (n_rep, n_treat)."""
        return self.psi_a * np.asarray(theta)[None, :, :] + self.psi_b


@dataclass
class NuisancePredictions:
    """Predictions on the test indices of one fold (plus the scalar p_hat)."""

    test_ids: np.ndarray
    l_hat: Optional[np.ndarray] = None
    m_hat: Optional[np.ndarray] = None
    r_hat: Optional[np.ndarray] = None
    g_hat: Optional[np.ndarray] = None
    g0_hat: Optional[np.ndarray] = None
    g1_hat: Optional[np.ndarray] = None
    r0_hat: Optional[np.ndarray] = None
    r1_hat: Optional[np.ndarray] = None
    p_hat: Optional[float] = None
    theta_prelim: Optional[float] = None


# -- data checks -----------------------------------------------------------

def _is_binary(v):
    return bool(np.all((v == 0) | (v == 1)))


def check_data(ds: Dataset, cfg: DmlConfig) -> None:
    if cfg.model in ("pliv", "iivm"):
        if not ds.z_cols:
            raise NoInstrument(f"model {cfg.model!r} needs an instrument column (z_cols)")
        if len(ds.z_cols) > 1:
            raise ConfigError(f"model {cfg.model!r} supports exactly one instrument, "
                              f"got {len(ds.z_cols)}")
    if cfg.model in ("irm", "iivm"):
        for name in ds.d_cols:
            if not _is_binary(ds.column(name)):
                raise NonBinaryTreatment(
                    f"model {cfg.model!r} needs a binary (0/1) treatment; column {name!r} is not"
                )
    if cfg.model == "iivm" and not _is_binary(ds.column(ds.z_cols[0])):
        raise NonBinaryTreatment(
            f"model 'iivm' needs a binary (0/1) instrument; column {ds.z_cols[0]!r} is not"
        )


# -- nuisance fitting ------------------------------------------------------

def _variable(view: TreatmentView, name: str):
    if name == "y":
        return view.y
    if name == "d":
        return view.d
    if name == "z":
        return view.z[:, 0]
    raise KeyError(name)


def _task_rows(view, task: Task, ids):
    if task.arm is None:
        return ids
    var, value = task.arm
    sub = ids[_variable(view, var)[ids] == value]
    if sub.size == 0:
        raise EmptyArm(f"no training observations with {var} = {value} for nuisance {task.name!r}")
    return sub


def _task_target(view, task: Task, rows, theta_prelim=None):
    if task.target == "y_minus_theta_d":
        return view.y[rows] - theta_prelim * view.d[rows]
    return _variable(view, task.target)[rows]


def _slot_spec(cfg: DmlConfig, task: Task):
    return for_task(cfg.learners[task.slot], task.kind, cfg.clip_eps)


def _fit_predict(spec, view, task, train, test, seed, theta_prelim=None):
    rows = _task_rows(view, task, train)
    model = spec.fit(view.x[rows], _task_target(view, task, rows, theta_prelim), seed=seed)
    pred = np.asarray(model.predict(view.x[test]), dtype=np.float64)
    return pred


def _preliminary_theta(view, cfg, specs, train, seed_keys):
    """Partialling-out DML2 estimate from an inner 2-fold split of ``train``."""
    inner = draw_folds(train.size, 2, 1, derive_seed(cfg.seed, _PRELIM_STREAM, *seed_keys))
    y = view.y
    num = 0.0
    den = 0.0
    for k, (itr, ite) in enumerate(inner.splits[0]):
        tr, te = train[itr], train[ite]
        preds = {}
        for task in cfg.tasks:
            if task.name in ("l", "m", "r"):
                s = derive_seed(cfg.seed, _PRELIM_STREAM, *seed_keys, k, TASK_INDEX[task.name])
                preds[task.name] = _fit_predict(specs[task.name], view, task, tr, te, s)
        if cfg.model == "plr":
            v = view.d[te] - preds["m"]
            num += np.sum((y[te] - preds["l"]) * v)
            den += np.sum(v * v)
        else:
            w = view.z[te, 0] - preds["m"]
            num += np.sum((y[te] - preds["l"]) * w)
            den += np.sum((view.d[te] - preds["r"]) * w)
    if abs(den) < DEGENERATE_TOL * train.size:
        raise DegenerateScore("preliminary partialling-out estimate is undefined (zero denominator)")
    return num / den


def tune_specs(view: TreatmentView, cfg: DmlConfig, ids, seed_keys) -> dict:
    """Per-task learner specs after grid-search tuning on the rows ``ids``.

    The target of the IV-type ``g`` task depends on a preliminary theta; it is
    tuned on the outcome ``y`` instead.
    """
    specs = {}
    for task in cfg.tasks:
        spec = _slot_spec(cfg, task)
        settings = cfg.tune.get(task.slot)
        if settings is not None:
            rows = _task_rows(view, task, ids)
            target = view.y[rows] if task.target == "y_minus_theta_d" else \
                _task_target(view, task, rows)
            seed = derive_seed(cfg.seed, _TUNE_STREAM, *seed_keys, TASK_INDEX[task.name])
            spec = tune_grid_search(spec, settings, view.x[rows], target, seed)
        specs[task.name] = spec
    return specs


def prepare_nuisances(view: TreatmentView, cfg: DmlConfig, train_ids, test_ids,
                      rep: int = 0, fold: int = 0, treatment: int = 0,
                      specs: Optional[dict] = None) -> NuisancePredictions:
    """Fit every nuisance of ``cfg`` on ``train_ids`` and predict on ``test_ids``.

    Only rows in ``train_ids`` of the outcome and treatment are read.
    """
    train = np.asarray(train_ids, dtype=np.int64)
    test = np.asarray(test_ids, dtype=np.int64)
    if specs is None:
        specs = {t.name: _slot_spec(cfg, t) for t in cfg.tasks}
    out = NuisancePredictions(test_ids=test)
    theta_prelim = None
    if any(t.target == "y_minus_theta_d" for t in cfg.tasks):
        theta_prelim = _preliminary_theta(view, cfg, specs, train, (rep, fold, treatment))
        out.theta_prelim = theta_prelim
    for task in cfg.tasks:
        seed = learner_seed(cfg.seed, rep, fold, treatment, TASK_INDEX[task.name])
        pred = _fit_predict(specs[task.name], view, task, train, test, seed, theta_prelim)
        if task.kind == "classification":
            pred = np.clip(pred, cfg.clip_eps, 1.0 - cfg.clip_eps)
        setattr(out, f"{task.name}_hat", pred)
    return out


# -- score assembly ----------------------------------------------------------

_PRED_FIELDS = ("l_hat", "m_hat", "r_hat", "g_hat", "g0_hat", "g1_hat", "r0_hat", "r1_hat")


def _job(ds: Dataset, cfg: DmlConfig, plan: FoldPlan, rep: int, treatment: int, specs):
    """Nuisances and score vectors for one (repetition, treatment)."""
    view = treatment_view(ds, treatment)
    n = view.n_obs
    mask = plan.scored_mask(rep)
    full = {}
    for k, (train, test) in enumerate(plan.folds(rep)):
        fold_specs = specs
        if cfg.tune and any(ts.tune_on_folds for ts in cfg.tune.values()):
            fold_specs = tune_specs(view, cfg, train, (rep, k, treatment))
        preds = prepare_nuisances(view, cfg, train, test, rep, k, treatment, fold_specs)
        for name in _PRED_FIELDS:
            v = getattr(preds, name)
            if v is None:
                continue
            if name not in full:
                full[name] = np.full(n, np.nan)
            full[name][test] = v
    if cfg.model == "irm" and cfg.score == "atte":
        full["p_hat"] = float(view.d.mean())

    psi_a = np.zeros(n)
    psi_b = np.zeros(n)
    if isinstance(cfg.score, sc.CustomScore):
        ctx = sc.FoldContext(rep, treatment, plan.folds(rep), mask)
        a, b = sc.evaluate_custom(cfg.score.routine, view.y, view.d, full.get("l_hat"),
                                  full.get("m_hat"), full.get("g_hat"), ctx)
        psi_a[mask] = a[mask]
        psi_b[mask] = b[mask]
    else:
        score = sc.get_score(cfg.model, cfg.score)
        data = {"y": view.y[mask], "d": view.d[mask]}
        if view.z is not None:
            data["z"] = view.z[mask, 0]
        nuis = {k: (v if np.ndim(v) == 0 else v[mask]) for k, v in full.items()}
        a, b = sc.evaluate_score(score, data, nuis)
        psi_a[mask] = a
        psi_b[mask] = b
    if not (np.all(np.isfinite(psi_a)) and np.all(np.isfinite(psi_b))):
        raise DegenerateScore(
            f"non-finite score values (repetition {rep}, treatment {view.treatment_name!r})"
        )
    return psi_a, psi_b, full


# -- solvers -----------------------------------------------------------------

def solve_dml1(panel: ScorePanel, plan: FoldPlan, rep: int = 0, treatment: int = 0) -> float:
    thetas = []
    for k, (_, test) in enumerate(plan.folds(rep)):
        sa = np.sum(panel.psi_a[test, rep, treatment])
        if abs(sa) < DEGENERATE_TOL * test.size:
            raise DegenerateFold(f"sum of psi_a is zero in fold {k} (repetition {rep})")
        thetas.append(-np.sum(panel.psi_b[test, rep, treatment]) / sa)
    return float(np.mean(thetas))


def solve_dml2(panel: ScorePanel, plan: Optional[FoldPlan] = None, rep: int = 0,
               treatment: int = 0) -> float:
    m = panel.mask[:, rep]
    sa = np.sum(panel.psi_a[m, rep, treatment])
    if abs(sa) < DEGENERATE_TOL * max(int(m.sum()), 1):
        raise DegenerateScore(f"sum of psi_a is zero (repetition {rep}, treatment {treatment})")
    return float(-np.sum(panel.psi_b[m, rep, treatment]) / sa)


def estimate_variance(panel: ScorePanel, plan: Optional[FoldPlan], theta: float, rep: int = 0,
                      treatment: int = 0):
    """Return (sigma2_hat, J0_hat); the standard error is sqrt(sigma2_hat / N)."""
    m = panel.mask[:, rep]
    psi_a = panel.psi_a[m, rep, treatment]
    psi_b = panel.psi_b[m, rep, treatment]
    j0 = float(np.mean(psi_a))
    if abs(j0) < DEGENERATE_TOL:
        raise DegenerateScore(f"J0 estimate is zero (repetition {rep}, treatment {treatment})")
    psi = psi_a * theta + psi_b
    sigma2 = float(np.mean(psi * psi) / (j0 * j0))
    if sigma2 == 0.0:
        warnings.warn("score variance is exactly zero; standard error is 0", RuntimeWarning,
                      stacklevel=2)
    return sigma2, j0


def aggregate_reps(per_rep_coefs, per_rep_ses, n_obs):
    """Median aggregation over repeated sample splits.

    coef = median_r theta_r;
    se = sqrt(median_r(se_r^2 * N + (theta_r - coef)^2) / N).
    """
    coefs = np.atleast_2d(np.asarray(per_rep_coefs, dtype=np.float64))
    ses = np.atleast_2d(np.asarray(per_rep_ses, dtype=np.float64))
    if coefs.shape[0] == 1:
        return coefs[0].copy(), ses[0].copy()
    coef = np.median(coefs, axis=0)
    var = np.median(ses ** 2 * n_obs + (coefs - coef) ** 2, axis=0)
    return coef, np.sqrt(var / n_obs)


def normal_pvalue(t):
    return 2.0 * norm.sf(np.abs(t))


def _critical(level):
    if not 0 < level < 1:
        raise InvalidLevel(f"level must lie in (0, 1), got {level}")
    return float(norm.ppf(1 - (1 - level) / 2))


def confint(fit: "DmlFit", level: float = 0.95) -> np.ndarray:
    """Marginal intervals coef +/- z_{1-alpha/2} se, shape (n_treat, 2)."""
    if fit is None:
        raise FitNotRun("no fit available")
    c = _critical(level)
    return np.column_stack([fit.coef - c * fit.se, fit.coef + c * fit.se])


# -- fit -----------------------------------------------------------------------

@dataclass
class DmlFit:
    coef: np.ndarray
    se: np.ndarray
    t_stat: np.ndarray
    p_value: np.ndarray
    per_rep_coefs: np.ndarray   # (n_rep, n_treat)
    per_rep_ses: np.ndarray     # (n_rep, n_treat)
    sigma2_hat: np.ndarray      # (n_rep, n_treat)
    J0_hat: np.ndarray          # (n_rep, n_treat)
    n_scored: int
    panel: ScorePanel
    fold_plan: FoldPlan
    treatment_names: tuple
    config: DmlConfig
    predictions: list = field(default_factory=list, repr=False)  # [rep][treatment] -> dict
    boot: object = None

    @property
    def n_treat(self) -> int:
        return self.coef.shape[0]

    def confint(self, level: float = 0.95, joint: bool = False) -> np.ndarray:
        if joint:
            from .inference import joint_confint
            return joint_confint(self, self._require_boot(), level)
        return confint(self, level)

    def bootstrap(self, method: str = "normal", n_boot: int = 500, seed: int = 0):
        from .inference import multiplier_bootstrap
        self.boot = multiplier_bootstrap(self, method, n_boot, seed)
        return self.boot

    def p_adjust(self, method: str = "romano-wolf"):
        from .inference import p_adjust_classical, p_adjust_romano_wolf
        if method in ("romano-wolf", "rw", "romano_wolf"):
            return p_adjust_romano_wolf(self, self._require_boot())
        return p_adjust_classical(self.p_value, method)

    def _require_boot(self):
        from .errors import BootstrapNotRun
        if self.boot is None:
            raise BootstrapNotRun("run bootstrap() first")
        return self.boot

    def summary(self, digits: int = 5) -> str:
        rows = [("", "Estimate.", "Std. Error", "t value", "Pr(>|t|)")]
        for j, name in enumerate(self.treatment_names):
            rows.append((name, f"{self.coef[j]:.{digits}f}", f"{self.se[j]:.{digits}f}",
                         f"{self.t_stat[j]:.3f}", f"{self.p_value[j]:.3g}"))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
        return "\n".join(lines)


def default_plan(n_obs: int, cfg: DmlConfig) -> FoldPlan:
    if cfg.apply_cross_fitting:
        return draw_folds(n_obs, cfg.n_folds, cfg.n_rep, cfg.seed)
    return draw_no_crossfit(n_obs, cfg.seed, cfg.n_rep)


def _run_job(args):
    return _job(*args)


def fit(ds: Dataset, cfg: DmlConfig, plan: Optional[FoldPlan] = None, workers: int = 1) -> DmlFit:
    """Cross-fitted DML estimation of every treatment effect in ``ds``."""
    check_data(ds, cfg)
    n = ds.n_obs
    if plan is None:
        plan = default_plan(n, cfg)
    elif plan.n_obs != n:
        raise ConfigError(f"fold plan is for {plan.n_obs} observations, data has {n}")
    n_rep, n_treat = plan.n_rep, ds.n_treat

    whole_sample_tuning = cfg.tune and not any(ts.tune_on_folds for ts in cfg.tune.values())
    specs = []
    for j in range(n_treat):
        view = treatment_view(ds, j)
        if whole_sample_tuning:
            specs.append(tune_specs(view, cfg, np.arange(n), (j,)))
        else:
            specs.append({t.name: _slot_spec(cfg, t) for t in cfg.tasks})

    jobs = [(ds, cfg, plan, r, j, specs[j]) for r in range(n_rep) for j in range(n_treat)]
    if workers > 1 and len(jobs) > 1 and not isinstance(cfg.score, sc.CustomScore):
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = [_run_job(a) for a in jobs]

    psi_a = np.zeros((n, n_rep, n_treat))
    psi_b = np.zeros((n, n_rep, n_treat))
    mask = np.stack([plan.scored_mask(r) for r in range(n_rep)], axis=1)
    predictions = [[None] * n_treat for _ in range(n_rep)]
    for (_, _, _, r, j, _), (a, b, full) in zip(jobs, results):
        psi_a[:, r, j] = a
        psi_b[:, r, j] = b
        predictions[r][j] = full
    panel = ScorePanel(psi_a, psi_b, mask)

    n_scored = int(mask[:, 0].sum())
    coefs = np.zeros((n_rep, n_treat))
    ses = np.zeros((n_rep, n_treat))
    sig2 = np.zeros((n_rep, n_treat))
    j0 = np.zeros((n_rep, n_treat))
    for r in range(n_rep):
        for j in range(n_treat):
            if cfg.dml_procedure == "dml1":
                theta = solve_dml1(panel, plan, r, j)
            else:
                theta = solve_dml2(panel, plan, r, j)
            s2, jj = estimate_variance(panel, plan, theta, r, j)
            coefs[r, j] = theta
            sig2[r, j] = s2
            j0[r, j] = jj
            ses[r, j] = np.sqrt(s2 / n_scored)
    coef, se = aggregate_reps(coefs, ses, n_scored)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    return DmlFit(
        coef=coef, se=se, t_stat=t, p_value=normal_pvalue(t),
        per_rep_coefs=coefs, per_rep_ses=ses, sigma2_hat=sig2, J0_hat=j0,
        n_scored=n_scored, panel=panel, fold_plan=plan,
        treatment_names=tuple(ds.d_cols), config=cfg, predictions=predictions,
    )
