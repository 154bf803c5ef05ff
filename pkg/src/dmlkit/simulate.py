"""Monte Carlo campaigns: repeated (generate -> estimate) runs and their summaries."""

from __future__ import annotations

import csv
import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from . import dgp as dgp_mod
from .dataset import format_float
from .errors import ConfigError
from .estimator import DmlConfig, fit
from .inference import joint_confint, multiplier_bootstrap, p_adjust_classical, p_adjust_romano_wolf
from .resampling import derive_seed, full_sample_plan

VARIANTS = ("orthogonal", "naive", "nosplit", "no-crossfit")
ADJUST_CHOICES = ("ci", "romano-wolf", "bonferroni", "holm")
HIST_BINS = 30
HIST_RANGE = (-4.0, 4.0)


@dataclass(frozen=True)
class Campaign:
    dgp: str
    cfg: DmlConfig
    reps: int = 100
    dgp_params: dict = field(default_factory=dict)
    variant: str = "orthogonal"
    level: float = 0.95
    bootstrap: Optional[tuple] = None  # (method, B)
    p_adjust: tuple = ()               # subset of ADJUST_CHOICES
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.dgp not in dgp_mod.DGPS:
            raise ConfigError(f"unknown DGP {self.dgp!r}; choose from {sorted(dgp_mod.DGPS)}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        for m in self.p_adjust:
            if m not in ADJUST_CHOICES:
                raise ConfigError(f"unknown adjustment {m!r}; choose from {ADJUST_CHOICES}")
        needs_boot = {"ci", "romano-wolf"} & set(self.p_adjust)
        if needs_boot and self.bootstrap is None:
            raise ConfigError(f"{sorted(needs_boot)} need a bootstrap setting")
        if self.variant == "naive" and self.cfg.model != "plr":
            raise ConfigError("the naive variant is defined for the PLR model only")


def variant_config(cfg: DmlConfig, variant: str, seed: int) -> DmlConfig:
    changes = {"seed": seed}
    if variant == "naive":
        learners = dict(cfg.learners)
        learners.setdefault("ml_g", learners["ml_l"])
        changes.update(score="naive", learners=learners)
    elif variant == "no-crossfit":
        changes["apply_cross_fitting"] = False
    return dataclasses.replace(cfg, **changes)


@dataclass
class RepResult:
    rep: int
    estimate: np.ndarray
    se: np.ndarray
    theta_true: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    rejections: dict  # method -> boolean array per treatment


def run_replication(camp: Campaign, rep: int) -> RepResult:
    data_seed = derive_seed(camp.seed, rep, 0)
    est_seed = derive_seed(camp.seed, rep, 1)
    sample = dgp_mod.generate(camp.dgp, seed=data_seed, **camp.dgp_params)
    cfg = variant_config(camp.cfg, camp.variant, est_seed)
    plan = full_sample_plan(sample.dataset.n_obs, cfg.n_rep) if camp.variant == "nosplit" else None
    res = fit(sample.dataset, cfg, plan)
    truth = np.asarray(sample.theta_true, dtype=np.float64)
    if camp.dgp == "irm_belloni" and cfg.score == "atte":
        truth = np.array([sample.params["atte"]])
    ci = res.confint(camp.level)
    alpha = 1.0 - camp.level
    rejections = {}
    if camp.bootstrap is not None:
        method, n_boot = camp.bootstrap
        res.boot = multiplier_bootstrap(res, method, n_boot, derive_seed(camp.seed, rep, 2))
    for m in camp.p_adjust:
        if m == "ci":
            jci = joint_confint(res, res.boot, camp.level)
            rejections[m] = (jci[:, 0] > 0) | (jci[:, 1] < 0)
        elif m == "romano-wolf":
            rejections[m] = p_adjust_romano_wolf(res, res.boot).adjusted < alpha
        else:
            rejections[m] = p_adjust_classical(res.p_value, m).adjusted < alpha
    return RepResult(rep, res.coef, res.se, truth, ci[:, 0], ci[:, 1], rejections)


def _run(args):
    return run_replication(*args)


@dataclass
class SimReport:
    campaign: Campaign
    results: list

    @property
    def estimates(self):
        return np.array([r.estimate for r in self.results])

    @property
    def ses(self):
        return np.array([r.se for r in self.results])

    @property
    def truths(self):
        return np.array([r.theta_true for r in self.results])

    @property
    def covered(self):
        lo = np.array([r.ci_low for r in self.results])
        hi = np.array([r.ci_high for r in self.results])
        return (lo <= self.truths) & (self.truths <= hi)

    @property
    def studentized(self):
        return (self.estimates - self.truths) / self.ses

    def aggregates(self) -> dict:
        err = self.estimates - self.truths
        t = self.studentized
        out = {
            "dgp": self.campaign.dgp,
            "variant": self.campaign.variant,
            "reps": len(self.results),
            "n_treat": self.estimates.shape[1],
            "mean_bias": float(err.mean()),
            "sd_estimate": float(self.estimates.std(axis=0, ddof=1).mean()) if len(self.results) > 1 else 0.0,
            "rmse": float(np.sqrt(np.mean(err ** 2))),
            "mean_se": float(self.ses.mean()),
            "coverage": float(self.covered.mean()),
            "mean_studentized": float(t.mean()),
            "sd_studentized": float(t.std(ddof=1)) if t.size > 1 else 0.0,
        }
        null = self.truths == 0
        for m in self.campaign.p_adjust:
            rej = np.array([r.rejections[m] for r in self.results])
            out[f"fwer_{m}"] = float(np.mean(np.any(rej & null, axis=1)))
            out[f"correct_rejections_{m}"] = float(np.mean(np.sum(rej & ~null, axis=1)))
        return out

    def histogram(self):
        """Counts of the first treatment's studentized estimates, 30 bins on [-4, 4].

        Values outside the range are counted in the end bins.
        """
        t = np.clip(self.studentized[:, 0], *HIST_RANGE)
        counts, edges = np.histogram(t, bins=HIST_BINS, range=HIST_RANGE)
        return edges, counts

    def write(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        agg = self.aggregates()
        _write_rows(os.path.join(out_dir, "report.csv"), list(agg), [list(agg.values())])
        names = [f"theta_{j + 1}" for j in range(self.estimates.shape[1])]
        rows = []
        cover = self.covered
        t = self.studentized
        for i, r in enumerate(self.results):
            for j, name in enumerate(names):
                rows.append([r.rep, name, r.theta_true[j], r.estimate[j], r.se[j], r.ci_low[j],
                             r.ci_high[j], int(cover[i, j]), t[i, j]]
                            + [int(r.rejections[m][j]) for m in self.campaign.p_adjust])
        header = ["rep", "parameter", "theta_true", "estimate", "se", "ci_low", "ci_high",
                  "covered", "studentized"] + [f"reject_{m}" for m in self.campaign.p_adjust]
        _write_rows(os.path.join(out_dir, "draws.csv"), header, rows)
        edges, counts = self.histogram()
        _write_rows(os.path.join(out_dir, "hist.csv"), ["bin_low", "bin_high", "count", "normal_expected"],
                    [[edges[k], edges[k + 1], counts[k],
                      len(self.results) * (norm.cdf(edges[k + 1]) - norm.cdf(edges[k]))]
                     for k in range(HIST_BINS)])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def run_campaign(camp: Campaign, workers: int = 1) -> SimReport:
    """Run every replication; the result does not depend on ``workers``."""
    args = [(camp, r) for r in range(camp.reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run, args, chunksize=max(1, camp.reps // (4 * workers))))
    else:
        results = [_run(a) for a in args]
    return SimReport(camp, results)
