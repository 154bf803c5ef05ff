"""Command-line interface: ``dml estimate``, ``dml simulate`` and ``dml gen``.

Exit codes: 0 success, 1 estimation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import dgp as dgp_mod
from .config import build_config, parse_value, read_toml
from .dataset import format_float, load_csv, write_csv, write_roles
from .errors import (
    ConfigError,
    DmlError,
    DuplicateRole,
    IndexOutOfRange,
    InvalidLevel,
    LengthMismatch,
    NotAPartition,
    ParseError,
    UnknownColumn,
)
from .estimator import fit
from .inference import (
    BOOT_METHODS,
    joint_confint,
    multiplier_bootstrap,
    p_adjust_classical,
    p_adjust_romano_wolf,
)
from .resampling import load_plan
from .simulate import ADJUST_CHOICES, VARIANTS, Campaign, run_campaign

USAGE_ERRORS = (ConfigError, DuplicateRole, UnknownColumn, ParseError, NotAPartition,
                LengthMismatch, IndexOutOfRange, InvalidLevel)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _bootstrap_arg(text):
    if text is None:
        return None
    method, _, b = text.partition(":")
    if method not in BOOT_METHODS:
        raise ConfigError(f"--bootstrap method must be one of {BOOT_METHODS}, got {method!r}")
    try:
        n_boot = int(b) if b else 500
    except ValueError:
        raise ConfigError(f"--bootstrap draws must be an integer, got {b!r}") from None
    if n_boot < 1:
        raise ConfigError("--bootstrap draws must be >= 1")
    return method, n_boot


def _dgp_params(items):
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--dgp-param expects key=value, got {item!r}")
        params[key.replace("-", "_")] = parse_value(value)
    return params


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _add_estimation_flags(p):
    p.add_argument("--model", choices=("plr", "pliv", "irm", "iivm"))
    p.add_argument("--score")
    p.add_argument("--dml-procedure", choices=("dml1", "dml2"))
    p.add_argument("--n-folds", type=int)
    p.add_argument("--n-rep", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--learner-config", help="TOML file with learner/tuning/estimation settings")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--bootstrap", help="METHOD:B with METHOD in normal|wild|exponential")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)


def build_parser():
    parser = _Parser(prog="dml", description="Double machine learning estimation and simulation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="estimate causal parameters from a CSV file")
    est.add_argument("--data", required=True)
    est.add_argument("--roles", required=True, help="TOML role file (y_col, d_cols, x_cols, z_cols)")
    est.add_argument("--plan", help="JSON file with externally supplied sample splits")
    est.add_argument("--no-cross-fit", action="store_true",
                     help="fit nuisances on one half and score the other half")
    est.add_argument("--p-adjust", choices=("romano-wolf", "bonferroni", "holm"))
    _add_estimation_flags(est)

    sim = sub.add_parser("simulate", help="Monte Carlo campaign over a built-in DGP")
    sim.add_argument("--dgp", required=True)
    sim.add_argument("--dgp-param", action="append", metavar="KEY=VALUE")
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--variant", default="orthogonal")
    sim.add_argument("--p-adjust", help="comma list of ci,romano-wolf,bonferroni,holm or 'all'")
    _add_estimation_flags(sim)

    gen = sub.add_parser("gen", help="write a simulated data set to CSV")
    gen.add_argument("--dgp", required=True)
    gen.add_argument("--dgp-param", action="append", metavar="KEY=VALUE")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    return parser


def _load_cfg(args, **extra):
    raw = read_toml(args.learner_config) if args.learner_config else {}
    return build_config(raw, model=args.model, score=args.score,
                        dml_procedure=args.dml_procedure, n_folds=args.n_folds,
                        n_rep=args.n_rep, seed=args.seed, **extra)


def cmd_estimate(args) -> int:
    boot = _bootstrap_arg(args.bootstrap)
    if args.p_adjust == "romano-wolf" and boot is None:
        raise ConfigError("--p-adjust romano-wolf requires --bootstrap")
    if not 0 < args.level < 1:
        raise ConfigError(f"--level must lie in (0, 1), got {args.level}")
    cfg = _load_cfg(args, apply_cross_fitting=False if args.no_cross_fit else None)
    ds = load_csv(args.data, args.roles)
    plan = load_plan(args.plan) if args.plan else None
    res = fit(ds, cfg, plan, workers=args.workers)

    os.makedirs(args.out, exist_ok=True)
    ci = res.confint(args.level)
    names = res.treatment_names
    _write_csv(os.path.join(args.out, "summary.csv"),
               ["treatment", "estimate", "se", "t", "p", "ci_low", "ci_high"],
               [[names[j], res.coef[j], res.se[j], res.t_stat[j], res.p_value[j], ci[j, 0], ci[j, 1]]
                for j in range(res.n_treat)])
    if boot is not None:
        res.boot = multiplier_bootstrap(res, boot[0], boot[1], cfg.seed)
        jci = joint_confint(res, res.boot, args.level)
        _write_csv(os.path.join(args.out, "joint_ci.csv"), ["treatment", "ci_low", "ci_high"],
                   [[names[j], jci[j, 0], jci[j, 1]] for j in range(res.n_treat)])
    if args.p_adjust is not None or boot is not None:
        method = args.p_adjust or "romano-wolf"
        if method == "romano-wolf":
            adj = p_adjust_romano_wolf(res, res.boot)
        else:
            adj = p_adjust_classical(res.p_value, method)
        _write_csv(os.path.join(args.out, "p_adjusted.csv"),
                   ["treatment", "method", "p_raw", "p_adjusted"],
                   [[names[j], adj.method, adj.raw[j], adj.adjusted[j]] for j in range(res.n_treat)])
    print(res.summary())
    return 0


def _adjust_list(text):
    if not text:
        return ()
    if text == "all":
        return ADJUST_CHOICES
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    for m in items:
        if m not in ADJUST_CHOICES:
            raise ConfigError(f"unknown --p-adjust entry {m!r}; choose from {ADJUST_CHOICES} or 'all'")
    return items


def cmd_simulate(args) -> int:
    if args.dgp not in dgp_mod.DGPS:
        raise ConfigError(f"unknown DGP {args.dgp!r}; choose from {sorted(dgp_mod.DGPS)}")
    if args.variant not in VARIANTS:
        raise ConfigError(f"unknown variant {args.variant!r}; choose from {VARIANTS}")
    adjust = _adjust_list(args.p_adjust)
    boot = _bootstrap_arg(args.bootstrap)
    if boot is None and ({"ci", "romano-wolf"} & set(adjust)):
        boot = ("normal", 1000)
    if args.model is None:
        args.model = dgp_mod.DGP_MODEL[args.dgp]
    cfg = _load_cfg(args)
    camp = Campaign(args.dgp, cfg, args.reps, _dgp_params(args.dgp_param), args.variant,
                    args.level, boot, adjust, cfg.seed)
    report = run_campaign(camp, workers=args.workers)
    report.write(args.out)
    agg = report.aggregates()
    for key, value in agg.items():
        print(f"{key:>28s}  {value}")
    return 0


def cmd_gen(args) -> int:
    sample = dgp_mod.generate(args.dgp, seed=args.seed, **_dgp_params(args.dgp_param))
    os.makedirs(args.out, exist_ok=True)
    ds = sample.dataset
    write_csv(os.path.join(args.out, "data.csv"), ds)
    write_roles(os.path.join(args.out, "roles.toml"), ds.role_config())
    truth = {"dgp": args.dgp, "seed": args.seed,
             "theta_true": [float(v) for v in sample.theta_true],
             "params": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                        for k, v in sample.params.items()}}
    with open(os.path.join(args.out, "truth.json"), "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {ds.n_obs} rows to {os.path.join(args.out, 'data.csv')}")
    return 0


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "gen": cmd_gen}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DmlError as exc:
        print(f"estimation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
