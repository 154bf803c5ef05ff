"""Linear orthogonal scores psi(W; theta, eta) = psi_a(W; eta) * theta + psi_b(W; eta).

Naming of the nuisance functions:

* ``l_hat``  E[Y | X]
* ``m_hat``  E[D | X] (PLR), E[Z | X] (PLIV), P(D=1 | X) (IRM), P(Z=1 | X) (IIVM)
* ``r_hat``  E[D | X] (PLIV); ``r0_hat``/``r1_hat`` P(D=1 | Z=z, X) (IIVM)
* ``g_hat``  E[Y - D theta | X] (PLR/PLIV IV-type); ``g0_hat``/``g1_hat`` the
  outcome regression in each treatment (IRM) or instrument (IIVM) arm
* ``p_hat``  P(D = 1), a scalar
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import (
    BadCustomReturn,
    ConfigError,
    LengthMismatch,
    PropensityOutOfRange,
    ZeroTreatedShare,
)


def _vectors(**named):
    out = {}
    n = None
    for name, v in named.items():
        v = np.asarray(v, dtype=np.float64)
        if v.ndim == 2 and v.shape[1] == 1:
            v = v[:, 0]
        if v.ndim != 1:
            raise LengthMismatch(f"{name} must be a vector, got shape {v.shape}")
        if n is None:
            n = v.shape[0]
        elif v.shape[0] != n:
            raise LengthMismatch(f"{name} has length {v.shape[0]}, expected {n}")
        out[name] = v
    return out.values()


def _check_propensity(m, name="m_hat"):
    if not np.all((m > 0) & (m < 1)):
        bad = m[~((m > 0) & (m < 1))][0]
        raise PropensityOutOfRange(f"{name} must lie strictly inside (0, 1); found {bad}")


def score_value(psi_a, psi_b, theta):
    """psi evaluated at ``theta``."""
    return psi_a * theta + psi_b


def plr_partialling_out(y, d, l_hat, m_hat):
    y, d, l_hat, m_hat = _vectors(y=y, d=d, l_hat=l_hat, m_hat=m_hat)
    v = d - m_hat
    return -(v * v), (y - l_hat) * v


def plr_iv_type(y, d, g_hat, m_hat):
    y, d, g_hat, m_hat = _vectors(y=y, d=d, g_hat=g_hat, m_hat=m_hat)
    v = d - m_hat
    return -(d * v), (y - g_hat) * v


def pliv_partialling_out(y, d, z, l_hat, m_hat, r_hat):
    y, d, z, l_hat, m_hat, r_hat = _vectors(y=y, d=d, z=z, l_hat=l_hat, m_hat=m_hat, r_hat=r_hat)
    w = z - m_hat
    return -((d - r_hat) * w), (y - l_hat) * w


def pliv_iv_type(y, d, z, g_hat, m_hat):
    y, d, z, g_hat, m_hat = _vectors(y=y, d=d, z=z, g_hat=g_hat, m_hat=m_hat)
    w = z - m_hat
    return -(d * w), (y - g_hat) * w


def _aipw(y, t, g0, g1, m):
    return (g1 - g0) + t * (y - g1) / m - (1.0 - t) * (y - g0) / (1.0 - m)


def irm_ate(y, d, g0_hat, g1_hat, m_hat):
    y, d, g0_hat, g1_hat, m_hat = _vectors(y=y, d=d, g0_hat=g0_hat, g1_hat=g1_hat, m_hat=m_hat)
    _check_propensity(m_hat)
    return np.full_like(y, -1.0), _aipw(y, d, g0_hat, g1_hat, m_hat)


def irm_atte(y, d, g0_hat, m_hat, p_hat=None):
    """ATTE score; ``p_hat`` defaults to the treated share of ``d``."""
    y, d, g0_hat, m_hat = _vectors(y=y, d=d, g0_hat=g0_hat, m_hat=m_hat)
    if p_hat is None:
        p_hat = float(d.mean())
    if p_hat <= 0:
        raise ZeroTreatedShare("no treated observations: P(D=1) estimate is 0")
    if p_hat >= 1:
        raise PropensityOutOfRange(f"p_hat must lie inside (0, 1), got {p_hat}")
    _check_propensity(m_hat)
    u = y - g0_hat
    psi_a = -d / p_hat
    psi_b = d * u / p_hat - m_hat * (1.0 - d) * u / (p_hat * (1.0 - m_hat))
    return psi_a, psi_b


def iivm_late(y, d, z, g0_hat, g1_hat, m_hat, r0_hat, r1_hat):
    y, d, z, g0_hat, g1_hat, m_hat, r0_hat, r1_hat = _vectors(
        y=y, d=d, z=z, g0_hat=g0_hat, g1_hat=g1_hat, m_hat=m_hat, r0_hat=r0_hat, r1_hat=r1_hat
    )
    _check_propensity(m_hat)
    psi_b = _aipw(y, z, g0_hat, g1_hat, m_hat)
    psi_a = -_aipw(d, z, r0_hat, r1_hat, m_hat)
    return psi_a, psi_b


def plr_naive(y, d, g_hat):
    """Plug-in PLR score (Y - D theta - g(X)) D; not Neyman orthogonal."""
    y, d, g_hat = _vectors(y=y, d=d, g_hat=g_hat)
    return -(d * d), d * (y - g_hat)


@dataclass(frozen=True)
class ScoreDef:
    model: str
    func: Callable
    data: tuple        # observed variables the score reads
    nuisances: tuple   # nuisance predictions it reads
    probabilities: tuple = ()  # nuisances that are probabilities


BUILTIN_SCORES = {
    ("plr", "partialling_out"): ScoreDef("plr", plr_partialling_out, ("y", "d"), ("l_hat", "m_hat")),
    ("plr", "iv_type"): ScoreDef("plr", plr_iv_type, ("y", "d"), ("g_hat", "m_hat")),
    ("pliv", "partialling_out"): ScoreDef(
        "pliv", pliv_partialling_out, ("y", "d", "z"), ("l_hat", "m_hat", "r_hat")),
    ("pliv", "iv_type"): ScoreDef("pliv", pliv_iv_type, ("y", "d", "z"), ("g_hat", "m_hat")),
    ("irm", "ate"): ScoreDef(
        "irm", irm_ate, ("y", "d"), ("g0_hat", "g1_hat", "m_hat"), ("m_hat",)),
    ("irm", "atte"): ScoreDef(
        "irm", irm_atte, ("y", "d"), ("g0_hat", "m_hat", "p_hat"), ("m_hat", "p_hat")),
    ("iivm", "late"): ScoreDef(
        "iivm", iivm_late, ("y", "d", "z"),
        ("g0_hat", "g1_hat", "m_hat", "r0_hat", "r1_hat"), ("m_hat", "r0_hat", "r1_hat")),
    ("plr", "naive"): ScoreDef("plr", plr_naive, ("y", "d"), ("g_hat",)),
}

DEFAULT_SCORE = {"plr": "partialling_out", "pliv": "partialling_out", "irm": "ate", "iivm": "late"}


def get_score(model: str, score: str) -> ScoreDef:
    try:
        return BUILTIN_SCORES[(model, score)]
    except KeyError:
        valid = sorted(s for m, s in BUILTIN_SCORES if m == model)
        raise ConfigError(f"score {score!r} is not available for model {model!r}; "
                          f"choose from {valid}") from None


def evaluate_score(score: ScoreDef, data: Mapping, nuisances: Mapping):
    kwargs = {k: data[k] for k in score.data}
    kwargs.update({k: nuisances[k] for k in score.nuisances})
    return score.func(**kwargs)


@dataclass(frozen=True)
class FoldContext:
    """What a custom score routine sees about the sample split."""

    rep: int
    treatment: int
    splits: tuple  # (train_ids, test_ids) per fold
    scored: np.ndarray  # boolean mask of observations the score is evaluated on


@dataclass(frozen=True)
class CustomScore:
    """User routine ``f(y, d, l_hat, m_hat, g_hat, context) -> (psi_a, psi_b)``.

    The routine may also return a mapping with keys ``psi_a`` and ``psi_b``.
    ``g_hat`` is ``None`` unless an ``ml_g`` learner is configured.
    """

    routine: Callable
    name: str = "custom"


def evaluate_custom(routine, y, d, l_hat, m_hat, g_hat, context: Optional[FoldContext] = None):
    """Run a custom score routine and validate what it returns."""
    n = np.asarray(y).shape[0]
    out = routine(y, d, l_hat, m_hat, g_hat, context)
    if isinstance(out, Mapping):
        try:
            out = (out["psi_a"], out["psi_b"])
        except KeyError:
            raise BadCustomReturn("custom score mapping needs keys 'psi_a' and 'psi_b'") from None
    try:
        psi_a, psi_b = out
    except (TypeError, ValueError):
        raise BadCustomReturn("custom score must return (psi_a, psi_b)") from None
    psi_a = np.asarray(psi_a, dtype=np.float64)
    psi_b = np.asarray(psi_b, dtype=np.float64)
    for name, v in (("psi_a", psi_a), ("psi_b", psi_b)):
        if v.shape != (n,):
            raise BadCustomReturn(f"custom {name} has shape {v.shape}, expected ({n},)")
    mask = context.scored if context is not None else np.ones(n, dtype=bool)
    if not (np.all(np.isfinite(psi_a[mask])) and np.all(np.isfinite(psi_b[mask]))):
        raise BadCustomReturn("custom score returned non-finite values")
    return psi_a, psi_b


def check_orthogonality(score: ScoreDef, data: Mapping, truth: Mapping, theta: float,
                        h: float = 0.05, directions: Optional[Mapping] = None) -> dict:
    """Centered finite-difference Gateaux derivative of the mean score.

    For each nuisance component c of ``score`` returns
    ``[mean psi(theta, eta + h D_c) - mean psi(theta, eta - h D_c)] / (2h)``
    where only component c is perturbed.  ``directions`` maps component
    names to a bounded direction (scalar or per-observation vector); the
    default is the constant 1.
    """
    directions = dict(directions or {})
    out = {}
    for comp in score.nuisances:
        delta = directions.get(comp, 1.0)
        vals = []
        for sign in (1.0, -1.0):
            nuis = dict(truth)
            nuis[comp] = truth[comp] + sign * h * delta
            if np.ndim(truth[comp]) == 0:
                nuis[comp] = float(nuis[comp])
            psi_a, psi_b = evaluate_score(score, data, nuis)
            vals.append(np.mean(score_value(psi_a, psi_b, theta)))
        out[comp] = (vals[0] - vals[1]) / (2.0 * h)
    return out
