"""Sample splitting for cross-fitting.

Three modes are supported:

* ``cross_fit``     K-fold partitions, every observation scored exactly once
* ``no_cross_fit``  one random (train, test) halving, scores on the test half
* ``no_split``      nuisances fit and evaluated on the full sample

Randomness comes from PCG64 streams keyed by ``(seed, stream, rep)`` through
:class:`numpy.random.SeedSequence`, so plans do not depend on how the
surrounding work is scheduled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import IndexOutOfRange, InvalidFoldCount, LengthMismatch, NotAPartition

_PLAN_STREAM = 0
_LEARNER_STREAM = 1

MODES = ("cross_fit", "no_cross_fit", "no_split")


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the key path ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed derived from ``(seed, *keys)``."""
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass(frozen=True)
class FoldPlan:
    n_obs: int
    n_folds: int
    n_rep: int
    splits: tuple  # splits[rep][fold] -> (train_ids, test_ids)
    mode: str = "cross_fit"

    @property
    def cross_fitting(self) -> bool:
        return self.mode == "cross_fit"

    def folds(self, rep: int):
        return self.splits[rep]

    def scored_mask(self, rep: int) -> np.ndarray:
        mask = np.zeros(self.n_obs, dtype=bool)
        for _, test in self.splits[rep]:
            mask[test] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "n_obs": self.n_obs,
            "mode": self.mode,
            "splits": [
                {
                    "train_ids": [tr.tolist() for tr, _ in rep],
                    "test_ids": [te.tolist() for _, te in rep],
                }
                for rep in self.splits
            ],
        }

    def __eq__(self, other):
        if not isinstance(other, FoldPlan):
            return NotImplemented
        if (self.n_obs, self.n_folds, self.n_rep, self.mode) != (
            other.n_obs, other.n_folds, other.n_rep, other.mode
        ):
            return False
        for ra, rb in zip(self.splits, other.splits):
            for (tra, tea), (trb, teb) in zip(ra, rb):
                if not (np.array_equal(tra, trb) and np.array_equal(tea, teb)):
                    return False
        return True

    __hash__ = None


def _fold_sizes(n_obs, n_folds):
    base, extra = divmod(n_obs, n_folds)
    return [base + 1 if k < extra else base for k in range(n_folds)]


def draw_folds(n_obs: int, n_folds: int = 5, n_rep: int = 1, seed: int = 0) -> FoldPlan:
    if n_folds < 2:
        raise InvalidFoldCount(f"n_folds must be >= 2, got {n_folds}")
    if n_obs < n_folds:
        raise InvalidFoldCount(f"n_obs={n_obs} is smaller than n_folds={n_folds}")
    if n_rep < 1:
        raise InvalidFoldCount(f"n_rep must be >= 1, got {n_rep}")
    sizes = _fold_sizes(n_obs, n_folds)
    all_ids = np.arange(n_obs)
    reps = []
    for r in range(n_rep):
        perm = substream(seed, _PLAN_STREAM, r).permutation(n_obs)
        folds = []
        start = 0
        for size in sizes:
            test = np.sort(perm[start:start + size])
            start += size
            train = np.setdiff1d(all_ids, test, assume_unique=True)
            folds.append((train, test))
        reps.append(tuple(folds))
    return FoldPlan(n_obs, n_folds, n_rep, tuple(reps), "cross_fit")


def draw_no_crossfit(n_obs: int, seed: int = 0, n_rep: int = 1) -> FoldPlan:
    """Random halving: train gets ceil(n/2) observations, the score uses the rest."""
    if n_obs < 4:
        raise InvalidFoldCount(f"no-cross-fit split needs n_obs >= 4, got {n_obs}")
    n_train = (n_obs + 1) // 2
    reps = []
    for r in range(n_rep):
        perm = substream(seed, _PLAN_STREAM, r).permutation(n_obs)
        train = np.sort(perm[:n_train])
        test = np.sort(perm[n_train:])
        reps.append(((train, test),))
    return FoldPlan(n_obs, 2, n_rep, tuple(reps), "no_cross_fit")


def full_sample_plan(n_obs: int, n_rep: int = 1) -> FoldPlan:
    """Train and evaluate on every observation (overfitting demonstration only)."""
    ids = np.arange(n_obs)
    return FoldPlan(n_obs, 1, n_rep, tuple(((ids, ids),) for _ in range(n_rep)), "no_split")


def validate_external_plan(raw_splits, n_obs: int) -> FoldPlan:
    """Check a user-supplied nested split structure and wrap it as a FoldPlan.

    ``raw_splits`` is a list (one entry per repetition) of mappings with
    ``train_ids`` and ``test_ids``, each a list of per-fold index arrays.
    Train sets may overlap (they need not be complements); the test sets of
    each repetition must partition ``0..n_obs-1``.  A repetition with a
    single fold whose test set is a strict subset is treated as a
    no-cross-fit split.
    """
    if isinstance(raw_splits, dict):
        raw_splits = [raw_splits]
    if len(raw_splits) == 0:
        raise LengthMismatch("external plan has no repetitions")
    reps = []
    n_folds = None
    mode = "cross_fit"
    for r, rep in enumerate(raw_splits):
        try:
            trains, tests = rep["train_ids"], rep["test_ids"]
        except (KeyError, TypeError):
            raise LengthMismatch(f"repetition {r} lacks train_ids/test_ids") from None
        if len(trains) != len(tests):
            raise LengthMismatch(
                f"repetition {r}: {len(trains)} train sets but {len(tests)} test sets"
            )
        if n_folds is None:
            n_folds = len(tests)
        elif len(tests) != n_folds:
            raise LengthMismatch(f"repetition {r} has {len(tests)} folds, expected {n_folds}")
        folds = []
        counts = np.zeros(n_obs, dtype=np.int64)
        for k, (tr, te) in enumerate(zip(trains, tests)):
            tr = np.asarray(tr, dtype=np.int64)
            te = np.asarray(te, dtype=np.int64)
            for arr in (tr, te):
                if arr.size and (arr.min() < 0 or arr.max() >= n_obs):
                    raise IndexOutOfRange(
                        f"repetition {r}, fold {k}: index outside [0, {n_obs})"
                    )
            if np.intersect1d(tr, te).size:
                raise NotAPartition(f"repetition {r}, fold {k}: train and test overlap")
            np.add.at(counts, te, 1)
            folds.append((tr, te))
        if len(folds) == 1 and np.all(counts <= 1) and counts.sum() < n_obs:
            tr, te = folds[0]
            if np.union1d(tr, te).size != n_obs:
                raise NotAPartition(f"repetition {r}: train and test do not cover 0..{n_obs - 1}")
            mode = "no_cross_fit"
        elif not np.all(counts == 1):
            raise NotAPartition(
                f"repetition {r}: test sets do not partition 0..{n_obs - 1}"
            )
        reps.append(tuple(folds))
    return FoldPlan(n_obs, n_folds, len(reps), tuple(reps), mode)


def save_plan(path, plan: FoldPlan) -> None:
    with open(path, "w") as fh:
        json.dump(plan.to_dict(), fh)


def load_plan(path) -> FoldPlan:
    with open(path) as fh:
        raw = json.load(fh)
    if raw.get("mode") == "no_split":
        return full_sample_plan(raw["n_obs"], len(raw["splits"]))
    return validate_external_plan(raw["splits"], raw["n_obs"])


def learner_seed(seed: int, rep: int, fold: int, treatment: int, task: int) -> int:
    return derive_seed(seed, _LEARNER_STREAM, rep, fold, treatment, task)


def split_sizes(plan: FoldPlan, rep: int) -> Sequence[int]:
    return [len(te) for _, te in plan.splits[rep]]
