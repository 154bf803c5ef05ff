"""Data backend: an observation matrix plus the causal role of every column."""

from __future__ import annotations

import csv
import enum
import os
import sys
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DuplicateRole,
    IndexOutOfRange,
    NonFiniteValue,
    ParseError,
    UnknownColumn,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class VariableRole(enum.Enum):
    OUTCOME = "outcome"
    TREATMENT = "treatment"
    COVARIATE = "covariate"
    INSTRUMENT = "instrument"


@dataclass(frozen=True)
class TreatmentView:
    """Arrays seen by the estimator while one treatment is active.

    ``x`` holds the declared covariates followed by every other treatment
    (declaration order), so non-active treatments act as controls.
    """

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    z: Optional[np.ndarray]
    treatment_name: str
    x_names: tuple
    z_names: tuple = ()

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]


class Dataset:
    """Immutable observation matrix with one role per column.

    Use :meth:`from_matrix` or :func:`load_csv` to build one.
    """

    def __init__(self, values, column_names, roles):
        values = np.array(values, dtype=np.float64)
        values.setflags(write=False)
        self._values = values
        self._names = tuple(column_names)
        self._roles = tuple(roles)
        self._index = {name: i for i, name in enumerate(self._names)}

    @classmethod
    def from_matrix(
        cls,
        values,
        names: Sequence[str],
        y_col: str,
        d_cols: Sequence[str],
        x_cols: Optional[Sequence[str]] = None,
        z_cols: Optional[Sequence[str]] = None,
    ) -> "Dataset":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigError("values must be a 2-d matrix")
        names = [str(n) for n in names]
        if len(names) != values.shape[1]:
            raise ConfigError(
                f"{len(names)} column names for a matrix with {values.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ConfigError(f"column names are not unique: {dup}")
        if isinstance(d_cols, str):
            d_cols = [d_cols]
        d_cols = list(d_cols)
        z_cols = [z_cols] if isinstance(z_cols, str) else list(z_cols or [])
        if not d_cols:
            raise ConfigError("at least one treatment column is required")

        declared = [y_col] + d_cols + z_cols + list(x_cols or [])
        for col in declared:
            if col not in names:
                raise UnknownColumn(f"column {col!r} not found in data")
        seen = {}
        for role, cols in (
            ("y_col", [y_col]),
            ("d_cols", d_cols),
            ("z_cols", z_cols),
            ("x_cols", list(x_cols or [])),
        ):
            for col in cols:
                if col in seen:
                    raise DuplicateRole(f"column {col!r} assigned to both {seen[col]} and {role}")
                seen[col] = role

        if x_cols is None:
            x_cols = [n for n in names if n not in seen]
        x_cols = list(x_cols)

        order = [y_col] + d_cols + x_cols + z_cols
        roles = (
            [VariableRole.OUTCOME]
            + [VariableRole.TREATMENT] * len(d_cols)
            + [VariableRole.COVARIATE] * len(x_cols)
            + [VariableRole.INSTRUMENT] * len(z_cols)
        )
        idx = [names.index(c) for c in order]
        sub = values[:, idx]
        if not np.all(np.isfinite(sub)):
            rows, cols = np.nonzero(~np.isfinite(sub))
            raise NonFiniteValue(
                f"non-finite value in column {order[cols[0]]!r} at row {rows[0] + 1}"
            )
        return cls(sub, order, roles)

    # -- accessors ---------------------------------------------------------
    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def column_names(self) -> tuple:
        return self._names

    @property
    def roles(self) -> tuple:
        return self._roles

    @property
    def n_obs(self) -> int:
        return self._values.shape[0]

    def _cols(self, role):
        return [n for n, r in zip(self._names, self._roles) if r is role]

    @property
    def y_col(self) -> str:
        return self._cols(VariableRole.OUTCOME)[0]

    @property
    def d_cols(self) -> list:
        return self._cols(VariableRole.TREATMENT)

    @property
    def x_cols(self) -> list:
        return self._cols(VariableRole.COVARIATE)

    @property
    def z_cols(self) -> list:
        return self._cols(VariableRole.INSTRUMENT)

    @property
    def n_treat(self) -> int:
        return len(self.d_cols)

    def column(self, name: str) -> np.ndarray:
        try:
            return self._values[:, self._index[name]]
        except KeyError:
            raise UnknownColumn(f"column {name!r} not found in data") from None

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        if not names:
            return np.empty((self.n_obs, 0))
        return self._values[:, [self._index[n] for n in names]]

    def role_config(self) -> dict:
        return {
            "y_col": self.y_col,
            "d_cols": self.d_cols,
            "x_cols": self.x_cols,
            "z_cols": self.z_cols,
        }

    def __repr__(self):
        return (
            f"Dataset(n_obs={self.n_obs}, y={self.y_col!r}, d={self.d_cols}, "
            f"n_x={len(self.x_cols)}, z={self.z_cols})"
        )


def from_matrix(values, names, y_col, d_cols, x_cols=None, z_cols=None) -> Dataset:
    return Dataset.from_matrix(values, names, y_col, d_cols, x_cols, z_cols)


def treatment_view(ds: Dataset, treatment_index: int) -> TreatmentView:
    d_cols = ds.d_cols
    if not 0 <= treatment_index < len(d_cols):
        raise IndexOutOfRange(
            f"treatment index {treatment_index} outside [0, {len(d_cols)})"
        )
    active = d_cols[treatment_index]
    x_names = ds.x_cols + [c for c in d_cols if c != active]
    z_names = ds.z_cols
    return TreatmentView(
        y=ds.column(ds.y_col),
        d=ds.column(active),
        x=ds.matrix(x_names),
        z=ds.matrix(z_names) if z_names else None,
        treatment_name=active,
        x_names=tuple(x_names),
        z_names=tuple(z_names),
    )


# -- file I/O --------------------------------------------------------------

def read_roles(path) -> dict:
    """Read a role config (TOML key/value: y_col, d_cols, x_cols, z_cols)."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse role config {path}: {exc}") from None
    return normalize_roles(raw)


def normalize_roles(raw: Mapping) -> dict:
    unknown = set(raw) - {"y_col", "d_cols", "x_cols", "z_cols"}
    if unknown:
        raise ConfigError(f"unknown role keys: {sorted(unknown)}")
    if "y_col" not in raw or "d_cols" not in raw:
        raise ConfigError("role config needs y_col and d_cols")

    def as_list(v):
        if v is None:
            return None
        return [v] if isinstance(v, str) else [str(s) for s in v]

    return {
        "y_col": str(raw["y_col"]),
        "d_cols": as_list(raw["d_cols"]),
        "x_cols": as_list(raw.get("x_cols")),
        "z_cols": as_list(raw.get("z_cols")),
    }


def write_roles(path, roles: Mapping) -> None:
    def fmt(v):
        if isinstance(v, str):
            return _toml_str(v)
        return "[" + ", ".join(_toml_str(s) for s in v) + "]"

    with open(path, "w") as fh:
        for key in ("y_col", "d_cols", "x_cols", "z_cols"):
            v = roles.get(key)
            if v is None or (key == "z_cols" and not v):
                continue
            fh.write(f"{key} = {fmt(v)}\n")


def _toml_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def load_csv(path, roles) -> Dataset:
    """Parse a rectangular numeric CSV with a header row into a Dataset.

    ``roles`` is either a mapping with y_col/d_cols/x_cols/z_cols or a path to
    a TOML role file.
    """
    if isinstance(roles, (str, os.PathLike)):
        roles = read_roles(roles)
    else:
        roles = normalize_roles(roles)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", row=0) from None
        header = [h.strip() for h in header]
        rows = []
        for r, rec in enumerate(reader, start=1):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) != len(header):
                raise ParseError(
                    f"{path}: row {r} has {len(rec)} fields, expected {len(header)}",
                    row=r,
                )
            vals = []
            for c, cell in enumerate(rec, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric value {cell!r} at row {r}, column {c} ({header[c - 1]})",
                        row=r,
                        col=c,
                    ) from None
            rows.append(vals)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return Dataset.from_matrix(
        values, header, roles["y_col"], roles["d_cols"], roles["x_cols"], roles["z_cols"]
    )


def format_float(v: float) -> str:
    return "%.17g" % v


def write_csv(path, ds: Dataset) -> None:
    """Write all columns with 17 significant digits (bit-exact round trip)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.column_names)
        for row in ds.values:
            w.writerow([format_float(v) for v in row])
