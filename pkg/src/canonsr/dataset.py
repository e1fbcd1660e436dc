"""Sample-data ingestion, design-of-experiments sampling and synthetic oracles.

CSV format: UTF-8, comma separated, mandatory header row of unique names,
one sample per row, '.' decimal separator, scientific notation accepted.
Design points are sampled on 3 levels per variable around a center point
with a relative perturbation dx.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np


class DataError(ValueError):
    """Raised for malformed or out-of-contract sample data."""


@dataclass(frozen=True)
class Dataset:
    """N samples of d-dimensional design points with one scalar target each."""

    var_names: Tuple[str, ...]
    X: np.ndarray                  # N x d
    y: np.ndarray                  # length N
    target_name: str
    target_log_scaled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "var_names", tuple(self.var_names))
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.X.ndim != 2 or self.y.ndim != 1:
            raise DataError("X must be 2-D and y 1-D")
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError("X and y row counts differ")
        if self.n_samples < 1:
            raise DataError("dataset needs at least one sample")
        if self.X.shape[1] != len(self.var_names):
            raise DataError("X column count != number of variable names")
        if len(set(self.var_names)) != len(self.var_names):
            raise DataError("variable names are not unique")
        if self.target_name in self.var_names:
            raise DataError("target name collides with a variable name")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise DataError("dataset contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_vars(self) -> int:
        return self.X.shape[1]


def _parse_cell(cell: str, row: int, col_name: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col_name!r}: non-numeric cell {cell!r}") from None
    if not np.isfinite(value):
        raise DataError(f"row {row}, column {col_name!r}: non-finite value {cell!r}")
    return value


def load_csv(path: str, target_column: str) -> Dataset:
    """Read a samples CSV; the named column becomes y, the rest become X."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header):
        raise DataError(f"{path}: empty header name")
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"{path}: duplicate header name(s): {', '.join(dupes)}")
    if target_column not in header:
        raise DataError(f"{path}: target column {target_column!r} not in header")
    if len(rows) == 1:
        raise DataError(f"{path}: no data rows")

    t_idx = header.index(target_column)
    var_names = [h for i, h in enumerate(header) if i != t_idx]
    X_rows: List[List[float]] = []
    y_vals: List[float] = []
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} values, expected {len(header)}")
        values = [_parse_cell(cell.strip(), r, header[i]) for i, cell in enumerate(row)]
        y_vals.append(values[t_idx])
        X_rows.append([v for i, v in enumerate(values) if i != t_idx])

    return Dataset(var_names=tuple(var_names),
                   X=np.array(X_rows, dtype=float),
                   y=np.array(y_vals, dtype=float),
                   target_name=target_column)


def save_csv(ds: Dataset, path: str) -> None:
    """Write a Dataset back to CSV (variables first, target last)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.var_names) + [ds.target_name])
        for i in range(ds.n_samples):
            writer.writerow([repr(float(v)) for v in ds.X[i]] + [repr(float(ds.y[i]))])


def write_points_csv(var_names: Sequence[str], X: np.ndarray, path: str) -> None:
    """Write design points (no target column) in the shared CSV format."""
    X = np.asarray(X, dtype=float)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(var_names))
        for row in X:
            writer.writerow([repr(float(v)) for v in row])


def load_centers_csv(path: str) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Read a one-row CSV of center values; returns (names, centers)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if len(rows) < 2:
        raise DataError(f"{path}: expected a header row and one row of center values")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate header name(s)")
    centers = [_parse_cell(c.strip(), 1, header[i]) for i, c in enumerate(rows[1])]
    if len(centers) != len(header):
        raise DataError(f"{path}: row 1 has {len(rows[1])} values, expected {len(header)}")
    return tuple(header), np.array(centers, dtype=float)


# ---------------------------------------------------------------------------
# design-of-experiments sampling
# ---------------------------------------------------------------------------

@dataclass
class DoePlan:
    """3-level sampling plan around a center point with relative step dx."""

    centers: np.ndarray
    dx: float = 0.1
    levels_per_var: int = 3
    budget: int = 10000

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        if self.centers.ndim != 1 or self.centers.size < 1:
            raise ValueError("centers must be a non-empty vector")
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.levels_per_var != 3:
            raise ValueError("only 3 levels per variable are supported")

    @property
    def n_vars(self) -> int:
        return self.centers.size


def doe_full_factorial(plan: DoePlan) -> np.ndarray:
    """All 3^d level combinations c_i*(1-dx), c_i, c_i*(1+dx), lexicographic order."""
    d = plan.n_vars
    if 3 ** d > plan.budget:
        raise ValueError(
            f"full factorial needs 3^{d} = {3 ** d} samples, over budget {plan.budget}; "
            "use doe_latin_hypercube instead")
    levels = [(c * (1.0 - plan.dx), c, c * (1.0 + plan.dx)) for c in plan.centers]
    return np.array(list(itertools.product(*levels)), dtype=float)


def doe_latin_hypercube(plan: DoePlan, n: int, rng) -> np.ndarray:
    """n stratified samples of [c*(1-dx), c*(1+dx)] per variable, one per bin."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = plan.n_vars
    out = np.empty((n, d), dtype=float)
    for i in range(d):
        c = plan.centers[i]
        lo, hi = sorted((c * (1.0 - plan.dx), c * (1.0 + plan.dx)))
        width = (hi - lo) / n
        bins = rng.permutation(n)
        offsets = rng.uniform(0.0, 1.0, size=n)
        out[:, i] = lo + (bins + offsets) * width
    return out


# ---------------------------------------------------------------------------
# target scaling
# ---------------------------------------------------------------------------

def scale_target_log10(ds: Dataset) -> Dataset:
    """Replace y with log10(y); rendering later wraps models as 10^(...)."""
    if ds.target_log_scaled:
        raise DataError("target is already log-scaled")
    if np.any(ds.y <= 0):
        bad = int(np.argmax(ds.y <= 0)) + 1
        raise DataError(f"row {bad}: target {ds.y[bad - 1]!r} is <= 0, cannot log-scale")
    return Dataset(var_names=ds.var_names, X=ds.X.copy(), y=np.log10(ds.y),
                   target_name=ds.target_name, target_log_scaled=True)


# ---------------------------------------------------------------------------
# synthetic oracles (benchmark stand-ins for a circuit simulator)
# ---------------------------------------------------------------------------

ORACLE_DIMS = {"pm_like": 4, "srp_like": 2, "offset_like": None}


def synthetic_oracle(name: str, x: Sequence[float]) -> float:
    """Closed-form benchmark targets; raises on unknown name or non-finite result."""
    x = np.asarray(x, dtype=float)
    if name not in ORACLE_DIMS:
        raise ValueError(f"unknown oracle {name!r}; choose from {sorted(ORACLE_DIMS)}")
    want = ORACLE_DIMS[name]
    if want is not None and x.size != want:
        raise ValueError(f"oracle {name!r} expects {want} variables, got {x.size}")

    with np.errstate(all="ignore"):
        if name == "pm_like":
            value = 90.5 + 190.6 * x[0] / x[1] + 22.2 * x[2] / x[3]
        elif name == "srp_like":
            value = (2.36e7 + 1.95e4 * x[1] / x[0] - 104.69 / x[1]
                     + 2.15e9 * x[1] + 4.63e8 * x[0])
        else:
            value = -2.00e-3
    value = float(value)
    if not np.isfinite(value):
        raise DataError(f"oracle {name!r} is non-finite at {x.tolist()}")
    return value


def oracle_targets(name: str, X: np.ndarray) -> np.ndarray:
    return np.array([synthetic_oracle(name, row) for row in np.asarray(X, dtype=float)])


def oracle_dataset(name: str, X: np.ndarray, var_names: Sequence[str]) -> Dataset:
    return Dataset(var_names=tuple(var_names), X=np.asarray(X, dtype=float),
                   y=oracle_targets(name, X), target_name=name)
