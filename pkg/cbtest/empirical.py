"""Empirical distribution functions and empirical processes of paired data.

A colour-blind observer only sees U_i = max(X_i, Y_i) and V_i = min(X_i, Y_i).
A pair (X, Y) lies in the symmetrised rectangle S_{u,v} = [0,u]×[0,v] ∪
[0,v]×[0,u] (v ≤ u) iff U ≤ u and V ≤ v, so the empirical measure of symmetric
sets is computable from the observed pairs alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Optional, Tuple, Union

import numpy as np

from .errors import DataError, DomainError

if TYPE_CHECKING:
    from .distmodel import DistributionSpec


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float).ravel()
    arr.flags.writeable = False
    return arr


def _check_unit_interval(arr: np.ndarray, label: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{label} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DataError(f"{label} has values outside [0, 1]")


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Pairs (x_i, y_i) with known labels. Only simulations produce these."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x, y = _frozen(self.x), _frozen(self.y)
        if x.shape != y.shape:
            raise DataError(f"x and y lengths differ ({x.size} vs {y.size})")
        if x.size < 1:
            raise DataError("a sample needs at least one pair")
        _check_unit_interval(x, "x")
        _check_unit_interval(y, "y")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def pairs(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    @cached_property
    def pooled(self) -> np.ndarray:
        return np.sort(np.concatenate([self.x, self.y]))

    def swapped(self) -> "LabeledSample":
        return LabeledSample(self.y, self.x)


@dataclass(frozen=True, eq=False)
class ColourBlindSample:
    """Observed pairs (u_i, v_i) = (max, min) and the sorted pooled values W."""

    u: np.ndarray
    v: np.ndarray
    pooled: Optional[np.ndarray] = None

    def __post_init__(self):
        u, v = _frozen(self.u), _frozen(self.v)
        if u.shape != v.shape:
            raise DataError(f"u and v lengths differ ({u.size} vs {v.size})")
        if u.size < 1:
            raise DataError("a sample needs at least one pair")
        _check_unit_interval(u, "u")
        _check_unit_interval(v, "v")
        if np.any(v > u):
            raise DataError(f"pair {int(np.argmax(v > u))} has min > max")
        pooled = _frozen(np.sort(np.concatenate([u, v])))
        if self.pooled is not None and not np.array_equal(np.sort(np.asarray(self.pooled, dtype=float)), pooled):
            raise DataError("pooled values are not the union of maxima and minima")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "pooled", pooled)

    @classmethod
    def from_pairs(cls, a, b) -> "ColourBlindSample":
        """Unordered measurements a_i, b_i of each pair, in any order."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return cls(np.maximum(a, b), np.minimum(a, b))

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def pairs(self) -> np.ndarray:
        return np.column_stack([self.u, self.v])

    @cached_property
    def grid(self) -> np.ndarray:
        """Distinct pooled values: the jump points of every process here."""
        return np.unique(self.pooled)


Sample = Union[LabeledSample, ColourBlindSample]


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous piecewise-constant function.

    ``values[k]`` holds on [jumps[k], jumps[k+1]); ``left`` holds before jumps[0].
    """

    jumps: np.ndarray
    values: np.ndarray
    left: float = 0.0

    def __post_init__(self):
        jumps, values = _frozen(self.jumps), _frozen(self.values)
        if jumps.shape != values.shape:
            raise DomainError("jumps and values must have the same length")
        if np.any(np.diff(jumps) <= 0.0):
            raise DomainError("jump points must be strictly increasing")
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "values", values)

    @classmethod
    def ecdf(cls, data) -> "StepFunction":
        data = np.asarray(data, dtype=float).ravel()
        if data.size == 0:
            raise DataError("cannot build an EDF from no data")
        jumps, counts = np.unique(data, return_counts=True)
        return cls(jumps, np.cumsum(counts) / data.size, 0.0)

    @cached_property
    def _table(self) -> np.ndarray:
        return np.concatenate([[self.left], self.values])

    def __call__(self, x):
        out = self._table[np.searchsorted(self.jumps, x, side="right")]
        return float(out) if np.ndim(out) == 0 else out

    def left_limit(self, x):
        out = self._table[np.searchsorted(self.jumps, x, side="left")]
        return float(out) if np.ndim(out) == 0 else out

    def average(self, other: "StepFunction") -> "StepFunction":
        grid = np.union1d(self.jumps, other.jumps)
        return StepFunction(
            grid,
            0.5 * (np.asarray(self(grid)) + np.asarray(other(grid))),
            0.5 * (self.left + other.left),
        )


def blind(sample: LabeledSample) -> ColourBlindSample:
    """What a colour-blind observer records of a labeled sample."""
    return ColourBlindSample.from_pairs(sample.x, sample.y)


def edfs(s: ColourBlindSample) -> Tuple[StepFunction, StepFunction, StepFunction]:
    """EDFs of the minima, of the maxima and of the pooled values.

    Qn = (Pmin + Pmax)/2 is built from the pooled values directly, which gives
    the same numbers without the rounding of the average.
    """
    return StepFunction.ecdf(s.v), StepFunction.ecdf(s.u), StepFunction.ecdf(s.pooled)


def pooled_cdf(s: Sample, x):
    """Qn(x): fraction of the 2n pooled values that are <= x."""
    out = np.searchsorted(s.pooled, x, side="right") / (2.0 * s.n)
    return float(out) if np.ndim(out) == 0 else out


def _require_simplex(u, v) -> None:
    if np.any(np.asarray(v) > np.asarray(u)):
        raise DomainError(f"symmetrised rectangles need v <= u, got u={u}, v={v}")


def sym_rect_mass(s: ColourBlindSample, u: float, v: float) -> float:
    """Empirical mass of S_{u,v}: fraction of pairs with max <= u and min <= v."""
    _require_simplex(u, v)
    return np.count_nonzero((s.u <= u) & (s.v <= v)) / s.n


def process_Rs(s: ColourBlindSample, u: float, v: float) -> float:
    """Colour-blind process √n[mass(S_{u,v}) − (2Qn(u)Qn(v) − Qn(v)²)]."""
    _require_simplex(u, v)
    qu, qv = pooled_cdf(s, u), pooled_cdf(s, v)
    return math.sqrt(s.n) * (sym_rect_mass(s, u, v) - (2.0 * qu * qv - qv * qv))


def process_R_full(s: LabeledSample, x: float, y: float) -> float:
    """√n[P_n(x, y) − Qn(x)Qn(y)] from labeled pairs."""
    mass = np.count_nonzero((s.x <= x) & (s.y <= y)) / s.n
    return math.sqrt(s.n) * (mass - pooled_cdf(s, x) * pooled_cdf(s, y))


def maxima_process(s: ColourBlindSample, u):
    """R_n⁽²⁾(u) = √n[Pmax(u) − Qn(u)²]; equals process_Rs(u, u)."""
    pmax = np.searchsorted(np.sort(s.u), u, side="right") / s.n
    qn = np.asarray(pooled_cdf(s, u))
    out = math.sqrt(s.n) * (pmax - qn * qn)
    return float(out) if np.ndim(out) == 0 else out


# --- Known-Q processes (simulation only) -----------------------------------


def _marginal_fraction(data: np.ndarray, x) -> np.ndarray:
    return np.searchsorted(np.sort(data), x, side="right") / data.size


def pillow_zn(s: LabeledSample, trueQ: "DistributionSpec", x, y):
    """z_n = 𝓛v_n with v_n(x, y) = √n[P_n(x, y) − Q(x)Q(y)]; broadcasts over x, y."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    root_n = math.sqrt(s.n)
    Fx = np.asarray(trueQ.cdf(x), dtype=float)
    Fy = np.asarray(trueQ.cdf(y), dtype=float)
    joint = ((s.x <= x[..., None]) & (s.y <= y[..., None])).mean(axis=-1)
    v_xy = root_n * (joint - Fx * Fy)
    v_x1 = root_n * (_marginal_fraction(s.x, x) - Fx)
    v_1y = root_n * (_marginal_fraction(s.y, y) - Fy)
    # v_n(1, 1) = 0
    out = v_xy - Fx * v_1y - Fy * v_x1
    return float(out) if np.ndim(out) == 0 else out


def pillow_on_rectangle(s: LabeledSample, trueQ: "DistributionSpec", u, v):
    """z_n(S_{u,v}) = z_n(u, v) + z_n(v, u) − z_n(v, v); broadcasts over u, v."""
    _require_simplex(u, v)
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    z = pillow_zn(s, trueQ, np.stack([u, v, v]), np.stack([v, u, v]))
    out = z[0] + z[1] - z[2]
    return float(out) if np.ndim(out) == 0 else out


def residual_rn(s: Sample, trueQ: "DistributionSpec", u, v):
    """2√n[Qn(u) − Q(u)][Qn(v) − Q(v)] − √n[Qn(v) − Q(v)]²."""
    _require_simplex(u, v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    du = np.asarray(pooled_cdf(s, u)) - np.asarray(trueQ.cdf(u), dtype=float)
    dv = np.asarray(pooled_cdf(s, v)) - np.asarray(trueQ.cdf(v), dtype=float)
    root_n = math.sqrt(s.n)
    out = 2.0 * root_n * du * dv - root_n * dv * dv
    return float(out) if np.ndim(out) == 0 else out


def pillow_decomposition(s: LabeledSample, trueQ: "DistributionSpec", u: float, v: float) -> Tuple[float, float, float]:
    """(R_n^s(u, v), z_n(S_{u,v}), r_n(S_{u,v})).

    For every sample the three satisfy R_n^s = z_n(S) − r_n(S) exactly: the
    product Qn(x)Qn(y) − Q(x)Q(y) contributes the residual with a minus sign.
    """
    return (
        process_Rs(blind(s), u, v),
        pillow_on_rectangle(s, trueQ, u, v),
        residual_rn(s, trueQ, u, v),
    )


# --- Grid evaluation ------------------------------------------------------


def _cumulative_counts(a: np.ndarray, b: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """C[j, k] = #{i : a_i <= grid[j], b_i <= grid[k]} via rank-indexed counting."""
    m = grid.size
    ra = np.searchsorted(grid, a, side="left")
    rb = np.searchsorted(grid, b, side="left")
    keep = (ra < m) & (rb < m)
    counts = np.bincount(ra[keep] * m + rb[keep], minlength=m * m).reshape(m, m)
    return counts.cumsum(axis=0).cumsum(axis=1)


def rs_surface(s: ColourBlindSample, grid: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """R_n^s on grid×grid; entry [j, k] is R_n^s(grid[j], grid[k]), NaN where k > j."""
    grid = s.grid if grid is None else np.unique(np.asarray(grid, dtype=float))
    mass = _cumulative_counts(s.u, s.v, grid) / s.n
    q = np.searchsorted(s.pooled, grid, side="right") / (2.0 * s.n)
    surface = math.sqrt(s.n) * (mass - (2.0 * q[:, None] * q[None, :] - (q * q)[None, :]))
    surface[np.triu_indices(grid.size, k=1)] = np.nan
    return grid, surface


def r_full_surface(s: LabeledSample, grid: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """R_n on grid×grid from labeled pairs."""
    grid = np.unique(s.pooled) if grid is None else np.unique(np.asarray(grid, dtype=float))
    mass = _cumulative_counts(s.x, s.y, grid) / s.n
    q = np.searchsorted(s.pooled, grid, side="right") / (2.0 * s.n)
    return grid, math.sqrt(s.n) * (mass - q[:, None] * q[None, :])


def sym_rect_mass_naive(s: ColourBlindSample, us, vs) -> np.ndarray:
    """O(n·m) oracle: mass of S_{u,v} for every u in ``us`` and v in ``vs``."""
    us = np.asarray(us, dtype=float)
    vs = np.asarray(vs, dtype=float)
    out = np.empty((us.size, vs.size))
    for j, u in enumerate(us):
        below = s.u <= u
        out[j] = (below[None, :] & (s.v[None, :] <= vs[:, None])).mean(axis=1)
    return out


def bivariate_mass_naive(s: LabeledSample, xs, ys) -> np.ndarray:
    """O(n·m) oracle for the bivariate EDF of labeled pairs."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    out = np.empty((xs.size, ys.size))
    for j, x in enumerate(xs):
        below = s.x <= x
        out[j] = (below[None, :] & (s.y[None, :] <= ys[:, None])).mean(axis=1)
    return out
