"""Test statistics for colour-blind pairs and their analytic companions.

Kolmogorov-Smirnov statistics, linear statistics in a symmetric kernel,
maxima-based statistics with the S operator and the admissibility cone,
and two descriptive diagnostics (cross-probability, inequality chain).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .distmodel import (
    BUILTIN_ALTERNATIVES,
    TABLE_NODES,
    DistributionSpec,
    EqualityAlternative,
    builtin_alternative,
    cumulative,
    q_direction,
    quad,
    values_of,
)
from .empirical import ColourBlindSample, LabeledSample, r_full_surface, rs_surface
from .errors import ConfigError, DegenerateDirectionError, DomainError, NumericalError
from .expressions import compile_expression

logger = logging.getLogger(__name__)

# Suprema over the full jump grid up to this sample size, thinned grid above.
KS_EXACT_LIMIT = 2000
KS_THIN_POINTS = 2000
DOUBLE_SUM_BLOCK = 512
EXCEPTIONAL_TOLERANCE = 1e-8


# --- Kernels --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SymmetricKernel:
    """φ on the simplex v <= u, extended symmetrically by φ̃(x, y) = φ(max, min).

    ``factor`` is set for product kernels h×h and ``alpha`` for kernels
    α(max(x, y)); quadrature uses them to reduce to one dimension.
    """

    phi: Callable
    name: str = "custom"
    factor: Optional[Callable] = field(default=None, repr=False)
    alpha: Optional[Callable] = field(default=None, repr=False)

    @classmethod
    def product(cls, h: Callable, name: str = "product") -> "SymmetricKernel":
        return cls(lambda u, v: values_of(h, u) * values_of(h, v), name=name, factor=h)

    @classmethod
    def of_maximum(cls, alpha: Callable, name: str = "maximum") -> "SymmetricKernel":
        return cls(lambda u, v: values_of(alpha, u) + 0.0 * np.asarray(v, dtype=float), name=name, alpha=alpha)

    @classmethod
    def from_expression(cls, text: str) -> "SymmetricKernel":
        """Kernel φ(x, y) written in x (the larger value) and y (the smaller)."""
        return cls(compile_expression(text, variables=("x", "y")), name=text)

    def __call__(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        u = np.maximum(x, y)
        v = np.minimum(x, y)
        return np.array(np.broadcast_to(np.asarray(self.phi(u, v), dtype=float), u.shape))

    def __sub__(self, other: "SymmetricKernel") -> "SymmetricKernel":
        return SymmetricKernel(
            lambda u, v: np.asarray(self.phi(u, v), dtype=float) - np.asarray(other.phi(u, v), dtype=float),
            name=f"{self.name}-{other.name}",
        )


def kernel_by_name(name: str) -> SymmetricKernel:
    """Builtin kernel or expression.

    ``example-4-2`` is h×h of the uniform-vs-square pair, ``example-5-2`` the
    maxima kernel of its q. ``max:<expr in x>`` and ``product:<expr in x>``
    build maxima and product kernels; anything else is read as φ(x, y).
    """
    if name in ("example-4-2", "uniform-vs-square"):
        return SymmetricKernel.product(builtin_alternative(name).h, name=name)
    if name == "example-5-2":
        return SymmetricKernel.of_maximum(q_direction(builtin_alternative(name)), name=name)
    if name.startswith("max:"):
        return SymmetricKernel.of_maximum(compile_expression(name[4:]), name=name)
    if name.startswith("product:"):
        return SymmetricKernel.product(compile_expression(name[8:]), name=name)
    return SymmetricKernel.from_expression(name)


def direction_by_name(name: str) -> Callable:
    """Maxima direction α: q of a builtin alternative, or an expression in x."""
    if name in BUILTIN_ALTERNATIVES:
        return q_direction(builtin_alternative(name))
    return compile_expression(name)


# --- Reports --------------------------------------------------------------


@dataclass
class TestReport:
    __test__ = False

    statistic: str
    observed: float
    p_value: float
    critical_values: Dict[float, float]
    replications: int
    seed: int
    n: int
    notes: List[str] = field(default_factory=list)
    # the scale of critical_values; observed stays signed for two-sided statistics
    tail: str = "right"

    def __post_init__(self):
        if self.tail not in ("right", "left", "two-sided"):
            raise ConfigError(f"unknown tail {self.tail!r}")
        if not 0.0 <= self.p_value <= 1.0:
            raise NumericalError(f"p-value {self.p_value} outside [0, 1]")
        levels = sorted(self.critical_values, reverse=True)
        values = [self.critical_values[lvl] for lvl in levels]
        if any(b < a for a, b in zip(values, values[1:])):
            raise NumericalError(f"critical values not monotone in level: {self.critical_values}")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "observed": self.observed,
            "p_value": self.p_value,
            "critical_values": {f"{lvl:g}": v for lvl, v in sorted(self.critical_values.items(), reverse=True)},
            "replications": self.replications,
            "seed": self.seed,
            "n": self.n,
            "tail": self.tail,
            "notes": list(self.notes),
        }


# --- Kolmogorov-Smirnov ---------------------------------------------------


def ks_grid(pooled: np.ndarray) -> Optional[np.ndarray]:
    """Grid for suprema: None (all jump points) or a quantile-thinned subset.

    The thinned grid only holds observed values, so the result is a lower
    bound of the exact supremum.
    """
    if pooled.size <= 2 * KS_EXACT_LIMIT:
        return None
    logger.debug("Thinning KS grid from %d to %d points", pooled.size, KS_THIN_POINTS)
    return np.unique(np.quantile(pooled, np.linspace(0.0, 1.0, KS_THIN_POINTS), method="inverted_cdf"))


def ks_colour_blind(s: ColourBlindSample) -> float:
    """Dₙˢ = sup over v <= u of |Rₙˢ(u, v)|.

    Rₙˢ is constant on grid cells, so the maximum over jump points (with 0
    for points left of every observation) is the exact supremum.
    """
    _, surface = rs_surface(s, ks_grid(s.pooled))
    return max(0.0, float(np.nanmax(np.abs(surface))))


def ks_full(s: LabeledSample) -> float:
    """Dₙ = sup |Rₙ(x, y)| over the unit square, from labeled pairs."""
    _, surface = r_full_surface(s, ks_grid(s.pooled))
    return max(0.0, float(np.max(np.abs(surface))))


# --- Linear statistics ----------------------------------------------------


def _require_finite(values: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        index = int(np.flatnonzero(bad.ravel())[0])
        raise NumericalError(f"{what} is not finite at observation {index}")


def linear_stat(s: ColourBlindSample, k: SymmetricKernel) -> float:
    """Rₙˢ(φ) = n^{-1/2} Σ φ̃(uᵢ, vᵢ) − √n ∬ φ̃ dQₙ dQₙ.

    The double integral is the mean of φ̃ over all (2n)² pooled pairs.
    """
    observed = k(s.u, s.v)
    _require_finite(observed, f"kernel {k.name}")

    W = s.pooled
    total = 0.0
    for start in range(0, W.size, DOUBLE_SUM_BLOCK):
        block = k(W[start:start + DOUBLE_SUM_BLOCK, None], W[None, :])
        _require_finite(block, f"kernel {k.name} on pooled values")
        total += float(block.sum())
    root_n = math.sqrt(s.n)
    return float(observed.sum()) / root_n - root_n * total / (W.size * W.size)


def optimal_linear_stat(s: ColourBlindSample, alt: EqualityAlternative) -> float:
    """n^{-1/2} Σ h(uᵢ)h(vᵢ) − √n (mean of h over the pooled values)²."""
    hu = values_of(alt.h, s.u)
    hv = values_of(alt.h, s.v)
    pooled_mean = float(np.mean(values_of(alt.h, s.pooled)))
    root_n = math.sqrt(s.n)
    return float(np.sum(hu * hv)) / root_n - root_n * pooled_mean * pooled_mean


def maxima_stat(s: ColourBlindSample, alpha: Callable) -> float:
    """n^{-1/2} Σ α(uᵢ) − √n ∫α dQₙ²."""
    au = values_of(alpha, s.u)
    _require_finite(au, "alpha")
    grid, counts = np.unique(s.pooled, return_counts=True)
    qn = np.cumsum(counts) / s.pooled.size
    jumps = np.diff(qn * qn, prepend=0.0)
    ag = values_of(alpha, grid)
    _require_finite(ag, "alpha on pooled values")
    root_n = math.sqrt(s.n)
    return float(au.sum()) / root_n - root_n * float(np.dot(ag, jumps))


# --- Maxima statistics: S operator, variance, cone ------------------------


def s_operator(alpha: Callable, Q: DistributionSpec) -> Callable:
    """Sα(x) = α(x)Q(x) + 4∫ₓ¹ α dQ, with the tail integral tabulated."""
    nodes = np.linspace(0.0, 1.0, TABLE_NODES)
    running = cumulative(alpha, Q, nodes)
    tail = CubicSpline(nodes, running[-1] - running)

    def S(x):
        x = np.asarray(x, dtype=float)
        return values_of(alpha, x) * values_of(Q.cdf, x) + 4.0 * tail(x)

    return S


def inner_q2(f: Callable, g: Callable, Q: DistributionSpec) -> float:
    """⟨f, g⟩ in L²(Q²)."""
    return quad(lambda x: values_of(f, x) * values_of(g, x), Q.squared())


def _centred(alpha: Callable, Q: DistributionSpec) -> Callable:
    mean = quad(alpha, Q.squared())
    return lambda x: values_of(alpha, x) - mean


def maxima_variance(alpha: Callable, Q: DistributionSpec) -> float:
    """Null variance of the maxima statistic: ⟨α, α⟩ − ⟨α, Sα⟩ in L²(Q²).

    α is centred first; the statistic ignores constants and the identity
    only holds for ∫α dQ² = 0.
    """
    a = _centred(alpha, Q)
    return inner_q2(a, a, Q) - inner_q2(a, s_operator(a, Q), Q)


def maxima_variance_direct(alpha: Callable, Q: DistributionSpec) -> float:
    """⟨𝓛*φ_α, 𝓛*φ_α⟩ in L²(Q×Q) by bivariate quadrature."""
    from .asymptotics import inner_product, project_Lstar

    projected = project_Lstar(SymmetricKernel.of_maximum(_centred(alpha, Q)), Q)
    return inner_product(projected, projected, Q)


def maxima_shift(alpha: Callable, alt: EqualityAlternative) -> float:
    """Expected maxima statistic per √n under the alternative: −ε²⟨α, q⟩_{Q²}."""
    return -alt.epsilon ** 2 * inner_q2(alpha, q_direction(alt), alt.base)


def snr_maxima(alpha: Callable, alt: EqualityAlternative, n: int = 1) -> float:
    """T_α = √n ε² ⟨α, q⟩_{Q²} / (⟨α, α⟩ − ⟨α, Sα⟩)^{1/2}."""
    variance = maxima_variance(alpha, alt.base)
    if not variance > 1e-14:
        raise DegenerateDirectionError(f"maxima statistic has variance {variance:.3g}; α is ill-posed")
    return -math.sqrt(n) * maxima_shift(alpha, alt) / math.sqrt(variance)


def power_shift_reference(alt: EqualityAlternative) -> float:
    """∫q d(z³), reported next to ⟨q, q⟩_{Q²} for comparison."""
    q = q_direction(alt)
    return quad(lambda z: values_of(q, z) * 3.0 * np.asarray(z) ** 2)


@dataclass(frozen=True, eq=False)
class ConeResult:
    """Outcome of a cone check; ``H`` and ``h`` are None for non-members."""

    is_member: bool
    H: Optional[Callable]
    h: Optional[Callable]
    running: np.ndarray = field(repr=False)
    exceptional: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.is_member, self.H, self.h))


def cone_membership(alpha: Callable, Q: DistributionSpec) -> ConeResult:
    """Is α = dH²/dQ² for some direction? I(u) = ∫₀ᵘ α dQ² must stay >= 0.

    Members get H = √I (positive branch) and h = Qα/H, so that q_direction
    of the recovered alternative gives back α. Where |H| <= 1e-8 the ratio is
    undefined; h is 0 there and those nodes are listed in ``exceptional``.
    """
    nodes = np.linspace(0.0, 1.0, TABLE_NODES)
    running = cumulative(alpha, Q.squared(), nodes)
    if np.any(running < -1e-10):
        worst = int(np.argmin(running))
        logger.debug("α leaves the cone at u=%.6g (I=%.3g)", nodes[worst], running[worst])
        return ConeResult(False, None, None, running, np.empty(0))

    H_table = CubicSpline(nodes, np.sqrt(np.maximum(running, 0.0)))
    exceptional = nodes[np.abs(H_table(nodes)) <= EXCEPTIONAL_TOLERANCE]

    def H(x):
        return np.maximum(H_table(np.asarray(x, dtype=float)), 0.0)

    def h(x):
        x = np.asarray(x, dtype=float)
        Hx = H(x)
        num = values_of(Q.cdf, x) * values_of(alpha, x)
        return np.divide(num, Hx, out=np.zeros_like(Hx), where=np.abs(Hx) > EXCEPTIONAL_TOLERANCE)

    return ConeResult(True, H, h, running, exceptional)


# --- Diagnostics ----------------------------------------------------------


def cross_probability(s: ColourBlindSample) -> float:
    """U-statistic estimate of P(U_j > V_i), i != j."""
    if s.n < 2:
        raise DomainError(f"cross-probability needs at least 2 pairs, got {s.n}")
    v_sorted = np.sort(s.v)
    below = np.searchsorted(v_sorted, s.u, side="left").sum()
    own = np.count_nonzero(s.v < s.u)
    return float(below - own) / (s.n * (s.n - 1))


def _cdf_values(p, x) -> np.ndarray:
    cdf = p.cdf if isinstance(p, DistributionSpec) else p
    return values_of(cdf, x)


def inequality_chain(p1, p2, x) -> Tuple:
    """(P₁P₂, ((P₁+P₂)/2)², (1 − √((1−P₁)(1−P₂)))²) at x.

    The three are the CDF of the maximum, its null counterpart Qₙ² and the
    upper bound; rounding is clamped so lo <= mid <= hi always holds.
    """
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise DomainError("x must lie in [0, 1]")
    a = np.clip(_cdf_values(p1, x), 0.0, 1.0)
    b = np.clip(_cdf_values(p2, x), 0.0, 1.0)
    lo = a * b
    mid = np.maximum(0.25 * (a + b) ** 2, lo)
    hi = np.maximum((1.0 - np.sqrt((1.0 - a) * (1.0 - b))) ** 2, mid)
    if x.ndim == 0:
        return float(lo), float(mid), float(hi)
    return lo, mid, hi
