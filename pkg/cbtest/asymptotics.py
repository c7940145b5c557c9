"""Limit theory: kernel projections, L²(Q×Q) inner products, shifts and SNRs.

Symmetric kernels are smooth on the simplex v <= u but usually not across the
diagonal, so bivariate integrals run over the simplex only:

    ∬ φ̃ψ̃ dQdQ = 2 ∫₀¹ ∫₀ᵘ φ(u, v) ψ(u, v) q(u) q(v) dv du,

with the inner variable mapped to v = u·t and iterated Simpson in (u, t).
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.stats import norm

from .distmodel import (
    DependenceAlternative,
    DistributionSpec,
    EqualityAlternative,
    cumulative,
    quad,
    values_of,
)
from .errors import DegenerateDirectionError, DomainError
from .statistics import SymmetricKernel, inner_q2

logger = logging.getLogger(__name__)

SIMPLEX_NODES = 513
MARGINAL_NODES = 1025


def _simplex_integral(F: Callable, Q: DistributionSpec, nodes: int = SIMPLEX_NODES) -> float:
    """2∫∫_{v<u} F(u, v) dQ(u) dQ(v) for F symmetric-extended."""
    u = np.linspace(0.0, 1.0, nodes)
    t = np.linspace(0.0, 1.0, nodes)
    U = u[:, None]
    V = U * t[None, :]
    UU, VV = np.broadcast_arrays(U, V)
    values = np.broadcast_to(np.asarray(F(UU, VV), dtype=float), UU.shape)
    weights = values_of(Q.density, VV)
    inner = integrate.simpson(values * weights, x=t, axis=1)
    outer = inner * u * values_of(Q.density, u)
    return 2.0 * float(integrate.simpson(outer, x=u))


def inner_product(k1: SymmetricKernel, k2: SymmetricKernel, Q: DistributionSpec) -> float:
    """⟨φ, ψ⟩_{Q×Q}.

    Product kernels reduce to (∫h₁h₂ dQ)² and maxima kernels to ∫α₁α₂ dQ².
    """
    if k1.factor is not None and k2.factor is not None:
        base = quad(lambda x: values_of(k1.factor, x) * values_of(k2.factor, x), Q)
        return base * base
    if k1.alpha is not None and k2.alpha is not None:
        return inner_q2(k1.alpha, k2.alpha, Q)
    return _simplex_integral(
        lambda u, v: np.asarray(k1.phi(u, v), dtype=float) * np.asarray(k2.phi(u, v), dtype=float), Q
    )


def kernel_marginal(k: SymmetricKernel, Q: DistributionSpec) -> Callable:
    """(Qφ)(x) = ∫φ̃(x, y) dQ(y), tabulated and spline-interpolated."""
    if k.factor is not None:
        mean = quad(k.factor, Q)
        return lambda x: values_of(k.factor, x) * mean
    if k.alpha is not None:
        nodes = np.linspace(0.0, 1.0, MARGINAL_NODES)
        running = cumulative(k.alpha, Q, nodes)
        tail = CubicSpline(nodes, running[-1] - running)
        alpha, cdf = k.alpha, Q.cdf
        return lambda x: values_of(alpha, x) * values_of(cdf, x) + tail(np.asarray(x, dtype=float))

    x = np.linspace(0.0, 1.0, MARGINAL_NODES)
    t = np.linspace(0.0, 1.0, SIMPLEX_NODES)
    X = x[:, None]
    # y <= x: φ(x, y) with y = x·t
    below_y = X * t[None, :]
    below = np.broadcast_to(np.asarray(k.phi(*np.broadcast_arrays(X, below_y)), dtype=float), below_y.shape)
    below = integrate.simpson(below * values_of(Q.density, below_y), x=t, axis=1) * x
    # y >= x: φ(y, x) with y = x + (1 - x)·t
    above_y = X + (1.0 - X) * t[None, :]
    Xb, Yb = np.broadcast_arrays(X, above_y)
    above = np.broadcast_to(np.asarray(k.phi(Yb, Xb), dtype=float), above_y.shape)
    above = integrate.simpson(above * values_of(Q.density, above_y), x=t, axis=1) * (1.0 - x)
    spline = CubicSpline(x, below + above)
    return lambda y: spline(np.asarray(y, dtype=float))


def project_Lstar(k: SymmetricKernel, Q: DistributionSpec) -> SymmetricKernel:
    """(𝓛*φ)(x, y) = φ(x, y) − (Qφ)(x) − (Qφ)(y) + E_{Q×Q}φ."""
    if k.factor is not None:
        mean = quad(k.factor, Q)
        h = k.factor
        return SymmetricKernel.product(lambda x: values_of(h, x) - mean, name=f"L*({k.name})")

    marginal = kernel_marginal(k, Q)
    if k.alpha is not None:
        total = quad(k.alpha, Q.squared())
    else:
        total = quad(marginal, Q)
    phi = k.phi

    def projected(u, v):
        return np.asarray(phi(u, v), dtype=float) - marginal(u) - marginal(v) + total

    return SymmetricKernel(projected, name=f"L*({k.name})")


def antisymmetric_part(g: Callable) -> Callable:
    """g*(x, y) = (g(x, y) − g(y, x))/2."""

    def g_star(x, y):
        return 0.5 * (np.asarray(g(x, y), dtype=float) - np.asarray(g(y, x), dtype=float))

    return g_star


# --- Shifts ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShiftSurface:
    """Expected value of Rₙˢ(u, v) under a local alternative.

    ``rate_exponent`` is the exponent of the detectable ε_n (−1/4 for equality
    alternatives, −1/2 for dependence ones); ``scale`` is √n·ε² or √n·ε.
    """

    evaluator: Callable
    rate_exponent: float
    scale: float
    diagonal: Optional[Callable] = None

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = self.evaluator(np.maximum(u, v), np.minimum(u, v))
        return float(out) if np.ndim(out) == 0 else out


def shift_equality(alt: EqualityAlternative, n: int) -> ShiftSurface:
    scale = math.sqrt(n) * alt.epsilon ** 2
    H = alt.H

    def evaluator(u, v):
        Hu, Hv = values_of(H, u), values_of(H, v)
        return scale * (Hv * Hv - 2.0 * Hu * Hv)

    def diagonal(u):
        Hu = values_of(H, u)
        return -scale * Hu * Hu

    return ShiftSurface(evaluator, -0.25, scale, diagonal)


def shift_dependence(alt: DependenceAlternative, n: int) -> ShiftSurface:
    scale = math.sqrt(n) * alt.epsilon
    G = alt.G

    def evaluator(u, v):
        return scale * (G(u, v) + G(v, u) - G(v, v))

    def diagonal(u):
        return scale * G(u, u)

    return ShiftSurface(evaluator, -0.5, scale, diagonal)


# --- Signal to noise and power --------------------------------------------


def snr_linear(alt: EqualityAlternative, n: int) -> float:
    """√n ε² ‖h‖²_Q, the SNR of the optimal linear statistic."""
    norm_sq = alt.norm_squared()
    if norm_sq <= 1e-14:
        raise DegenerateDirectionError(f"{alt.name}: direction h vanishes")
    return math.sqrt(n) * alt.epsilon ** 2 * norm_sq


def snr_kernel(k: SymmetricKernel, alt: EqualityAlternative, n: int = 1) -> float:
    """T_φ = √n ε² ⟨𝓛*φ, h×h⟩ / ⟨𝓛*φ, 𝓛*φ⟩^{1/2}."""
    projected = project_Lstar(k, alt.base)
    variance = inner_product(projected, projected, alt.base)
    if not variance > 1e-14:
        raise DegenerateDirectionError(f"kernel {k.name} has null variance {variance:.3g}")
    signal = inner_product(projected, SymmetricKernel.product(alt.h), alt.base)
    return math.sqrt(n) * alt.epsilon ** 2 * signal / math.sqrt(variance)


def tv_power(T: float) -> float:
    """2Φ(T/2) − 1: total variation between N(0, 1) and N(T, 1)."""
    if not T >= 0.0:
        raise DomainError(f"T must be nonnegative, got {T}")
    return float(2.0 * norm.cdf(0.5 * T) - 1.0)


def gaussian_power(T: float, level: float = 0.05, two_sided: bool = True) -> float:
    """Power of a level test on a N(T, 1) statistic."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    if two_sided:
        z = norm.ppf(1.0 - 0.5 * level)
        return float(norm.cdf(T - z) + norm.cdf(-T - z))
    return float(norm.cdf(T - norm.ppf(1.0 - level)))


@dataclass
class OptimalityReport:
    optimum: float
    competitors: Dict[str, float]

    @property
    def holds(self) -> bool:
        return all(abs(T) <= self.optimum + 1e-9 for T in self.competitors.values())


def optimality_check(alt: EqualityAlternative, competitors: Iterable[SymmetricKernel],
                     n: int = 1) -> OptimalityReport:
    """T_φ of each competitor next to the optimum attained at h×h."""
    optimum = snr_kernel(SymmetricKernel.product(alt.h, name="hxh"), alt, n)
    values = {}
    for k in competitors:
        values[k.name] = snr_kernel(k, alt, n)
        logger.debug("T[%s] = %.6g (optimum %.6g)", k.name, values[k.name], optimum)
    return OptimalityReport(optimum, values)
