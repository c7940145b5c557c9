"""Model distributions on [0, 1], local alternatives, samplers and quadrature.

Every function handed around here is numpy-vectorised: it accepts an array of
points in [0, 1] (or two broadcastable arrays for bivariate functions) and
returns an array of the same shape.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .empirical import LabeledSample
from .errors import ConfigError, DomainError, NumericalError
from .expressions import compile_expression

logger = logging.getLogger(__name__)

CHECK_GRID = np.linspace(0.0, 1.0, 1001)
TABLE_NODES = 4097
SURFACE_NODES = 513


def values_of(f: Callable, x) -> np.ndarray:
    """Evaluate ``f`` at ``x`` as a float array shaped like ``x``."""
    x = np.asarray(x, dtype=float)
    return np.array(np.broadcast_to(np.asarray(f(x), dtype=float), x.shape))


def _identity(x):
    return np.asarray(x, dtype=float)


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


# --- Quadrature -----------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    kind: str = "simpson"
    panels: int = 1024
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.kind not in ("simpson", "adaptive"):
            raise ConfigError(f"Unknown quadrature kind {self.kind!r}")
        if self.kind == "simpson" and (self.panels < 64 or self.panels % 2):
            raise ConfigError(f"Simpson panel count must be even and >= 64, got {self.panels}")
        if self.kind == "adaptive" and not 0.0 < self.tolerance <= 1e-4:
            raise ConfigError(f"Adaptive tolerance must lie in (0, 1e-4], got {self.tolerance}")

    def nodes(self, a: float = 0.0, b: float = 1.0) -> np.ndarray:
        return np.linspace(a, b, self.panels + 1)


DEFAULT_RULE = QuadratureRule()
ADAPTIVE_RULE = QuadratureRule(kind="adaptive", tolerance=1e-10)


def _require_finite(values: np.ndarray, nodes: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        where = np.asarray(nodes)[bad]
        raise NumericalError(f"{what} is not finite at x={where.flat[0]:.17g}")


def quad(
    f: Callable,
    weight: Optional["DistributionSpec"] = None,
    a: float = 0.0,
    b: float = 1.0,
    rule: QuadratureRule = DEFAULT_RULE,
) -> float:
    """Integrate ``f`` over [a, b] against ``weight``'s density (or dx)."""
    if not 0.0 <= a <= b <= 1.0:
        raise DomainError(f"Integration bounds must satisfy 0 <= a <= b <= 1, got [{a}, {b}]")
    if a == b:
        return 0.0

    if rule.kind == "simpson":
        nodes = rule.nodes(a, b)
        integrand = values_of(f, nodes)
        if weight is not None:
            integrand = integrand * values_of(weight.density, nodes)
        _require_finite(integrand, nodes, "integrand")
        return float(integrate.simpson(integrand, x=nodes))

    def pointwise(t: float) -> float:
        value = float(values_of(f, t))
        if weight is not None:
            value *= float(values_of(weight.density, t))
        if not math.isfinite(value):
            raise NumericalError(f"integrand is not finite at x={t:.17g}")
        return value

    result, _ = integrate.quad(
        pointwise, a, b, epsabs=rule.tolerance, epsrel=rule.tolerance, limit=200
    )
    return float(result)


def cumulative(f: Callable, weight: Optional["DistributionSpec"], nodes: np.ndarray) -> np.ndarray:
    """Running integrals ∫_{nodes[0]}^{nodes[k]} f dw for every node."""
    integrand = values_of(f, nodes)
    if weight is not None:
        integrand = integrand * values_of(weight.density, nodes)
    _require_finite(integrand, nodes, "integrand")
    return integrate.cumulative_simpson(integrand, x=nodes, initial=0.0)


def _bisect_tabulated(cdf: Callable, nodes: np.ndarray, table: np.ndarray, p: np.ndarray,
                      iterations: int = 40) -> np.ndarray:
    # table[idx-1] < p <= table[idx]; bisection refines inside that cell
    idx = np.clip(np.searchsorted(table, p, side="left"), 1, len(nodes) - 1)
    lo = nodes[idx - 1]
    hi = nodes[idx]
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        below = values_of(cdf, mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


# --- Distributions --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DistributionSpec:
    """A continuous distribution on [0, 1] given by its CDF and density."""

    cdf: Callable
    density: Callable
    name: str = "custom"
    quantile: Optional[Callable] = field(default=None, repr=False, compare=False)
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if self.check:
            self.validate()

    def validate(self) -> None:
        F = values_of(self.cdf, CHECK_GRID)
        f = values_of(self.density, CHECK_GRID)
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(f))):
            raise DomainError(f"{self.name}: cdf or density not finite on [0, 1]")

        problems = []
        if abs(F[0]) > 1e-8 or abs(F[-1] - 1.0) > 1e-8:
            problems.append(f"cdf(0)={F[0]:.3g}, cdf(1)={F[-1]:.3g}")
        if np.any(np.diff(F) < -1e-12):
            problems.append("cdf decreases")
        if np.any(f < -1e-12):
            problems.append("density is negative")
        total = quad(self.density)
        if abs(total - 1.0) > 1e-8:
            problems.append(f"density integrates to {total:.12g}")
        fine = np.linspace(0.0, 1.0, 4001)
        running = cumulative(self.density, None, fine)[::4]
        gap = float(np.max(np.abs(running - F)))
        if gap > 1e-6:
            problems.append(f"cdf differs from integrated density by {gap:.3g}")
        if problems:
            raise DomainError(f"{self.name}: invalid distribution ({'; '.join(problems)})")

    @cached_property
    def _table(self):
        nodes = np.linspace(0.0, 1.0, TABLE_NODES)
        return nodes, np.maximum.accumulate(values_of(self.cdf, nodes))

    def ppf(self, p) -> np.ndarray:
        """Vectorised quantile function."""
        p = np.asarray(p, dtype=float)
        if np.any((p < 0.0) | (p > 1.0)) or not np.all(np.isfinite(p)):
            raise DomainError("probabilities must lie in [0, 1]")
        if self.quantile is not None:
            return values_of(self.quantile, p)
        nodes, table = self._table
        return _bisect_tabulated(self.cdf, nodes, table, p)

    def squared(self) -> "DistributionSpec":
        """The distribution Q² of the maximum of two independent draws."""
        cdf, density = self.cdf, self.density
        return DistributionSpec(
            cdf=lambda x: values_of(cdf, x) ** 2,
            density=lambda x: 2.0 * values_of(cdf, x) * values_of(density, x),
            name=f"{self.name}^2",
            check=False,
        )

    @classmethod
    def uniform(cls) -> "DistributionSpec":
        return cls(cdf=_identity, density=_ones, name="uniform", quantile=_identity)

    @classmethod
    def power(cls, k: float) -> "DistributionSpec":
        if k <= 0:
            raise DomainError(f"power must be positive, got {k}")
        return cls(
            cdf=lambda x: np.asarray(x, dtype=float) ** k,
            density=lambda x: k * np.asarray(x, dtype=float) ** (k - 1.0),
            name="square" if k == 2 else f"power-{k:g}",
            quantile=lambda p: np.asarray(p, dtype=float) ** (1.0 / k),
        )

    @classmethod
    def polynomial(cls, coefficients, name: Optional[str] = None) -> "DistributionSpec":
        """CDF given by polynomial coefficients in increasing powers of x."""
        try:
            poly = Polynomial([float(c) for c in coefficients])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid polynomial coefficients {coefficients!r}: {e}")
        return cls(cdf=poly, density=poly.deriv(), name=name or f"poly{list(poly.coef)}")


BUILTIN_DISTRIBUTIONS = {
    "uniform": DistributionSpec.uniform,
    "square": lambda: DistributionSpec.power(2),
    "mixture": lambda: DistributionSpec.polynomial([0.0, 0.5, 0.5], name="mixture"),
}


def builtin_distribution(name: str) -> DistributionSpec:
    try:
        return BUILTIN_DISTRIBUTIONS[name]()
    except KeyError:
        raise ConfigError(
            f"Unknown distribution {name!r}; builtins: {', '.join(sorted(BUILTIN_DISTRIBUTIONS))}"
        )


def inverse_cdf(d: DistributionSpec, p: float) -> float:
    """x with |cdf(x) - p| <= 1e-10, by bracketed bisection on [0, 1]."""
    if not (math.isfinite(p) and 0.0 <= p <= 1.0):
        raise DomainError(f"p must lie in [0, 1], got {p}")
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    return float(
        optimize.bisect(lambda x: float(values_of(d.cdf, x)) - p, 0.0, 1.0, xtol=1e-14, maxiter=200)
    )


# --- Local alternatives ---------------------------------------------------


def _antiderivative(h: Callable, base: DistributionSpec) -> Callable:
    nodes = np.linspace(0.0, 1.0, TABLE_NODES)
    spline = CubicSpline(nodes, cumulative(h, base, nodes))
    return lambda x: spline(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class EqualityAlternative:
    """Product alternative with dA₁/dQ = 1 + εh and dA₂/dQ = 1 − εh.

    ``H`` is x ↦ ∫₀ˣ h dQ; when not supplied it is tabulated by cumulative
    Simpson on 4097 nodes.
    """

    base: DistributionSpec
    h: Callable
    epsilon: float = 1.0
    H: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise DomainError(f"epsilon must be a finite nonnegative number, got {self.epsilon}")
        if self.H is None:
            object.__setattr__(self, "H", _antiderivative(self.h, self.base))
        self.validate()

    def validate(self) -> None:
        hv = values_of(self.h, CHECK_GRID)
        if not np.all(np.isfinite(hv)):
            raise DomainError(f"{self.name}: direction h is not finite on [0, 1]")
        problems = []
        mean = quad(self.h, self.base)
        if abs(mean) > 1e-8:
            problems.append(f"∫h dQ = {mean:.3g}")
        ends = values_of(self.H, np.array([0.0, 1.0]))
        if np.any(np.abs(ends) > 1e-8):
            problems.append(f"H(0)={ends[0]:.3g}, H(1)={ends[1]:.3g}")
        if np.any(1.0 + self.epsilon * hv < -1e-12) or np.any(1.0 - self.epsilon * hv < -1e-12):
            problems.append(f"1 ± εh negative for ε={self.epsilon}")
        if problems:
            raise DomainError(f"{self.name}: invalid alternative ({'; '.join(problems)})")

    def with_epsilon(self, epsilon: float) -> "EqualityAlternative":
        return replace(self, epsilon=float(epsilon))

    @cached_property
    def _marginals(self):
        Q, h, H, eps = self.base, self.h, self.H, self.epsilon

        def marginal(sign: float, label: str) -> DistributionSpec:
            return DistributionSpec(
                cdf=lambda x: values_of(Q.cdf, x) + sign * eps * values_of(H, x),
                density=lambda x: (1.0 + sign * eps * values_of(h, x)) * values_of(Q.density, x),
                name=f"{self.name}:{label}",
            )

        if eps == 0.0:
            return Q, Q
        return marginal(1.0, "A1"), marginal(-1.0, "A2")

    def marginals(self) -> tuple:
        """The alternative distributions (A₁, A₂)."""
        return self._marginals

    def norm_squared(self) -> float:
        """‖h‖²_Q."""
        return quad(lambda x: values_of(self.h, x) ** 2, self.base)


@dataclass(frozen=True, eq=False)
class DependenceAlternative:
    """Bivariate alternative with density (1 + εg(x, y)) relative to Q×Q."""

    base: DistributionSpec
    g: Callable
    epsilon: float = 1.0
    G: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise DomainError(f"epsilon must be a finite nonnegative number, got {self.epsilon}")
        if self.G is None:
            object.__setattr__(self, "G", self._double_antiderivative())
        self.validate()

    def _double_antiderivative(self) -> Callable:
        nodes = np.linspace(0.0, 1.0, SURFACE_NODES)
        X, Y = np.meshgrid(nodes, nodes, indexing="ij")
        q = values_of(self.base.density, nodes)
        integrand = np.broadcast_to(np.asarray(self.g(X, Y), dtype=float), X.shape) * q[:, None] * q[None, :]
        _require_finite(integrand, X, "g")
        running = integrate.cumulative_simpson(integrand, x=nodes, axis=0, initial=0.0)
        running = integrate.cumulative_simpson(running, x=nodes, axis=1, initial=0.0)
        spline = RectBivariateSpline(nodes, nodes, running)

        def G(x, y):
            x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
            return spline.ev(x, y)

        return G

    def validate(self) -> None:
        problems = []
        for s in np.linspace(0.0, 1.0, 11):
            by_x = quad(lambda t: self.g(t, np.full_like(t, s)), self.base)
            by_y = quad(lambda t: self.g(np.full_like(t, s), t), self.base)
            if abs(by_x) > 1e-6 or abs(by_y) > 1e-6:
                problems.append(f"slice integrals at {s:.1f} are {by_x:.3g}, {by_y:.3g}")
                break
        grid = np.linspace(0.0, 1.0, 101)
        X, Y = np.meshgrid(grid, grid, indexing="ij")
        if np.any(1.0 + self.epsilon * np.asarray(self.g(X, Y)) < -1e-12):
            problems.append(f"1 + εg negative for ε={self.epsilon}")
        edge = np.concatenate([self.G(grid, np.ones_like(grid)), self.G(np.ones_like(grid), grid)])
        if np.any(np.abs(edge) > 1e-6):
            problems.append(f"G does not vanish on the upper edges (max {np.max(np.abs(edge)):.3g})")
        if problems:
            raise DomainError(f"{self.name}: invalid dependence alternative ({'; '.join(problems)})")

    def with_epsilon(self, epsilon: float) -> "DependenceAlternative":
        return replace(self, epsilon=float(epsilon))

    @cached_property
    def sup_abs_g(self) -> float:
        nodes = np.linspace(0.0, 1.0, SURFACE_NODES)
        X, Y = np.meshgrid(nodes, nodes, indexing="ij")
        return float(np.max(np.abs(np.asarray(self.g(X, Y), dtype=float))))


# --- Samplers -------------------------------------------------------------


def _require_size(n: int) -> None:
    if n < 1:
        raise DomainError(f"sample size must be at least 1, got {n}")


def sample_null(Q: DistributionSpec, n: int, rng: np.random.Generator) -> LabeledSample:
    _require_size(n)
    return LabeledSample(Q.ppf(rng.random(n)), Q.ppf(rng.random(n)))


def sample_equality_alt(alt: EqualityAlternative, n: int, rng: np.random.Generator) -> LabeledSample:
    """n independent pairs X ~ A₁, Y ~ A₂ by inverse CDF."""
    _require_size(n)
    a1, a2 = alt.marginals()
    return LabeledSample(a1.ppf(rng.random(n)), a2.ppf(rng.random(n)))


# the grid supremum may miss an interior peak of g by a hair
ENVELOPE_SLACK = 1.005


def sample_dependence_alt(alt: DependenceAlternative, n: int, rng: np.random.Generator) -> LabeledSample:
    """n pairs from (1 + εg)·q×q by rejection from Q×Q."""
    _require_size(n)
    Q = alt.base
    envelope = 1.0 + alt.epsilon * alt.sup_abs_g * ENVELOPE_SLACK
    xs, ys = [], []
    accepted = 0
    while accepted < n:
        batch = max(64, int(math.ceil(1.2 * (n - accepted) * envelope)))
        x = Q.ppf(rng.random(batch))
        y = Q.ppf(rng.random(batch))
        ratio = (1.0 + alt.epsilon * np.asarray(alt.g(x, y), dtype=float)) / envelope
        if np.any(ratio > 1.0):
            worst = int(np.argmax(ratio))
            raise NumericalError(
                f"rejection envelope {envelope:.6g} too small at ({x[worst]:.6g}, {y[worst]:.6g})"
            )
        keep = rng.random(batch) <= ratio
        xs.append(x[keep])
        ys.append(y[keep])
        accepted += int(keep.sum())
    return LabeledSample(np.concatenate(xs)[:n], np.concatenate(ys)[:n])


# --- Directions -----------------------------------------------------------


def direction_from_pair(a1: DistributionSpec, a2: DistributionSpec,
                        name: Optional[str] = None) -> EqualityAlternative:
    """Symmetric representation of the pair (A₁, A₂) with ε absorbed into h.

    Sign convention: h = (a₁′ − a₂′)/(a₁′ + a₂′), so H = (A₁ − A₂)/2.
    """
    total = values_of(a1.density, CHECK_GRID) + values_of(a2.density, CHECK_GRID)
    if np.count_nonzero(total <= 0.0) > 1:
        raise DomainError(f"{a1.name} and {a2.name}: a1' + a2' vanishes on a set of positive measure")

    def q_cdf(x):
        return 0.5 * (values_of(a1.cdf, x) + values_of(a2.cdf, x))

    def q_density(x):
        return 0.5 * (values_of(a1.density, x) + values_of(a2.density, x))

    def h(x):
        d1 = values_of(a1.density, x)
        d2 = values_of(a2.density, x)
        den = d1 + d2
        return np.divide(d1 - d2, den, out=np.zeros_like(den), where=den > 0.0)

    def H(x):
        return 0.5 * (values_of(a1.cdf, x) - values_of(a2.cdf, x))

    base = DistributionSpec(q_cdf, q_density, name=f"({a1.name}+{a2.name})/2")
    return EqualityAlternative(base, h, 1.0, H, name=name or f"{a1.name}-vs-{a2.name}")


def q_direction(alt: EqualityAlternative) -> Callable:
    """x ↦ h(x)·H(x)/Q(x), the density of H² with respect to Q².

    ε is not folded in: the shift of maxima statistics is ε²⟨α, q⟩_{Q²}.
    """
    h, H, Q = alt.h, alt.H, alt.base.cdf
    h0 = float(values_of(h, 0.0))

    def q(x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x)
        Qx = values_of(Q, flat)
        ratio = np.divide(values_of(H, flat), Qx, out=np.full(flat.shape, h0), where=Qx > 0.0)
        return (values_of(h, flat) * ratio).reshape(x.shape)

    return q


# --- Named alternatives and JSON documents ---------------------------------


def _example_h(x):
    x = np.asarray(x, dtype=float)
    return (1.0 - 2.0 * x) / (1.0 + 2.0 * x)


@lru_cache(maxsize=None)
def _uniform_vs_square() -> EqualityAlternative:
    alt = direction_from_pair(DistributionSpec.uniform(), DistributionSpec.power(2), name="uniform-vs-square")
    return replace(alt, h=_example_h)


BUILTIN_ALTERNATIVES = {
    "uniform-vs-square": _uniform_vs_square,
    "example-4-2": _uniform_vs_square,
    "example-5-2": _uniform_vs_square,
}


def builtin_alternative(name: str) -> EqualityAlternative:
    try:
        return BUILTIN_ALTERNATIVES[name]()
    except KeyError:
        raise ConfigError(
            f"Unknown alternative {name!r}; builtins: {', '.join(sorted(BUILTIN_ALTERNATIVES))}"
        )


def _distribution_from(value) -> DistributionSpec:
    if isinstance(value, DistributionSpec):
        return value
    if isinstance(value, str):
        return builtin_distribution(value)
    if isinstance(value, (list, tuple)):
        return DistributionSpec.polynomial(value)
    raise ConfigError(f"Cannot build a distribution from {value!r}")


def _load_document(spec: str):
    text = spec.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON alternative: {e}")
    path = Path(text)
    if path.suffix == ".json" and path.is_file():
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON in {path}: {e}")
    return text


def parse_alternative(spec) -> Union[EqualityAlternative, DependenceAlternative]:
    """Build an alternative from a builtin name, a JSON string/file or a dict."""
    if isinstance(spec, (EqualityAlternative, DependenceAlternative)):
        return spec
    doc = _load_document(spec) if isinstance(spec, str) else spec
    if isinstance(doc, str):
        return builtin_alternative(doc)
    if not isinstance(doc, dict):
        raise ConfigError(f"Alternative spec must be a name or a JSON object, got {type(doc).__name__}")

    kind = doc.get("kind", "equality")
    required = {"equality": ("q", "h"), "pair": ("a1", "a2"), "dependence": ("q", "g")}
    if kind not in required:
        raise ConfigError(f"Unknown alternative kind {kind!r}")
    missing = [key for key in required[kind] if key not in doc]
    if missing:
        raise ConfigError(f"Alternative spec of kind {kind!r} is missing: {', '.join(missing)}")

    try:
        epsilon = float(doc.get("epsilon", 1.0))
    except (TypeError, ValueError):
        raise ConfigError(f"epsilon must be a number, got {doc.get('epsilon')!r}")
    name = str(doc.get("name", kind))

    if kind == "pair":
        alt = direction_from_pair(_distribution_from(doc["a1"]), _distribution_from(doc["a2"]), name=name)
        return alt.with_epsilon(epsilon)

    base = _distribution_from(doc["q"])
    if kind == "dependence":
        g = compile_expression(doc["g"], variables=("x", "y"))
        return DependenceAlternative(base, g, epsilon, name=name)

    h_spec = doc["h"]
    if h_spec in BUILTIN_ALTERNATIVES:
        h = builtin_alternative(h_spec).h
    else:
        h = compile_expression(h_spec)
    logger.debug("Building equality alternative %s on %s", name, base.name)
    return EqualityAlternative(base, h, epsilon, name=name)
