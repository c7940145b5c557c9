"""Seeded, parallel Monte Carlo for null and alternative distributions.

Replicate r always draws from its own PCG64 stream keyed by
``SeedSequence(seed, spawn_key=(r,))``, and results are stored by index, so
the output does not depend on the number of worker threads.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, List, Optional, Sequence, Union

import numpy as np
from scipy import special
from scipy import stats as scipy_stats

from .config import MAX_REPS, get_settings
from .distmodel import (
    DependenceAlternative,
    DistributionSpec,
    EqualityAlternative,
    q_direction,
    sample_dependence_alt,
    sample_equality_alt,
    sample_null,
)
from .empirical import LabeledSample, blind
from .errors import ConfigError, DomainError
from .statistics import (
    SymmetricKernel,
    cross_probability,
    ks_colour_blind,
    ks_full,
    linear_stat,
    maxima_stat,
    optimal_linear_stat,
)

logger = logging.getLogger(__name__)

STATISTICS = ("ks-sym", "ks-full", "linear", "maxima", "cross-prob")
RIGHT_TAILED = ("ks-sym", "ks-full", "cross-prob")
TAILS = ("right", "left", "two-sided")


# --- Models ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NullModel:
    Q: DistributionSpec

    def sample(self, n: int, rng: np.random.Generator) -> LabeledSample:
        return sample_null(self.Q, n, rng)

    def to_dict(self) -> dict:
        return {"kind": "null", "q": self.Q.name}


@dataclass(frozen=True, eq=False)
class EqualityModel:
    alt: EqualityAlternative

    def sample(self, n: int, rng: np.random.Generator) -> LabeledSample:
        return sample_equality_alt(self.alt, n, rng)

    def to_dict(self) -> dict:
        return {"kind": "equality", "alt": self.alt.name, "q": self.alt.base.name, "epsilon": self.alt.epsilon}


@dataclass(frozen=True, eq=False)
class DependenceModel:
    alt: DependenceAlternative

    def sample(self, n: int, rng: np.random.Generator) -> LabeledSample:
        return sample_dependence_alt(self.alt, n, rng)

    def to_dict(self) -> dict:
        return {"kind": "dependence", "alt": self.alt.name, "q": self.alt.base.name, "epsilon": self.alt.epsilon}


Model = Union[NullModel, EqualityModel, DependenceModel]
Direction = Union[EqualityAlternative, SymmetricKernel, Callable, None]


@dataclass(frozen=True, eq=False)
class SimConfig:
    """One simulation: statistic, sample size, replications and the model.

    ``direction`` is what linear and maxima statistics need: an equality
    alternative (optimal statistic / its q) or a kernel, resp. a function α.
    ``tail`` defaults to right for KS-type statistics and two-sided otherwise.
    """

    statistic: str
    n: int
    replications: int
    seed: int
    model: Model
    direction: Direction = None
    workers: Optional[int] = None
    tail: Optional[str] = None

    def __post_init__(self):
        problems = []
        if self.statistic not in STATISTICS:
            problems.append(f"unknown statistic {self.statistic!r} (choose from {', '.join(STATISTICS)})")
        if self.n < 1:
            problems.append(f"n must be >= 1, got {self.n}")
        if not 1 <= self.replications <= MAX_REPS:
            problems.append(f"replications must lie in [1, {MAX_REPS}], got {self.replications}")
        if self.statistic in ("linear", "maxima") and self.direction is None:
            problems.append(f"statistic {self.statistic!r} needs a direction or kernel")
        if self.statistic == "cross-prob" and self.n < 2:
            problems.append("cross-prob needs n >= 2")
        if self.tail is not None and self.tail not in TAILS:
            problems.append(f"tail must be one of {', '.join(TAILS)}")
        if self.workers is not None and self.workers < 1:
            problems.append(f"workers must be >= 1, got {self.workers}")
        if problems:
            raise ConfigError(f"Invalid simulation config: {'; '.join(problems)}")
        if self.tail is None:
            object.__setattr__(self, "tail", "right" if self.statistic in RIGHT_TAILED else "two-sided")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "n": self.n,
            "replications": self.replications,
            "seed": self.seed,
            "model": self.model.to_dict(),
            "direction": _direction_name(self.direction),
            "tail": self.tail,
        }


def _direction_name(direction: Direction) -> Optional[str]:
    if direction is None:
        return None
    if isinstance(direction, (EqualityAlternative, SymmetricKernel)):
        return direction.name
    name = getattr(direction, "__name__", "custom")
    # compiled expressions carry their source text as the docstring
    return direction.__doc__ if name == "expr" else name


def statistic_function(statistic: str, direction: Direction = None) -> Callable:
    """Map a statistic name to a function of a labeled or colour-blind sample."""
    if statistic == "ks-full":
        def evaluate(s):
            if not isinstance(s, LabeledSample):
                raise ConfigError("ks-full needs labeled pairs; colour-blind data only supports ks-sym")
            return ks_full(s)
        return evaluate

    if statistic == "ks-sym":
        base = ks_colour_blind
    elif statistic == "cross-prob":
        base = cross_probability
    elif statistic == "linear":
        if isinstance(direction, EqualityAlternative):
            base = lambda s: optimal_linear_stat(s, direction)
        elif isinstance(direction, SymmetricKernel):
            base = lambda s: linear_stat(s, direction)
        else:
            raise ConfigError("linear statistic needs an equality alternative or a kernel")
    elif statistic == "maxima":
        if isinstance(direction, EqualityAlternative):
            alpha = q_direction(direction)
        elif isinstance(direction, SymmetricKernel):
            if direction.alpha is None:
                raise ConfigError(f"kernel {direction.name} is not a maxima kernel")
            alpha = direction.alpha
        elif callable(direction):
            alpha = direction
        else:
            raise ConfigError("maxima statistic needs a direction α")
        base = lambda s: maxima_stat(s, alpha)
    else:
        raise ConfigError(f"unknown statistic {statistic!r}")

    def evaluate(s):
        return base(blind(s) if isinstance(s, LabeledSample) else s)

    return evaluate


def orient(values, tail: str) -> np.ndarray:
    """Turn raw statistic values into 'large rejects' form."""
    values = np.asarray(values, dtype=float)
    if tail == "two-sided":
        return np.abs(values)
    if tail == "left":
        return -values
    return values


# --- Replication ----------------------------------------------------------


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r,))))


def resolve_workers(workers: Optional[int]) -> int:
    cap = get_settings().threads
    return max(1, min(workers or cap, cap))


def replicate(fn: Callable[[np.random.Generator], Any], reps: int, seed: int,
              workers: Optional[int] = None) -> np.ndarray:
    """[fn(rng_0), ..., fn(rng_{reps-1})] as an array, computed in parallel."""
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    workers = resolve_workers(workers)

    def run(r: int):
        return fn(replicate_rng(seed, r))

    if workers == 1:
        results = [run(r) for r in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(reps), chunksize=max(1, reps // (8 * workers))))
    return np.asarray(results, dtype=float)


# --- Simulation and its summaries ------------------------------------------


@dataclass(frozen=True, eq=False)
class EcdfTable:
    values: np.ndarray
    probabilities: np.ndarray
    config: SimConfig = field(repr=False)

    @property
    def replications(self) -> int:
        return self.values.size

    @cached_property
    def oriented(self) -> np.ndarray:
        return np.sort(orient(self.values, self.config.tail))

    def __call__(self, x):
        out = np.searchsorted(self.values, x, side="right") / self.values.size
        return float(out) if np.ndim(out) == 0 else out

    def mean(self) -> float:
        return float(np.mean(self.values))

    def stderr(self) -> float:
        if self.values.size < 2:
            return float("nan")
        return float(np.std(self.values, ddof=1) / math.sqrt(self.values.size))


def simulate(config: SimConfig) -> EcdfTable:
    statistic = statistic_function(config.statistic, config.direction)
    model = config.model
    logger.info(
        "Simulating %s: n=%d reps=%d seed=%d model=%s",
        config.statistic, config.n, config.replications, config.seed, model.to_dict()["kind"],
    )
    started = time.perf_counter()
    values = replicate(lambda rng: statistic(model.sample(config.n, rng)),
                       config.replications, config.seed, config.workers)
    logger.debug("Simulation finished in %.2fs", time.perf_counter() - started)
    values = np.sort(values)
    return EcdfTable(values, np.arange(1, values.size + 1) / values.size, config)


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")


def critical_value(t: EcdfTable, level: float) -> float:
    """The ⌈(1 − level)R⌉-th smallest oriented null value."""
    _check_level(level)
    R = t.replications
    k = max(1, math.ceil(round((1.0 - level) * R, 9)))
    return float(t.oriented[k - 1])


def p_value(t: EcdfTable, observed: float) -> float:
    """(1 + #{oriented simulated >= oriented observed}) / (R + 1)."""
    obs = float(orient(observed, t.config.tail))
    exceed = t.oriented.size - np.searchsorted(t.oriented, obs, side="left")
    return (1.0 + exceed) / (t.replications + 1.0)


def rejection_rate(null: EcdfTable, alt: EcdfTable, level: float) -> float:
    crit = critical_value(null, level)
    return float(np.mean(orient(alt.values, null.config.tail) > crit))


def power(null_cfg: Union[SimConfig, EcdfTable], alt_cfg: Union[SimConfig, EcdfTable], level: float) -> float:
    """Fraction of alternative statistics beyond the null critical value."""
    _check_level(level)
    null = null_cfg if isinstance(null_cfg, EcdfTable) else simulate(null_cfg)
    alt = alt_cfg if isinstance(alt_cfg, EcdfTable) else simulate(alt_cfg)
    a, b = null.config, alt.config
    if a.statistic != b.statistic or a.n != b.n:
        raise ConfigError(
            f"power needs matching statistic and n, got {a.statistic}/{a.n} vs {b.statistic}/{b.n}"
        )
    return rejection_rate(null, alt, level)


def ecdf_distance(t1: EcdfTable, t2: EcdfTable) -> float:
    """Two-sample KS distance between two simulated distributions."""
    return float(scipy_stats.ks_2samp(t1.values, t2.values).statistic)


def ks_critical_distance(m: int, n: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample KS critical distance at level alpha."""
    _check_level(alpha)
    return float(special.kolmogi(alpha)) * math.sqrt((m + n) / (m * n))


def ecdf_gap(t1: EcdfTable, t2: EcdfTable, points: Optional[Sequence[float]] = None) -> np.ndarray:
    """t1(x) − t2(x) at ``points`` (default: deciles of the pooled values)."""
    if points is None:
        pooled = np.concatenate([t1.values, t2.values])
        points = np.quantile(pooled, np.linspace(0.1, 0.9, 9))
    points = np.asarray(points, dtype=float)
    return np.asarray(t1(points)) - np.asarray(t2(points))


# --- Rate experiments -----------------------------------------------------


@dataclass(frozen=True)
class RatePoint:
    n: int
    epsilon: float
    mean: float
    stderr: float


def epsilon_schedule(ns: Sequence[int], c: float, exponent: float) -> List[float]:
    """ε_n = c·n^exponent."""
    return [c * float(n) ** exponent for n in ns]


def rate_study(alt: EqualityAlternative, ns: Sequence[int], c: float, exponent: float,
               reps: int, seed: int, workers: Optional[int] = None) -> List[RatePoint]:
    """MC means of the optimal linear statistic along ε_n = c·n^exponent."""
    points = []
    for n, eps in zip(ns, epsilon_schedule(ns, c, exponent)):
        alt_n = alt.with_epsilon(eps)
        table = simulate(SimConfig("linear", n, reps, seed, EqualityModel(alt_n), direction=alt_n, workers=workers))
        points.append(RatePoint(n, eps, table.mean(), table.stderr()))
        logger.info("rate study n=%d eps=%.4g mean=%.5g", n, eps, points[-1].mean)
    return points
