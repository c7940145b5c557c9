import math

import numpy as np
import pytest

from cbtest.asymptotics import (
    OptimalityReport,
    antisymmetric_part,
    gaussian_power,
    inner_product,
    kernel_marginal,
    optimality_check,
    project_Lstar,
    shift_dependence,
    shift_equality,
    snr_kernel,
    snr_linear,
    tv_power,
)
from cbtest.distmodel import (
    DependenceAlternative,
    direction_from_pair,
    q_direction,
    quad,
    sample_dependence_alt,
    sample_equality_alt,
)
from cbtest.empirical import blind, process_Rs
from cbtest.errors import DegenerateDirectionError, DomainError
from cbtest.montecarlo import replicate
from cbtest.statistics import SymmetricKernel, direction_by_name, kernel_by_name, snr_maxima

LN3_MINUS_1 = math.log(3.0) - 1.0


def generic(k: SymmetricKernel) -> SymmetricKernel:
    """Same kernel without the product/maxima shortcuts."""
    return SymmetricKernel(k.phi, name=f"generic({k.name})")


# --- Inner products ---------------------------------------------------------------


def test_product_kernel_inner_product(example_alt):
    k = SymmetricKernel.product(example_alt.h)
    assert inner_product(k, k, example_alt.base) == pytest.approx(LN3_MINUS_1 ** 2, abs=1e-9)


def test_simplex_quadrature_agrees_with_the_shortcuts(example_alt):
    Q = example_alt.base
    product = SymmetricKernel.product(example_alt.h)
    assert inner_product(generic(product), generic(product), Q) == pytest.approx(LN3_MINUS_1 ** 2, rel=1e-6)
    maxima = SymmetricKernel.of_maximum(direction_by_name("x^2"))
    assert inner_product(generic(maxima), generic(maxima), Q) == pytest.approx(inner_product(maxima, maxima, Q), rel=1e-6)


def test_inner_product_is_symmetric_and_bilinear(mixture):
    k1 = kernel_by_name("x*y + y")
    k2 = kernel_by_name("x - y^2")
    zero = SymmetricKernel(lambda u, v: 0.0 * u, name="zero")
    assert inner_product(k1, k2, mixture) == pytest.approx(inner_product(k2, k1, mixture), abs=1e-12)
    assert inner_product(k1, zero, mixture) == 0.0


# --- Projection ---------------------------------------------------------------------


def test_centred_product_is_a_fixed_point(example_alt):
    k = SymmetricKernel.product(example_alt.h)
    projected = project_Lstar(k, example_alt.base)
    x = np.array([0.1, 0.4, 0.9])
    y = np.array([0.3, 0.2, 0.95])
    np.testing.assert_allclose(projected(x, y), k(x, y), atol=1e-8)


def test_projection_kills_additive_kernels(mixture):
    k = SymmetricKernel(lambda u, v: 2.0 + 0.0 * u, name="const")
    projected = project_Lstar(k, mixture)
    grid = np.linspace(0.0, 1.0, 9)
    np.testing.assert_allclose(projected(grid[:, None], grid[None, :]), 0.0, atol=1e-10)


def test_projection_is_idempotent(uniform):
    k = kernel_by_name("x*y + x^2")
    once = project_Lstar(k, uniform)
    twice = project_Lstar(once, uniform)
    grid = np.linspace(0.0, 1.0, 11)
    X, Y = grid[:, None], grid[None, :]
    np.testing.assert_allclose(twice(X, Y), once(X, Y), atol=1e-8)


def test_projected_kernel_has_vanishing_marginals(mixture):
    projected = project_Lstar(kernel_by_name("x + y*y"), mixture)
    # x on even Simpson nodes, where the diagonal kink sits on a panel boundary
    for x in (0.25, 0.5, 0.75):
        marginal = quad(lambda y: projected(np.full_like(y, x), y), mixture)
        assert marginal == pytest.approx(0.0, abs=1e-8)


def test_kernel_marginal_of_maxima_kernel(uniform):
    marginal = kernel_marginal(SymmetricKernel.of_maximum(lambda x: np.asarray(x, dtype=float)), uniform)
    x = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(marginal(x), (1.0 + x * x) / 2.0, atol=1e-10)


def test_pythagoras(mixture):
    k = SymmetricKernel.of_maximum(direction_by_name("x^2"))
    projected = project_Lstar(k, mixture)
    rest = generic(k) - projected
    total = inner_product(k, k, mixture)
    parts = inner_product(projected, projected, mixture) + inner_product(rest, rest, mixture)
    assert total == pytest.approx(parts, abs=1e-6)


@pytest.mark.parametrize("alpha_expr", ["x", "x^2"])
def test_maxima_kernel_of_q_is_the_projection_of_the_product(example_alt, alpha_expr):
    Q = example_alt.base
    k = SymmetricKernel.of_maximum(direction_by_name(alpha_expr))
    difference = SymmetricKernel.product(example_alt.h) - SymmetricKernel.of_maximum(q_direction(example_alt))
    assert inner_product(generic(k), difference, Q) == pytest.approx(0.0, abs=1e-7)


# --- Shift surfaces ----------------------------------------------------------------------


def test_equality_shift(example_alt):
    shift = shift_equality(example_alt, 400)
    assert shift.rate_exponent == -0.25
    assert shift.scale == pytest.approx(20.0)
    u, v = 0.8, 0.3
    Hu, Hv = u * (1 - u) / 2, v * (1 - v) / 2
    assert shift(u, v) == pytest.approx(20.0 * (Hv * Hv - 2.0 * Hu * Hv), abs=1e-10)
    assert shift(v, u) == shift(u, v)
    assert shift(u, u) == pytest.approx(float(shift.diagonal(u)), abs=1e-12)
    assert shift(1.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert shift(0.6, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_equality_shift_vanishes_without_direction(uniform):
    shift = shift_equality(direction_from_pair(uniform, uniform), 100)
    grid = np.linspace(0.0, 1.0, 11)
    assert np.all(shift(grid[:, None], grid[None, :]) == 0.0)


def _shifted_legendre(t):
    t = np.asarray(t, dtype=float)
    return 6.0 * t * t - 6.0 * t + 1.0


def test_dependence_shift_ignores_antisymmetric_dependence(uniform):
    g = lambda x, y: (2.0 * x - 1.0) * _shifted_legendre(y) - (2.0 * y - 1.0) * _shifted_legendre(x)
    alt = DependenceAlternative(uniform, g, 0.25)
    shift = shift_dependence(alt, 400)
    assert shift.rate_exponent == -0.5
    grid = np.linspace(0.0, 1.0, 21)
    np.testing.assert_allclose(shift(grid[:, None], grid[None, :]), 0.0, atol=1e-9)


def test_dependence_shift_of_symmetric_dependence(uniform):
    alt = DependenceAlternative(uniform, lambda x, y: (2.0 * x - 1.0) * (2.0 * y - 1.0), 0.5)
    shift = shift_dependence(alt, 100)
    G = lambda a, b: (a * a - a) * (b * b - b)
    u, v = 0.7, 0.4
    assert shift(u, v) == pytest.approx(10.0 * 0.5 * (2.0 * G(u, v) - G(v, v)), abs=1e-6)


def simulated_process_mean(sampler, n: int, u: float, v: float, reps: int, seed: int):
    draws = replicate(lambda rng: process_Rs(blind(sampler(n, rng)), u, v), reps, seed=seed)
    return float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(reps))


def test_equality_shift_matches_simulation(example_alt):
    alt = example_alt.with_epsilon(0.5)
    u, v = 0.8, 0.4
    expected = shift_equality(alt, 400)(u, v)
    assert expected == pytest.approx(-0.024, abs=1e-9)
    mean, se = simulated_process_mean(lambda n, rng: sample_equality_alt(alt, n, rng), 400, u, v, 10_000, 83)
    assert abs(mean - expected) <= 3.0 * se


def test_dependence_shift_matches_simulation(uniform):
    alt = DependenceAlternative(uniform, lambda x, y: (2.0 * x - 1.0) * (2.0 * y - 1.0), 0.5)
    u, v = 0.8, 0.4
    expected = shift_dependence(alt, 400)(u, v)
    assert expected == pytest.approx(0.192, abs=1e-6)
    mean, se = simulated_process_mean(lambda n, rng: sample_dependence_alt(alt, n, rng), 400, u, v, 10_000, 89)
    assert abs(mean - expected) <= 3.0 * se


def test_antisymmetric_part():
    g_star = antisymmetric_part(lambda x, y: np.asarray(x, dtype=float))
    assert float(g_star(0.8, 0.2)) == pytest.approx(0.3)
    assert float(g_star(0.2, 0.8)) == pytest.approx(-0.3)
    symmetric = antisymmetric_part(lambda x, y: x * y)
    assert float(symmetric(0.3, 0.9)) == 0.0


# --- SNR and power ------------------------------------------------------------------------


def test_snr_linear_example(example_alt):
    assert snr_linear(example_alt, 400) == pytest.approx(20.0 * LN3_MINUS_1, abs=1e-6)
    assert snr_linear(example_alt, 400) == pytest.approx(1.972, abs=0.005)
    assert snr_linear(example_alt.with_epsilon(0.0), 400) == 0.0


def test_snr_linear_rejects_null_directions(uniform):
    with pytest.raises(DegenerateDirectionError):
        snr_linear(direction_from_pair(uniform, uniform), 100)


def test_snr_kernel_of_product_equals_snr_linear(example_alt):
    k = SymmetricKernel.product(example_alt.h)
    assert snr_kernel(k, example_alt, 400) == pytest.approx(snr_linear(example_alt, 400), rel=1e-9)


def test_snr_kernel_of_maxima_kernel_equals_snr_maxima(example_alt):
    q = q_direction(example_alt)
    k = SymmetricKernel.of_maximum(q)
    assert snr_kernel(k, example_alt, 400) == pytest.approx(snr_maxima(q, example_alt, 400), rel=1e-5)


def test_tv_power():
    assert tv_power(0.0) == 0.0
    assert tv_power(1.972) == pytest.approx(0.6759, abs=1e-4)
    assert tv_power(12.0) == pytest.approx(1.0, abs=1e-8)
    values = [tv_power(t) for t in np.linspace(0.0, 5.0, 21)]
    assert all(b > a for a, b in zip(values, values[1:]))
    with pytest.raises(DomainError):
        tv_power(-0.5)


def test_gaussian_power():
    assert gaussian_power(0.0, 0.05) == pytest.approx(0.05, abs=1e-12)
    assert gaussian_power(1.972, 0.05) == pytest.approx(0.50, abs=0.01)
    assert gaussian_power(0.0, 0.05, two_sided=False) == pytest.approx(0.05, abs=1e-12)
    with pytest.raises(DomainError):
        gaussian_power(1.0, 1.5)


def test_product_kernel_is_optimal(example_alt):
    competitors = [
        kernel_by_name("example-5-2"),
        kernel_by_name("product:x"),
        kernel_by_name("x*y"),
        kernel_by_name("max:x^2"),
    ]
    report = optimality_check(example_alt, competitors, n=400)
    assert report.optimum == pytest.approx(snr_linear(example_alt, 400), rel=1e-9)
    assert report.holds
    assert set(report.competitors) == {"example-5-2", "product:x", "x*y", "max:x^2"}


def test_optimality_report_detects_a_violation():
    assert not OptimalityReport(1.0, {"better": 1.5}).holds
    assert OptimalityReport(1.0, {"worse": -0.5}).holds
