import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from linop import (  # noqa: E402
    LinearizedOperator,
    apply_L,
    apply_L_adjoint,
    apply_Lplus,
    mu_weight,
    virial_cross_check,
    virial_mm08_functional,
)
from profiles import SolitonParams, kernel_functions, phi, profile_arrays  # noqa: E402
from utils.errors import RatioOverflow  # noqa: E402
from utils.grid_helpers import inner, make_grid  # noqa: E402


def build(p, c=1.0):
    grid = make_grid(40.0, h=0.02)
    params = SolitonParams(p=p, c=c)
    return grid, params, LinearizedOperator.build(grid, params)


def sup(values):
    return float(np.max(np.abs(values)))


def test_potential_is_even_and_positive():
    _, _, op = build(2.0)
    values = op.potential.values
    assert np.all(values > 0.0)
    assert values[op.grid.n // 2] == pytest.approx(3.0)
    np.testing.assert_allclose(values[1:], values[1:][::-1], atol=1e-14)


def test_lplus_annihilates_translation_mode():
    grid, params, op = build(2.0)
    d1 = profile_arrays(grid.x, params)[1]
    assert sup(apply_Lplus(op, d1).values) <= 1e-8 * sup(d1)
    assert sup(apply_Lplus(op, np.zeros(grid.n)).values) == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0, 4.5])
def test_generalized_kernel_identities(p):
    grid, params, op = build(p)
    kernel = kernel_functions(grid, params)
    assert sup(apply_L(op, kernel.xi1).values) <= 1e-7
    assert sup(apply_L(op, kernel.xi2).values + kernel.xi1.values) <= 1e-7
    adjoint = apply_L_adjoint(op, kernel.eta1, derivative=kernel.eta1_prime)
    assert sup(adjoint.values + kernel.eta2.values) <= 1e-7
    assert sup(apply_L_adjoint(op, kernel.eta2).values) <= 1e-7


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_closed_form_eta1_derivative_matches_samples(p):
    grid, params, _ = build(p)
    kernel = kernel_functions(grid, params)
    spacing = grid.h
    numeric = np.gradient(kernel.eta1.values, spacing, edge_order=2)
    interior = slice(5, -5)
    np.testing.assert_allclose(kernel.eta1_prime.values[interior], numeric[interior], atol=1e-3)


def test_generalized_kernel_identities_at_other_speed():
    grid, params, op = build(2.0, c=1.3)
    kernel = kernel_functions(grid, params)
    assert sup(apply_L(op, kernel.xi2).values + kernel.xi1.values) <= 1e-7
    adjoint = apply_L_adjoint(op, kernel.eta1, derivative=kernel.eta1_prime)
    assert sup(adjoint.values + kernel.eta2.values) <= 1e-7


def test_adjointness_on_random_bumps():
    grid, _, op = build(2.0)
    rng = np.random.default_rng(7)
    for _ in range(20):
        a, b = rng.uniform(-5.0, 5.0, 2)
        u = np.exp(-((grid.x - a) ** 2)) * rng.normal()
        v = np.exp(-((grid.x - b) ** 2) / 2.0) * rng.normal()
        lhs = inner(grid, apply_L(op, u).values, v)
        rhs = inner(grid, u, apply_L_adjoint(op, v).values)
        scale = np.sqrt(inner(grid, u, u) * inner(grid, v, v))
        assert abs(lhs - rhs) <= 1e-8 * scale


def test_mu_weight_is_log_derivative_of_profile():
    x = np.linspace(-10.0, 10.0, 401)
    for p in (1.5, 2.0, 3.0):
        values, d1, _, _ = profile_arrays(x, SolitonParams(p=p))
        np.testing.assert_allclose(mu_weight(x, p), -d1 / values, atol=1e-12)


@pytest.mark.parametrize("scale", [1.0, 2.5])
def test_virial_vanishes_on_profile_multiples(scale):
    grid = make_grid(40.0, h=0.02)
    psi = grid.with_values(scale * phi(grid.x, SolitonParams(p=2.0)))
    assert abs(virial_mm08_functional(psi, 2.0)) <= 1e-10


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_virial_positive_on_derivative_and_matches_cross_check(p):
    grid = make_grid(40.0, h=0.02)
    psi = grid.with_values(profile_arrays(grid.x, SolitonParams(p=p))[1])
    value = virial_mm08_functional(psi, p)
    assert value >= 1e-4
    assert virial_cross_check(psi, p) == pytest.approx(value, rel=1e-6)


def test_virial_cross_check_on_random_bumps():
    grid = make_grid(40.0, h=0.02)
    profile = phi(grid.x, SolitonParams(p=2.0))
    rng = np.random.default_rng(3)
    for _ in range(10):
        coefficients = rng.normal(size=3)
        psi = grid.with_values(profile * (coefficients[0] + coefficients[1] * np.tanh(grid.x) + coefficients[2] / np.cosh(grid.x)))
        value = virial_mm08_functional(psi, 2.0)
        assert value >= 1e-4
        assert virial_cross_check(psi, 2.0) == pytest.approx(value, rel=1e-6)


def test_virial_rejects_slowly_decaying_input():
    grid = make_grid(40.0, h=0.02)
    with pytest.raises(RatioOverflow, match="decay"):
        virial_mm08_functional(grid.with_values(np.ones(grid.n)), 2.0)
