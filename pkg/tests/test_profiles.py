import logging
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from profiles import (  # noqa: E402
    SolitonParams,
    amplitude,
    beta_constant,
    dc_phi_primitive,
    energy,
    kernel_functions,
    l1_norm,
    l2_norm_squared,
    lambda_p_apply,
    mass,
    mass_q,
    mass_q_derivative,
    phi,
    phi_derivatives,
    phi_primitive,
    power_nonlinearity,
    profile_arrays,
)
from utils.errors import BiorthogonalityFailure, ConfigError, GridTooSmall  # noqa: E402
from utils.grid_helpers import inner, make_grid  # noqa: E402

P_VALUES = [1.5, 2.0, 3.0, 4.5]


def verification_grid(h=0.02):
    return make_grid(40.0, h=h)


@pytest.mark.parametrize(
    "p, c, expected",
    [(2.0, 1.0, 1.5), (3.0, 1.0, np.sqrt(2.0)), (2.0, 4.0, 6.0)],
)
def test_phi_at_origin(p, c, expected):
    assert phi(0.0, SolitonParams(p=p, c=c)) == pytest.approx(expected, rel=1e-14)


def test_soliton_params_validation():
    with pytest.raises(ConfigError, match="must lie in"):
        SolitonParams(p=5.0)
    with pytest.raises(ConfigError, match="positive"):
        SolitonParams(p=2.0, c=0.0)
    with pytest.raises(ConfigError, match="Unknown nonlinearity"):
        SolitonParams(p=2.0, nonlinearity="cubic")


@pytest.mark.parametrize("p", P_VALUES)
def test_profile_identities(p):
    x = np.linspace(-30.0, 30.0, 2001)
    values, d1, d2, _ = profile_arrays(x, SolitonParams(p=p))
    power = values ** (p + 1.0)
    np.testing.assert_allclose(d1**2, values**2 - 2.0 / (p + 1.0) * power, atol=1e-10)
    np.testing.assert_allclose(-values * d2 + d1**2, (p - 1.0) / (p + 1.0) * power, atol=1e-10)
    np.testing.assert_allclose(values, values[::-1], atol=1e-15)


def test_profile_ode_at_general_speed():
    params = SolitonParams(p=3.0, c=1.7)
    x = np.linspace(-20.0, 20.0, 801)
    values, _, d2, _ = profile_arrays(x, params)
    np.testing.assert_allclose(d2, params.c * values - values**params.p, atol=1e-12)


def test_dc_phi_at_origin_and_integral():
    params = SolitonParams(p=2.0)
    assert profile_arrays(0.0, params)[3] == pytest.approx(1.5)
    assert dc_phi_primitive(np.inf, params) == pytest.approx(0.5 * l1_norm(2.0), rel=1e-12)
    assert dc_phi_primitive(np.inf, SolitonParams(p=3.0)) == pytest.approx(0.0, abs=1e-12)


def test_dc_phi_matches_finite_difference_in_c():
    x = np.linspace(-15.0, 15.0, 301)
    step = 1e-5
    base = SolitonParams(p=2.5, c=1.3)
    numerical = (phi(x, base.with_speed(1.3 + step)) - phi(x, base.with_speed(1.3 - step))) / (2.0 * step)
    np.testing.assert_allclose(profile_arrays(x, base)[3], numerical, atol=1e-8)


def test_closed_form_norms_at_p2():
    assert amplitude(2.0) == 1.5
    assert beta_constant(2.0) == pytest.approx(6.0)
    assert l1_norm(2.0) == pytest.approx(6.0, rel=1e-13)
    assert l2_norm_squared(2.0) == pytest.approx(6.0, rel=1e-13)


@pytest.mark.parametrize("p", [1.5, 3.0, 4.5])
def test_phi_primitive_against_quadrature(p):
    params = SolitonParams(p=p, c=1.4)
    for x0 in (-3.0, 0.0, 2.5):
        expected, _ = integrate.quad(lambda y: phi(y, params), -np.inf, x0, epsabs=1e-13)
        assert phi_primitive(x0, params) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("p", [2.0, 4.0])
@pytest.mark.parametrize("x0", [8.0, 12.0, 20.0])
def test_phi_primitive_right_tail(p, x0):
    params = SolitonParams(p=p)
    expected, _ = integrate.quad(lambda y: phi(y, params), x0, np.inf, epsabs=0.0, epsrel=1e-12)
    tail = phi_primitive(np.inf, params) - phi_primitive(x0, params)
    assert tail == pytest.approx(expected, rel=1e-6)


def test_mass_q_values_and_scaling():
    assert mass_q(SolitonParams(p=2.0)) == pytest.approx(3.0, rel=1e-12)
    assert mass_q(SolitonParams(p=2.0, c=4.0)) == pytest.approx(24.0, rel=1e-12)
    assert mass_q_derivative(SolitonParams(p=2.0)) == pytest.approx(4.5, rel=1e-13)


@pytest.mark.parametrize("p", P_VALUES)
def test_dq_equals_dc_phi_pairing(p):
    params = SolitonParams(p=p, c=1.2)
    grid = verification_grid()
    values, _, _, dc = profile_arrays(grid.x, params)
    step = 1e-4
    central = (mass_q(params.with_speed(1.2 + step)) - mass_q(params.with_speed(1.2 - step))) / (2.0 * step)
    assert inner(grid, dc, values) == pytest.approx(central, rel=1e-6)
    assert mass_q_derivative(params) == pytest.approx(central, rel=1e-6)


def test_lambda_p_pairing_and_scaling_identity():
    grid = verification_grid()
    unit = SolitonParams(p=2.0)
    profile = grid.with_values(phi(grid.x, unit))
    assert inner(grid, lambda_p_apply(profile, 2.0).values, profile.values) == pytest.approx(4.5, rel=1e-8)
    assert np.all(lambda_p_apply(grid.with_values(np.zeros(grid.n)), 2.0).values == 0.0)

    # d_c phi_c = c^{(2-p)/(p-1)} (Lambda_p phi)(sqrt(c) x), with c^0 = 1 at p = 2
    c = 1.21
    y = np.sqrt(c) * grid.x
    values, d1, _, _ = profile_arrays(y, unit)
    lhs = profile_arrays(grid.x, unit.with_speed(c))[3]
    np.testing.assert_allclose(lhs, 0.5 * y * d1 + values, atol=1e-8)


def test_phi_derivatives_rejects_short_grid():
    with pytest.raises(GridTooSmall, match="too short"):
        phi_derivatives(make_grid(5.0, h=0.05), SolitonParams(p=2.0))


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_kernel_functions_are_biorthogonal(p):
    kernel = kernel_functions(verification_grid(), SolitonParams(p=p))
    np.testing.assert_allclose(kernel.gram, np.eye(2), atol=1e-7)
    assert kernel.theta1 == pytest.approx(-kernel.theta3)


def test_kernel_functions_at_other_speed():
    kernel = kernel_functions(verification_grid(), SolitonParams(p=2.0, c=1.05))
    np.testing.assert_allclose(kernel.gram, np.eye(2), atol=1e-7)


def test_printed_theta2_breaks_biorthogonality():
    with pytest.raises(BiorthogonalityFailure, match="as_printed") as excinfo:
        kernel_functions(verification_grid(), SolitonParams(p=2.0), theta2_convention="as_printed")
    assert excinfo.value.gram.shape == (2, 2)
    assert excinfo.value.value > 1e-6


def test_unknown_theta2_convention():
    with pytest.raises(ConfigError, match="theta2"):
        kernel_functions(verification_grid(), SolitonParams(p=2.0), theta2_convention="other")


def test_coarse_grid_warns(caplog):
    with caplog.at_level(logging.WARNING):
        kernel_functions(make_grid(30.0, h=0.05), SolitonParams(p=2.0))
    assert "coarse grid" in caplog.text


def test_power_nonlinearity_variants():
    u = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(power_nonlinearity(u, 3.0), u**3, rtol=1e-14)
    np.testing.assert_allclose(power_nonlinearity(u, 2.0, "unsigned"), u**2, rtol=1e-14)
    np.testing.assert_allclose(power_nonlinearity(u, 2.0, "signed"), np.abs(u) * u, rtol=1e-14)
    assert power_nonlinearity(np.array([0.0]), 1.5)[0] == 0.0


def test_mass_and_energy_of_soliton():
    grid = verification_grid()
    values = phi(grid.x, SolitonParams(p=2.0))
    assert mass(grid, values) == pytest.approx(3.0, rel=1e-12)
    # E(phi) = 1/2 ||phi'||^2 - ||phi||_{L^3}^3 / 3 with ||phi'||^2 = 6/5, int phi^3 = 36/5
    assert energy(grid, values, 2.0) == pytest.approx(0.6 - 2.4, rel=1e-10)
