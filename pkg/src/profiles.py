import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from utils.errors import BiorthogonalityFailure, ConfigError, GridTooSmall
from utils.grid_helpers import grid_derivative, inner, integrate_grid

NONLINEARITIES = ("signed", "unsigned")
TAIL_TOLERANCE = 1e-12
GRAM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SolitonParams:
    p: float
    c: float = 1.0
    nonlinearity: str = "signed"

    def __post_init__(self):
        if not 1.0 < self.p < 5.0:
            raise ConfigError(f"Exponent p must lie in (1, 5), got {self.p}.", value=self.p)
        if self.c <= 0.0:
            raise ConfigError(f"Wave speed c must be positive, got {self.c}.", value=self.c)
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(
                f"Unknown nonlinearity '{self.nonlinearity}', expected one of {NONLINEARITIES}."
            )

    @property
    def a(self):
        return 0.5 * (self.p - 1.0)

    @property
    def k(self):
        return 2.0 / (self.p - 1.0)

    def with_speed(self, c):
        return SolitonParams(p=self.p, c=c, nonlinearity=self.nonlinearity)


@dataclass(frozen=True, eq=False)
class KernelFunctions:
    xi1: object
    xi2: object
    eta1: object
    eta2: object
    eta1_prime: object
    theta1: float
    theta2: float
    theta3: float
    gram: np.ndarray


def amplitude(p):
    """
    phi(0) at c = 1, ((p+1)/2)^{1/(p-1)}.
    """
    return (0.5 * (p + 1.0)) ** (1.0 / (p - 1.0))


def beta_constant(p):
    """
    Tail constant of the profile, phi(x) ~ beta e^{-|x|} as |x| -> infinity.
    """
    return (2.0 * (p + 1.0)) ** (1.0 / (p - 1.0))


def stable_sech(z):
    e = np.exp(-np.abs(z))
    return 2.0 * e / (1.0 + e * e)


def phi(x, params):
    """
    Soliton profile phi_c(x) = c^{1/(p-1)} phi(sqrt(c) x).
    """
    K = np.sqrt(params.c)
    s = stable_sech(params.a * K * np.asarray(x, dtype=float))
    return params.c ** (1.0 / (params.p - 1.0)) * amplitude(params.p) * s**params.k


def potential(x, params):
    """
    f'(phi_c) = p phi_c^{p-1}, written through sech^2 so that it never takes a
    fractional power of a tiny number.
    """
    K = np.sqrt(params.c)
    s = stable_sech(params.a * K * np.asarray(x, dtype=float))
    return params.p * params.c * 0.5 * (params.p + 1.0) * s**2


def potential_derivative(x, params):
    K = np.sqrt(params.c)
    z = params.a * K * np.asarray(x, dtype=float)
    return -2.0 * params.a * K * potential(x, params) * np.tanh(z)


def profile_arrays(x, params):
    """
    Returns (phi, phi', phi'', d_c phi) at the points x from the closed forms.
    """
    x = np.asarray(x, dtype=float)
    K = np.sqrt(params.c)
    t = np.tanh(params.a * K * x)
    s = stable_sech(params.a * K * x)
    values = phi(x, params)
    d1 = -K * values * t
    d2 = params.c * values * (t**2 - params.a * s**2)
    dc = values / ((params.p - 1.0) * params.c) + x * d1 / (2.0 * params.c)
    return values, d1, d2, dc


def phi_derivatives(grid, params):
    """
    Evaluates phi_c, phi_c', phi_c'' and d_c phi_c on the grid. Raises GridTooSmall
    when the profile has not decayed at the grid ends.
    """
    values, d1, d2, dc = profile_arrays(grid.x, params)
    peak = phi(0.0, params)
    tail = max(values[0], values[-1])
    if tail > TAIL_TOLERANCE * peak:
        logging.error(f"Profile tail {tail:.3e} exceeds {TAIL_TOLERANCE} of the peak.")
        raise GridTooSmall(
            f"Grid [{grid.xmin}, {grid.xmax}] too short for p={params.p}, c={params.c}.",
            value=tail / peak,
            limit=TAIL_TOLERANCE,
        )
    return tuple(grid.with_values(v) for v in (values, d1, d2, dc))


def phi_primitive(x, params):
    """
    Closed form of the integral of phi_c from -infinity to x, through the
    regularized incomplete beta function. For x > 0 the symmetric complement
    1 - I_{1-w} is used so that the tail is never read off w rounded to 1.
    """
    K = np.sqrt(params.c)
    half = 0.5 * params.k
    z = 2.0 * params.a * K * np.asarray(x, dtype=float)
    lower = special.betainc(half, half, special.expit(-np.abs(z)))
    fraction = np.where(z > 0.0, 1.0 - lower, lower)
    scale = params.c ** (1.0 / (params.p - 1.0)) * amplitude(params.p)
    full = 2.0 ** (params.k - 1.0) / (params.a * K) * special.beta(half, half)
    return scale * full * fraction


def dc_phi_primitive(x, params):
    """
    Integral of d_c phi_c from -infinity to x.
    """
    x = np.asarray(x, dtype=float)
    gamma = 1.0 / (params.p - 1.0) - 0.5
    tail = np.where(np.isfinite(x), x * phi(np.where(np.isfinite(x), x, 0.0), params), 0.0)
    return gamma / params.c * phi_primitive(x, params) + tail / (2.0 * params.c)


def l1_norm(p):
    """
    ||phi||_{L^1} at c = 1.
    """
    return float(phi_primitive(np.inf, SolitonParams(p=p)))


def l2_norm_squared(p):
    """
    ||phi||^2_{L^2} at c = 1 in closed form.
    """
    k = 2.0 / (p - 1.0)
    a = 0.5 * (p - 1.0)
    return amplitude(p) ** 2 * 2.0 ** (2.0 * k - 1.0) / a * special.beta(k, k)


def mass_q(params):
    """
    q(c) = Q(phi_c) = 1/2 c^{(5-p)/(2(p-1))} ||phi||^2, with the norm by adaptive quadrature.
    """
    unit = SolitonParams(p=params.p)
    norm_sq, error = integrate.quad(
        lambda y: phi(y, unit) ** 2, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200
    )
    logging.debug(f"||phi||^2 = {norm_sq} (quadrature error {error:.1e}) at p={params.p}")
    exponent = (5.0 - params.p) / (2.0 * (params.p - 1.0))
    return 0.5 * params.c**exponent * norm_sq


def mass_q_derivative(params):
    exponent = (5.0 - params.p) / (2.0 * (params.p - 1.0))
    return 0.5 * exponent * params.c ** (exponent - 1.0) * l2_norm_squared(params.p)


def lambda_p_apply(u, p):
    """
    Scaling generator Lambda_p u = 1/2 x u' + u/(p-1).
    """
    du = grid_derivative(u, u.values)
    return u.with_values(0.5 * u.x * du + u.values / (p - 1.0))


def power_nonlinearity(u, p, kind="signed"):
    """
    f(u) = |u|^{p-1} u (signed) or |u|^p (unsigned), evaluated as
    exp((p-1) log|u|) with |u| floored at 1e-300.
    """
    u = np.asarray(u)
    magnitude = np.maximum(np.abs(u), 1e-300)
    power = np.exp((p - 1.0) * np.log(magnitude))
    if kind == "signed":
        return power * u
    return power * np.abs(u)


def potential_energy_density(u, p, kind="signed"):
    """
    F(u) with F' = f: |u|^{p+1}/(p+1) or |u|^p u/(p+1).
    """
    return power_nonlinearity(u, p, kind) * u / (p + 1.0)


def mass(grid, values):
    return 0.5 * integrate_grid(grid, np.abs(values) ** 2)


def energy(grid, values, p, kind="signed"):
    du = grid_derivative(grid, values)
    return 0.5 * integrate_grid(grid, du**2) - integrate_grid(
        grid, potential_energy_density(values, p, kind)
    )


def kernel_functions(grid, params, theta2_convention="biorthogonal"):
    """
    Generalized kernel xi_1 = phi_c', xi_2 = d_c phi_c and dual functions
    eta_1 = theta_1 int_{-inf}^x d_c phi_c + theta_2 phi_c, eta_2 = theta_3 phi_c.
    """
    if grid.h > 0.1 or -grid.xmin < 40.0:
        logging.warning(
            f"Kernel functions on a coarse grid (h={grid.h}, xmin={grid.xmin}); "
            "biorthogonality may be loose."
        )
    values, d1, _, dc = (g.values for g in phi_derivatives(grid, params))
    dq = mass_q_derivative(params)
    theta1 = -1.0 / dq
    theta3 = 1.0 / dq
    if theta2_convention == "biorthogonal":
        total = float(dc_phi_primitive(np.inf, params))
        theta2 = total**2 / (2.0 * dq**2)
    elif theta2_convention == "as_printed":
        theta2 = integrate_grid(grid, np.abs(dc)) ** 2 / dq
    else:
        raise ConfigError(f"Unknown theta2 convention '{theta2_convention}'.")

    eta1 = theta1 * dc_phi_primitive(grid.x, params) + theta2 * values
    eta2 = theta3 * values
    xis = (d1, dc)
    etas = (eta1, eta2)
    gram = np.array([[inner(grid, xi, eta) for eta in etas] for xi in xis])
    residual = np.max(np.abs(gram - np.eye(2)))
    logging.debug(f"Biorthogonality residual {residual:.3e} at p={params.p}, c={params.c}")
    if residual > GRAM_TOLERANCE:
        logging.error(f"Gram matrix of the kernel functions is {gram.tolist()}")
        failure = BiorthogonalityFailure(
            f"max |<xi_i, eta_j> - delta_ij| = {residual:.3e} with theta2 '{theta2_convention}'.",
            value=residual,
            limit=GRAM_TOLERANCE,
        )
        failure.gram = gram
        raise failure
    return KernelFunctions(
        xi1=grid.with_values(d1),
        xi2=grid.with_values(dc),
        eta1=grid.with_values(eta1),
        eta2=grid.with_values(eta2),
        eta1_prime=grid.with_values(theta1 * dc + theta2 * d1),
        theta1=theta1,
        theta2=theta2,
        theta3=theta3,
        gram=gram,
    )
