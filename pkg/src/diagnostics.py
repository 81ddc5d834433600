import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from utils.errors import ConfigError
from utils.grid_helpers import finite_difference, gauss_primitive, grid_derivative, integrate_grid, l2_norm

VIRIAL_TERMS = 20


@dataclass(frozen=True)
class WeightConfig:
    """
    Scales A >= B^2 > B > 1 with A1 = B^{1/3}, the sech weight rate kappa in (0, p-1)
    and the smoothing rate a <= kappa/2. Missing A1, kappa and a take their defaults.
    """

    p: float = 2.0
    A: float = 400.0
    B: float = 20.0
    A1: float = None
    kappa: float = None
    a: float = None

    def __post_init__(self):
        if self.A1 is None:
            object.__setattr__(self, "A1", self.B ** (1.0 / 3.0))
        if self.kappa is None:
            object.__setattr__(self, "kappa", 0.25 * (self.p - 1.0))
        if self.a is None:
            object.__setattr__(self, "a", 0.5 * self.kappa)
        if not self.A >= self.B**2 > self.B > 1.0:
            raise ConfigError(f"Scales must satisfy A >= B^2 > B > 1, got A={self.A}, B={self.B}.")
        if not 0.0 < self.kappa < self.p - 1.0:
            raise ConfigError(f"kappa must lie in (0, p-1), got {self.kappa}.", value=self.kappa)
        if not 0.0 < self.a <= 0.5 * self.kappa:
            raise ConfigError(f"Decay rate a must lie in (0, kappa/2], got {self.a}.", value=self.a)


def smooth_step(t):
    """
    C-infinity step: 0 for t <= 0, 1 for t >= 1, e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}) between.
    """
    t = np.asarray(t, dtype=float)
    inside = np.clip(t, 1e-12, 1.0 - 1e-12)
    left = np.exp(-1.0 / inside)
    right = np.exp(-1.0 / (1.0 - inside))
    value = left / (left + right)
    return np.where(t <= 0.0, 0.0, np.where(t >= 1.0, 1.0, value))


def chi(x):
    return 1.0 - smooth_step(np.abs(x) - 1.0)


def zeta(x, C):
    x = np.asarray(x, dtype=float)
    return np.exp(-np.abs(x) / C * (1.0 - chi(x)))


def theta(i, x, A1=1.0):
    """
    Partition of unity theta_1 + theta_2 = 1, theta_1 = 1 on (-inf, A1], theta_2 = 1 on [2 A1, inf).
    """
    step = smooth_step(np.asarray(x, dtype=float) / A1 - 1.0)
    return 1.0 - step if i == 1 else step


def chi_tilde(x):
    """
    Bump with values in [0, 1], equal to 1 on [1, 2] and supported in [1/2, 4].
    """
    x = np.asarray(x, dtype=float)
    return smooth_step((x - 0.5) / 0.5) * (1.0 - smooth_step((x - 2.0) / 2.0))


def phi_C(x, C):
    """
    Odd primitive of zeta_C^2.
    """
    return gauss_primitive(lambda y: zeta(y, C) ** 2, x)


def phi_iAA1(i, x, cfg):
    return gauss_primitive(lambda y: zeta(y, cfg.A) ** 2 * theta(i, y, cfg.A1) ** 2, x)


def tilde_phi(n, x, cfg):
    scale = 2.0 ** (n - 1) * cfg.A1
    return gauss_primitive(lambda y: chi_tilde(y / scale), x)


@dataclass(frozen=True, eq=False)
class CutoffFamily:
    grid: object
    cfg: WeightConfig
    chi: object
    theta1: object
    theta2: object
    phi_1: object
    phi_2: object

    def zeta(self, C):
        return self.grid.with_values(zeta(self.grid.x, C))

    def phiC(self, C):
        return self.grid.with_values(phi_C(self.grid.x, C))

    def tilde_phi(self, n):
        return self.grid.with_values(tilde_phi(n, self.grid.x, self.cfg))


def cutoff_family(grid, cfg):
    x = grid.x
    return CutoffFamily(
        grid=grid,
        cfg=cfg,
        chi=grid.with_values(chi(x)),
        theta1=grid.with_values(theta(1, x, cfg.A1)),
        theta2=grid.with_values(theta(2, x, cfg.A1)),
        phi_1=grid.with_values(phi_iAA1(1, x, cfg)),
        phi_2=grid.with_values(phi_iAA1(2, x, cfg)),
    )


def sigma_norms(v, cfg):
    """
    ||(theta_{i A1} zeta_A v)'|| + ||theta_{i A1} zeta_A v|| for i = 1, 2.
    """
    norms = []
    for i in (1, 2):
        w = theta(i, v.x, cfg.A1) * zeta(v.x, cfg.A) * v.values
        norms.append(l2_norm(v, grid_derivative(v, w)) + l2_norm(v, w))
    return tuple(norms)


def sech_norm(v, cfg):
    return l2_norm(v, v.values / np.cosh(cfg.kappa * v.x))


@dataclass(frozen=True)
class VirialValues:
    I1: float
    I2: float
    tilde: tuple
    bold: float
    bounds: tuple


def virial_functionals(v, cfg, terms=VIRIAL_TERMS):
    """
    I_i = <v, phi_{iAA1} v>/2, I~_n = <v, phi~_{nA1} v>/2 for n < terms and
    bold I_terms = sum_{l=1}^{terms-1} A1^{-2l} I~_l. bounds holds ||phi_{iAA1}||_inf ||v||^2.
    """
    x = v.x
    density = v.values**2
    values = []
    bounds = []
    for i in (1, 2):
        weight = phi_iAA1(i, x, cfg)
        values.append(0.5 * float(integrate_grid(v, weight * density)))
        bounds.append(float(np.max(np.abs(weight))) * l2_norm(v, v.values) ** 2)
    tilde = tuple(
        0.5 * float(integrate_grid(v, tilde_phi(n, x, cfg) * density)) for n in range(1, terms)
    )
    bold = sum(cfg.A1 ** (-2 * l) * tilde[l - 1] for l in range(1, terms))
    for i, (value, bound) in enumerate(zip(values, bounds), start=1):
        if abs(value) > bound * (1.0 + 1e-12):
            logging.warning(f"|I_{i}| = {abs(value):.3e} exceeds its bound {bound:.3e}")
    return VirialValues(I1=values[0], I2=values[1], tilde=tilde, bold=bold, bounds=tuple(bounds))


def weighted_h1_squared(v, a):
    """
    ||e^{-a|x|} v||_{H^1}^2 with the derivative e^{-a|x|}(v' - a sign(x) v).
    """
    weight = np.exp(-a * np.abs(v.x))
    dv = grid_derivative(v, v.values)
    w = weight * v.values
    dw = weight * (dv - a * np.sign(v.x) * v.values)
    return l2_norm(v, w) ** 2 + l2_norm(v, dw) ** 2


def smoothing_integral(times, vs, a):
    """
    Returns int ||e^{-a|x|} v(t)||_{H^1}^2 dt by the trapezoid rule in t and the curve
    ||e^{-a<x>} v(t)||_{L^2}.
    """
    if len(vs) == 0:
        return 0.0, np.zeros(0)
    densities = np.array([weighted_h1_squared(v, a) for v in vs])
    curve = np.array([l2_norm(v, np.exp(-a * np.sqrt(1.0 + v.x**2)) * v.values) for v in vs])
    if len(vs) == 1:
        return 0.0, curve
    return float(integrate.trapezoid(densities, x=np.asarray(times))), curve


def discrete_mode_ratio(cdot, ddot_minus_c, v, cfg):
    """
    (|c'| + |D' - c|) / (B^{-1} (||v||_{Sigma_1} + ||v||_{Sigma_2})).
    """
    s1, s2 = sigma_norms(v, cfg)
    scale = (s1 + s2) / cfg.B
    if scale == 0.0:
        return float("nan")
    return (abs(cdot) + abs(ddot_minus_c)) / scale


def zeta_derivative_constant(grid, C):
    """
    sup |zeta_C'| / (C^{-1} zeta_C) on the grid.
    """
    z = zeta(grid.x, C)
    dz = finite_difference(z, grid.h)
    mask = np.isfinite(dz)
    return float(np.max(np.abs(dz[mask]) * C / z[mask]))
