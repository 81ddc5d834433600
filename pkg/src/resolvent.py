import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from cubic_spectrum import particular_solution, solve_cubic
from jost import (
    DEFAULT_H,
    NEAR_ZERO_RADIUS,
    bundle_wronskian,
    c0_value,
    check_speed,
    circle_points,
    evaluate_series,
    evans,
    evans_second_derivative,
    evans_series,
    jost_bundle,
    jost_grid,
    taylor_from_circle,
)
from profiles import beta_constant, kernel_functions, phi_primitive, potential, profile_arrays
from utils.errors import NearSingular, NotProjected
from utils.grid_helpers import cumulative, finite_difference, grid_derivative, inner, integrate_grid, l2_norm

SINGULAR_LIMIT = 1e-10
PROJECTION_TOLERANCE = 1e-8
REGULARIZED_RADIUS = 0.02


@dataclass(frozen=True, eq=False)
class ProjectionPair:
    """
    P g = sum_i xi_i <eta_i, g>, Q = 1 - P, on the grid of the kernel functions.
    """

    kernel: object

    @property
    def xi(self):
        return (self.kernel.xi1, self.kernel.xi2)

    @property
    def eta(self):
        return (self.kernel.eta1, self.kernel.eta2)

    def apply_P(self, g):
        values = g.values
        grid = self.kernel.xi1
        projected = sum(xi.values * inner(grid, eta.values, values) for xi, eta in zip(self.xi, self.eta))
        return g.with_values(projected)

    def apply_Q(self, g):
        return g.with_values(g.values - self.apply_P(g).values)


@lru_cache(maxsize=16)
def projection_pair(params, h=DEFAULT_H):
    return ProjectionPair(kernel=kernel_functions(jost_grid(params.p, h), params))


def weighted_l1_norm(grid, values):
    """
    ||<x> g||_{L^1} with <x> = sqrt(1 + x^2).
    """
    return float(integrate_grid(grid, np.sqrt(1.0 + grid.x**2) * np.abs(values)).real)


def sech_weighted_norm(grid, values, kappa):
    weight = 1.0 / np.cosh(kappa * grid.x)
    return l2_norm(grid, weight * np.asarray(values))


def linearized_minus_lambda(grid, values, lam, params):
    """
    (L - lam) u = -u''' + u' - (V u)' - lam u by sixth-order differences; NaN at the edges.
    """
    h = grid.h
    V = potential(grid.x, params)
    return (
        -finite_difference(values, h, 3)
        + finite_difference(values, h, 1)
        - finite_difference(V * values, h, 1)
        - lam * values
    )


def resolvent_residual(lam, g, u, params):
    """
    sup |(L - lam) u - g| / sup |g| over the interior.
    """
    residual = linearized_minus_lambda(g, u.values, lam, params) - g.values
    mask = np.isfinite(residual)
    return float(np.max(np.abs(residual[mask])) / max(np.max(np.abs(g.values)), 1e-300))


def numerator_pieces(bundle, g):
    """
    The three terms of N(lam) g = W(lam) R(lam) g, stacked as rows:
    -f_2 int_x^inf g b_13, f_3 int_x^inf g b_12 and -f_1 int_{-inf}^x g b_23.
    """
    h = g.h
    values = np.asarray(g.values, dtype=complex)
    right_13 = cumulative(values * bundle.b13.values, h, from_right=True)
    right_12 = cumulative(values * bundle.b12.values, h, from_right=True)
    left_23 = cumulative(values * bundle.b23.values, h)
    return np.array([-bundle.f2.f * right_13, bundle.m3.f * right_12, -bundle.m1.f * left_23])


def resolvent_numerator(bundle, g):
    return numerator_pieces(bundle, g).sum(axis=0)


def apply_resolvent(lam, g, bundle):
    """
    R(lam) g = (L - lam)^{-1} g by variation of parameters over the Jost solutions.
    """
    if not np.any(g.values):
        return g.with_values(np.zeros(g.n, dtype=complex))
    W = bundle_wronskian(bundle)
    if abs(W) < SINGULAR_LIMIT:
        logging.error(f"|W(lambda)| = {abs(W):.3e} at lambda={lam}")
        raise NearSingular(
            f"Wronskian too small at lambda={lam}; use the regularized resolvent.",
            value=abs(W),
            limit=SINGULAR_LIMIT,
        )
    return g.with_values(resolvent_numerator(bundle, g) / W)


def _check_projected(g, params, h):
    projected = projection_pair(params, h).apply_P(g)
    size = l2_norm(g, projected.values)
    total = l2_norm(g, g.values)
    if size > PROJECTION_TOLERANCE * total:
        logging.error(f"||P g|| = {size:.3e} against ||g|| = {total:.3e}")
        raise NotProjected(
            "Regularized resolvent needs g in ker P; apply Q first.",
            value=size / max(total, 1e-300),
            limit=PROJECTION_TOLERANCE,
        )


def numerator_series(g, params, h=DEFAULT_H):
    """
    Taylor coefficients at lam = 0 of e^{-mu_2 x} times each numerator piece, shape
    (count, 3, n), from the pieces on the circle |lam| = 0.1.
    """
    samples = []
    for lam in circle_points():
        bundle = jost_bundle(complex(lam), params, h)
        phase = np.exp(-bundle.point.mu[1] * g.x)
        samples.append(numerator_pieces(bundle, g) * phase)
    return taylor_from_circle(np.array(samples))


@lru_cache(maxsize=32)
def wronskian_series(params, h=DEFAULT_H):
    """
    Taylor coefficients w_k of W(lam) = lam D(lam) W_0(lam) at 0; w_0 = w_1 = w_2 = 0 up to
    aliasing.
    """
    check_speed(params)
    return taylor_from_circle([bundle_wronskian(jost_bundle(complex(lam), params, h)) for lam in circle_points()])


def singular_part(g, params, h=DEFAULT_H):
    """
    (n_0, n_1, n_2) of e^{-mu_2 x} N(lam) g: the coefficients that would make R(lam) g
    singular at 0. They vanish for g in ker P.
    """
    return numerator_series(g, params, h).sum(axis=1)[:3]


@dataclass(frozen=True, eq=False)
class RegularizedResolvent:
    """
    R^{(1)}(lam) g for g in ker P split into the pieces of the numerator. hat is the
    rank-one part of r1 along f_3(., 0) that carries the slow 1/lam behaviour of the
    individual pieces; remainder is what is left once it is taken out.
    """

    grid: object
    r1: np.ndarray
    r21: np.ndarray
    r23: np.ndarray
    hat: np.ndarray

    @property
    def total(self):
        return self.r1 + self.r21 + self.r23

    @property
    def remainder(self):
        return self.total - self.hat


def regularized_pieces(lam, g, params, h=DEFAULT_H):
    """
    R_j^{(1)}(lam) g = e^{mu_2 x} sum_{k>=3} n_{j,k} lam^{k-3} / sum_{k>=3} w_k lam^{k-3}
    for each numerator piece j, with the hat part of R_1^{(1)} alongside.
    """
    check_speed(params)
    _check_projected(g, params, h)
    lam = complex(lam)
    coefficients = numerator_series(g, params, h)
    denominator = evaluate_series(wronskian_series(params, h), lam, 3)
    phase = np.exp(solve_cubic(lam).mu[1] * g.x)
    r1, r21, r23 = (phase * evaluate_series(coefficients[:, j], lam, 3) / denominator for j in range(3))
    hat = hat_correction(lam, g, params, h).values
    return RegularizedResolvent(grid=g, r1=r1, r21=r21, r23=r23, hat=hat)


def apply_resolvent_regularized(lam, g, params, h=DEFAULT_H):
    """
    R^{(1)}(lam) g for g in ker P, bounded as lam -> 0.
    """
    return g.with_values(regularized_pieces(lam, g, params, h).total)


def resolvent(lam, g, params, h=DEFAULT_H):
    """
    R(lam) g, routed to the regularized form when |lam| <= 0.02.
    """
    if abs(lam) <= REGULARIZED_RADIUS:
        return apply_resolvent_regularized(lam, g, params, h)
    return apply_resolvent(lam, g, jost_bundle(complex(lam), params, h))


def hat_correction(lam, g, params, h=DEFAULT_H):
    """
    Rank-one piece in the f_3(., 0) direction:
    -D''(0) c_0(0) lam / (2 D(lam) W_0(lam)) f_3(x, 0) int g (e^{-mu_2 y} - 1) phi~(y) dy
    with phi~ the normalized primitive of phi and f_3(x, 0) = beta^{-1} phi'(x).
    Evaluated as -D''(0) c_0(0) / (2 W_0 D(lam)/lam^2) times the pairing with
    (e^{-mu_2 y} - 1)/lam, both finite at lam = 0.
    """
    lam = complex(lam)
    x = g.x
    point = solve_cubic(lam)
    profile_primitive = phi_primitive(x, params) / phi_primitive(np.inf, params)
    if lam == 0:
        difference = -x.astype(complex)
    else:
        difference = np.expm1(-point.mu[1] * x) / lam
    pairing = integrate_grid(g, g.values * difference * profile_primitive)
    if abs(lam) < NEAR_ZERO_RADIUS:
        reduced = evaluate_series(evans_series(params, h), lam, 2)
    else:
        reduced = evans(lam, params, h) / lam**2
    prefactor = -evans_second_derivative(params, h) * c0_value(0j, params, h) / (2.0 * point.w0 * reduced)
    f3_zero = profile_arrays(x, params)[1] / beta_constant(params.p)
    return g.with_values(prefactor * pairing * f3_zero)


def free_resolvent(lam, grid, forcing):
    """
    (-d^3 + d - lam)^{-1} F, with a root on the imaginary axis taken as the limit from Re lam > 0.
    """
    point = solve_cubic(lam)
    return grid.with_values(-particular_solution(point, grid.x, forcing, boundary="right"))


def _smoothing_row(tau, bumps, params, kappa, h):
    pair = projection_pair(params, h)
    first = 0.0
    second = 0.0
    for bump in bumps:
        q = pair.apply_Q(bump)
        output = resolvent(complex(0.0, tau), q, params, h)
        first = max(first, sech_weighted_norm(bump, output.values, kappa) / weighted_l1_norm(bump, bump.values))
        derivative = bump.with_values(grid_derivative(bump))
        q = pair.apply_Q(derivative)
        output = resolvent(complex(0.0, tau), q, params, h)
        size = float(integrate_grid(bump, np.abs(bump.values)))
        second = max(second, sech_weighted_norm(bump, output.values, kappa) / size)
    logging.debug(f"tau={tau}: smoothing ratios {first:.4e}, {second:.4e}")
    return tau, first, second


def smoothing_norm_scan(tau_grid, bumps, params, kappa=None, h=DEFAULT_H, mapper=map):
    """
    Rows (tau, sup_bumps ||sech(kappa x) R(i tau) Q g|| / ||g||_{L^{1,1}},
    sup_bumps ||sech(kappa x) R(i tau) Q g'|| / ||g||_{L^1}) and the two overall sups.
    mapper may be an executor's map for parallel scans; row order follows tau_grid.
    """
    check_speed(params)
    if kappa is None:
        kappa = 0.25 * (params.p - 1.0)
    rows = list(
        mapper(
            _smoothing_row,
            list(tau_grid),
            [bumps] * len(tau_grid),
            [params] * len(tau_grid),
            [kappa] * len(tau_grid),
            [h] * len(tau_grid),
        )
    )
    sup_first = max(row[1] for row in rows)
    sup_second = max(row[2] for row in rows)
    logging.info(f"Smoothing scan at p={params.p}, kappa={kappa}: sups {sup_first:.4e}, {sup_second:.4e}")
    return rows, sup_first, sup_second
