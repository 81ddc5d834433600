"""
Jost solutions of the eigenvalue problem u''' - u' + lam u + (V u)' = 0, V = p phi^{p-1}, at c = 1.

Every solution is carried in factored form f = e^{mu x} m with m, m', m'' on the grid,
so that Wronskians and determinants never multiply a huge exponential by a tiny one.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from cubic_spectrum import solve_cubic
from profiles import (
    SolitonParams,
    beta_constant,
    mass_q_derivative,
    phi,
    potential,
    potential_derivative,
)
from utils.errors import ConfigError, ContractionFailure, IllConditionedMatch, LimitNotSettled, NonConvergence
from utils.grid_helpers import (
    FieldGrid,
    exponential_cell_weights,
    exponential_sweep,
    finite_difference,
    make_grid,
)

DEFAULT_H = 0.01
REFINEMENT_TOLERANCE = 1e-4
SETTLE_TOLERANCE = 1e-6
SETTLE_FRACTION = 0.1
FIXED_POINT_TOLERANCE = 1e-10
FIXED_POINT_MAX_ITERATIONS = 300
CONTRACTION_TARGET = 0.5
CONTRACTION_LIMIT = 0.9
ANCHOR_STEP = 0.5
ODE_RTOL = 1e-11
ODE_ATOL = 1e-13
OVERSAMPLE_STEP = 0.05
CONDITION_LIMIT = 1e10
NEAR_ZERO_RADIUS = 0.1
CIRCLE_POINTS = 16
C0_SERIES_RADIUS = 0.02

# base root, side of the anchor, sweep direction per root
_LAYOUTS = {
    "m2tilde": (1, "left", ("forward", "forward", "reverse")),
    "F1": (0, "left", ("forward", "reverse", "reverse")),
    "F2": (1, "right", ("forward", "reverse", "reverse")),
    "F3": (2, "right", ("forward", "forward", "reverse")),
}


@dataclass(frozen=True, eq=False)
class JostSolution:
    """
    f = e^{mu x} m with m held in grid.values and its derivatives alongside.
    """

    grid: FieldGrid
    mu: complex
    dm: np.ndarray = field(repr=False)
    d2m: np.ndarray = field(repr=False)

    @property
    def x(self):
        return self.grid.x

    @property
    def m(self):
        return self.grid.values

    def columns(self):
        """
        Rows (f, f', f'') divided by e^{mu x}.
        """
        mu = self.mu
        return np.array(
            [self.m, self.dm + mu * self.m, self.d2m + 2.0 * mu * self.dm + mu**2 * self.m]
        )

    @property
    def f(self):
        return np.exp(self.mu * self.x) * self.m

    @property
    def df(self):
        return np.exp(self.mu * self.x) * (self.dm + self.mu * self.m)

    @property
    def d2f(self):
        return np.exp(self.mu * self.x) * self.columns()[2]

    def rebase(self, mu):
        """
        Same function written as e^{mu x} m_new. Only safe where e^{(self.mu - mu) x} is moderate.
        """
        shift = self.mu - mu
        e = np.exp(shift * self.x)
        m = e * self.m
        dm = e * (self.dm + shift * self.m)
        d2m = e * (self.d2m + 2.0 * shift * self.dm + shift**2 * self.m)
        return JostSolution(grid=self.grid.with_values(m), mu=mu, dm=dm, d2m=d2m)

    def restrict(self, start, stop):
        """
        Sub-solution on grid indices [start, stop).
        """
        values = self.m[start:stop]
        sub = FieldGrid(xmin=self.x[start], h=self.grid.h, values=values, periodic=False)
        return JostSolution(grid=sub, mu=self.mu, dm=self.dm[start:stop], d2m=self.d2m[start:stop])

    def index_of(self, x0):
        return int(np.argmin(np.abs(self.x - x0)))


@dataclass(frozen=True, eq=False)
class JostBundle:
    lam: complex
    point: object
    m1: JostSolution
    m3: JostSolution
    m2tilde: JostSolution
    F: tuple
    f2: JostSolution
    b13: FieldGrid
    b12tilde: FieldGrid
    b23tilde: FieldGrid
    b12: FieldGrid
    b23: FieldGrid
    evans: complex
    evans_reflected: complex
    cjk: np.ndarray
    c0: complex
    anchors: dict

    @property
    def f1(self):
        return self.m1

    @property
    def f3(self):
        return self.m3


def check_speed(params):
    if params.c != 1.0:
        raise ConfigError(
            f"Jost computations run at c = 1 (got c={params.c}); other speeds follow by scaling.",
            value=params.c,
        )


def default_half_length(p):
    return max(40.0, 36.0 / (p - 1.0))


def jost_grid(p, h=DEFAULT_H):
    return make_grid(default_half_length(p), h=h, periodic=False)


def _refined(x):
    return np.linspace(x[0], x[-1], 2 * len(x) - 1)


def _richardson(coarse, fine, label):
    """
    Combines the second-order results on h and h/2; raises NonConvergence when the
    two disagree by more than the refinement tolerance.
    """
    fine = fine[..., ::2]
    gap = float(np.max(np.abs(fine - coarse)))
    scale = max(1.0, float(np.max(np.abs(fine))))
    if gap > REFINEMENT_TOLERANCE * scale:
        logging.error(f"{label}: h and h/2 solutions differ by {gap:.3e}")
        raise NonConvergence(
            f"{label} is under-resolved on this grid.", value=gap, limit=REFINEMENT_TOLERANCE * scale
        )
    logging.debug(f"{label}: refinement gap {gap:.3e}")
    return (4.0 * fine - coarse) / 3.0


def _march(values, nu, coef, h):
    """
    Right-to-left march of m = 1 + sum_j coef_j I_j with
    I_j(x) = int_x^{end} e^{-nu_j (y - x)} V m dy, V m taken linear on each cell and the
    exponential integrated exactly. Each step is linear in m_k and solved in closed form.
    """
    n = len(values)
    decay = [complex(np.exp(-v * h)) for v in nu]
    coef = [complex(c) for c in coef]
    weights = [exponential_cell_weights(v, h) for v in nu]
    near = [complex(w[0]) for w in weights]
    far = [complex(w[1]) for w in weights]
    implicit = sum(c * w for c, w in zip(coef, near))
    m = np.empty(n, dtype=complex)
    integrals = np.zeros((n, 3), dtype=complex)
    m[-1] = 1.0
    current = [0j, 0j, 0j]
    g_next = complex(values[-1])
    for k in range(n - 2, -1, -1):
        carried = [d * i + w * g_next for d, i, w in zip(decay, current, far)]
        mk = (1.0 + sum(c * t for c, t in zip(coef, carried))) / (1.0 - values[k] * implicit)
        gk = values[k] * mk
        current = [t + w * gk for t, w in zip(carried, near)]
        m[k] = mk
        integrals[k] = current
        g_next = gk
    return m, integrals


def oversampling(point, h):
    """
    Integer factor r such that the march runs at h / r with h max|mu_j - mu_1| / r below
    OVERSAMPLE_STEP.
    """
    spread = float(np.max(np.abs(point.mu_array[:, None] - point.mu_array[None, :])))
    return max(1, int(np.ceil(h * spread / OVERSAMPLE_STEP)))


def _jost_side(point, x, params, side):
    V = potential(x, params)
    h = x[1] - x[0]
    mu = point.mu_array
    a = point.a_array
    if side == "m1":
        nu = mu - mu[0]
        coef = a * mu
        m, integrals = _march(V, nu, coef, h)
        dm = integrals @ (coef * nu)
        d2m = -V * m + integrals @ (coef * nu**2)
    else:
        nu = mu[2] - mu
        coef = -a * mu
        m, integrals = _march(V[::-1], nu, coef, h)
        m, integrals = m[::-1], integrals[::-1]
        dm = -(integrals @ (coef * nu))
        d2m = -V * m + integrals @ (coef * nu**2)
    return np.array([m, dm, d2m])


def _solve_outer(lam, grid, params, side, refine):
    check_speed(params)
    point = solve_cubic(lam)
    x = grid.x
    if refine:
        factor = oversampling(point, grid.h)
        if factor > 1:
            logging.debug(f"{side} at lambda={complex(lam)} marched at h/{factor}")
        work = np.linspace(x[0], x[-1], factor * (len(x) - 1) + 1)
        coarse = _jost_side(point, work, params, side)
        fine = _jost_side(point, _refined(work), params, side)
        coarse = _richardson(coarse, fine, f"{side} at lambda={complex(lam)}")[:, ::factor]
    else:
        coarse = _jost_side(point, x, params, side)
    base = point.mu[0] if side == "m1" else point.mu[2]
    m, dm, d2m = coarse
    return JostSolution(grid=grid.with_values(m), mu=base, dm=dm, d2m=d2m)


def solve_m1(lam, grid, params, refine=True):
    """
    m_1(x) = 1 + int_x^inf q(x - y) V(y) m_1(y) dy with q(x) = sum a_j mu_j e^{(mu_j - mu_1) x},
    marched from the right end. With refine set the h and h/2 marches (oversampled when
    |mu| is large) are combined by Richardson extrapolation; otherwise the raw march on
    the given grid is returned.
    """
    return _solve_outer(lam, grid, params, "m1", refine)


def solve_m3(lam, grid, params, refine=True):
    return _solve_outer(lam, grid, params, "m3", refine)


def neumann_m1(lam, grid, params, max_terms=200, tolerance=1e-14):
    """
    Iterates m <- 1 + K m for the dense matrix K of the m_1 equation under the same
    cell quadrature as the march. Its limit is the raw marching solution; used as an
    independent check on coarse grids.
    """
    check_speed(params)
    point = solve_cubic(lam)
    x = grid.x
    h = grid.h
    V = potential(x, params)
    nu = point.mu_array - point.mu[0]
    coef = point.a_array * point.mu_array
    offsets = x[None, :] - x[:, None]
    upper = offsets >= -0.5 * h
    later = offsets > 0.5 * h
    kernel = np.zeros(offsets.shape, dtype=complex)
    for c, v in zip(coef, nu):
        near, far = exponential_cell_weights(v, h)
        starts = np.where(upper, near * np.exp(-v * np.where(upper, offsets, 0.0)), 0.0)
        starts[:, -1] = 0.0
        ends = np.where(later, far * np.exp(-v * np.where(later, offsets - h, 0.0)), 0.0)
        kernel += c * (starts + ends)
    kernel = kernel * V[None, :]
    m = np.ones(len(x), dtype=complex)
    for term in range(max_terms):
        new = 1.0 + kernel @ m
        change = float(np.max(np.abs(new - m)))
        m = new
        if change <= tolerance:
            logging.debug(f"Neumann series settled after {term + 1} terms")
            return grid.with_values(m)
    logging.warning(f"Neumann series still moving by {change:.3e} after {max_terms} terms")
    return grid.with_values(m)


def _settled_limit(values, side):
    n = len(values)
    width = max(2, int(SETTLE_FRACTION * n))
    window = values[:width] if side == "left" else values[-width:]
    spread = float(np.max(np.abs(window - window[0 if side == "left" else -1])))
    if spread > SETTLE_TOLERANCE:
        logging.error(f"Limit at the {side} end still varies by {spread:.3e}")
        raise LimitNotSettled(
            f"Jost limit at the {side} end has not settled.", value=spread, limit=SETTLE_TOLERANCE
        )
    return complex(values[0] if side == "left" else values[-1])


@lru_cache(maxsize=512)
def evans(lam, params, h=DEFAULT_H):
    """
    D(lam) = lim_{x -> -inf} m_1(x, lam), read at the left grid end.
    """
    sol = solve_m1(complex(lam), jost_grid(params.p, h), params)
    return _settled_limit(sol.m, "left")


# Mixed fixed points and auxiliary solutions


def _sweeps(g, nu, directions, h):
    """
    S_j(x) = int_{s_j}^x e^{nu_j (x - y)} g(y) dy with s_j the left end of the domain
    (forward) or its right end (reverse).
    """
    rows = []
    for v, direction in zip(nu, directions):
        if direction == "forward":
            rows.append(exponential_sweep(g, v, h))
        else:
            rows.append(-exponential_sweep(g, v, h, reverse=True))
    return np.array(rows)


def kernel_norm(point, layout, V, h):
    """
    Sup-norm bound of the fixed-point operator on the domain, sup_x sum_j |a_j mu_j| int |kernel_j| V.
    """
    base, _, directions = _LAYOUTS[layout]
    nu = point.mu_array - point.mu[base]
    weights = np.abs(point.a_array * point.mu_array)
    total = np.zeros(len(V))
    for w, v, direction in zip(weights, nu, directions):
        total += w * np.abs(exponential_sweep(V, v.real, h, reverse=direction == "reverse"))
    return float(np.max(total))


def _fixed_point(point, layout, V, h):
    base, _, directions = _LAYOUTS[layout]
    nu = point.mu_array - point.mu[base]
    coef = point.a_array * point.mu_array
    m = np.ones(len(V), dtype=complex)
    for iteration in range(FIXED_POINT_MAX_ITERATIONS):
        new = 1.0 - coef @ _sweeps(V * m, nu, directions, h)
        change = float(np.max(np.abs(new - m)))
        m = new
        if change <= FIXED_POINT_TOLERANCE * max(1.0, float(np.max(np.abs(m)))):
            break
    else:
        logging.error(f"{layout} fixed point still moving by {change:.3e}")
        raise NonConvergence(
            f"{layout} fixed point did not converge.", value=change, limit=FIXED_POINT_TOLERANCE
        )
    logging.debug(f"{layout} fixed point converged in {iteration + 1} iterations")
    g = V * m
    sweeps = _sweeps(g, nu, directions, h)
    dm = -((coef * nu) @ sweeps)
    d2m = -g - (coef * nu**2) @ sweeps
    return np.array([m, dm, d2m])


def find_anchor(point, layout, x, params):
    """
    Grid index of the anchor: starting at x = 0 and moving away in steps of 0.5 until
    the fixed-point operator on the anchored half-line has norm at most 1/2.
    """
    _, side, _ = _LAYOUTS[layout]
    h = x[1] - x[0]
    V = potential(x, params)
    zero = int(np.argmin(np.abs(x)))
    step = max(1, int(round(ANCHOR_STEP / h)))
    if side == "left":
        candidates = range(zero, 0, -step)
    else:
        candidates = range(zero, len(x) - 1, step)
    best = (np.inf, zero)
    for index in candidates:
        domain = slice(0, index + 1) if side == "left" else slice(index, len(x))
        norm = kernel_norm(point, layout, V[domain], h)
        if norm < best[0]:
            best = (norm, index)
        if norm <= CONTRACTION_TARGET:
            logging.debug(f"{layout} anchor x={x[index]:.2f} with operator norm {norm:.3f}")
            return index, norm
    norm, index = best
    if norm > CONTRACTION_LIMIT:
        logging.error(f"No {layout} anchor with operator norm below {CONTRACTION_LIMIT}; best {norm:.3f}")
        raise ContractionFailure(
            f"{layout} fixed point is not a contraction on this grid.", value=norm, limit=CONTRACTION_LIMIT
        )
    logging.warning(f"{layout} anchor x={x[index]:.2f} only reaches operator norm {norm:.3f}")
    return index, norm


def _continue_ode(mu, params, state, targets):
    """
    Integrates m''' + 3 mu m'' + (3 mu^2 - 1 + V) m' + (V' + mu V) m = 0 from targets[0]
    through the remaining targets.
    """

    def rhs(x, y):
        v = potential(x, params)
        dv = potential_derivative(x, params)
        return [y[1], y[2], -3.0 * mu * y[2] - (3.0 * mu**2 - 1.0 + v) * y[1] - (dv + mu * v) * y[0]]

    if len(targets) == 1:
        return np.asarray(state, dtype=complex)[:, None]
    result = integrate.solve_ivp(
        rhs,
        (targets[0], targets[-1]),
        np.asarray(state, dtype=complex),
        method="DOP853",
        t_eval=targets,
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
    )
    if not result.success:
        logging.error(f"ODE continuation failed: {result.message}")
        raise NonConvergence(f"ODE continuation failed: {result.message}")
    return result.y


def _solve_mixed(layout, lam, grid, params, anchor=None, reach=None):
    check_speed(params)
    point = solve_cubic(lam)
    base, side, _ = _LAYOUTS[layout]
    x = grid.x
    h = grid.h
    if anchor is None:
        index, _ = find_anchor(point, layout, x, params)
    else:
        index = int(np.argmin(np.abs(x - anchor)))
        norm = kernel_norm(
            point, layout, potential(x[: index + 1] if side == "left" else x[index:], params), h
        )
        if norm > CONTRACTION_LIMIT:
            raise ContractionFailure(
                f"{layout} operator norm {norm:.3f} at anchor {anchor}.", value=norm, limit=CONTRACTION_LIMIT
            )

    domain = x[: index + 1] if side == "left" else x[index:]
    coarse = _fixed_point(point, layout, potential(domain, params), h)
    fine_x = _refined(domain)
    fine = _fixed_point(point, layout, potential(fine_x, params), 0.5 * h)
    fixed = _richardson(coarse, fine, f"{layout} at lambda={complex(lam)}")

    if reach is None:
        reach = x[-1] if layout == "m2tilde" else 0.0
    mu = point.mu[base]
    if side == "left":
        stop = int(np.argmin(np.abs(x - reach)))
        targets = x[index : stop + 1]
        continued = _continue_ode(mu, params, fixed[:, -1], targets)
        values = np.concatenate([fixed[:, :-1], continued], axis=1)
        start = 0
    else:
        start = int(np.argmin(np.abs(x - reach)))
        targets = x[start : index + 1][::-1]
        continued = _continue_ode(mu, params, fixed[:, 0], targets)[:, ::-1]
        values = np.concatenate([continued, fixed[:, 1:]], axis=1)
    m, dm, d2m = values
    sub = FieldGrid(xmin=x[start], h=h, values=m, periodic=False)
    return JostSolution(grid=sub, mu=mu, dm=dm, d2m=d2m), float(x[index])


def solve_m2tilde(lam, grid, params, x0=None):
    """
    m~_2 = 1 + T m~_2 on (-inf, x0] (roots 1, 2 integrated from -inf, root 3 from x0),
    then continued to the right end through the third-order ODE.
    """
    solution, _ = _solve_mixed("m2tilde", lam, grid, params, anchor=x0)
    return solution


def solve_F(j, lam, grid, params, reach=None):
    """
    Auxiliary solutions F_j = e^{mu_j x} M_j: M_1 -> 1 at -inf, M_2 and M_3 -> 1 at +inf.
    Each is a fixed point on its anchored half-line continued by ODE to reach (default 0).
    """
    if j not in (1, 2, 3):
        raise ValueError(f"Auxiliary solution index must be 1, 2 or 3, got {j}.")
    solution, _ = _solve_mixed(f"F{j}", lam, grid, params, reach=reach)
    return solution


# Wronskians


def wronskian_bracket(fi, fj):
    return (fj.mu - fi.mu) * fi.m * fj.m + fi.m * fj.dm - fi.dm * fj.m


def wronskian_b(fi, fj):
    """
    b_ij = f_i f_j' - f_i' f_j in factored form
    e^{(mu_i + mu_j) x} [(mu_j - mu_i) m_i m_j + m_i m_j' - m_i' m_j].
    """
    return fi.grid.with_values(np.exp((fi.mu + fj.mu) * fi.x) * wronskian_bracket(fi, fj))


def three_wronskian(solutions, index):
    """
    det of the (f, f', f'') columns of three solutions at one grid index.
    """
    columns = np.array([s.columns()[:, index] for s in solutions]).T
    exponent = sum(s.mu for s in solutions) * solutions[0].x[index]
    return complex(np.exp(exponent) * np.linalg.det(columns))


def m_form_residual(solution, lam, params, window=None):
    """
    Relative residual of m''' + 3 mu m'' + (3 mu^2 - 1 + V) m' + (V' + mu V) m on the interior,
    with m''' from sixth-order differences of m''.
    """
    x = solution.x
    mu = solution.mu
    V = potential(x, params)
    dV = potential_derivative(x, params)
    d3m = finite_difference(solution.d2m, solution.grid.h)
    residual = d3m + 3.0 * mu * solution.d2m + (3.0 * mu**2 - 1.0 + V) * solution.dm + (dV + mu * V) * solution.m
    mask = np.isfinite(residual)
    if window is not None:
        mask &= (x >= window[0]) & (x <= window[1])
    scale = float(np.max(np.abs(solution.m[mask])))
    return float(np.max(np.abs(residual[mask]))) / max(scale, 1e-300)


# Connection coefficients and f_2


@lru_cache(maxsize=128)
def _connection(lam, params, h=DEFAULT_H):
    grid = jost_grid(params.p, h)
    point = solve_cubic(lam)
    m1 = solve_m1(lam, grid, params)
    m3 = solve_m3(lam, grid, params)
    m2t, x0 = _solve_mixed("m2tilde", lam, grid, params)
    F1, x1 = _solve_mixed("F1", lam, grid, params)
    F2, x2 = _solve_mixed("F2", lam, grid, params)
    F3, x3 = _solve_mixed("F3", lam, grid, params)

    zero = m1.index_of(0.0)
    basis = np.array([m1.columns()[:, zero], F2.columns()[:, 0], F3.columns()[:, 0]]).T
    condition = float(np.linalg.cond(basis))
    if condition > CONDITION_LIMIT:
        logging.error(f"Matching matrix condition {condition:.3e} at lambda={lam}")
        raise IllConditionedMatch(
            f"Connection matching is ill-conditioned at lambda={lam}.", value=condition, limit=CONDITION_LIMIT
        )
    targets = np.array([F1.columns()[:, -1], m2t.columns()[:, zero], m3.columns()[:, zero]]).T
    cjk = np.linalg.solve(basis, targets).T
    reflected = _settled_limit(m3.m, "right")
    anchors = {"x0": x0, "x1": x1, "x2": x2, "x3": x3}
    logging.debug(f"Connection at lambda={lam}: cond {condition:.2e}, anchors {anchors}")
    return point, m1, m3, m2t, (F1, F2, F3), cjk, reflected, anchors


def circle_points(radius=NEAR_ZERO_RADIUS, count=CIRCLE_POINTS):
    """
    lam_m = radius e^{2 pi i m / count}, m = 0..count-1.
    """
    return radius * np.exp(2j * np.pi * np.arange(count) / count)


def taylor_from_circle(samples, radius=NEAR_ZERO_RADIUS):
    """
    Taylor coefficients at lam = 0 of a function analytic on |lam| <= radius, from its
    samples at circle_points (discrete Cauchy formula). Samples may carry trailing axes.
    Coefficient k is exact up to aliasing from coefficient k + count.
    """
    samples = np.asarray(samples, dtype=complex)
    count = samples.shape[0]
    scale = (radius ** np.arange(count)).reshape((count,) + (1,) * (samples.ndim - 1))
    return np.fft.fft(samples, axis=0) / count / scale


def evaluate_series(coefficients, lam, start=0):
    """
    sum_{k >= start} n_k lam^{k - start}; coefficients may carry trailing axes.
    """
    coefficients = np.asarray(coefficients)
    powers = complex(lam) ** np.arange(len(coefficients) - start)
    return np.tensordot(powers, coefficients[start:], axes=(0, 0))


@lru_cache(maxsize=32)
def c0_series(params, h=DEFAULT_H):
    """
    Taylor coefficients at 0 of c_23(lam) and c_33(lam) = D(-lam), read off the connection
    matrices on the circle |lam| = 0.1.
    """
    c23 = []
    c33 = []
    for lam in circle_points():
        *_, cjk, _, _ = _connection(complex(lam), params, h)
        c23.append(cjk[1, 2])
        c33.append(cjk[2, 2])
    gamma = taylor_from_circle(c23)
    delta = taylor_from_circle(c33)
    logging.debug(
        f"c0 series at p={params.p}: |c_23(0)|={abs(gamma[0]):.2e}, "
        f"|c_33(0)|={abs(delta[0]):.2e}, |c_33'(0)|={abs(delta[1]):.2e}"
    )
    return gamma, delta


def c0_value(lam, params, h=DEFAULT_H):
    """
    c_0 = lam c_23 / c_33, which removes the F_3 part of lam f~_2 - c_0 f_3. Since c_23(0) = 0
    and c_33 = D(-lam) vanishes to second order, |lam| < 0.02 uses the quotient
    sum_{k>=1} gamma_k lam^{k-1} / sum_{k>=2} delta_k lam^{k-2} of the Taylor series.
    """
    lam = complex(lam)
    if abs(lam) >= C0_SERIES_RADIUS:
        *_, cjk, _, _ = _connection(lam, params, h)
        return complex(lam * cjk[1, 2] / cjk[2, 2])
    gamma, delta = c0_series(params, h)
    return complex(evaluate_series(gamma, lam, 1) / evaluate_series(delta, lam, 2))


def _combine(terms, grid):
    m = sum(c * s.m for c, s in terms)
    dm = sum(c * s.dm for c, s in terms)
    d2m = sum(c * s.d2m for c, s in terms)
    return JostSolution(grid=grid.with_values(m), mu=terms[0][1].mu, dm=dm, d2m=d2m)


def build_f2(lam, params, h=DEFAULT_H):
    """
    f_2 = lam f~_2 - c_0 f_3 for x <= 0 and its expansion over f_1, F_2 for x >= 0,
    held as e^{mu_2 x} m_2.
    """
    lam = complex(lam)
    point, m1, m3, m2t, F, cjk, _, _ = _connection(lam, params, h)
    c0 = c0_value(lam, params, h)
    mu2 = point.mu[1]
    zero = m1.index_of(0.0)
    n = len(m1.m)
    left = _combine(
        [(lam, m2t.restrict(0, zero + 1)), (-c0, m3.restrict(0, zero + 1).rebase(mu2))],
        m2t.restrict(0, zero + 1).grid,
    )
    right_m1 = m1.restrict(zero, n).rebase(mu2)
    right = _combine(
        [(lam * cjk[1, 0] - c0 * cjk[2, 0], right_m1), (lam * cjk[1, 1] - c0 * cjk[2, 1], F[1])],
        right_m1.grid,
    )
    m = np.concatenate([left.m[:-1], right.m])
    dm = np.concatenate([left.dm[:-1], right.dm])
    d2m = np.concatenate([left.d2m[:-1], right.d2m])
    grid = m1.grid.with_values(m)
    return JostSolution(grid=grid, mu=mu2, dm=dm, d2m=d2m), cjk, c0


def connection_and_f2(lam, params, h=DEFAULT_H):
    check_speed(params)
    f2, cjk, c0 = build_f2(lam, params, h)
    return cjk, c0, f2


@lru_cache(maxsize=128)
def jost_bundle(lam, params, h=DEFAULT_H):
    check_speed(params)
    lam = complex(lam)
    point, m1, m3, m2t, F, cjk, reflected, anchors = _connection(lam, params, h)
    f2, _, c0 = build_f2(lam, params, h)
    residual = abs(lam * cjk[1, 2] - c0 * cjk[2, 2])
    if residual > 1e-8 * max(1.0, abs(lam)):
        logging.warning(f"F_3 component of f_2 is {residual:.3e} at lambda={lam}")
    return JostBundle(
        lam=lam,
        point=point,
        m1=m1,
        m3=m3,
        m2tilde=m2t,
        F=F,
        f2=f2,
        b13=wronskian_b(m1, m3),
        b12tilde=wronskian_b(m1, m2t),
        b23tilde=wronskian_b(m2t, m3),
        b12=wronskian_b(m1, f2),
        b23=wronskian_b(f2, m3),
        evans=_settled_limit(m1.m, "left"),
        evans_reflected=reflected,
        cjk=cjk,
        c0=c0,
        anchors=anchors,
    )


def bundle_wronskian(bundle, x=0.0):
    return three_wronskian((bundle.m1, bundle.f2, bundle.m3), bundle.m1.index_of(x))


def tilde_wronskian(bundle, x=0.0):
    """
    W[f_1, f~_2, f_3] = D(lam) W_0(lam).
    """
    return three_wronskian((bundle.m1, bundle.m2tilde, bundle.m3), bundle.m1.index_of(x))


def wronskian_identity_check(lam, params, points=(-5.0, 0.0, 5.0)):
    """
    Returns W(lam) at x = 0 and the relative residual |W - lam D W_0| / (|lam D W_0| + 1e-30).
    """
    bundle = jost_bundle(complex(lam), params)
    values = [bundle_wronskian(bundle, x) for x in points]
    W = values[len(values) // 2]
    drift = max(abs(v - W) for v in values) / max(abs(W), 1e-300)
    logging.debug(f"Wronskian at lambda={lam}: {W}, relative drift over x {drift:.3e}")
    expected = bundle.lam * bundle.evans * bundle.point.w0
    residual = abs(W - expected) / (abs(expected) + 1e-30)
    return W, residual


def wronskian_drift(lam, params, points=(-5.0, 0.0, 5.0)):
    bundle = jost_bundle(complex(lam), params)
    values = [bundle_wronskian(bundle, x) for x in points]
    return max(abs(v - values[0]) for v in values) / max(abs(values[0]), 1e-300)


# Expansions at lam = 0


@lru_cache(maxsize=32)
def evans_series(params, h=DEFAULT_H):
    """
    Taylor coefficients d_0..d_15 of D at 0 from D on the circle |lam| = 0.1.
    """
    check_speed(params)
    return taylor_from_circle([evans(complex(lam), params, h) for lam in circle_points()])


def evans_second_derivative(params, h=DEFAULT_H):
    return complex(2.0 * evans_series(params, h)[2])


def expected_evans_second_derivative(p):
    """
    D''(0) = q'(1) / beta^2, with q'(1) = <Lambda_p phi, phi> and beta the tail constant.
    """
    return mass_q_derivative(SolitonParams(p=p)) / beta_constant(p) ** 2


def closed_form_evans(lam, p):
    """
    D(lam) = ((mu_1 + 1)/(mu_1 - 1))^2, exact for p = 2 and p = 3. D -> 1 only like
    |lam|^{-1/3} along the imaginary axis.
    """
    if p not in (2.0, 3.0):
        raise ConfigError(f"The closed-form Evans function exists for p = 2 and p = 3, got p={p}.", value=p)
    mu1 = solve_cubic(lam).mu[0]
    return complex(((mu1 + 1.0) / (mu1 - 1.0)) ** 2)


def fit_b0(params, step=0.02, h=DEFAULT_H):
    """
    Fits d_lam^2 b_13(x, 0) = 2 D''(0) + b_0 phi(x) by least squares in b_0 and reports
    a_0 = lim_{x -> -inf} d_lam^2 b_13(x, 0) next to 2 D''(0). The second difference is taken
    on the bracket e^{mu_2 x} b_13, which has the same second derivative at 0 because
    b_13 and d_lam b_13 vanish there.
    """
    check_speed(params)
    grid = jost_grid(params.p, h)

    def bracket(lam):
        return wronskian_bracket(solve_m1(lam, grid, params), solve_m3(lam, grid, params))

    second = -(bracket(1j * step) - 2.0 * bracket(0j) + bracket(-1j * step)) / step**2
    a0 = 2.0 * evans_second_derivative(params, h)
    profile = phi(grid.x, params)
    remainder = second - a0
    b0 = complex(np.sum(profile * remainder) / np.sum(profile**2))
    residual = float(np.max(np.abs(remainder - b0 * profile)))
    return {"a0": a0, "a0_left_limit": complex(second[0]), "b0": b0, "fit_residual": residual}


def dual_identity_residuals(params, window=(-10.0, 5.0), step=0.02, h=DEFAULT_H):
    """
    At lam = 0, b~_{j2} = (-1)^{(j-1)/2} beta^{-1} <Lambda_p phi, phi> eta_2 for j = 1, 3.
    Returns the sup residual of each on the window together with the sup norm of
    d_lam b~_{j2}(., 0) (central difference on the imaginary axis), which is reported only.
    Far to the left f_1 = e^{-x} m_1 multiplies the residual of D(0) = 0 by e^{|x|}, which
    bounds the useful window.
    """
    check_speed(params)

    def solutions(lam):
        _, m1, m3, m2t, *_ = _connection(lam, params, h)
        return {1: m1, 3: m3}, m2t

    at_zero, m2t = solutions(0j)
    plus, m2t_plus = solutions(1j * step)
    minus, m2t_minus = solutions(-1j * step)
    x = m2t.x
    mask = (x >= window[0]) & (x <= window[1])
    dq = mass_q_derivative(params)
    eta2 = phi(x, params) / dq
    report = {}
    for j in (1, 3):
        sign = (-1.0) ** ((j - 1) // 2)
        tilde = wronskian_b(at_zero[j], m2t).values
        expected = sign * dq * eta2 / beta_constant(params.p)
        report[f"j{j}"] = float(np.max(np.abs(tilde - expected)[mask]))
        derivative = (
            wronskian_b(plus[j], m2t_plus).values - wronskian_b(minus[j], m2t_minus).values
        ) / (2j * step)
        report[f"j{j}_derivative_sup"] = float(np.max(np.abs(derivative)[mask]))
    return report
