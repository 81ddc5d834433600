"""
Modulation of a solution near the soliton family: u = phi_c(. - D) + v(. - D) with
v orthogonal to zeta_B eta_1[c] and eta_2[c].
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from diagnostics import WeightConfig, discrete_mode_ratio, zeta
from profiles import SolitonParams, kernel_functions, phi
from utils.errors import NewtonDivergence, TubeExit
from utils.grid_helpers import fourier_shift, grid_derivative, inner, l2_norm

NEWTON_TOLERANCE = 1e-10
NEWTON_MAX_ITERATIONS = 50
SPEED_STEP = 1e-6
TUBE_RADIUS = 0.2
MODULATION_COLUMNS = ("t", "c", "D", "residual_1", "residual_2", "cdot", "Ddot_minus_c", "mode_ratio")


@dataclass(frozen=True, eq=False)
class ModulationState:
    t: float
    c: float
    D: float
    v: object
    ortho_residuals: tuple
    cdot: float = 0.0
    Ddot_minus_c: float = 0.0
    jacobian: np.ndarray = None
    scaled_jacobian: np.ndarray = None
    iterations: int = 0
    mode_ratio: float = float("nan")


def _pairings(shifted, grid, c, B, p, kind):
    """
    F(D, c) for the already translated field u(. + D).
    """
    params = SolitonParams(p=p, c=c, nonlinearity=kind)
    kernel = kernel_functions(grid, params)
    v = shifted - phi(grid.x, params)
    weight = zeta(grid.x, B) * kernel.eta1.values
    return np.array([inner(grid, v, weight), inner(grid, v, kernel.eta2.values)]), kernel


def _jacobian(u, du, D, c, B, p, kind):
    """
    Columns d/dD and d/dc of F; the c-column by central differences.
    """
    shifted = fourier_shift(u.values, u.h, D)
    shifted_du = fourier_shift(du, u.h, D)
    kernel = kernel_functions(u, SolitonParams(p=p, c=c, nonlinearity=kind))
    weight = zeta(u.x, B) * kernel.eta1.values
    d_D = np.array([inner(u, shifted_du, weight), inner(u, shifted_du, kernel.eta2.values)])
    plus, _ = _pairings(shifted, u, c + SPEED_STEP, B, p, kind)
    minus, _ = _pairings(shifted, u, c - SPEED_STEP, B, p, kind)
    d_c = (plus - minus) / (2.0 * SPEED_STEP)
    return np.column_stack([d_D, d_c])


def scale_jacobian(jacobian, B):
    """
    Jacobian in the rescaled translation D~ = B^{-1/2}(D - D_0).
    """
    left = np.diag([B**-0.5, 1.0])
    right = np.diag([B**0.5, 1.0])
    return left @ jacobian @ right


def h1_norm(grid, values):
    du = grid_derivative(grid, values)
    return float(np.sqrt(l2_norm(grid, values) ** 2 + l2_norm(grid, du) ** 2))


def initial_guess(u):
    return 1.0, float(u.x[int(np.argmax(u.values))])


def decompose(u, B=20.0, guess=None, p=2.0, kind="signed", t=0.0):
    """
    Solves the two orthogonality conditions for (c, D) by Newton's method from guess
    (the position of the peak and c = 1 by default). Raises NewtonDivergence after
    50 iterations or when c leaves (0, inf), TubeExit when ||v||_{H^1} exceeds 0.2.
    """
    c, D = guess if guess is not None else initial_guess(u)
    scale = l2_norm(u, u.values)
    du = grid_derivative(u, u.values)
    for iteration in range(1, NEWTON_MAX_ITERATIONS + 1):
        residual, _ = _pairings(fourier_shift(u.values, u.h, D), u, c, B, p, kind)
        jacobian = _jacobian(u, du, D, c, B, p, kind)
        step = linalg.solve(jacobian, residual)
        D -= step[0]
        c -= step[1]
        if c <= 0.0 or not np.isfinite(c):
            logging.error(f"Newton left the soliton family: c={c} at iteration {iteration}")
            raise NewtonDivergence(f"Speed left (0, inf) at t={t}.", value=c)
        residual, _ = _pairings(fourier_shift(u.values, u.h, D), u, c, B, p, kind)
        if np.max(np.abs(residual)) <= NEWTON_TOLERANCE * scale:
            break
    else:
        logging.error(f"Newton residual {np.max(np.abs(residual)):.3e} after {NEWTON_MAX_ITERATIONS} iterations")
        raise NewtonDivergence(
            f"Modulation did not converge at t={t}.",
            value=float(np.max(np.abs(residual))),
            limit=NEWTON_TOLERANCE * scale,
        )

    params = SolitonParams(p=p, c=c, nonlinearity=kind)
    v = u.with_values(fourier_shift(u.values, u.h, D) - phi(u.x, params))
    distance = h1_norm(v, v.values)
    if distance > TUBE_RADIUS:
        logging.error(f"||v||_H1 = {distance:.3e} at t={t}")
        raise TubeExit(f"Solution left the soliton tube at t={t}.", value=distance, limit=TUBE_RADIUS)
    jacobian = _jacobian(u, du, D, c, B, p, kind)
    logging.debug(f"t={t}: c={c:.12f}, D={D:.12f} after {iteration} Newton steps")
    return ModulationState(
        t=t,
        c=float(c),
        D=float(D),
        v=v,
        ortho_residuals=(float(residual[0]), float(residual[1])),
        jacobian=jacobian,
        scaled_jacobian=scale_jacobian(jacobian, B),
        iterations=iteration,
    )


def recompose(state, p=2.0, kind="signed"):
    """
    phi_c(. - D) + v(. - D) on the grid of v.
    """
    v = state.v
    params = SolitonParams(p=p, c=state.c, nonlinearity=kind)
    return v.with_values(fourier_shift(phi(v.x, params) + v.values, v.h, -state.D))


def recomposition_error(state, u, p=2.0, kind="signed"):
    return float(np.max(np.abs(recompose(state, p, kind).values - u.values)))


def track(trajectory, B=20.0, weights=None):
    """
    Decomposes every frame of an evolver trajectory, warm-starting Newton from the
    previous frame, and fills in c', D' - c and the discrete-mode ratio. Frames are
    in the frame moving with speed c0, so D' - c is D'_frame + c0 - c.
    """
    cfg = trajectory.config
    if weights is None:
        weights = WeightConfig(p=cfg.p, A=max(400.0, B**2), B=B)
    states = []
    guess = None
    for t, u in zip(trajectory.times, trajectory.frames):
        state = decompose(u, B, guess, cfg.p, cfg.f_variant, t)
        states.append(state)
        guess = (state.c, state.D)

    times = np.asarray(trajectory.times)
    cs = np.array([s.c for s in states])
    Ds = np.array([s.D for s in states])
    if len(states) > 1:
        cdot = np.gradient(cs, times)
        ddot = np.gradient(Ds, times)
    else:
        cdot = np.zeros(len(states))
        ddot = cs - cfg.c0
    tracked = []
    for state, cd, dd in zip(states, cdot, ddot):
        ddot_minus_c = float(dd + cfg.c0 - state.c)
        ratio = discrete_mode_ratio(cd, ddot_minus_c, state.v, weights)
        tracked.append(replace(state, cdot=float(cd), Ddot_minus_c=ddot_minus_c, mode_ratio=ratio))
    if tracked:
        logging.info(
            f"Tracked {len(tracked)} frames: c from {tracked[0].c:.8f} to {tracked[-1].c:.8f}, "
            f"max mode ratio {max((s.mode_ratio for s in tracked if np.isfinite(s.mode_ratio)), default=0.0):.3e}"
        )
    return tracked


def modulation_rows(states):
    return [
        (s.t, s.c, s.D, s.ortho_residuals[0], s.ortho_residuals[1], s.cdot, s.Ddot_minus_c, s.mode_ratio)
        for s in states
    ]
