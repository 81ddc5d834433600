import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, signal

from .errors import GridTooSmall

MIN_POINTS = 16
CELL_SERIES_RADIUS = 0.1
CELL_SERIES_TERMS = 12

# Central stencils of sixth order, keyed by derivative order.
_STENCILS = {
    1: np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60]),
    2: np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90]),
    3: np.array(
        [-7 / 240, 3 / 10, -169 / 120, 61 / 30, 0.0, -61 / 30, 169 / 120, -3 / 10, 7 / 240]
    ),
}


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """
    Uniform 1-D samples x_k = xmin + k*h. Periodic grids cover [xmin, xmin + n*h),
    closed grids include both end points.
    """

    xmin: float
    h: float
    values: np.ndarray = field(repr=False)
    periodic: bool = True

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError(f"Grid spacing must be positive, got {self.h}.")
        if len(self.values) < MIN_POINTS:
            raise GridTooSmall(
                f"Grid needs at least {MIN_POINTS} points, got {len(self.values)}.",
                value=len(self.values),
                limit=MIN_POINTS,
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Grid samples must be finite.")

    @property
    def n(self):
        return len(self.values)

    @property
    def x(self):
        return self.xmin + self.h * np.arange(self.n)

    @property
    def xmax(self):
        return self.xmin + self.h * (self.n - 1)

    def with_values(self, values):
        return replace(self, values=np.asarray(values))


def make_grid(L, h=None, n=None, periodic=True, values=None):
    """
    Builds a grid on [-L, L). Periodic grids take either n or h (h is rounded so that
    n*h = 2L). Closed grids are symmetric with an odd point count and contain x = 0.
    """
    if periodic:
        if n is None:
            n = int(round(2 * L / h))
        spacing = 2 * L / n
    else:
        half = int(round(L / h))
        n = 2 * half + 1
        spacing = L / half
    if values is None:
        values = np.zeros(n)
    logging.debug(f"Grid on [-{L}, {L}] with n={n}, h={spacing:.3e}, periodic={periodic}")
    return FieldGrid(xmin=-L, h=spacing, values=np.asarray(values), periodic=periodic)


def wavenumbers(n, h):
    return 2 * np.pi * np.fft.fftfreq(n, d=h)


def spectral_derivative(values, h, order=1):
    """
    Fourier derivative of periodic samples. The Nyquist mode is dropped for odd
    orders so that real input stays real.
    """
    values = np.asarray(values)
    k = wavenumbers(len(values), h)
    if order % 2 == 1 and len(values) % 2 == 0:
        k[len(values) // 2] = 0.0
    result = np.fft.ifft((1j * k) ** order * np.fft.fft(values))
    if np.isrealobj(values):
        return result.real
    return result


def ramp_derivative(values, x, order=1):
    """
    Derivative of samples that tend to different constants at the two ends. A tanh
    ramp between the end values is removed, the remainder is differentiated
    spectrally and the ramp derivative is added back in closed form.
    """
    values = np.asarray(values)
    x = np.asarray(x)
    h = x[1] - x[0]
    width = (x[-1] - x[0]) / 40.0
    centre = 0.5 * (x[-1] + x[0])
    left, right = values[0], values[-1]
    jump = 0.5 * (right - left)
    t = np.tanh((x - centre) / width)
    s2 = 1.0 - t**2
    ramp = 0.5 * (right + left) + jump * t
    if order == 1:
        ramp_d = jump * s2 / width
    elif order == 2:
        ramp_d = -2.0 * jump * s2 * t / width**2
    elif order == 3:
        ramp_d = jump * s2 * (6.0 * t**2 - 2.0) / width**3
    else:
        raise ValueError(f"Unsupported derivative order {order}.")
    return spectral_derivative(values - ramp, h, order) + ramp_d


def grid_derivative(grid, values=None, order=1):
    """
    Spectral derivative on periodic grids; ramp-corrected spectral derivative on
    closed grids, whose end values need not agree.
    """
    values = grid.values if values is None else np.asarray(values)
    if grid.periodic:
        return spectral_derivative(values, grid.h, order)
    return ramp_derivative(values, grid.x, order)


def finite_difference(values, h, order=1):
    """
    Sixth-order central differences. End points without a full stencil are NaN.
    """
    stencil = _STENCILS[order]
    half = len(stencil) // 2
    values = np.asarray(values)
    result = np.full(values.shape, np.nan, dtype=np.result_type(values, float))
    interior = np.zeros(len(values) - 2 * half, dtype=result.dtype)
    for offset, weight in zip(range(-half, half + 1), stencil):
        if weight != 0.0:
            interior += weight * values[half + offset : len(values) - half + offset]
    result[half:-half] = interior
    return result / h**order


def integrate_grid(grid, values=None):
    """
    Integral of the samples: the periodic rule on periodic grids, composite trapezoid
    on closed grids.
    """
    values = grid.values if values is None else np.asarray(values)
    if grid.periodic:
        return grid.h * np.sum(values)
    return integrate.trapezoid(values, dx=grid.h)


def inner(grid, u, v):
    """
    Bilinear pairing <u, v> = integral of u*v on the grid.
    """
    return integrate_grid(grid, np.asarray(u) * np.asarray(v))


def l2_norm(grid, values):
    return float(np.sqrt(integrate_grid(grid, np.abs(values) ** 2).real))


def cumulative(values, h, from_right=False):
    """
    Cumulative Simpson integral from the left end (or from the right end when
    from_right is set, returning the integral from x to the right end).
    """
    values = np.asarray(values)
    if from_right:
        return cumulative(values[::-1], h)[::-1]
    if np.iscomplexobj(values):
        return cumulative(values.real, h) + 1j * cumulative(values.imag, h)
    return integrate.cumulative_simpson(values, dx=h, initial=0.0)


def exponential_cell_weights(nu, h):
    """
    Weights (w_near, w_far) with int_0^h e^{-nu t} g(t) dt = w_near g(0) + w_far g(h)
    for linear g; at nu = 0 they are the trapezoid weights h/2.
    """
    z = np.asarray(nu * h, dtype=complex)
    small = np.abs(z) < CELL_SERIES_RADIUS
    safe = np.where(small, 1.0, z)
    first = (1.0 - np.exp(-safe)) / safe
    second = (1.0 - np.exp(-safe) * (1.0 + safe)) / safe**2
    series_first = sum((-z) ** n / math.factorial(n + 1) for n in range(CELL_SERIES_TERMS))
    series_second = sum((-z) ** n / (math.factorial(n) * (n + 2)) for n in range(CELL_SERIES_TERMS))
    first = np.where(small, series_first, first)
    second = np.where(small, series_second, second)
    return h * (first - second), h * second


def exponential_sweep(g, nu, h, reverse=False):
    """
    J(x_k) = integral from x_0 to x_k of e^{nu (x_k - y)} g(y) dy with g linear on each
    cell, through the recursion J_k = d J_{k-1} + w_near g_k + w_far g_{k-1}, d = e^{nu h}.
    With reverse set, the integral runs from x_k to the right end with kernel
    e^{nu (x_k - y)}.
    """
    g = np.asarray(g, dtype=complex)
    if reverse:
        return exponential_sweep(g[::-1], -nu, h)[::-1]
    d = np.exp(nu * h)
    near, far = exponential_cell_weights(-nu, h)
    forcing = np.empty_like(g)
    forcing[0] = 0.0
    forcing[1:] = near * g[1:] + far * g[:-1]
    return signal.lfilter([1.0], [1.0, -d], forcing)


def fourier_shift(values, h, shift):
    """
    Returns samples of u(x + shift) by a Fourier phase factor.
    """
    values = np.asarray(values)
    k = wavenumbers(len(values), h)
    if len(values) % 2 == 0:
        k[len(values) // 2] = 0.0
    shifted = np.fft.ifft(np.exp(1j * k * shift) * np.fft.fft(values))
    if np.isrealobj(values):
        return shifted.real
    return shifted


def gauss_primitive(func, x, origin=0.0, nodes=8):
    """
    Primitive F(x_k) = integral of func from origin to x_k on a uniform grid, by
    Gauss-Legendre quadrature on each cell.
    """
    x = np.asarray(x)
    t, w = np.polynomial.legendre.leggauss(nodes)
    left, right = x[:-1], x[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    samples = func(mid[:, None] + half[:, None] * t[None, :])
    cells = half * (samples @ w)
    running = np.concatenate([[0.0], np.cumsum(cells)])
    anchor = int(np.argmin(np.abs(x - origin)))
    a, b = origin, x[anchor]
    offset = 0.5 * (b - a) * (func(0.5 * (b + a) + 0.5 * (b - a) * t) @ w)
    return running - running[anchor] + offset
