"""
gKdV on a periodic box, u_t = -(u_xx + f(u))_x + c0 u_x in the frame moving with speed c0.

The Airy part is integrated exactly in Fourier space and the nonlinearity by the
fourth-order exponential Runge-Kutta scheme of Cox-Matthews with Kassam-Trefethen
contour-integral coefficients.
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from profiles import NONLINEARITIES, energy, mass, power_nonlinearity
from utils.errors import BlowupDetected, ConfigError, ResolutionLoss
from utils.output_helpers import write_snapshot

BLOWUP_FACTOR = 1e3
TAIL_LIMIT = 1e-6
INITIAL_TAIL_LIMIT = 1e-10
CONTOUR_POINTS = 32
BOUNDARY_WINDOW = 0.9


@dataclass(frozen=True)
class EvolverConfig:
    L: float = 40.0
    n: int = 1024
    dt: float = 1e-3
    p: float = 2.0
    f_variant: str = "signed"
    t_end: float = 10.0
    c0: float = 0.0
    save_every: int = 100
    wrap_tolerance: float = 1e-6

    def __post_init__(self):
        if self.n < 256 or self.n & (self.n - 1):
            raise ConfigError(f"Mode count must be a power of two >= 256, got {self.n}.", value=self.n)
        if not 1.0 < self.p < 5.0:
            raise ConfigError(f"Exponent p must lie in (1, 5), got {self.p}.", value=self.p)
        if self.f_variant not in NONLINEARITIES:
            raise ConfigError(f"Unknown nonlinearity '{self.f_variant}'.")
        if self.dt == 0.0 or self.t_end * self.dt < 0.0:
            raise ConfigError(f"Time step {self.dt} must be nonzero with the sign of t_end={self.t_end}.")
        if self.save_every < 1:
            raise ConfigError(f"save_every must be positive, got {self.save_every}.", value=self.save_every)

    @property
    def steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class ConservedDiagnostics:
    times: list = field(default_factory=list)
    Q: list = field(default_factory=list)
    E: list = field(default_factory=list)
    gauge: list = field(default_factory=list)

    def record(self, t, q, e, g):
        self.times.append(t)
        self.Q.append(q)
        self.E.append(e)
        self.gauge.append(g)

    def relative_drift(self, name="Q"):
        values = np.asarray(getattr(self, name))
        return float(np.max(np.abs(values - values[0])) / max(abs(values[0]), 1e-300))


@dataclass
class Trajectory:
    frames: list
    diagnostics: ConservedDiagnostics
    config: EvolverConfig
    truncated: bool = False

    @property
    def times(self):
        return self.diagnostics.times


def rfft_wavenumbers(n, h):
    """
    Wavenumbers of the real FFT with the Nyquist mode zeroed, so that odd multipliers
    keep real fields real.
    """
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=h)
    if n % 2 == 0:
        k[-1] = 0.0
    return k


def linear_symbol(k, c0=0.0):
    return 1j * (k**3 + c0 * k)


def free_propagator(u, t, c0=0.0):
    """
    e^{-t d^3} u (and the frame drift for c0 != 0): mode k multiplied by exp(i (k^3 + c0 k) t).
    """
    k = rfft_wavenumbers(u.n, u.h)
    spectrum = np.fft.rfft(u.values) * np.exp(linear_symbol(k, c0) * t)
    return u.with_values(np.fft.irfft(spectrum, n=u.n))


class ETDRK4Stepper:
    """
    Fourth-order exponential Runge-Kutta for v_t = L v + N(v), L diagonal and imaginary.
    """

    def __init__(self, n, h, dt, p, f_variant="signed", c0=0.0, contour_points=CONTOUR_POINTS):
        self.n = n
        self.dt = dt
        self.p = p
        self.f_variant = f_variant
        self.k = rfft_wavenumbers(n, h)
        lin = linear_symbol(self.k, c0)
        self.exp_full = np.exp(dt * lin)
        self.exp_half = np.exp(0.5 * dt * lin)
        # Full circle of radius one around each dt*L; the symbol is imaginary, so no
        # conjugate symmetry halves the contour.
        roots = np.exp(2j * np.pi * (np.arange(contour_points) + 0.5) / contour_points)
        lr = dt * lin[:, None] + roots[None, :]
        exp_lr = np.exp(lr)
        self.coeff_half = dt * ((np.exp(0.5 * lr) - 1.0) / lr).mean(axis=1)
        self.coeff_f1 = dt * ((-4.0 - lr + exp_lr * (4.0 - 3.0 * lr + lr**2)) / lr**3).mean(axis=1)
        self.coeff_f2 = dt * ((2.0 + lr + exp_lr * (lr - 2.0)) / lr**3).mean(axis=1)
        self.coeff_f3 = dt * ((-4.0 - 3.0 * lr - lr**2 + exp_lr * (4.0 - lr)) / lr**3).mean(axis=1)

    def nonlinear(self, spectrum):
        u = np.fft.irfft(spectrum, n=self.n)
        return -1j * self.k * np.fft.rfft(power_nonlinearity(u, self.p, self.f_variant))

    def step(self, v):
        n_v = self.nonlinear(v)
        a = self.exp_half * v + self.coeff_half * n_v
        n_a = self.nonlinear(a)
        b = self.exp_half * v + self.coeff_half * n_a
        n_b = self.nonlinear(b)
        c = self.exp_half * a + self.coeff_half * (2.0 * n_b - n_v)
        n_c = self.nonlinear(c)
        return (
            self.exp_full * v
            + self.coeff_f1 * n_v
            + 2.0 * self.coeff_f2 * (n_a + n_b)
            + self.coeff_f3 * n_c
        )


def spectral_tail(spectrum):
    """
    Largest modulus over the upper third of the modes relative to the largest overall.
    """
    magnitude = np.abs(spectrum)
    cut = 2 * len(magnitude) // 3
    return float(np.max(magnitude[cut:]) / max(np.max(magnitude), 1e-300))


def boundary_gauge(u, window=BOUNDARY_WINDOW):
    """
    Fraction of the L^2 mass in |x| > window * L, the watch for radiation wrapping round the box.
    """
    outside = np.abs(u.x) > window * abs(u.xmin)
    total = np.sum(u.values**2)
    return float(np.sum(u.values[outside] ** 2) / max(total, 1e-300))


def evolve(u0, cfg, snapshot_dir=None):
    """
    Integrates from u0 to t_end and returns the frames every save_every steps together
    with Q, E and the boundary gauge at those times. Stops early, with a warning and
    truncated set, when the gauge exceeds wrap_tolerance.
    """
    if not u0.periodic:
        raise ConfigError("The evolver runs on periodic grids.")
    spectrum = np.fft.rfft(u0.values)
    tail = spectral_tail(spectrum)
    if tail > INITIAL_TAIL_LIMIT:
        logging.error(f"Initial spectral tail {tail:.3e} exceeds {INITIAL_TAIL_LIMIT}")
        raise ResolutionLoss("Initial data is not resolved on this grid.", value=tail, limit=INITIAL_TAIL_LIMIT)

    stepper = ETDRK4Stepper(u0.n, u0.h, cfg.dt, cfg.p, cfg.f_variant, cfg.c0)
    peak0 = float(np.max(np.abs(u0.values)))
    diagnostics = ConservedDiagnostics()
    frames = []
    truncated = False

    def checkpoint(t, u):
        frames.append(u)
        diagnostics.record(t, mass(u, u.values), energy(u, u.values, cfg.p, cfg.f_variant), boundary_gauge(u))
        if snapshot_dir is not None:
            write_snapshot(os.path.join(snapshot_dir, f"frame_{len(frames) - 1:06d}.bin"), u.values, -u.xmin, t)

    checkpoint(0.0, u0)
    logging.info(f"Evolving {cfg.steps} steps of dt={cfg.dt} on n={u0.n}, L={-u0.xmin}, p={cfg.p}")
    for step in range(1, cfg.steps + 1):
        spectrum = stepper.step(spectrum)
        if step % cfg.save_every and step != cfg.steps:
            continue
        t = step * cfg.dt
        u = u0.with_values(np.fft.irfft(spectrum, n=u0.n))
        peak = float(np.max(np.abs(u.values)))
        if not np.isfinite(peak) or peak > BLOWUP_FACTOR * peak0:
            logging.error(f"max|u| = {peak:.3e} at t={t}")
            raise BlowupDetected(f"Solution blew up at t={t}.", value=peak, limit=BLOWUP_FACTOR * peak0)
        tail = spectral_tail(spectrum)
        if tail > TAIL_LIMIT:
            logging.error(f"Spectral tail {tail:.3e} at t={t}")
            raise ResolutionLoss(f"Resolution lost at t={t}.", value=tail, limit=TAIL_LIMIT)
        checkpoint(t, u)
        if diagnostics.gauge[-1] > cfg.wrap_tolerance:
            logging.warning(
                f"Boundary gauge {diagnostics.gauge[-1]:.3e} exceeds {cfg.wrap_tolerance} at t={t}; stopping the run."
            )
            truncated = True
            break

    logging.info(f"Relative Q drift {diagnostics.relative_drift('Q'):.3e}, E drift {diagnostics.relative_drift('E'):.3e}")
    return Trajectory(frames=frames, diagnostics=diagnostics, config=cfg, truncated=truncated)


def step_halving_gap(u0, cfg, steps=20):
    """
    Relative L^2 gap after `steps` steps of dt against 2*steps steps of dt/2.
    """
    coarse = ETDRK4Stepper(u0.n, u0.h, cfg.dt, cfg.p, cfg.f_variant, cfg.c0)
    fine = ETDRK4Stepper(u0.n, u0.h, 0.5 * cfg.dt, cfg.p, cfg.f_variant, cfg.c0)
    a = np.fft.rfft(u0.values)
    b = a.copy()
    for _ in range(steps):
        a = coarse.step(a)
        b = fine.step(fine.step(b))
    ua = np.fft.irfft(a, n=u0.n)
    ub = np.fft.irfft(b, n=u0.n)
    return float(np.linalg.norm(ua - ub) / max(np.linalg.norm(ub), 1e-300))
