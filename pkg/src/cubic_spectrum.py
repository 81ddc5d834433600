import logging
from dataclasses import dataclass

import numpy as np

from utils.errors import BranchAmbiguity, DegenerateRoots, NonConvergence
from utils.grid_helpers import exponential_sweep

STRIP_HALF_WIDTH = 0.3
CONTINUATION_STEP = 0.05
NEWTON_TOLERANCE = 1e-15
NEWTON_MAX_ITERATIONS = 50
DEGENERACY_TOLERANCE = 1e-10
ORDERING_TOLERANCE = 1e-12
BRANCH_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SpectralPoint:
    """
    Roots of mu^3 - mu + lam = 0 labeled by continuation from lam = 0, where
    mu = (-1, 0, 1), together with a_j = 1/prod_{k != j}(mu_j - mu_k) and the
    Vandermonde determinant w0.
    """

    lam: complex
    mu: tuple
    a: tuple
    w0: complex

    @property
    def mu_array(self):
        return np.array(self.mu, dtype=complex)

    @property
    def a_array(self):
        return np.array(self.a, dtype=complex)


def cubic_residual(mu, lam):
    return mu**3 - mu + lam


def _newton(mu, lam):
    for iteration in range(NEWTON_MAX_ITERATIONS):
        step = cubic_residual(mu, lam) / (3.0 * mu**2 - 1.0)
        mu = mu - step
        if abs(step) <= NEWTON_TOLERANCE * (1.0 + abs(mu)):
            return mu
    logging.error(f"Newton iteration for mu_2 stalled at lambda={lam}, last step {abs(step):.3e}")
    raise NonConvergence(
        f"mu_2 did not converge at lambda={lam}.", value=abs(step), limit=NEWTON_TOLERANCE
    )


def track_mu2(lam):
    """
    mu_2(lam): the root with mu_2(0) = 0, followed along the ray from 0 to lam with
    Newton corrections seeded by the previous value (mu = lam at the first step).
    """
    lam = complex(lam)
    steps = max(1, int(np.ceil(abs(lam) / CONTINUATION_STEP)))
    mu = 0j
    for s in range(1, steps + 1):
        target = lam * s / steps
        seed = target if s == 1 else mu
        mu = _newton(seed, target)
    return mu


def solve_cubic(lam):
    """
    Solves mu^3 - mu + lam = 0 through mu_2 and the factorization
    mu_{1,3} = -mu_2/2 -+ sqrt(1 - 3 mu_2^2 / 4), labeled so that Re mu_1 < Re mu_3.
    """
    lam = complex(lam)
    if abs(lam.real) > STRIP_HALF_WIDTH:
        logging.warning(f"lambda={lam} lies outside the working strip |Re lambda| <= {STRIP_HALF_WIDTH}.")
    discriminant = 4.0 - 27.0 * lam**2
    if abs(discriminant) <= BRANCH_TOLERANCE:
        logging.error(f"lambda={lam} is a branch point of the cubic, 4 - 27 lambda^2 = {discriminant:.3e}.")
        raise BranchAmbiguity(
            f"lambda={lam} is a branch point; two roots coincide and cannot be labeled.",
            value=abs(discriminant),
            limit=BRANCH_TOLERANCE,
        )
    mu2 = track_mu2(lam)
    root = np.sqrt(1.0 - 0.75 * mu2**2)
    mu1, mu3 = -0.5 * mu2 - root, -0.5 * mu2 + root
    if mu1.real > mu3.real:
        mu1, mu3 = mu3, mu1
    mu = (complex(mu1), complex(mu2), complex(mu3))

    real_parts = sorted(m.real for m in mu)
    gap = min(real_parts[1] - real_parts[0], real_parts[2] - real_parts[1])
    if gap <= ORDERING_TOLERANCE:
        logging.error(f"Roots {mu} at lambda={lam} share a real part.")
        raise BranchAmbiguity(
            f"Two roots have equal real parts at lambda={lam}.", value=gap, limit=ORDERING_TOLERANCE
        )
    if abs(lam.real) <= STRIP_HALF_WIDTH and not (mu1.real < 0.0 < mu3.real):
        logging.warning(f"Root ordering Re mu_1 < 0 < Re mu_3 fails at lambda={lam}: {mu}")

    w = vandermonde(mu)
    if abs(w) < DEGENERACY_TOLERANCE:
        logging.error(f"Vandermonde determinant {abs(w):.3e} at lambda={lam}.")
        raise DegenerateRoots(
            f"Roots coincide at lambda={lam}.", value=abs(w), limit=DEGENERACY_TOLERANCE
        )
    a = tuple(
        complex(1.0 / np.prod([mu[j] - mu[k] for k in range(3) if k != j])) for j in range(3)
    )
    return SpectralPoint(lam=lam, mu=mu, a=a, w0=w)


def vandermonde(mu):
    mu1, mu2, mu3 = mu
    return complex((mu2 - mu1) * (mu3 - mu1) * (mu3 - mu2))


def w0(point):
    """
    W_0 = prod_{i<j}(mu_j - mu_i), the determinant of the Vandermonde matrix of the
    roots; equal to 2 at lambda = 0.
    """
    if abs(point.w0) < DEGENERACY_TOLERANCE:
        raise DegenerateRoots(
            f"Roots coincide at lambda={point.lam}.", value=abs(point.w0), limit=DEGENERACY_TOLERANCE
        )
    return point.w0


def particular_solution(point, x, forcing, boundary=None):
    """
    Decaying solution of y''' - y' + lam y = F by variation of parameters:
    y = sum_{Re mu_j < 0} a_j int_{-inf}^x e^{mu_j (x-y)} F - sum_{Re mu_j > 0} a_j int_x^{inf} e^{mu_j (x-y)} F.
    A root on the imaginary axis is assigned to the side named by boundary ("left" or
    "right"); without it such a root raises BranchAmbiguity.
    """
    x = np.asarray(x)
    h = x[1] - x[0]
    forcing = np.asarray(forcing, dtype=complex)
    y = np.zeros(len(x), dtype=complex)
    for mu, a in zip(point.mu, point.a):
        on_axis = abs(mu.real) <= ORDERING_TOLERANCE
        if on_axis and boundary is None:
            raise BranchAmbiguity(
                f"Root {mu} lies on the imaginary axis; no decaying Green's function.",
                value=abs(mu.real),
                limit=ORDERING_TOLERANCE,
            )
        if (on_axis and boundary == "left") or (not on_axis and mu.real < 0):
            y += a * exponential_sweep(forcing, mu, h)
        else:
            y -= a * exponential_sweep(forcing, mu, h, reverse=True)
    return y
