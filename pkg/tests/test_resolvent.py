import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import resolvent  # noqa: E402
from jost import jost_bundle, jost_grid  # noqa: E402
from profiles import SolitonParams, profile_arrays  # noqa: E402
from utils.errors import NearSingular, NotProjected  # noqa: E402
from utils.grid_helpers import inner, make_grid, wavenumbers  # noqa: E402

UNIT = SolitonParams(p=2.0)


def gaussian(center=0.0, width=1.0):
    grid = jost_grid(2.0)
    return grid.with_values(np.exp(-(((grid.x - center) / width) ** 2)))


def random_bumps(count=10, seed=3):
    rng = np.random.default_rng(seed)
    return [gaussian(rng.uniform(-3.0, 3.0), rng.uniform(0.5, 2.0)) for _ in range(count)]


def test_projection_is_idempotent():
    pair = resolvent.projection_pair(UNIT)
    for g in random_bumps():
        once = pair.apply_P(g)
        twice = pair.apply_P(once)
        np.testing.assert_allclose(twice.values, once.values, atol=1e-6 * np.max(np.abs(once.values)))


def test_complement_is_orthogonal_to_duals():
    pair = resolvent.projection_pair(UNIT)
    for g in random_bumps(seed=11):
        q = pair.apply_Q(g)
        for eta in pair.eta:
            assert abs(inner(q, eta.values, q.values)) <= 1e-7 * max(1.0, np.max(np.abs(g.values)))


def test_complement_annihilates_kernel():
    pair = resolvent.projection_pair(UNIT)
    q = pair.apply_Q(pair.xi[0])
    assert np.max(np.abs(q.values)) <= 1e-6


@pytest.mark.parametrize("lam", [1j, 0.3j, 2j, 0.2 + 0.5j])
def test_resolvent_residual_on_axis(lam):
    g = gaussian()
    u = resolvent.resolvent(lam, g, UNIT)
    assert resolvent.resolvent_residual(lam, g, u, UNIT) <= 1e-4


def test_f2_is_continuous_at_the_matching_point():
    bundle = jost_bundle(1j, UNIT)
    zero = bundle.f2.index_of(0.0)
    window = slice(zero - 3, zero + 4)
    second = np.abs(np.diff(bundle.f2.m[window], 2))
    curvature = np.max(np.abs(bundle.f2.d2m[window]))
    assert np.max(second) <= 2.0 * bundle.f2.grid.h**2 * curvature + 1e-10


def test_zero_forcing_gives_zero():
    g = jost_grid(2.0)
    u = resolvent.apply_resolvent(1j, g, bundle=None)
    assert not np.any(u.values)


def test_small_wronskian_raises(monkeypatch):
    monkeypatch.setattr(resolvent, "bundle_wronskian", lambda bundle: 1e-12)
    with pytest.raises(NearSingular, match="regularized"):
        resolvent.apply_resolvent(1e-5j, gaussian(), bundle=None)


def test_regularized_needs_projected_input():
    with pytest.raises(NotProjected, match="apply Q first"):
        resolvent.apply_resolvent_regularized(0.01j, gaussian(), UNIT)


@pytest.mark.parametrize("lam", [0.03j, 0.05j, 0.08j, -0.05j])
def test_regularized_matches_direct_resolvent_in_overlap(lam):
    q = resolvent.projection_pair(UNIT).apply_Q(gaussian(0.5))
    direct = resolvent.apply_resolvent(lam, q, jost_bundle(lam, UNIT))
    regular = resolvent.apply_resolvent_regularized(lam, q, UNIT)
    gap = resolvent.sech_weighted_norm(q, direct.values - regular.values, 0.25)
    assert gap <= 1e-3


def test_regularized_pieces_add_up():
    q = resolvent.projection_pair(UNIT).apply_Q(gaussian(0.5))
    pieces = resolvent.regularized_pieces(0.01j, q, UNIT)
    total = resolvent.apply_resolvent_regularized(0.01j, q, UNIT)
    np.testing.assert_allclose(pieces.r1 + pieces.r21 + pieces.r23, total.values, atol=1e-12)
    np.testing.assert_allclose(pieces.remainder + pieces.hat, total.values, atol=1e-12)


def test_regularized_output_solves_the_equation():
    q = resolvent.projection_pair(UNIT).apply_Q(gaussian(0.5))
    u = resolvent.apply_resolvent_regularized(0.05j, q, UNIT)
    assert resolvent.resolvent_residual(0.05j, q, u, UNIT) <= 1e-3


def test_remainder_after_hat_stays_bounded():
    q = resolvent.projection_pair(UNIT).apply_Q(gaussian(0.5))
    sizes = [
        resolvent.sech_weighted_norm(q, resolvent.regularized_pieces(lam, q, UNIT).remainder, 0.25)
        for lam in (1e-4j, 1e-3j, 1e-2j)
    ]
    assert np.all(np.isfinite(sizes))
    assert max(sizes) <= 2.0 * min(sizes)


def test_hat_correction_is_continuous_at_zero():
    q = resolvent.projection_pair(UNIT).apply_Q(gaussian(0.5))
    at_zero = resolvent.hat_correction(0.0, q, UNIT).values
    nearby = resolvent.hat_correction(1e-6j, q, UNIT).values
    assert np.all(np.isfinite(at_zero))
    np.testing.assert_allclose(nearby, at_zero, atol=1e-4 * max(1.0, np.max(np.abs(at_zero))))


def test_regularized_stays_bounded_near_zero():
    q = resolvent.projection_pair(UNIT).apply_Q(gaussian(0.5))
    small = resolvent.resolvent(1e-4j, q, UNIT)
    larger = resolvent.resolvent(1e-3j, q, UNIT)
    ratio = resolvent.sech_weighted_norm(q, small.values, 0.25) / resolvent.sech_weighted_norm(
        q, larger.values, 0.25
    )
    assert 0.5 <= ratio <= 2.0


def test_singular_part_vanishes_on_ker_p():
    q = resolvent.projection_pair(UNIT).apply_Q(gaussian(0.5))
    assert np.max(np.abs(resolvent.singular_part(q, UNIT))) <= 1e-5


@pytest.mark.parametrize("lam", [0.25 + 0.5j, 0.3 - 0.4j])
def test_free_resolvent_against_spectral_solve(lam):
    grid = make_grid(120.0, h=0.01)
    forcing = np.exp(-4.0 * grid.x**2)
    k = wavenumbers(grid.n, grid.h)
    expected = np.fft.ifft(np.fft.fft(forcing) / (1j * k**3 + 1j * k - lam))
    u = resolvent.free_resolvent(lam, grid, forcing)
    assert np.max(np.abs(u.values - expected)) <= 1e-3 * np.max(np.abs(expected))


def test_weighted_norms():
    grid = make_grid(30.0, h=0.01, periodic=False)
    values = np.exp(-np.abs(grid.x))
    # int <x> e^{-|x|} dx is about 2.7 and the plain L^1 norm is 2
    assert resolvent.weighted_l1_norm(grid, values) > 2.0
    assert resolvent.sech_weighted_norm(grid, np.ones(grid.n), 1.0) == pytest.approx(np.sqrt(2.0), rel=1e-6)


def test_smoothing_scan_reports_sups():
    bumps = [gaussian(0.0), gaussian(1.0, 0.7)]
    rows, first, second = resolvent.smoothing_norm_scan([1.0, 2.0], bumps, UNIT)
    assert [row[0] for row in rows] == [1.0, 2.0]
    assert first == max(row[1] for row in rows)
    assert np.isfinite(second)


def test_hat_correction_is_rank_one():
    q = resolvent.projection_pair(UNIT).apply_Q(gaussian(0.5))
    hat = resolvent.hat_correction(0.05j, q, UNIT)
    d1 = profile_arrays(q.x, UNIT)[1]
    peak = int(np.argmax(np.abs(d1)))
    scale = hat.values[peak] / d1[peak]
    assert np.isfinite(scale)
    np.testing.assert_allclose(hat.values, scale * d1, atol=1e-12 * max(1.0, abs(scale)))
