import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import evolver  # noqa: E402
from evolver import (  # noqa: E402
    EvolverConfig,
    boundary_gauge,
    evolve,
    free_propagator,
    rfft_wavenumbers,
    step_halving_gap,
)
from profiles import SolitonParams, phi  # noqa: E402
from utils.errors import BlowupDetected, ConfigError, ResolutionLoss  # noqa: E402
from utils.grid_helpers import fourier_shift, l2_norm, make_grid  # noqa: E402

UNIT = SolitonParams(p=2.0)


def soliton_field(L=40.0, n=1024, center=0.0, params=UNIT):
    grid = make_grid(L, n=n)
    wrapped = np.mod(grid.x - center + L, 2.0 * L) - L
    return grid.with_values(phi(wrapped, params))


def test_rfft_wavenumbers_zero_nyquist():
    k = rfft_wavenumbers(16, 0.5)
    assert k[-1] == 0.0
    assert k[1] == pytest.approx(2.0 * np.pi / 8.0)


def test_free_propagator_identity_and_unitarity():
    u = soliton_field(n=512)
    np.testing.assert_allclose(free_propagator(u, 0.0).values, u.values, atol=1e-14)
    moved = free_propagator(u, 3.7)
    assert l2_norm(moved, moved.values) == pytest.approx(l2_norm(u, u.values), rel=1e-13)


def test_free_propagator_moves_single_mode():
    grid = make_grid(np.pi, n=256)
    k0 = 3.0
    u = grid.with_values(np.cos(k0 * grid.x))
    t = 0.2
    expected = np.cos(k0 * grid.x + k0**3 * t)
    np.testing.assert_allclose(free_propagator(u, t).values, expected, atol=1e-12)
    # the moving frame adds c0 k to the phase
    expected = np.cos(k0 * grid.x + (k0**3 + 0.5 * k0) * t)
    np.testing.assert_allclose(free_propagator(u, t, c0=0.5).values, expected, atol=1e-12)


def test_soliton_conserves_mass_and_travels():
    u0 = soliton_field()
    cfg = EvolverConfig(dt=1e-3, t_end=1.0, save_every=250)
    trajectory = evolve(u0, cfg)
    assert trajectory.times == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert not trajectory.truncated
    assert trajectory.diagnostics.relative_drift("Q") <= 1e-10
    assert trajectory.diagnostics.relative_drift("E") <= 1e-7
    expected = fourier_shift(u0.values, u0.h, -1.0)
    final = trajectory.frames[-1]
    assert l2_norm(final, final.values - expected) <= 1e-6 * l2_norm(u0, u0.values)


def test_mass_drift_over_long_run():
    trajectory = evolve(soliton_field(), EvolverConfig(dt=1e-3, t_end=10.0, c0=1.0, save_every=1000))
    assert trajectory.times[-1] == pytest.approx(10.0)
    assert not trajectory.truncated
    assert trajectory.diagnostics.relative_drift("Q") <= 1e-10


@pytest.mark.parametrize("p, variant", [(1.5, "signed"), (3.0, "unsigned")])
def test_other_nonlinearities_keep_soliton(p, variant):
    params = SolitonParams(p=p)
    u0 = soliton_field(params=params)
    cfg = EvolverConfig(p=p, f_variant=variant, dt=1e-3, t_end=1.0, c0=1.0, save_every=500)
    trajectory = evolve(u0, cfg)
    assert not trajectory.truncated
    assert trajectory.diagnostics.relative_drift("Q") <= 1e-10
    np.testing.assert_allclose(trajectory.frames[-1].values, u0.values, atol=1e-6)


def test_soliton_is_stationary_in_comoving_frame():
    u0 = soliton_field()
    trajectory = evolve(u0, EvolverConfig(dt=1e-3, t_end=0.5, c0=1.0, save_every=500))
    np.testing.assert_allclose(trajectory.frames[-1].values, u0.values, atol=1e-7)


def test_backward_run_returns_to_start():
    u0 = soliton_field(center=-1.0)
    forward = evolve(u0, EvolverConfig(dt=1e-3, t_end=0.5, save_every=500))
    backward = evolve(forward.frames[-1], EvolverConfig(dt=-1e-3, t_end=-0.5, save_every=500))
    assert backward.times[-1] == pytest.approx(-0.5)
    np.testing.assert_allclose(backward.frames[-1].values, u0.values, atol=1e-8)


def test_step_halving_shows_high_order():
    u0 = soliton_field(center=-2.0)
    coarse = step_halving_gap(u0, EvolverConfig(dt=0.1, t_end=1.0))
    fine = step_halving_gap(u0, EvolverConfig(dt=0.05, t_end=1.0))
    assert fine < coarse
    assert np.log2(coarse / fine) >= 3.5
    assert coarse <= 1e-3


def test_snapshots_are_written(tmp_path):
    u0 = soliton_field(n=512, L=30.0)
    trajectory = evolve(u0, EvolverConfig(n=512, L=30.0, dt=1e-3, t_end=0.02, save_every=10), tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["frame_000000.bin", "frame_000001.bin", "frame_000002.bin"]
    assert len(trajectory.frames) == 3


@pytest.mark.parametrize(
    "overrides, message",
    [
        ({"n": 1000}, "power of two"),
        ({"n": 128}, "power of two"),
        ({"p": 5.0}, r"\(1, 5\)"),
        ({"f_variant": "cubic"}, "Unknown nonlinearity"),
        ({"dt": 0.0}, "nonzero"),
        ({"dt": -1e-3}, "sign of t_end"),
        ({"save_every": 0}, "save_every"),
    ],
)
def test_evolver_config_validation(overrides, message):
    with pytest.raises(ConfigError, match=message):
        EvolverConfig(**overrides)


def test_evolve_needs_periodic_grid():
    grid = make_grid(40.0, h=0.1, periodic=False)
    with pytest.raises(ConfigError, match="periodic"):
        evolve(grid.with_values(phi(grid.x, UNIT)), EvolverConfig())


def test_unresolved_initial_data():
    grid = make_grid(40.0, n=1024)
    noise = np.random.default_rng(0).standard_normal(grid.n)
    with pytest.raises(ResolutionLoss, match="not resolved") as excinfo:
        evolve(grid.with_values(noise), EvolverConfig())
    assert excinfo.value.value > excinfo.value.limit


def test_blowup_is_detected(monkeypatch):
    monkeypatch.setattr(evolver.ETDRK4Stepper, "step", lambda self, v: 1e4 * v)
    with pytest.raises(BlowupDetected, match="blew up"):
        evolve(soliton_field(), EvolverConfig(t_end=0.01, save_every=1))


def test_radiation_near_boundary_truncates_run(caplog):
    u0 = soliton_field(center=37.0)
    assert boundary_gauge(u0) > 1e-6
    trajectory = evolve(u0, EvolverConfig(dt=1e-3, t_end=0.1, save_every=10))
    assert trajectory.truncated
    assert len(trajectory.frames) == 2
    assert "stopping the run" in caplog.text


def test_boundary_gauge_of_constant_field():
    grid = make_grid(10.0, n=1000)
    assert boundary_gauge(grid.with_values(np.ones(grid.n))) == pytest.approx(0.1, abs=2e-3)
