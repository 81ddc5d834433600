#!/usr/bin/env python3
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

import jsonschema
import numpy as np

import diagnostics
import modulation
from evolver import EvolverConfig, evolve
from jost import (
    bundle_wronskian,
    dual_identity_residuals,
    evans,
    evans_second_derivative,
    expected_evans_second_derivative,
    fit_b0,
    jost_bundle,
    jost_grid,
    tilde_wronskian,
)
from linop import (
    LinearizedOperator,
    apply_L,
    apply_L_adjoint,
    virial_cross_check,
    virial_mm08_functional,
)
from profiles import (
    SolitonParams,
    kernel_functions,
    lambda_p_apply,
    mass_q,
    mass_q_derivative,
    phi,
    profile_arrays,
)
from resolvent import smoothing_norm_scan
from utils.errors import BiorthogonalityFailure, ConfigError, GkdvError
from utils.grid_helpers import fourier_shift, inner, l2_norm, make_grid
from utils.output_helpers import write_summary, write_table

DEFAULTS_FILE = os.path.join(os.path.dirname(__file__), "run_defaults.json")
SCHEMA_FILE = os.path.join(os.path.dirname(__file__), "run_config_schema.json")

IDENTITY_TOLERANCE = 1e-7
PROFILE_TOLERANCE = 1e-10
MASS_DRIFT_TOLERANCE = 1e-10
EVANS_CURVATURE_TOLERANCE = 1e-2
CLEAN_RUN_TOLERANCE = 1e-8
SMOOTHING_CONVERGENCE_TOLERANCE = 0.05

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def load_defaults():
    with open(DEFAULTS_FILE, "r") as f:
        return json.load(f)


def load_schema():
    with open(SCHEMA_FILE, "r") as f:
        return json.load(f)


def _env_workers():
    raw = os.getenv("GKDV_WORKERS", "1")
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"GKDV_WORKERS must be an integer, got '{raw}'.") from e


def resolve_config(command, flags=None, config_path=None):
    """
    Merges defaults < --config file < command-line flags for one command and validates
    the result against the schema.
    """
    defaults = load_defaults()
    if command not in defaults:
        raise ConfigError(f"Unknown command '{command}'.")
    config = dict(defaults[command])
    config["workers"] = _env_workers()
    config["output_dir"] = os.getenv("GKDV_OUTPUT_DIR", ".")
    if config_path:
        try:
            with open(config_path, "r") as f:
                overrides = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logging.error(f"Failed to load config file {config_path}: {e}")
            raise ConfigError(f"Cannot read config file {config_path}: {e}") from e
        if isinstance(overrides.get(command), dict):
            overrides = overrides[command]
        config.update(overrides)
    config.update(flags or {})

    try:
        jsonschema.validate(instance=config, schema=load_schema())
    except jsonschema.ValidationError as ve:
        field = "/".join(str(part) for part in ve.absolute_path) or "<root>"
        logging.error(f"Validation error at '{field}': {ve.message}")
        raise ConfigError(f"Invalid configuration at '{field}': {ve.message}") from ve
    check_constraints(command, config)
    return config


def check_constraints(command, config):
    """
    Physical constraints the schema cannot express, checked by building the objects
    that enforce them.
    """
    soliton_params(config)
    if command in ("evolve", "stability-run"):
        evolver_config(config)
    if command == "stability-run":
        weight_config(config)
    if "tau_min" in config and not config["tau_min"] < config["tau_max"]:
        raise ConfigError(
            f"tau_min={config['tau_min']} must be below tau_max={config['tau_max']}.", value=config["tau_min"]
        )


def soliton_params(config):
    return SolitonParams(p=config["p"], c=config["c"], nonlinearity=config.get("nonlinearity", "signed"))


def evolver_config(config):
    return EvolverConfig(
        L=config["L"],
        n=config["n"],
        dt=config["dt"],
        p=config["p"],
        f_variant=config["nonlinearity"],
        t_end=config["t_end"],
        c0=config["c0"],
        save_every=config["save_every"],
        wrap_tolerance=config["wrap_tolerance"],
    )


def weight_config(config):
    return diagnostics.WeightConfig(
        p=config["p"], A=config["A"], B=config["B"], A1=config["A1"], kappa=config["kappa"], a=config["a"]
    )


def output_path(config, suffix=""):
    base = os.path.join(config["output_dir"], config["output"])
    if suffix:
        base = os.path.splitext(base)[0] + suffix
    return base


@contextmanager
def scan_mapper(workers):
    """
    Executor map over worker processes when workers > 1, plain map otherwise. Both keep
    the input order.
    """
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            yield executor.map
    else:
        yield map


# identities


def identity_rows(params, L, h, theta2_convention="biorthogonal"):
    """
    (name, value, tolerance, passed) for the closed-form identities of the profile,
    the generalized kernel and the virial functional. Rows with a NaN tolerance are
    reported values.
    """
    grid = make_grid(L, h=h)
    x = grid.x
    p, c = params.p, params.c
    rows = []

    def check(name, value, tolerance):
        rows.append((name, float(value), tolerance, int(value <= tolerance)))

    def report(name, value):
        rows.append((name, float(value), float("nan"), 1))

    values, d1, d2, dc = profile_arrays(x, params)
    power = values ** (p + 1.0)
    check("profile_first_integral", np.max(np.abs(d1**2 - c * values**2 + 2.0 / (p + 1.0) * power)), PROFILE_TOLERANCE)
    check(
        "profile_second_identity",
        np.max(np.abs(-values * d2 + d1**2 - (p - 1.0) / (p + 1.0) * power)),
        PROFILE_TOLERANCE,
    )

    try:
        kernel = kernel_functions(grid, params, theta2_convention)
    except BiorthogonalityFailure as e:
        check("biorthogonality", e.value, IDENTITY_TOLERANCE)
        kernel = kernel_functions(grid, params)
    else:
        check("biorthogonality", np.max(np.abs(kernel.gram - np.eye(2))), IDENTITY_TOLERANCE)

    op = LinearizedOperator.build(grid, params)
    check("L_xi1", np.max(np.abs(apply_L(op, kernel.xi1).values)), IDENTITY_TOLERANCE)
    check("L_xi2_plus_xi1", np.max(np.abs(apply_L(op, kernel.xi2).values + kernel.xi1.values)), IDENTITY_TOLERANCE)
    check(
        "Lstar_eta1_plus_eta2",
        np.max(
            np.abs(apply_L_adjoint(op, kernel.eta1, derivative=kernel.eta1_prime).values + kernel.eta2.values)
        ),
        IDENTITY_TOLERANCE,
    )
    check("Lstar_eta2", np.max(np.abs(apply_L_adjoint(op, kernel.eta2).values)), IDENTITY_TOLERANCE)

    unit = SolitonParams(p=p)
    profile = grid.with_values(phi(x, unit))
    pairing = inner(grid, lambda_p_apply(profile, p).values, profile.values)
    dq = mass_q_derivative(unit)
    report("lambda_phi_phi", pairing)
    check("lambda_phi_phi_vs_dq", abs(pairing - dq) / dq, 1e-8)

    step = 1e-4
    central = (mass_q(params.with_speed(c + step)) - mass_q(params.with_speed(c - step))) / (2.0 * step)
    check("dq_vs_dc_phi_pairing", abs(central - inner(grid, dc, values)) / abs(central), 1e-6)

    check("virial_phi", abs(virial_mm08_functional(profile, p)), PROFILE_TOLERANCE)
    derivative = grid.with_values(profile_arrays(x, unit)[1])
    virial = virial_mm08_functional(derivative, p)
    rows.append(("virial_phi_prime", float(virial), 1e-4, int(virial >= 1e-4)))
    cross = virial_cross_check(derivative, p)
    check("virial_cross_check", abs(virial - cross) / max(abs(virial), 1e-300), 1e-6)
    return rows


def cmd_identities(config):
    params = soliton_params(config)
    rows = identity_rows(params, config["L"], config["h"], config["theta2_convention"])
    write_table(output_path(config), ("identity", "value", "tolerance", "passed"), rows, config)
    failed = [row[0] for row in rows if not row[3]]
    for name in failed:
        logging.warning(f"Identity '{name}' failed.")
    logging.info(f"{len(rows) - len(failed)} of {len(rows)} identities passed at p={params.p}")
    return EXIT_FAIL if failed else EXIT_PASS


# evans-scan


def _evans_row(tau, params, h):
    try:
        value = evans(complex(0.0, tau), params, h)
    except GkdvError as e:
        logging.warning(f"D(i*{tau}) failed: {e}")
        return (tau, float("nan"), float("nan"), float("nan"), 1)
    return (tau, value.real, value.imag, abs(value), 0)


def cmd_evans_scan(config):
    params = soliton_params(config)
    h = config["h"]
    taus = np.geomspace(config["tau_min"], config["tau_max"], config["points"])
    with scan_mapper(config["workers"]) as mapper:
        rows = list(mapper(_evans_row, taus, [params] * len(taus), [h] * len(taus)))
    write_table(output_path(config), ("tau", "re_D", "im_D", "abs_D", "flag"), rows, config)

    moduli = np.array([row[3] for row in rows])
    finite = np.isfinite(moduli)
    best = int(np.nanargmin(moduli)) if finite.any() else 0
    curvature = evans_second_derivative(params, h)
    expected = expected_evans_second_derivative(params.p)
    relative = abs(curvature - expected) / abs(expected)
    summary = {
        "min_abs_D": float(moduli[best]),
        "argmin_tau": float(taus[best]),
        "flagged_points": int(np.sum(~finite)),
        "D_at_zero": abs(evans(0j, params, h)),
        "D_second_derivative": curvature,
        "D_second_derivative_expected": expected,
        "D_second_derivative_relative_error": relative,
        "b13_structure": fit_b0(params, h=h),
        "dual_identities": dual_identity_residuals(params, h=h),
    }
    write_summary(output_path(config, "_summary.json"), summary, config)
    logging.info(f"min |D| = {moduli[best]:.4e} at tau={taus[best]:.4f}; D''(0) = {curvature:.6f} (expected {expected:.6f})")
    passed = finite.all() and moduli[best] > 0.0 and relative <= EVANS_CURVATURE_TOLERANCE
    return EXIT_PASS if passed else EXIT_FAIL


# jost


def cmd_jost(config):
    params = soliton_params(config)
    lam = complex(config["lam_re"], config["lam_im"])
    bundle = jost_bundle(lam, params, config["h"])
    stride = config["stride"]
    x = bundle.m1.x[::stride]
    series = {
        "m1": bundle.m1.m,
        "m3": bundle.m3.m,
        "m2tilde": bundle.m2tilde.m,
        "m2": bundle.f2.m,
        "b13": bundle.b13.values,
    }
    columns = ["x"]
    for name in series:
        columns += [f"re_{name}", f"im_{name}"]
    samples = [np.asarray(values)[::stride] for values in series.values()]
    rows = [
        [float(xk)] + [float(part) for s in samples for part in (s[k].real, s[k].imag)]
        for k, xk in enumerate(x)
    ]
    write_table(output_path(config), columns, rows, config)
    W = bundle_wronskian(bundle)
    expected = lam * bundle.evans * bundle.point.w0
    summary = {
        "lambda": lam,
        "mu": bundle.point.mu,
        "evans": bundle.evans,
        "evans_reflected": bundle.evans_reflected,
        "c0": bundle.c0,
        "wronskian": W,
        "tilde_wronskian": tilde_wronskian(bundle),
        "w0": bundle.point.w0,
        "wronskian_identity_residual": abs(W - expected) / max(abs(expected), 1e-300),
        "anchors": bundle.anchors,
    }
    write_summary(output_path(config, "_summary.json"), summary, config)
    return EXIT_PASS


# resolvent-scan


def gaussian_bumps(grid, count, seed):
    """
    Unit-height Gaussians with centers in [-5, 5] and widths in [0.5, 2].
    """
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-5.0, 5.0, count)
    widths = rng.uniform(0.5, 2.0, count)
    return [grid.with_values(np.exp(-0.5 * ((grid.x - x0) / s) ** 2)) for x0, s in zip(centers, widths)]


def plateau_spread(taus, values, end):
    """
    max/min - 1 of the values over the last decade of tau at the given end.
    """
    taus = np.asarray(taus)
    values = np.asarray(values)
    if end == "low":
        mask = taus <= 10.0 * taus[0]
    else:
        mask = taus >= taus[-1] / 10.0
    window = values[mask]
    return float(np.max(window) / np.min(window) - 1.0)


def cmd_resolvent_scan(config):
    params = soliton_params(config)
    h = config["h"]
    bumps = gaussian_bumps(jost_grid(params.p, h), config["bumps"], config["seed"])
    taus = np.geomspace(config["tau_min"], config["tau_max"], config["points"])
    kappa = config["kappa"]
    with scan_mapper(config["workers"]) as mapper:
        rows, sup_first, sup_second = smoothing_norm_scan(taus, bumps, params, kappa, h, mapper)
    write_table(output_path(config), ("tau", "weighted_ratio", "derivative_ratio"), rows, config)
    first = [row[1] for row in rows]
    summary = {
        "sup_weighted_ratio": sup_first,
        "sup_derivative_ratio": sup_second,
        "low_plateau_spread": plateau_spread(taus, first, "low"),
        "high_plateau_spread": plateau_spread(taus, first, "high"),
    }
    write_summary(output_path(config, "_summary.json"), summary, config)
    return EXIT_PASS if np.isfinite(sup_first) and np.isfinite(sup_second) else EXIT_FAIL


# evolve / stability-run


def initial_field(config):
    """
    phi_c plus delta times a unit Gaussian centered at a seeded point of [-2, 2].
    """
    grid = make_grid(config["L"], n=config["n"])
    params = soliton_params(config)
    rng = np.random.default_rng(config["seed"])
    center = rng.uniform(-2.0, 2.0)
    values = phi(grid.x, params) + config["delta"] * np.exp(-((grid.x - center) ** 2))
    return grid.with_values(values)


def _snapshot_dir(config, prefix):
    if not config["snapshots"]:
        return None
    return os.path.join(config["output_dir"], f"{prefix}_snapshots")


def _trajectory_rows(trajectory):
    d = trajectory.diagnostics
    return list(zip(d.times, d.Q, d.E, d.gauge))


def shape_error(trajectory, config):
    """
    ||u(T) - phi_c(. - (c - c0) T)|| / ||phi_c|| for the unperturbed soliton.
    """
    u = trajectory.frames[-1]
    t = trajectory.times[-1]
    profile = phi(u.x, soliton_params(config))
    moved = fourier_shift(profile, u.h, -(config["c"] - config["c0"]) * t)
    return l2_norm(u, u.values - moved) / l2_norm(u, profile)


def cmd_evolve(config):
    cfg = evolver_config(config)
    prefix = os.path.splitext(config["output"])[0]
    trajectory = evolve(initial_field(config), cfg, _snapshot_dir(config, prefix))
    write_table(output_path(config), ("t", "Q", "E", "gauge"), _trajectory_rows(trajectory), config)
    drift = trajectory.diagnostics.relative_drift("Q")
    summary = {
        "Q_drift": drift,
        "E_drift": trajectory.diagnostics.relative_drift("E"),
        "frames": len(trajectory.frames),
        "truncated": trajectory.truncated,
    }
    if config["delta"] == 0.0:
        summary["shape_error"] = shape_error(trajectory, config)
    write_summary(output_path(config, "_summary.json"), summary, config)
    return EXIT_PASS if drift <= MASS_DRIFT_TOLERANCE else EXIT_FAIL


def _value_at(times, values, t):
    return values[int(np.argmin(np.abs(np.asarray(times) - t)))]


def stability_summary(trajectory, states, curve, integral, half_integral):
    """
    Settling measures of a perturbed run: the decay of ||e^{-a<x>} v|| from the first to
    the last quarter, the growth of the smoothing integral between T/2 and T and the
    steps of c(t) over [T/4, T/2] and [T/2, T].
    """
    times = np.asarray(trajectory.times)
    cs = np.array([s.c for s in states])
    T = times[-1]
    half = times >= 0.5 * T
    tv_first = float(np.sum(np.abs(np.diff(cs[~half])))) if np.sum(~half) > 1 else 0.0
    tv_second = float(np.sum(np.abs(np.diff(cs[half])))) if np.sum(half) > 1 else 0.0
    quarter = max(1, len(curve) // 4)
    first_quarter = float(np.mean(curve[:quarter]))
    last_quarter = float(np.mean(curve[-quarter:]))
    ratios = [s.mode_ratio for s in states if np.isfinite(s.mode_ratio)]
    growth = (integral - half_integral) / integral if integral > 0.0 else 0.0
    late = abs(_value_at(times, cs, T) - _value_at(times, cs, 0.5 * T))
    early = abs(_value_at(times, cs, 0.5 * T) - _value_at(times, cs, 0.25 * T))
    return {
        "c_plus": float(cs[-1]),
        "c_variation_first_half": tv_first,
        "c_variation_second_half": tv_second,
        "c_late_step": late,
        "c_early_step": early,
        "c_settling": bool(late < early),
        "smoothing_integral": integral,
        "smoothing_integral_half": half_integral,
        "smoothing_growth": growth,
        "smoothing_converged": bool(growth <= SMOOTHING_CONVERGENCE_TOLERANCE),
        "decay_first_quarter": first_quarter,
        "decay_last_quarter": last_quarter,
        "decay_ratio": last_quarter / first_quarter if first_quarter > 0.0 else float("nan"),
        "max_v": max(l2_norm(s.v, s.v.values) for s in states),
        "max_mode_ratio": max(ratios, default=float("nan")),
        "Q_drift": trajectory.diagnostics.relative_drift("Q"),
        "E_drift": trajectory.diagnostics.relative_drift("E"),
        "truncated": trajectory.truncated,
        "final_time": float(T),
    }


def diagnostic_rows(states, weights, curve):
    rows = []
    for state, value in zip(states, curve):
        s1, s2 = diagnostics.sigma_norms(state.v, weights)
        virial = diagnostics.virial_functionals(state.v, weights)
        rows.append((state.t, s1, s2, diagnostics.sech_norm(state.v, weights), virial.I1, virial.I2, virial.bold, value))
    return rows


def run_settled(summary):
    """
    Perturbed-run verdict: the weighted norm decays, the smoothing integral has converged
    and c(t) moves less late than early. A truncated run never passes.
    """
    if summary["truncated"]:
        return False
    return summary["decay_ratio"] < 1.0 and summary["smoothing_converged"] and summary["c_settling"]


def cmd_stability_run(config):
    cfg = evolver_config(config)
    weights = weight_config(config)
    prefix = config["output"]
    trajectory = evolve(initial_field(config), cfg, _snapshot_dir(config, prefix))
    write_table(output_path(config, "_trajectory.tsv"), ("t", "Q", "E", "gauge"), _trajectory_rows(trajectory), config)

    states = modulation.track(trajectory, config["B"], weights)
    write_table(
        output_path(config, "_modulation.tsv"), modulation.MODULATION_COLUMNS, modulation.modulation_rows(states), config
    )
    times = np.asarray(trajectory.times)
    vs = [s.v for s in states]
    integral, curve = diagnostics.smoothing_integral(times, vs, weights.a)
    cut = int(np.searchsorted(times, 0.5 * times[-1], side="right"))
    half_integral, _ = diagnostics.smoothing_integral(times[:cut], vs[:cut], weights.a)
    write_table(
        output_path(config, "_diagnostics.tsv"),
        ("t", "sigma_1", "sigma_2", "sech_norm", "I_1", "I_2", "bold_I", "decay_curve"),
        diagnostic_rows(states, weights, curve),
        config,
    )
    summary = stability_summary(trajectory, states, curve, integral, half_integral)
    write_summary(output_path(config, "_summary.json"), summary, config)
    logging.info(
        f"c_+ = {summary['c_plus']:.8f}, smoothing integral {integral:.4e} "
        f"(growth over the second half {summary['smoothing_growth']:.3f}), decay ratio {summary['decay_ratio']:.4f}"
    )

    if config["delta"] == 0.0:
        clean = summary["max_v"] <= CLEAN_RUN_TOLERANCE and abs(summary["c_plus"] - config["c"]) <= 1e-7
        return EXIT_PASS if clean else EXIT_FAIL
    return EXIT_PASS if run_settled(summary) else EXIT_FAIL


def cmd_print_defaults(config=None):
    print(json.dumps(load_defaults(), indent=2, sort_keys=True))
    return EXIT_PASS


COMMANDS = {
    "identities": cmd_identities,
    "evans-scan": cmd_evans_scan,
    "jost": cmd_jost,
    "resolvent-scan": cmd_resolvent_scan,
    "evolve": cmd_evolve,
    "stability-run": cmd_stability_run,
}


def _flag_type(key, defaults):
    for block in defaults.values():
        value = block.get(key)
        if value is not None:
            return type(value)
    return float


def build_parser():
    defaults = load_defaults()
    parser = argparse.ArgumentParser(description="Numerical laboratory for gKdV soliton stability.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", help="JSON file of key-value overrides.")
        p.add_argument("--workers", type=int, default=argparse.SUPPRESS)
        p.add_argument("--output-dir", dest="output_dir", default=argparse.SUPPRESS)
        for key in defaults[command]:
            kind = _flag_type(key, defaults)
            flag = f"--{key.replace('_', '-')}"
            if kind is bool:
                p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS)
            else:
                p.add_argument(flag, dest=key, type=kind, default=argparse.SUPPRESS)
    sub.add_parser("print-defaults")
    return parser


def run(argv=None):
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    if command == "print-defaults":
        return cmd_print_defaults()
    config_path = args.pop("config", None)
    try:
        config = resolve_config(command, args, config_path)
        logging.info(f"Running {command} with {config}")
        return COMMANDS[command](config)
    except ConfigError as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except GkdvError as e:
        logging.error(f"{type(e).__name__}: {e} (value={e.value}, limit={e.limit})")
        return EXIT_NUMERICAL


def main(argv=None):
    level = os.getenv("GKDV_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO), format="%(asctime)s - %(levelname)s - %(message)s"
    )
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
