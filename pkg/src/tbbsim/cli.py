"""Command-line interface: reproducible batch runs of the simulator.

Subcommands: steady, phase-diagram, simulate, hysteresis, pulse.
Exit codes: 0 success, 2 config error, 3 numerical failure, 4 partial sweep.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from .config import RunConfig, emit_config, ms_to_sim_time, parse_config
from .dynamics import (ControlTarget, IntegratorOptions, Schedule,
                       detect_transitions, hysteresis_run, integrate)
from .errors import ConfigError, TbbError
from .model import (Controls, LossOptions, MeanFieldState, ModelParams,
                    NO_LOSS, big_g_of_lambda, derive, ground_state,
                    lambda_of_big_g)
from .output import fmt, write_csv, write_manifest, write_phase_svg
from .phase import AxisScale, GridSpec, RepumpParam, sweep_grid
from .steady import steady_states

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4

DEFAULT_SEED_ALPHA = 1e-8
LOSS_TIMESCALE_MS = 350.0  # default trap-loss 1/e time for g and e
LOSS_F_FACTOR = 10.0       # f states are anti-trapped: faster default loss


def _resolve_lambda(cfg: RunConfig, section, lam_key="lambda", g_key="G",
                    required=True):
    lam = cfg.get(section, lam_key)
    big_g = cfg.get(section, g_key)
    if lam is not None and big_g is not None:
        raise ConfigError(
            f"[{section}] specifies both '{lam_key}' and '{g_key}'")
    if big_g is not None:
        return lambda_of_big_g(float(big_g), cfg.params.Gamma)
    if lam is not None:
        return float(lam)
    if required:
        raise ConfigError(
            f"[{section}] needs either '{lam_key}' or '{g_key}'")
    return None


def _resolve_time(cfg: RunConfig, section, key, default=None):
    """Time in 1/gamma units from either 'key' or 'key_ms'."""
    plain = cfg.get(section, key)
    ms = cfg.get(section, key + "_ms")
    if plain is not None and ms is not None:
        raise ConfigError(f"[{section}] specifies both '{key}' and '{key}_ms'")
    if ms is not None:
        if cfg.gamma_MHz is None:
            raise ConfigError(
                f"[{section}].{key}_ms requires gamma_MHz in [params]")
        return ms_to_sim_time(float(ms), cfg.gamma_MHz)
    if plain is not None:
        return float(plain)
    return default


def _resolve_loss(cfg: RunConfig, section) -> LossOptions:
    if not cfg.get(section, "loss", False):
        return NO_LOSS
    rate_g = cfg.get(section, "loss_rate_g")
    rate_e = cfg.get(section, "loss_rate_e")
    rate_f = cfg.get(section, "loss_rate_f")
    if rate_g is None or rate_e is None or rate_f is None:
        if cfg.gamma_MHz is None:
            raise ConfigError(
                f"[{section}] loss defaults are physical (1/{LOSS_TIMESCALE_MS:g} ms);"
                " set gamma_MHz or give explicit loss_rate_* values")
        base = 1.0 / ms_to_sim_time(LOSS_TIMESCALE_MS, cfg.gamma_MHz)
        rate_g = base if rate_g is None else float(rate_g)
        rate_e = base if rate_e is None else float(rate_e)
        rate_f = LOSS_F_FACTOR * base if rate_f is None else float(rate_f)
    return LossOptions(enabled=True, rate_g=float(rate_g),
                       rate_e=float(rate_e), rate_f=float(rate_f))


def _derived_summary(params: ModelParams, lam):
    ctrl = Controls(eta=0.0, lam=lam if lam is not None else 0.0)
    d = derive(params, ctrl)
    return {
        "delta_shift": d.delta_shift,
        "cooperativity": d.cooperativity,
        "big_g": d.big_g if lam is not None else None,
        "beta": (d.beta if lam is not None and math.isfinite(d.beta)
                 else None),
    }


def _branch_rows(params, eta, lam):
    """branches.csv rows for one control point; one row per branch."""
    big_g = big_g_of_lambda(lam, params.Gamma)
    try:
        branches = steady_states(params, Controls(eta=eta, lam=lam))
    except TbbError as exc:
        return [[eta, lam, big_g, math.nan, math.nan, math.nan, math.nan,
                 math.nan, math.nan, "", math.nan,
                 f"{type(exc).__name__}: {exc}"]], True
    rows = []
    for b in branches:
        st = b.state
        rows.append([eta, lam, big_g, b.root.s, b.root.intensity,
                     b.transmittance, st.n_g, st.n_e, st.n_f,
                     b.stability.value, b.max_re_eigenvalue, ""])
    return rows, False


BRANCH_HEADER = ["eta", "lambda", "big_g", "s", "intensity", "transmittance",
                 "n_g", "n_e", "n_f", "stability", "max_re_eig", "error"]


def cmd_steady(cfg: RunConfig, out_dir, threads, quiet):
    sec = "steady"
    if sec not in cfg.sections:
        raise ConfigError("missing [steady] section")
    scan = cfg.get(sec, "scan")
    points = []
    if scan is None:
        eta = float(cfg.require(sec, "eta"))
        lam = _resolve_lambda(cfg, sec)
        points = [(eta, lam)]
    else:
        lo = float(cfg.require(sec, "scan_min"))
        hi = float(cfg.require(sec, "scan_max"))
        n = int(cfg.require(sec, "scan_points"))
        scale = cfg.get(sec, "scan_scale", "linear")
        grid = np.geomspace(lo, hi, n) if scale == "log" else \
            np.linspace(lo, hi, n)
        if scan == "eta":
            lam = _resolve_lambda(cfg, sec)
            points = [(float(v), lam) for v in grid]
        elif scan == "lambda":
            eta = float(cfg.require(sec, "eta"))
            points = [(eta, float(v)) for v in grid]
        elif scan == "G":
            eta = float(cfg.require(sec, "eta"))
            points = [(eta, lambda_of_big_g(float(v), cfg.params.Gamma))
                      for v in grid]
        else:
            raise ConfigError(f"[steady].scan must be eta, lambda or G, "
                              f"got {scan!r}")
    rows, any_failed = [], False
    for eta, lam in points:
        r, failed = _branch_rows(cfg.params, eta, lam)
        rows += r
        any_failed |= failed
    write_csv(os.path.join(out_dir, "branches.csv"), BRANCH_HEADER, rows)
    lam0 = points[0][1] if len({p[1] for p in points}) == 1 else None
    return ["branches.csv"], _derived_summary(cfg.params, lam0), \
        EXIT_PARTIAL if any_failed else EXIT_OK


def cmd_phase_diagram(cfg: RunConfig, out_dir, threads, quiet):
    sec = "phase_diagram"
    if sec not in cfg.sections:
        raise ConfigError("missing [phase_diagram] section")
    spec = GridSpec(
        eta_min=float(cfg.require(sec, "eta_min")),
        eta_max=float(cfg.require(sec, "eta_max")),
        eta_points=int(cfg.require(sec, "eta_points")),
        eta_scale=AxisScale(cfg.get(sec, "eta_scale", "linear")),
        repump_min=float(cfg.require(sec, "repump_min")),
        repump_max=float(cfg.require(sec, "repump_max")),
        repump_points=int(cfg.require(sec, "repump_points")),
        repump_scale=AxisScale(cfg.get(sec, "repump_scale", "linear")),
        repump_param=RepumpParam(cfg.get(sec, "repump_param", "G")),
    )
    pmap = sweep_grid(cfg.params, spec, n_workers=threads)
    rows = []
    any_failed = False
    for cell in pmap.cells:
        t_min = cell.transmittances[0] if cell.transmittances else math.nan
        t_max = cell.transmittances[-1] if cell.transmittances else math.nan
        rows.append([cell.eta, cell.lam, cell.big_g, cell.n_stable,
                     cell.phase.value, t_min, t_max, cell.error])
        any_failed |= bool(cell.error)
    write_csv(os.path.join(out_dir, "phase_map.csv"),
              ["eta", "lambda", "big_g", "n_stable", "phase",
               "t_min", "t_max", "errors"], rows)
    brows = []
    for ka, kb in pmap.boundary:
        ca, cb = pmap.cells[ka], pmap.cells[kb]
        brows.append([ka, kb, ca.eta, ca.big_g, cb.eta, cb.big_g])
    write_csv(os.path.join(out_dir, "boundary.csv"),
              ["index_a", "index_b", "eta_a", "big_g_a", "eta_b", "big_g_b"],
              brows)
    files = ["phase_map.csv", "boundary.csv"]
    if cfg.get("output", "heatmap", False):
        write_phase_svg(os.path.join(out_dir, "heatmap.svg"), pmap)
        files.append("heatmap.svg")
    derived = _derived_summary(cfg.params, None)
    derived["bright_threshold"] = 0.5
    return files, derived, EXIT_PARTIAL if any_failed else EXIT_OK


def _schedule_from_config(cfg: RunConfig, sec, prefix, target,
                          default=None):
    kind = cfg.get(sec, f"{prefix}_kind")
    if kind is None:
        if prefix == "lambda":
            const = _resolve_lambda(cfg, sec, "lambda", "lambda_G",
                                    required=False)
        else:
            const = cfg.get(sec, prefix)
            const = None if const is None else float(const)
        if const is None:
            if default is None:
                raise ConfigError(
                    f"[{sec}] needs '{prefix}' or '{prefix}_kind'")
            const = default
        return Schedule.constant(target, const)
    if kind == "constant":
        return Schedule.constant(target, float(cfg.require(sec, prefix)))
    if kind == "ramp":
        return Schedule.ramp_cycle(
            target,
            float(cfg.require(sec, f"{prefix}_low")),
            float(cfg.require(sec, f"{prefix}_high")),
            _resolve_time(cfg, sec, f"{prefix}_t_up"),
            _resolve_time(cfg, sec, f"{prefix}_t_down"),
            int(cfg.require(sec, f"{prefix}_cycles")))
    if kind == "square":
        return Schedule.square_wave(
            target,
            float(cfg.require(sec, f"{prefix}_low")),
            float(cfg.require(sec, f"{prefix}_high")),
            _resolve_time(cfg, sec, f"{prefix}_period"),
            float(cfg.get(sec, f"{prefix}_duty", 0.5)))
    if kind == "piecewise":
        return Schedule.piecewise(target, cfg.require(sec, f"{prefix}_knots"))
    raise ConfigError(f"[{sec}].{prefix}_kind must be constant, ramp, "
                      f"square or piecewise, got {kind!r}")


def _write_trajectory(out_dir, traj, low, high):
    rows = []
    for i, t in enumerate(traj.times):
        y = traj.states[i]
        rows.append([float(t), y[0], y[1], y[2], y[3], y[4], y[5], y[6],
                     traj.controls_trace[i, 0], traj.controls_trace[i, 1],
                     float(traj.transmittance_trace[i])])
    write_csv(os.path.join(out_dir, "trajectory.csv"),
              ["t", "re_alpha", "im_alpha", "re_m", "im_m", "n_e", "n_g",
               "n_f", "eta", "lambda", "transmittance"], rows)
    events = detect_transitions(traj, low, high)
    write_csv(os.path.join(out_dir, "events.csv"), ["time", "direction"],
              [[e.time, e.direction] for e in events])
    return ["trajectory.csv", "events.csv"]


def _run_simulation(cfg, sec, out_dir, eta_schedule, lambda_schedule,
                    t_end):
    loss = _resolve_loss(cfg, sec)
    seed_alpha = float(cfg.get(sec, "seed_alpha", DEFAULT_SEED_ALPHA))
    initial_kind = cfg.get(sec, "initial", "ground") \
        if sec == "simulate" else "ground"
    if initial_kind == "ground":
        initial = ground_state(cfg.params, seed_alpha=seed_alpha)
    elif initial_kind == "zero":
        initial = MeanFieldState()
    else:
        raise ConfigError(f"[{sec}].initial must be 'ground' or 'zero', "
                          f"got {initial_kind!r}")
    opts = IntegratorOptions(
        rtol=float(cfg.get(sec, "rtol", 1e-8)),
        atol=float(cfg.get(sec, "atol", 1e-10)),
        n_samples=int(cfg.get(sec, "stride", 2000)),
        log_spaced=bool(cfg.get(sec, "log_spaced", False)),
    )
    traj = integrate(initial, cfg.params, eta_schedule, lambda_schedule,
                     loss, t_end, opts)
    low = float(cfg.get(sec, "detect_low", 0.1))
    high = float(cfg.get(sec, "detect_high", 0.5))
    files = _write_trajectory(out_dir, traj, low, high)
    extra = {"seed_alpha": seed_alpha, "t_end": t_end,
             "schmitt_thresholds": [low, high],
             "loss": {"enabled": loss.enabled, "rate_g": loss.rate_g,
                      "rate_e": loss.rate_e, "rate_f": loss.rate_f}}
    return files, extra


def cmd_simulate(cfg: RunConfig, out_dir, threads, quiet):
    sec = "simulate"
    if sec not in cfg.sections:
        raise ConfigError("missing [simulate] section")
    t_end = _resolve_time(cfg, sec, "t_end")
    if t_end is None:
        raise ConfigError("[simulate] needs t_end or t_end_ms")
    eta_s = _schedule_from_config(cfg, sec, "eta", ControlTarget.ETA)
    lam_s = _schedule_from_config(cfg, sec, "lambda", ControlTarget.LAMBDA)
    files, extra = _run_simulation(cfg, sec, out_dir, eta_s, lam_s, t_end)
    lam0 = lam_s.parameters[0] if lam_s.kind.value == "constant" else None
    derived = _derived_summary(cfg.params, lam0)
    return files, {**derived, **extra}, EXIT_OK


def cmd_pulse(cfg: RunConfig, out_dir, threads, quiet):
    """Simulate with a square-wave repumper: high for the first half-period,
    zero for the second."""
    sec = "pulse"
    if sec not in cfg.sections:
        raise ConfigError("missing [pulse] section")
    eta = float(cfg.require(sec, "eta"))
    lam_high = _resolve_lambda(cfg, sec, "lambda_high", "G_high")
    period = _resolve_time(cfg, sec, "period")
    if period is None:
        raise ConfigError("[pulse] needs period or period_ms")
    duty = float(cfg.get(sec, "duty", 0.5))
    t_end = _resolve_time(cfg, sec, "t_end")
    if t_end is None:
        t_end = float(cfg.get(sec, "periods", 10)) * period
    eta_s = Schedule.constant(ControlTarget.ETA, eta)
    lam_s = Schedule.square_wave(ControlTarget.LAMBDA, 0.0, lam_high,
                                 period, duty)
    files, extra = _run_simulation(cfg, sec, out_dir, eta_s, lam_s, t_end)
    derived = _derived_summary(cfg.params, lam_high)
    return files, {**derived, **extra}, EXIT_OK


def cmd_hysteresis(cfg: RunConfig, out_dir, threads, quiet):
    sec = "hysteresis"
    if sec not in cfg.sections:
        raise ConfigError("missing [hysteresis] section")
    target = cfg.get(sec, "target", "eta")
    loss = _resolve_loss(cfg, sec)
    if target == "eta":
        lo = float(cfg.require(sec, "min"))
        hi = float(cfg.require(sec, "max"))
        t_up = _resolve_time(cfg, sec, "t_up",
                             _default_ms(cfg, 30.0))
        t_down = _resolve_time(cfg, sec, "t_down",
                               _default_ms(cfg, 10.0))
        tgt = ControlTarget.ETA
        fixed = Controls(eta=0.0,
                         lam=_resolve_lambda(cfg, sec, "fixed_lambda",
                                             "fixed_G"))
    elif target == "lambda":
        g_lo, g_hi = cfg.get(sec, "G_min"), cfg.get(sec, "G_max")
        if g_lo is not None and g_hi is not None:
            lo = lambda_of_big_g(float(g_lo), cfg.params.Gamma)
            hi = lambda_of_big_g(float(g_hi), cfg.params.Gamma)
        else:
            lo = float(cfg.require(sec, "min"))
            hi = float(cfg.require(sec, "max"))
        t_up = _resolve_time(cfg, sec, "t_up", _default_ms(cfg, 15.0))
        t_down = _resolve_time(cfg, sec, "t_down", _default_ms(cfg, 5.0))
        tgt = ControlTarget.LAMBDA
        fixed = Controls(eta=float(cfg.require(sec, "fixed_eta")), lam=0.0)
    else:
        raise ConfigError(f"[hysteresis].target must be eta or lambda, "
                          f"got {target!r}")
    if t_up is None or t_down is None:
        raise ConfigError("[hysteresis] ramp times unavailable: give t_up/"
                          "t_down (1/gamma) or set gamma_MHz for ms defaults")
    cycles = int(cfg.get(sec, "cycles", 5))
    ramp = Schedule.ramp_cycle(tgt, lo, hi, t_up, t_down, cycles)
    n_grid = int(cfg.get(sec, "grid_points", 200))
    stride = cfg.get(sec, "stride")
    opts = None if stride is None else IntegratorOptions(
        n_samples=int(stride))
    rec = hysteresis_run(cfg.params, ramp, fixed, loss, opts=opts,
                         n_grid=n_grid)
    files = []
    for k in range(cycles):
        for leg, curve in (("up", rec.up_curves[k]),
                           ("down", rec.down_curves[k])):
            name = f"cycle_{k + 1}_{leg}.csv"
            write_csv(os.path.join(out_dir, name),
                      ["control", "transmittance"],
                      list(zip(rec.control_grid, curve)))
            files.append(name)
    write_csv(os.path.join(out_dir, "loop_areas.csv"), ["cycle", "area"],
              [[k + 1, a] for k, a in enumerate(rec.loop_areas)])
    files.append("loop_areas.csv")
    lam0 = fixed.lam if tgt is ControlTarget.ETA else None
    return files, _derived_summary(cfg.params, lam0), EXIT_OK


def _default_ms(cfg, value_ms):
    if cfg.gamma_MHz is None:
        return None
    return ms_to_sim_time(value_ms, cfg.gamma_MHz)


COMMANDS = {
    "steady": cmd_steady,
    "phase-diagram": cmd_phase_diagram,
    "simulate": cmd_simulate,
    "hysteresis": cmd_hysteresis,
    "pulse": cmd_pulse,
}


def _resolve_threads(value):
    if value is None:
        env = os.environ.get("TBB_SIM_THREADS")
        value = int(env) if env else 1
    if value == 0:
        value = os.cpu_count() or 1
    return max(1, value)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tbbsim",
        description="Mean-field atom-cavity bistability simulator")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--out", default=None,
                        help="output directory (default: [output].dir)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count for sweeps; 0 = auto "
                             "(env TBB_SIM_THREADS is the fallback)")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            text = fh.read()
        cfg = parse_config(text)
    except OSError as exc:
        print(f"tbbsim: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"tbbsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out or cfg.get("output", "dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    threads = _resolve_threads(args.threads)

    start = time.monotonic()
    try:
        files, derived, code = COMMANDS[args.command](cfg, out_dir, threads,
                                                      args.quiet)
    except ConfigError as exc:
        print(f"tbbsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TbbError as exc:
        print(f"tbbsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    elapsed = time.monotonic() - start
    write_manifest(out_dir, args.command, emit_config(cfg), derived, files,
                   elapsed)
    if not args.quiet:
        for name in files + ["manifest.json"]:
            print(os.path.join(out_dir, name))
    return code


if __name__ == "__main__":
    sys.exit(main())
