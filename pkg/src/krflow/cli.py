"""Command-line orchestration: run, sweep-s, study, gen.

Exit codes: 0 pass, 1 configuration error, 2 numerical abort, 3 monitor
or stability failure.  KRFLOW_OUT overrides output.dir.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import flow, monitors
from .config import RunConfig, parse_config
from .errors import ConfigError, KrflowError
from .geometry import BackgroundFamily
from .grid import PeriodicGrid, ScalarField, write_snapshot
from .initial_data import RoughPotentialSpec, approx_family
from .monitors import write_report

EXIT_PASS = 0
EXIT_CONFIG = 1
EXIT_ABORT = 2
EXIT_MONITOR = 3

# study-ladder stability tolerances per fitted constant
STABILITY_TOL = {
    "laplacian_C": 0.10,
    "third_order_C": 0.20,
    "barrier_C1": 0.10,
    "barrier_C2": 0.10,
}
MIN_ORDER = 0.9


def build_grid(cfg: RunConfig, resolution: int | None = None) -> PeriodicGrid:
    return PeriodicGrid(
        cfg.get("grid", "n"),
        resolution if resolution is not None else cfg.get("grid", "resolution"),
        dealias=cfg.get("grid", "dealias"),
    )


def build_background(cfg: RunConfig, grid: PeriodicGrid) -> BackgroundFamily:
    kind = cfg.get("background", "twist_kind")
    margin = cfg.get("background", "margin")
    t_max = cfg.get("background", "t_max")
    if kind == "none" or cfg.get("background", "twist_amplitude") == 0.0:
        return BackgroundFamily.static(grid, margin=margin, t_max=t_max)
    amp = cfg.get("background", "twist_amplitude")
    freq = cfg.get("background", "twist_frequency")
    axis = cfg.get("background", "twist_axis") - 1
    x = grid.coordinate(axis)
    twist = ScalarField(grid, amp * np.cos(2.0 * np.pi * freq * x))
    return BackgroundFamily(twist, margin=margin, t_max=t_max)


def build_initial_spec(cfg: RunConfig) -> RoughPotentialSpec:
    return RoughPotentialSpec(
        kind=cfg.get("initial", "kind"),
        amplitude=cfg.get("initial", "amplitude"),
        frequency=cfg.get("initial", "frequency"),
        cusp_exponent=cfg.get("initial", "gamma"),
        lp_target=cfg.get("initial", "p"),
        axis=cfg.get("initial", "axis"),
    )


def build_initial(cfg: RunConfig, grid: PeriodicGrid) -> ScalarField:
    phi = build_initial_spec(cfg).generate(grid)
    s = cfg.get("initial", "s")
    if s > 0.0:
        tau0 = cfg.get("initial", "tau0") or None
        phi = approx_family(phi, s, tau0)
    return phi


def build_flow_config(cfg: RunConfig, bg: BackgroundFamily) -> flow.FlowConfig:
    fc = flow.FlowConfig(
        background=bg,
        t_end=cfg.get("flow", "t_end"),
        dt_max=cfg.get("flow", "dt_max"),
        dt_init=cfg.get("flow", "dt_init"),
        kappa=cfg.get("flow", "kappa"),
        time_grid=cfg.get("flow", "time_grid"),
        geometric_ratio=cfg.get("flow", "geometric_ratio"),
        t_floor=cfg.get("flow", "t_floor"),
        sample_times=cfg.get("flow", "sample_times"),
        retry_shrink=cfg.get("flow", "retry_shrink"),
        dt_min=cfg.get("flow", "dt_min"),
        refine=cfg.get("flow", "refine"),
        lp_p=cfg.get("monitors", "lp_p"),
        lp_lambda=cfg.get("monitors", "lp_lambda"),
        cutoff_kind=cfg.get("monitors", "cutoff"),
    )
    try:
        fc.validate()
    except KrflowError as exc:
        raise ConfigError(str(exc)) from exc
    return fc


def resolve_data_class(cfg: RunConfig) -> str:
    explicit = cfg.get("monitors", "data_class")
    if explicit != "auto":
        return explicit
    return "linf" if cfg.get("initial", "kind") == "cusp_lp" else "c11"


def output_dir(cfg: RunConfig) -> Path:
    out = os.environ.get("KRFLOW_OUT") or cfg.get("output", "dir")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_trace_csv(path: Path, trace, config_hash: str) -> None:
    lines = [f"# config_hash={config_hash}", trace.canonical_header()]
    lines.extend(trace.canonical_rows(samples_only=True))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _write_snapshots(outdir: Path, result: flow.RunResult) -> None:
    for idx, state in enumerate(result.states):
        write_snapshot(outdir / f"snap_{idx:04d}.krf", state.phi, state.t)


def _run_once(cfg: RunConfig, resolution: int | None = None,
              refine: int | None = None, s_override: float | None = None):
    grid = build_grid(cfg, resolution)
    bg = build_background(cfg, grid)
    fc = build_flow_config(cfg, bg)
    if refine is not None:
        fc.refine = refine
    phi = build_initial_spec(cfg).generate(grid)
    s = s_override if s_override is not None else cfg.get("initial", "s")
    if s > 0.0:
        tau0 = cfg.get("initial", "tau0") or None
        phi = approx_family(phi, s, tau0)
    return flow.run(fc, phi)


def cmd_run(cfg: RunConfig) -> int:
    outdir = output_dir(cfg)
    chash = cfg.hash()
    result = _run_once(cfg)
    result.trace.metadata["config_hash"] = chash
    if cfg.get("output", "trace"):
        write_trace_csv(outdir / "trace.csv", result.trace, chash)
    if cfg.get("output", "snapshots"):
        _write_snapshots(outdir, result)
    if result.aborted:
        (outdir / "abort.txt").write_text(result.abort_message + "\n", encoding="ascii")
        print(f"aborted: {result.abort_message}", file=sys.stderr)
        return EXIT_ABORT
    verdicts = monitors.run_monitors(
        result,
        data_class=resolve_data_class(cfg),
        t_positive=cfg.get("monitors", "t_positive"),
    )
    write_report(outdir / "report.txt", verdicts, chash)
    failed = [name for name, v in verdicts.items() if v.passed is False]
    for name, v in verdicts.items():
        print(f"{name}: {v.status}")
    return EXIT_MONITOR if failed else EXIT_PASS


def cmd_gen(cfg: RunConfig) -> int:
    outdir = output_dir(cfg)
    grid = build_grid(cfg)
    phi = build_initial(cfg, grid)
    write_snapshot(outdir / "initial.krf", phi, 0.0)
    print(f"wrote {outdir / 'initial.krf'}")
    return EXIT_PASS


def cmd_sweep_s(cfg: RunConfig) -> int:
    outdir = output_dir(cfg)
    chash = cfg.hash()
    s_values = sorted(cfg.get("flow", "s_values"), reverse=True)
    if not s_values:
        raise ConfigError("flow.s_values: the sweep needs at least one s value")
    grid = build_grid(cfg)
    bg = build_background(cfg, grid)
    fc = build_flow_config(cfg, bg)
    phi0 = build_initial_spec(cfg).generate(grid)
    tau0 = cfg.get("initial", "tau0") or None
    sweep = flow.s_sweep(fc, phi0, s_values, tau0)
    for idx, (s, res) in enumerate(zip(sweep.s_values, sweep.results)):
        res.trace.metadata["config_hash"] = chash
        write_trace_csv(outdir / f"trace_s{idx}.csv", res.trace, chash)
    rows = ["# config_hash=" + chash,
            "s_hi,s_lo,gap_initial,gap_max,ratio,passed"]
    for p in sweep.pairs:
        ratio = p.gap_max / p.gap_initial if p.gap_initial > 0 else math.nan
        rows.append("%.17g,%.17g,%.17g,%.17g,%.17g,%d"
                    % (p.s_hi, p.s_lo, p.gap_initial, p.gap_max, ratio, p.passed))
    rows.append(f"# cauchy_verdict={'PASS' if sweep.cauchy_passed else 'FAIL'}")
    (outdir / "sweep.csv").write_text("\n".join(rows) + "\n", encoding="ascii")
    if any(res.aborted for res in sweep.results):
        return EXIT_ABORT
    print(f"cauchy: {'PASS' if sweep.cauchy_passed else 'FAIL'}")
    return EXIT_PASS if sweep.cauchy_passed else EXIT_MONITOR


def _study_constants(result: flow.RunResult, data_class: str) -> dict:
    """Fitted constants with the dynamic range they should be judged against:
    a constant much smaller than 1% of its quantity's range is zero at
    scheme resolution and counts as stable."""
    verdicts = monitors.run_monitors(result, data_class=data_class)
    tr = result.trace
    barrier_scale = max(
        float(np.abs(tr.column("F_plus_sup")).max()),
        float(np.abs(tr.column("F_minus_inf")).max()),
    )
    lap = verdicts["laplacian_bound"].constants.get("C", math.nan)
    third = verdicts["third_order_bound"].constants["C"]
    return {
        "laplacian_C": (lap, lap),
        "third_order_C": (third, third),
        "barrier_C1": (verdicts["volume_barriers"].constants["C1"], barrier_scale),
        "barrier_C2": (verdicts["volume_barriers"].constants["C2"], barrier_scale),
    }


def _stable(value: float, ref: float, scale: float, tol: float) -> bool:
    return abs(value - ref) <= tol * max(abs(ref), 0.01 * scale) + 1e-12


def cmd_study(cfg: RunConfig) -> int:
    outdir = output_dir(cfg)
    chash = cfg.hash()
    ladders = {
        "resolution": list(cfg.get("flow", "study_resolutions")),
        "refine": list(cfg.get("flow", "study_refines")),
        "s": list(cfg.get("flow", "study_s")),
    }
    if not any(ladders.values()):
        raise ConfigError("flow.study_*: the study needs at least one ladder")
    data_class = resolve_data_class(cfg)
    rows = ["# config_hash=" + chash, "ladder,rung,constant,value"]
    all_ok = True
    summary = []

    def run_ladder(name, rungs, runner):
        nonlocal all_ok
        if not rungs:
            return
        consts = []
        finals = []
        for rung in rungs:
            result = runner(rung)
            if result.aborted:
                raise KrflowError(f"study rung {name}={rung} aborted: "
                                  f"{result.abort_message}")
            consts.append(_study_constants(result, data_class))
            finals.append(float(result.trace.column("sup_phi")[-1]))
            for cname, (val, _scale) in consts[-1].items():
                rows.append(f"{name},{rung},{cname},%.17g" % val)
        ref = consts[-1]
        for cname, tol in STABILITY_TOL.items():
            scale = max(c[cname][1] for c in consts)
            ok = all(_stable(c[cname][0], ref[cname][0], scale, tol) for c in consts)
            summary.append((name, cname, ok))
            all_ok &= ok
        if name == "refine" and len(rungs) >= 3:
            errs = [abs(a - b) for a, b in zip(finals[:-1], finals[1:])]
            if errs[-2] > 0 and errs[-1] > 0:
                order = math.log2(errs[-2] / errs[-1])
            else:
                order = math.inf
            rows.append(f"{name},all,observed_order,%.17g" % order)
            if cfg.get("initial", "kind") == "smooth_mode":
                ok = order >= MIN_ORDER
                summary.append((name, "observed_order", ok))
                all_ok &= ok

    run_ladder("resolution", ladders["resolution"],
               lambda n: _run_once(cfg, resolution=n))
    run_ladder("refine", ladders["refine"],
               lambda r: _run_once(cfg, refine=r))
    run_ladder("s", ladders["s"],
               lambda s: _run_once(cfg, s_override=s))

    for name, cname, ok in summary:
        rows.append(f"# stability {name}/{cname}: {'PASS' if ok else 'FAIL'}")
        print(f"stability {name}/{cname}: {'PASS' if ok else 'FAIL'}")
    (outdir / "study.csv").write_text("\n".join(rows) + "\n", encoding="ascii")
    return EXIT_PASS if all_ok else EXIT_MONITOR


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="krflow",
        description="Torus potential-flow integrator and estimate monitors",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep-s", "study", "gen"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the key = value configuration")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
        handler = {
            "run": cmd_run,
            "sweep-s": cmd_sweep_s,
            "study": cmd_study,
            "gen": cmd_gen,
        }[args.command]
        return handler(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KrflowError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
