"""Command-line front end.

::

    evosurf-ch simulate run.cfg [--output DIR]
    evosurf-ch sweep run.cfg --param {log_delta,penalty_delta,theta} --values 1e-1,1e-2
    evosurf-ch admissibility run.cfg [--samples N] [--csv PATH]
    evosurf-ch verify

``EVOSURF_WORKERS`` caps the number of concurrent sweep sub-runs.
"""
import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import diagnostics, outputs, verify
from .config import RunConfig, parse_config, parse_text, serialize
from .errors import ConfigError, EvosurfError, SimulationError
from .solver import run_simulation

SWEEP_PARAMS = {
    "log_delta": ("log", "potential.delta"),
    "penalty_delta": ("obstacle", "potential.delta"),
    "theta": ("log", "potential.theta"),
}
SUMMARY_COLUMNS = ("value", "max_excess", "distance_to_reference", "wall_time", "status")


# ------------------------------------------------------------- simulate

@dataclass
class RunOutcome:
    directory: str
    rows: int
    completed: bool
    message: str
    verdict: Optional[str] = None


def simulate(cfg: RunConfig, out_dir: str, log=None, trajectory=False) -> RunOutcome:
    """Run one configured simulation, writing ``diagnostics.csv`` (and snapshots) to ``out_dir``.

    With ``trajectory=True`` the output-time ``u`` vectors and their vertex
    quadrature weights are saved to ``trajectory.npz`` for sweep distances.
    """
    log = log or (lambda msg: print(msg, flush=True))
    os.makedirs(out_dir, exist_ok=True)
    surface = cfg.build_surface()
    potential = cfg.build_potential()
    scheme = cfg.scheme_config()
    u0 = cfg.initial_values(surface.reference_mesh.vertices)
    verdict = []
    snaps = {"k": 0}
    traj = {"t": [], "u": [], "lumped": []}

    def on_report(report):
        verdict.append(report.verdict)
        log(report.summary())

    def on_row(state, row):
        writer.write(row)
        if cfg.output.snapshots:
            outputs.write_snapshot(outputs.snapshot_path(out_dir, snaps["k"]), state.mesh, state.u, state.w)
            if cfg.output.vtk:
                outputs.write_vtk(outputs.snapshot_path(out_dir, snaps["k"], "vtk"), state.mesh, state.u, state.w)
            snaps["k"] += 1
        if trajectory:
            traj["t"].append(state.t)
            traj["u"].append(np.array(state.u))
            traj["lumped"].append(_lumped(state.mesh))

    with open(os.path.join(out_dir, "config.cfg"), "w") as fh:
        fh.write(serialize(cfg))
    with outputs.CsvWriter(os.path.join(out_dir, "diagnostics.csv")) as writer:
        try:
            result = run_simulation(surface, potential, scheme, u0, callbacks=[on_row],
                                    keep_states=False, on_admissibility=on_report)
            n_rows, ok, msg = len(result.rows), True, f"completed {scheme.n_steps} steps"
        except SimulationError as exc:
            n_rows, ok, msg = len(exc.result.rows) if exc.result else 0, False, str(exc)
    if trajectory:
        np.savez(os.path.join(out_dir, "trajectory.npz"), t=np.array(traj["t"]),
                 u=np.array(traj["u"]), lumped=np.array(traj["lumped"]))
    return RunOutcome(out_dir, n_rows, ok, msg, verdict[0] if verdict else None)


def _lumped(mesh):
    w = np.zeros(mesh.n_vertices)
    area3 = mesh.current_areas / 3.0
    for k in range(3):
        np.add.at(w, mesh.triangles[:, k], area3)
    return w


def _output_dir(cfg: RunConfig, override=None):
    return override if override else cfg.resolve(cfg.output.directory)


def cmd_simulate(args):
    cfg = parse_config(args.config)
    out = simulate(cfg, _output_dir(cfg, args.output))
    if out.completed:
        print(f"{out.message}; {out.rows} rows written to {os.path.join(out.directory, 'diagnostics.csv')}")
        return 0
    print(f"error: {out.message}", file=sys.stderr)
    print(f"{out.rows} rows flushed to {os.path.join(out.directory, 'diagnostics.csv')}", file=sys.stderr)
    return 2


# ---------------------------------------------------------------- sweep

def parse_values(tokens: Sequence[str]) -> List[float]:
    vals = []
    for tok in tokens:
        for part in tok.replace(",", " ").split():
            try:
                vals.append(float(part))
            except ValueError:
                raise ConfigError(f"sweep value {part!r} is not a number") from None
    if not vals:
        raise ConfigError("empty sweep")
    return vals


def sweep_configs(cfg: RunConfig, param: str, values: Sequence[float]):
    """Sub-run configs for ``param`` at each value, plus the reference config (or ``None``)."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; expected one of {tuple(SWEEP_PARAMS)}")
    if len(values) == 0:
        raise ConfigError("empty sweep")
    kind, key = SWEEP_PARAMS[param]
    if cfg.potential.kind != kind:
        raise ConfigError(f"sweep parameter {param} needs potential.kind = {kind}, got {cfg.potential.kind}")
    subs = []
    for v in values:
        sub = cfg.with_value(key, float(v))
        parse_text(serialize(sub), cfg.base_dir)   # validate the swept value
        subs.append(sub)
    reference = None
    if param == "theta":
        reference = cfg.with_value("model", "CH1_obstacle").with_value("potential.kind", "obstacle") \
            .with_value("potential.delta", cfg.potential.reference_delta)
    return subs, reference


def _sub_run(text, base_dir, out_dir):
    cfg = parse_text(text, base_dir)
    t0 = time.perf_counter()
    out = simulate(cfg, out_dir, log=lambda *_: None, trajectory=True)
    return out.completed, out.message, time.perf_counter() - t0


def _workers(n_jobs):
    env = os.environ.get("EVOSURF_WORKERS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"EVOSURF_WORKERS must be an integer, got {env!r}") from None
        if cap < 1:
            raise ConfigError("EVOSURF_WORKERS must be >= 1")
    return max(1, min(cap, n_jobs))


def trajectory_distance(path_a, path_b):
    """Time-integrated L2 distance of two saved trajectories (vertex quadrature, right-endpoint rule)."""
    a, b = np.load(path_a), np.load(path_b)
    n = min(len(a["t"]), len(b["t"]))
    if n < 2 or not np.allclose(a["t"][:n], b["t"][:n]):
        raise ValueError("trajectories are not on a common time grid")
    diff = a["u"][:n] - b["u"][:n]
    norms = np.sqrt(np.einsum("kn,kn->k", a["lumped"][:n], diff**2))
    return float(np.sum(np.diff(a["t"][:n]) * norms[1:]))


def _fmt_value(v):
    return "%.17g" % v


def run_sweep(cfg: RunConfig, param: str, values: Sequence[float], out_dir: str, workers=None):
    """Run all sub-runs, write ``sweep_summary.csv`` and return the summary rows.

    The reference for the distance column is the obstacle-penalty run (theta
    sweeps) or the sub-run with the smallest value (delta sweeps).  A failed
    sub-run still gets a summary row with its error in ``status``.
    """
    subs, reference = sweep_configs(cfg, param, values)
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(serialize(s), s.base_dir, os.path.join(out_dir, f"{param}={_fmt_value(v)}"))
            for s, v in zip(subs, values)]
    if reference is not None:
        jobs.append((serialize(reference), reference.base_dir, os.path.join(out_dir, "reference")))
    n_workers = workers if workers is not None else _workers(len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_sub_run, *zip(*jobs)))
    else:
        results = [_sub_run(*job) for job in jobs]

    if reference is not None:
        ref_dir, ref_ok = jobs[-1][2], results[-1][0]
    else:
        k = int(np.argmin(values))
        ref_dir, ref_ok = jobs[k][2], results[k][0]
    rows = []
    for v, job, (ok, msg, wall) in zip(values, jobs, results):
        csv_path = os.path.join(job[2], "diagnostics.csv")
        excess, dist = float("nan"), float("nan")
        if os.path.exists(csv_path):
            data = outputs.read_csv(csv_path)
            if len(data["phase_excess"]):
                excess = float(np.max(data["phase_excess"]))
        if ok and ref_ok:
            dist = trajectory_distance(os.path.join(job[2], "trajectory.npz"),
                                       os.path.join(ref_dir, "trajectory.npz"))
        status = "ok" if ok else "failed: " + msg.replace(",", ";")
        rows.append({"value": float(v), "max_excess": excess, "distance_to_reference": dist,
                     "wall_time": wall, "status": status})
    if reference is not None and not ref_ok:
        rows.append({"value": float("nan"), "max_excess": float("nan"), "distance_to_reference": float("nan"),
                     "wall_time": results[-1][2], "status": "reference failed: " + results[-1][1].replace(",", ";")})
    with open(os.path.join(out_dir, "sweep_summary.csv"), "w") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join([_fmt_value(r["value"]), _fmt_value(r["max_excess"]),
                               _fmt_value(r["distance_to_reference"]), "%.3f" % r["wall_time"],
                               r["status"]]) + "\n")
    return rows


def cmd_sweep(args):
    cfg = parse_config(args.config)
    values = parse_values(args.values)
    out_dir = os.path.join(_output_dir(cfg, args.output), f"sweep_{args.param}")
    rows = run_sweep(cfg, args.param, values, out_dir)
    for r in rows:
        print(f"{r['value']:<10.4g} max_excess={r['max_excess']:.6g} "
              f"distance={r['distance_to_reference']:.6g} {r['status']}")
    print(f"summary written to {os.path.join(out_dir, 'sweep_summary.csv')}")
    return 0 if all(r["status"] == "ok" for r in rows) else 2


# ---------------------------------------------------------- other commands

def cmd_admissibility(args):
    cfg = parse_config(args.config)
    surface = cfg.build_surface()
    u0 = cfg.initial_values(surface.reference_mesh.vertices)
    report = diagnostics.admissibility_profile(surface, u0, args.samples, cfg.scheme.flow_step)
    print(report.summary())
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("t,m\n")
            for t, m in report.samples:
                fh.write(f"{t:.17g},{m:.17g}\n")
    return 0


def cmd_verify(args):
    results = verify.run_checks(corrupt_seam=args.corrupt_seam)
    print(verify.format_table(results))
    return 0 if all(r.passed for r in results) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="evosurf-ch",
                                     description="Cahn-Hilliard simulations on evolving surfaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one configured simulation")
    p.add_argument("config")
    p.add_argument("--output", help="output directory (overrides output.directory)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a parameter sweep and write a summary table")
    p.add_argument("config")
    p.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    p.add_argument("--values", nargs="*", default=[], help="comma or space separated values")
    p.add_argument("--output", help="output directory (overrides output.directory)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("admissibility", help="print the admissibility verdict of a configuration")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--csv", help="write the sampled profile (t, m) to this file")
    p.set_defaults(func=cmd_admissibility)

    p = sub.add_parser("verify", help="run the built-in invariant checks")
    p.add_argument("--corrupt-seam", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EvosurfError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
