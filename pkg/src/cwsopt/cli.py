"""Command-line entry points.

Exit codes: 0 success, 2 usage error, 3 bad input data or configuration,
4 numerical failure (geometry, conditioning, gradient check).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import io
from .biot_savart import TargetSpec
from .config import RunConfig, load_config
from .errors import CwsError, DataError, ToleranceExceeded
from .inverse import solve_at
from .optimizer import HISTORY_COLUMNS, run_bfgs
from .shape_gradient import evaluate, fd_gradient_check
from .surfaces import eval_mesh, geometry_report

EXIT_USAGE = 2


def load_problem(cfg: RunConfig, base: Path | None):
    """CWS surface (with the configured truncation) and the target spec."""
    cws = io.load_surface(cfg.resolve(cfg.cws_file, base))
    if cfg.surface_m_max >= 0 or cfg.surface_n_max >= 0:
        m = cfg.surface_m_max if cfg.surface_m_max >= 0 else cws.m_max
        n = cfg.surface_n_max if cfg.surface_n_max >= 0 else cws.n_max
        try:
            cws = cws.truncated(m, n)
        except ValueError as exc:
            raise DataError(f"surface truncation: {exc}") from exc
    plasma = io.load_surface(cfg.resolve(cfg.plasma_file, base))
    pm = eval_mesh(plasma, *cfg.plasma_grid())
    if not cfg.target_file:
        return cws, TargetSpec.zero(pm)
    tgt = io.load_target(cfg.resolve(cfg.target_file, base))
    if tgt["format"] == "bmn":
        return cws, TargetSpec.from_bmn(pm, tgt["bmn"])
    if tgt["values"].shape != pm.shape:
        raise DataError(f"grid target {tgt['values'].shape} does not match plasma grid {pm.shape}")
    return cws, TargetSpec(pm, tgt["values"])


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_mesh(cfg, base, args):
    cws, target = load_problem(cfg, base)
    mesh = target.plasma_mesh if args.which == "plasma" else eval_mesh(cws, cfg.n_u, cfg.n_v)
    pts, nrm = mesh.full_points(), mesh.full_normals()
    lines = ["x,y,z,nx,ny,nz"] + [",".join(repr(float(c)) for c in (*p, *n))
                                  for p, n in zip(pts, nrm)]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_geometry(cfg, base, args):
    cws, target = load_problem(cfg, base)
    rep = geometry_report(eval_mesh(cws, cfg.n_u, cfg.n_v), target.plasma_mesh, cfg.reach_cutoff)
    for key in ("area", "min_distance_to", "kappa_max", "reach_estimate", "curvature_radius",
                "bottleneck"):
        print(f"{key} = {getattr(rep, key)!r}")
    return 0


def cmd_solve(cfg, base, args):
    cws, target = load_problem(cfg, base)
    settings = cfg.solver_settings()
    state = solve_at(cws, target, settings)
    _emit(io.format_result(state.result, settings), args.out)
    if args.potential_out:
        io.save_potential(args.potential_out, state.potential)
    return 0


def cmd_cost(cfg, base, args):
    cws, target = load_problem(cfg, base)
    res = solve_at(cws, target, cfg.solver_settings()).result
    print(f"chi2_b = {res.chi2_b!r}")
    print(f"chi2_j = {res.chi2_j!r}")
    print(f"lambda = {res.lam!r}")
    print(f"cost = {res.cost!r}")
    return 0


def cmd_grad_check(cfg, base, args):
    cws, target = load_problem(cfg, base)
    ids = cfg.free_ids(cws)
    settings, penalty = cfg.solver_settings(), cfg.penalty_config()
    if args.gradient_out:
        ev = evaluate(cws, target, settings, penalty, ids)
        Path(args.gradient_out).write_text(io.format_gradient(ev.gradient))
    try:
        rep = fd_gradient_check(cws, target, settings, penalty, args.probes, args.step,
                                args.tol, cfg.seed, ids)
        status = 0
    except ToleranceExceeded as exc:
        rep, status = exc.report, exc.exit_code
    for k in range(len(rep.analytic)):
        print(f"probe {k}: analytic = {float(rep.analytic[k])!r} "
              f"fd = {float(rep.finite_difference[k])!r} "
              f"rel_err = {rep.rel_errors[k]:.3e}")
    print(f"max_rel_error = {rep.max_error:.3e}")
    print(f"median_rel_error = {rep.median_error:.3e}")
    print("PASS" if status == 0 else f"FAIL (tolerance {args.tol:g})")
    return status


def cmd_optimize(cfg, base, args):
    cws, target = load_problem(cfg, base)
    out = Path(args.output_dir or cfg.resolve(cfg.output_dir, base))
    out.mkdir(parents=True, exist_ok=True)
    ids = cfg.free_ids(cws)
    with io.HistoryWriter(out / "history.csv", HISTORY_COLUMNS) as hist:
        def on_iterate(row, surface):
            hist.write(row)
            k = row["iteration"]
            if cfg.checkpoint_every and k % cfg.checkpoint_every == 0:
                io.save_checkpoint(out / "checkpoints", k, surface)

        res = run_bfgs(cws, target, cfg.solver_settings(), cfg.penalty_config(),
                       cfg.bfgs_settings(), ids, on_iterate)
    io.save_surface(out / "cws_final.txt", res.surface, f"status {res.status}")
    final = solve_at(res.surface, target, cfg.solver_settings())
    io.save_potential(out / "potential_final.txt", final.potential)
    last = res.history[-1]
    print(f"status = {res.status}")
    print(f"iterations = {last['iteration']}")
    print(f"total = {last['total']!r}")
    print(f"history = {out / 'history.csv'}")
    return 0


REPORT_COLUMNS = ["type", "chi2_B", "chi2_j", "C(S)", "Distance (m)", "Perimeter (m^2)",
                  "Reach (m)", "iterations"]


def report_table(rows, label: str) -> str:
    last = rows[-1]
    vals = [label, f"{last['chi2_b']:.2e}", f"{last['chi2_j']:.2e}", f"{last['cost']:.2e}",
            f"{last['distance']:.2e}", f"{last['area']:.2e}", f"{last['reach']:.2e}",
            str(int(last["iteration"]))]
    widths = [max(len(a), len(b)) for a, b in zip(REPORT_COLUMNS, vals)]
    fmt = " | ".join("{:<%d}" % w for w in widths)
    return fmt.format(*REPORT_COLUMNS) + "\n" + fmt.format(*vals) + "\n"


def cmd_report(args):
    rows = io.load_history(args.history)
    if not rows:
        raise DataError("history file has no rows")
    sys.stdout.write(report_table(rows, args.type or Path(args.history).stem))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cwsopt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="run configuration file")
        return sp

    sp = with_config("mesh", "dump the full-surface point cloud as CSV")
    sp.add_argument("--which", choices=("cws", "plasma"), default="cws")
    sp.add_argument("--out")
    with_config("geometry", "area, distance, curvature and reach of the CWS")
    sp = with_config("solve", "solve for the optimal current and write the result record")
    sp.add_argument("--out")
    sp.add_argument("--potential-out")
    with_config("cost", "print chi2_b, chi2_j and the cost")
    sp = with_config("grad-check", "compare the shape gradient with finite differences")
    sp.add_argument("--probes", type=int, default=5)
    sp.add_argument("--step", type=float, default=1e-6)
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--gradient-out")
    sp = with_config("optimize", "run BFGS on the surface coefficients")
    sp.add_argument("--output-dir")
    sp = sub.add_parser("report", help="summarize a history CSV as a results table")
    sp.add_argument("history")
    sp.add_argument("--type", help="label for the row (default: file stem)")
    return p


COMMANDS = {"mesh": cmd_mesh, "geometry": cmd_geometry, "solve": cmd_solve, "cost": cmd_cost,
            "grad-check": cmd_grad_check, "optimize": cmd_optimize}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    try:
        if args.command == "report":
            return cmd_report(args)
        path = Path(args.config)
        cfg = load_config(path)
        with threadpool_limits(limits=cfg.threads):
            return COMMANDS[args.command](cfg, path.parent, args)
    except CwsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
