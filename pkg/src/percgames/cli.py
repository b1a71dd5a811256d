"""Command-line front end: solve, phase-grid, simulate, pta, duration.

All randomness flows from --seed, so identical configurations produce
byte-identical output files.  Every output embeds the resolved config and
the library version.  Exit codes: 0 success, 2 configuration error,
3 numeric failure (non-convergence or a cross-validation disagreement).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__, duration, engine, fixedpoint, phase, pta
from .fixedpoint import ParamPair
from .offspring import Dirac, parse_distribution

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


def _resolve_workers(args) -> int:
    env = os.environ.get("PERCGAMES_WORKERS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"PERCGAMES_WORKERS must be an integer, got {env!r}")
    if args.workers is not None:
        return max(1, args.workers)
    return os.cpu_count() or 1


def _params(args) -> ParamPair:
    if args.p is None or args.q is None:
        raise ConfigError("--p and --q are required for this subcommand")
    try:
        return ParamPair(args.p, args.q)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _dist(args):
    if args.dist is None:
        raise ConfigError("--dist is required")
    try:
        return parse_distribution(args.dist)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _parse_grid(spec: str):
    """Grid spec 'p_min,p_max,steps x q_min,q_max,steps' (literal 'x')."""
    try:
        p_part, q_part = spec.lower().split("x")
        p_min, p_max, p_steps = (v.strip() for v in p_part.split(","))
        q_min, q_max, q_steps = (v.strip() for v in q_part.split(","))
        p_values = np.linspace(float(p_min), float(p_max), int(p_steps))
        q_values = np.linspace(float(q_min), float(q_max), int(q_steps))
    except Exception:
        raise ConfigError(
            f"bad --grid {spec!r}; expected p_min,p_max,steps x q_min,q_max,steps"
        )
    return p_values, q_values


def _config_dict(args, **extra):
    # the output path is not part of the scientific config: identical
    # configurations must produce byte-identical files wherever written
    cfg = {
        "subcommand": args.subcommand,
        "dist": args.dist,
        "p": args.p,
        "q": args.q,
        "grid": getattr(args, "grid", None),
        "depth": getattr(args, "depth", None),
        "replicates": getattr(args, "replicates", None),
        "seed": getattr(args, "seed", None),
        "tol": getattr(args, "tol", None),
    }
    cfg.update(extra)
    return cfg


def _write_json(path: str | None, payload: dict):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def _write_lines(path: str | None, lines):
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def _csv_preamble(config: dict) -> str:
    return f"# percgames {__version__} config={json.dumps(config, sort_keys=True)}"


def cmd_solve(args) -> int:
    dist = _dist(args)
    params = _params(args)
    tol = args.tol if args.tol is not None else fixedpoint.DEFAULT_TOL
    report = fixedpoint.solve_fixed_points(dist, params, tol=tol)
    bond = fixedpoint.outcome_probabilities(dist, params, tol=tol)
    site = fixedpoint.site_outcome_probabilities(dist, params, tol=tol)
    try:
        verdict = phase.closed_form_draw_free(dist, params)
        margin = verdict.margin
        boundary = verdict.boundary_indeterminate
    except phase.NoClosedFormError:
        margin = None
        boundary = None
    payload = {
        "version": __version__,
        "config": _config_dict(args),
        "fixedpoint": asdict(report),
        "bond": asdict(bond),
        "site": asdict(site),
        "closed_form_margin": margin,
        "boundary_indeterminate": boundary,
    }
    payload["fixedpoint"]["all_g2_fixed_points"] = list(report.all_g2_fixed_points)
    _write_json(args.out, payload)
    if report.residual_alpha > 1e-10 or report.residual_w_prime > 1e-10:
        print("fixed-point residuals exceed 1e-10", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_phase_grid(args) -> int:
    dist = _dist(args)
    if args.grid is None:
        raise ConfigError("--grid is required for phase-grid")
    p_values, q_values = _parse_grid(args.grid)
    tol = args.tol if args.tol is not None else fixedpoint.DEFAULT_TOL
    cells, summary = phase.phase_grid(dist, p_values, q_values, tol=tol)

    config = _config_dict(args)
    lines = [_csv_preamble(config)]
    lines.append("p,q,margin,draw_free_closed_form,draw_free_numeric,agreement")
    for cell in cells:
        if cell.result is None:
            continue  # outside I: skipped and counted, not errored
        r = cell.result
        if r.boundary_skipped:
            lines.append(f"{cell.p!r},{cell.q!r},{r.margin!r},-,-,-")
        else:
            lines.append(
                f"{cell.p!r},{cell.q!r},{r.margin!r},"
                f"{str(r.closed_form_draw_free).lower()},"
                f"{str(r.numeric_draw_free).lower()},"
                f"{str(r.agree).lower()}"
            )
    _write_lines(args.out, lines)
    print(
        f"agreement {100.0 * summary.agreement:.2f}% over {summary.cells_checked} cells "
        f"({summary.cells_skipped} boundary cells skipped, "
        f"{summary.cells_outside} grid points outside I)"
    )
    if summary.cells_agreeing != summary.cells_checked:
        print("closed-form and numeric verdicts disagree off the boundary", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_simulate(args) -> int:
    dist = _dist(args)
    params = _params(args)
    workers = _resolve_workers(args)
    result = engine.monte_carlo_outcomes(
        dist, params, args.mode, args.depth, args.replicates, args.seed,
        workers=workers,
    )
    payload = {
        "version": __version__,
        "config": _config_dict(args, mode=args.mode, workers=workers),
        "dist": dist.spec_string(),
        "p": params.p,
        "q": params.q,
        "mode": result.mode,
        "depth": result.depth,
        "replicates": result.replicates,
        "w_hat": result.w_hat,
        "l_hat": result.l_hat,
        "d_hat": result.d_hat,
        "se_w": result.se_w,
        "se_l": result.se_l,
        "se_d": result.se_d,
        "w_n_exact": result.w_n_exact,
        "l_n_exact": result.l_n_exact,
        "seed": result.seed,
    }
    _write_json(args.out, payload)
    return EXIT_OK


def cmd_pta(args) -> int:
    dist = _dist(args)
    if not isinstance(dist, Dirac):
        raise ConfigError("pta runs on the d-regular tree; use --dist dirac:d=<d>")
    if dist.d < 2:
        raise ConfigError("pta needs d >= 2")
    params = _params(args)
    probe = pta.ergodicity_probe(
        d=dist.d, params=params, n_max=args.depth,
        replicates=args.replicates, rng_seed=args.seed,
    )
    config = _config_dict(args)
    lines = [_csv_preamble(config), "n,tv_hat,ci,verdict"]
    for row in probe.rows:
        lines.append(f"{row.n},{row.tv_hat!r},{row.ci_halfwidth!r},{row.verdict}")
    _write_lines(args.out, lines)
    meta = {
        "version": __version__,
        "config": config,
        "d": probe.d,
        "p": params.p,
        "q": params.q,
        "boundary_pair": probe.boundary_pair,
        "replicates": probe.replicates,
        "seed": probe.seed,
        "proxy_note": probe.proxy_note,
        "verdict": probe.verdict,
    }
    meta_path = None if args.out is None else args.out + ".meta.json"
    _write_json(meta_path, meta)
    return EXIT_OK


def cmd_duration(args) -> int:
    dist = _dist(args)
    params = _params(args)
    workers = _resolve_workers(args)
    tol = args.tol if args.tol is not None else 1e-10
    series_error = None
    series = None
    try:
        series = duration.expected_duration_series(dist, params, tol=tol)
    except duration.PositiveDrawError as exc:
        series_error = str(exc)
    mc = duration.monte_carlo_duration(
        dist, params, args.depth, args.replicates, args.seed, workers=workers
    )
    payload = {
        "version": __version__,
        "config": _config_dict(args, workers=workers),
        "series": asdict(series) if series is not None else {"error": series_error},
        "draw_positive": series_error is not None,
        "monte_carlo": asdict(mc),
    }
    _write_json(args.out, payload)
    return EXIT_NUMERIC if series_error is not None else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="percgames",
        description="Percolation games on Galton-Watson trees: exact outcome "
        "probabilities, phase diagrams, simulations, automaton probes, durations.",
    )
    parser.add_argument("--version", action="version", version=f"percgames {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(sp, depth_default=None, replicates_default=None):
        sp.add_argument("--dist", help="distribution spec, e.g. geometric:pi=0.5")
        sp.add_argument("--p", type=float, help="trap probability")
        sp.add_argument("--q", type=float, help="target probability")
        sp.add_argument("--seed", type=int, default=0, help="master RNG seed")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--tol", type=float, help="tolerance override")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker processes (PERCGAMES_WORKERS overrides)")
        if depth_default is not None:
            sp.add_argument("--depth", type=int, default=depth_default)
        if replicates_default is not None:
            sp.add_argument("--replicates", type=int, default=replicates_default)

    sp = sub.add_parser("solve", help="exact outcome probabilities (bond and site)")
    common(sp)
    sp.set_defaults(handler=cmd_solve)

    sp = sub.add_parser("phase-grid", help="closed-form vs numeric draw-free sweep")
    common(sp)
    sp.add_argument("--grid", help="p_min,p_max,steps x q_min,q_max,steps")
    sp.set_defaults(handler=cmd_phase_grid)

    sp = sub.add_parser("simulate", help="Monte-Carlo game solving on sampled trees")
    common(sp, depth_default=8, replicates_default=10_000)
    sp.add_argument("--mode", choices=("bond", "site"), default="bond")
    sp.set_defaults(handler=cmd_simulate)

    sp = sub.add_parser("pta", help="tree-automaton ergodicity probe (d-regular)")
    common(sp, depth_default=12, replicates_default=10_000)
    sp.set_defaults(handler=cmd_pta)

    sp = sub.add_parser("duration", help="expected duration: series and Monte Carlo")
    common(sp, depth_default=30, replicates_default=10_000)
    sp.set_defaults(handler=cmd_duration)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (engine.CappedTreeError, pta.LevelCapError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # ConfigError, bad parameter ranges, bad distribution specs
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
