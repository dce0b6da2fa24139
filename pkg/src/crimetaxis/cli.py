"""Command-line entry point: ``crimetaxis {run,sweep,gamma-compare,oracle,certify}``.

Exit codes: 0 every verdict passed, 1 some verdict failed, 2 usage or
configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .diagnostics import certify, read_records, verdict_report, write_records
from .errors import ConfigError, CrimeTaxisError, StepFailure, UsageError
from .grid import Grid, write_snapshot
from .harness import (RunConfig, eps_sweep, fitted_slope, gamma_compare, heat_oracle_error,
                      parse_config, simulate)

logger = logging.getLogger("crimetaxis")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2 as well, but keep it explicit
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load(path: str) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _outdir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = _load(args.config)
    out = _outdir(cfg, args.out)
    outcome = simulate(cfg, keep_fields=cfg.snapshots, catch=True)
    write_records(out / "diagnostics.csv", outcome.records)
    if cfg.snapshots:
        for i, (t, u, v) in enumerate(zip(outcome.collector.times, outcome.collector.us,
                                          outcome.collector.vs)):
            write_snapshot(out / f"u_{i:05d}.txt", u, cfg.grid, t)
            write_snapshot(out / f"v_{i:05d}.txt", v, cfg.grid, t)
    if not outcome.ok:
        print(f"numerical failure: {outcome.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    res = outcome.result
    verdicts = certify(outcome.records, cfg.params, cfg.grid, cfg.control.dt_init)
    report = verdict_report(verdicts)
    status = res.status
    summary = (f"steps={res.stats.steps} rejections={res.stats.rejections} "
               f"clamps={res.stats.clamps} blowup={status.kind}\n")
    (out / "verdicts.txt").write_text(report + summary)
    sys.stdout.write(report + summary)
    return EXIT_PASS if all(v.passed for v in verdicts) else EXIT_FAIL


def cmd_certify(args) -> int:
    cfg = _load(args.config)
    try:
        records = read_records(args.diagnostics)
    except OSError as exc:
        raise UsageError(f"cannot read diagnostics {args.diagnostics}: {exc}") from None
    verdicts = certify(records, cfg.params, cfg.grid, cfg.control.dt_init)
    sys.stdout.write(verdict_report(verdicts))
    return EXIT_PASS if all(v.passed for v in verdicts) else EXIT_FAIL


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    out = _outdir(cfg, args.out)
    report = eps_sweep(cfg, ladder=args.ladder, T=args.T, jobs=args.jobs)
    (out / "sweep.csv").write_text(report.to_csv())
    sys.stdout.write(report.to_csv())
    for col, ok in report.monotone().items():
        print(f"MONOTONE {col} {'yes' if ok else 'no'}")
    if report.failed:
        print(f"failed rungs: {', '.join(repr(e) for e in report.failed)}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_PASS


def cmd_gamma(args) -> int:
    cfg = _load(args.config)
    out = _outdir(cfg, args.out)
    report = gamma_compare(cfg, gammas=args.gammas, horizons=args.horizons, jobs=args.jobs)
    (out / "gamma_compare.csv").write_text(report.to_csv())
    sys.stdout.write(report.to_csv())
    if not all(r.ok for r in report.rows):
        return EXIT_NUMERICAL
    flags = [f for f in report.stabilized.values() if f is not None]
    return EXIT_PASS if all(flags) else EXIT_FAIL


def cmd_oracle(args) -> int:
    errs = []
    for n in args.grids:
        dt = args.dt0 * (args.grids[0] / n) ** 2
        grid = Grid(n, n)
        e = heat_oracle_error(grid, dt, args.T)
        errs.append((grid.h**2 + dt, e))
        print(f"n={n} dt={dt!r} error={e!r}")
    if len(errs) < 2:
        return EXIT_PASS
    slope = fitted_slope([x for x, _ in errs], [e for _, e in errs])
    ok = slope >= args.min_slope
    print(f"CHECK heat_oracle_slope bound={args.min_slope!r} observed={slope!r} "
          f"margin={slope - args.min_slope!r} {'PASS' if ok else 'FAIL'}")
    return EXIT_PASS if ok else EXIT_FAIL


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="crimetaxis", description="Urban-crime chemotaxis simulator and bound checker.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one configuration and certify its bounds")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: output_dir from the config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("certify", help="recompute verdicts from a stored diagnostics CSV")
    p.add_argument("config")
    p.add_argument("diagnostics")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="cutoff-parameter ladder with pairwise distances")
    p.add_argument("config")
    p.add_argument("--ladder", type=_floats, help="comma-separated, strictly decreasing")
    p.add_argument("--T", type=float, help="final time (default: t_end)")
    p.add_argument("--jobs", type=int, help="parallel member runs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gamma-compare", help="sup-in-time maxima across exponents and horizons")
    p.add_argument("config")
    p.add_argument("--gammas", type=_floats)
    p.add_argument("--horizons", type=_floats)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gamma)

    p = sub.add_parser("oracle", help="heat-flow refinement study against the cosine solution")
    p.add_argument("--grids", type=lambda s: [int(x) for x in _floats(s)], default=[32, 64, 128])
    p.add_argument("--dt0", type=float, default=4e-3, help="dt on the coarsest grid; scaled with h²")
    p.add_argument("--T", type=float, default=0.5)
    p.add_argument("--min-slope", type=float, default=0.9)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StepFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CrimeTaxisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
