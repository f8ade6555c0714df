"""Command-line entry point: ``renewalopt run | generate | fit-tariff``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .exceptions import RenewalOptError
from .portfolio import MOTOR_CALIBRATION, Calibration, generate_synthetic, load_portfolio, save_portfolio
from .scenarios import emit_report, load_scenarios, run_scenario, run_split_scenario, write_deltas
from .tariff import TariffStructure, fit_tariff, format_structure, load_points, parse_structure

log = logging.getLogger("renewalopt")

EXTENSIONS = {"csv": "csv", "json": "json", "table": "txt"}


def _cmd_run(args) -> int:
    pf = load_portfolio(args.portfolio)
    scenarios = load_scenarios(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports, ok = [], True
    for k, sc in enumerate(scenarios):
        if args.seed is not None:
            sc = replace(sc, seed=args.seed)
        if args.trace:
            trace = args.trace if len(scenarios) == 1 else f"{args.trace}.{k}"
            sc = replace(sc, trace_path=trace)
        try:
            if sc.split is not None and sc.split.n_bands > 1:
                rep = run_split_scenario(pf, sc)
                deltas_of = rep.aggregate
                feasible = all(b.feasible for b in rep.bands) and rep.aggregate.feasible
            else:
                rep = run_scenario(pf, sc)
                deltas_of = rep
                feasible = rep.feasible
        except RenewalOptError as exc:
            log.error("%s", exc)
            ok = False
            continue
        if not feasible:
            log.error("scenario %r: returned point is not certified feasible", sc.label())
            ok = False
        write_deltas(pf, deltas_of, out / f"deltas_{k}.csv")
        reports.append(rep)
    if reports:
        text = emit_report(reports, args.format, out / f"report.{EXTENSIONS[args.format]}")
        if args.format == "table":
            sys.stdout.write(text)
    return 0 if ok else 1


def _cmd_generate(args) -> int:
    cal = MOTOR_CALIBRATION
    if args.calibration:
        doc = json.loads(Path(args.calibration).read_text(encoding="utf-8"))
        cal = Calibration(**{k: float(v) for k, v in doc.items()})
    pf = generate_synthetic(
        args.n, args.seed, cal, model=args.model, pi_range=tuple(args.pi_range),
    )
    save_portfolio(pf, args.out)
    log.info("wrote %d policies to %s", pf.n, args.out)
    return 0


def _default_init(points, exp_second_arg):
    """Linear least squares on all points, cap at the largest target."""
    x = np.array([p.x for p in points])
    y = np.array([p.y for p in points])
    t = np.array([p.target_premium for p in points])
    m0, m1, m2 = np.linalg.lstsq(np.column_stack([np.ones_like(x), x, y]), t, rcond=None)[0]
    slope = np.linalg.lstsq(np.column_stack([x, y] if exp_second_arg == "y" else [x]), np.log(t), rcond=None)[0]
    a, b = (slope[0] / 2, slope[0] / 2) if exp_second_arg == "x" else slope
    return TariffStructure(float(t.max()), m0, m1, m2, float(a), float(b), exp_second_arg=exp_second_arg)


def _cmd_fit_tariff(args) -> int:
    points = load_points(args.points)
    if args.init:
        init = parse_structure(Path(args.init).read_text(encoding="utf-8"))
        if args.exp_second_arg:
            init = replace(init, exp_second_arg=args.exp_second_arg)
    else:
        init = _default_init(points, args.exp_second_arg or "x")
    fitted, report = fit_tariff(points, init, restarts=args.restarts, seed=args.seed)
    Path(args.out).write_text(format_structure(fitted, report), encoding="utf-8")
    if report.degenerate:
        log.warning("every point lies on the cap: only M0 is identified")
    log.info("max relative residual %.3g", report.max_relative_residual)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="renewalopt", description="Renewal premium optimisation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve the scenarios of a JSON file on a portfolio")
    run.add_argument("--portfolio", required=True, help="portfolio CSV")
    run.add_argument("--scenario", required=True, help="scenario JSON (object or list)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--format", choices=sorted(EXTENSIONS), default="table")
    run.add_argument("--seed", type=int, default=None, help="override every scenario seed")
    run.add_argument("--trace", default=None, help="write the SQP iteration trace here")
    run.set_defaults(func=_cmd_run)

    gen = sub.add_parser("generate", help="write a synthetic portfolio CSV")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--calibration", default=None, help="JSON with min, mean, max (and optional sd)")
    gen.add_argument("--model", choices=("ma", "ma_quadratic", "mb", "mc"), default="ma")
    gen.add_argument("--pi-range", type=float, nargs=2, default=(0.85, 0.98), metavar=("LO", "HI"))
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_generate)

    fit = sub.add_parser("fit-tariff", help="fit the tariff structure to target premiums")
    fit.add_argument("--points", required=True, help="CSV with x,y,premium")
    fit.add_argument("--out", required=True, help="key-value text output")
    fit.add_argument("--init", default=None, help="key-value file with the starting structure")
    fit.add_argument("--exp-second-arg", choices=("x", "y"), default=None)
    fit.add_argument("--restarts", type=int, default=5)
    fit.add_argument("--seed", type=int, default=0)
    fit.set_defaults(func=_cmd_fit_tariff)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (RenewalOptError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
