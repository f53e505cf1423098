"""Command-line interface.

Subcommands
-----------
estimate   select, refit and estimate the average causal effect from a CSV file
select     run variable selection only and report the candidate sets
simulate   run the Monte Carlo study and write the summary CSVs
dgp emit   write one simulated dataset as CSV

Exit codes: 0 success, 2 usage error, 3 unreadable input, 4 schema or data
error, 5 solver failure, 6 singular information matrix, 7 simulation cell
without successful replicates.

Results are JSON with sorted keys; floats are written with ``repr`` so they
parse back to the exact values used internally. Without ``--out`` the result
goes to ``$DRSELECT_OUTPUT_DIR`` when that is set, otherwise to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .aipw import VarianceMethod
from .core import Dataset, canonical_order, standardize
from .dgp import SCENARIOS, SETTINGS, ScenarioSpec, generate
from .exceptions import (DataError, DRSelectError, EmptyCell, ParseError, SchemaError, SingularInformation,
                         SolverError)
from .pipeline import EstimateConfig, run_estimate
from .selection import SelectionConfig, Strategy, select_variables
from .simharness import PROFILES, STRATEGIES, SimConfig, aggregate, export, run_grid

logger = logging.getLogger("drselect")

OUTPUT_ENV = "DRSELECT_OUTPUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_SCHEMA, EXIT_SOLVER, EXIT_SINGULAR, EXIT_EMPTY = 0, 2, 3, 4, 5, 6, 7


# ---------------------------------------------------------------------------
# ingestion


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a comma-separated file."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as err:
        raise ParseError(f"cannot read {path}: {err}") from err
    rows = [r for r in rows if r]
    if not rows:
        raise ParseError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise ParseError(f"{path} has a header but no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"line {i}: expected {len(header)} fields, found {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                raise ParseError(f"line {i}: missing value in column {header[j]!r}")
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise ParseError(f"line {i}: column {header[j]!r} value {cell!r} is not a number") from None
    return header, values


def build_dataset(header, values, outcome: str, treatment: str, covariates=None) -> Dataset:
    seen = set()
    for name in header:
        if name in seen:
            raise SchemaError(f"duplicate column name {name!r}", name)
        seen.add(name)
    for role, name in (("outcome", outcome), ("treatment", treatment)):
        if name not in header:
            raise SchemaError(f"{role} column {name!r} not found", name)
    if outcome == treatment:
        raise SchemaError("outcome and treatment must be different columns", outcome)
    if covariates is None:
        covariates = [h for h in header if h not in (outcome, treatment)]
    covariates = list(covariates)
    if len(set(covariates)) != len(covariates):
        raise SchemaError("covariate list repeats a column")
    for name in covariates:
        if name not in header:
            raise SchemaError(f"covariate column {name!r} not found", name)
        if name in (outcome, treatment):
            raise SchemaError(f"column {name!r} cannot be both a covariate and the outcome/treatment", name)
    if not covariates:
        raise SchemaError("no covariate columns")
    col = {h: j for j, h in enumerate(header)}
    a = values[:, col[treatment]]
    finite = np.isfinite(values)
    if not finite.all():
        bad = header[int(np.flatnonzero(~finite.all(axis=0))[0])]
        raise SchemaError(f"column {bad!r} contains non-finite values", bad)
    if not np.all((a == 0) | (a == 1)):
        raise SchemaError(f"treatment column {treatment!r} must be coded 0/1", treatment)
    if a.min() == a.max():
        raise SchemaError(f"treatment column {treatment!r} has a single arm", treatment)
    x = values[:, [col[c] for c in covariates]]
    return Dataset.from_arrays(values[:, col[outcome]], a, x, covariates)


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(text: str, out, default_name: str):
    if out is None and os.environ.get(OUTPUT_ENV):
        out = os.path.join(os.environ[OUTPUT_ENV], default_name)
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    parent = os.path.dirname(os.path.abspath(out))
    os.makedirs(parent, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    logger.info("wrote %s", out)


# ---------------------------------------------------------------------------
# commands


def _selection_config(args) -> SelectionConfig:
    return SelectionConfig(lambda_min_om=args.lambda_min_om, lambda_min_ps=args.lambda_min_ps,
                           grid_size=args.grid_size, folds=args.folds, seed=args.seed)


def _load(args) -> Dataset:
    header, values = read_table(args.input)
    covs = None if args.covariates is None else [c.strip() for c in args.covariates.split(",") if c.strip()]
    return build_dataset(header, values, args.outcome, args.treatment, covs)


def _names(data, index_set):
    return [data.column_names[j] for j in index_set]


def cmd_estimate(args) -> int:
    data = _load(args)
    config = EstimateConfig(selection=_selection_config(args), strategy=Strategy.parse(args.strategy),
                            clip=tuple(args.clip), variance=VarianceMethod(args.variance),
                            boot_reps=args.boot_reps, reselect_in_bootstrap=args.reselect_in_bootstrap,
                            workers=args.workers, fallback=not args.no_fallback)
    result = run_estimate(data, config)
    sel = result.selection
    primary = result.primary
    d = result.data
    comparison = {k: {"estimate": v.tau_hat, "se": v.se, "ci_lower": v.ci_lower, "ci_upper": v.ci_upper,
                      "adjustment_set": _names(d, v.adjustment_set), "variance_method": v.variance_method.value}
                  for k, v in result.estimates.items()}
    out = {
        "estimate": primary.tau_hat,
        "se": primary.se,
        "ci_lower": primary.ci_lower,
        "ci_upper": primary.ci_upper,
        "strategy": primary.strategy,
        "variance_method": primary.variance_method.value,
        "variance_fallback_reason": primary.fallback_reason,
        "bootstrap_failures": primary.boot_failures,
        "adjustment_set": _names(d, primary.adjustment_set),
        "m_alpha_hat": _names(d, sel.m_alpha_hat),
        "m_beta_hat": _names(d, sel.m_beta_hat),
        "u_hat": _names(d, sel.u_hat),
        "i_hat": _names(d, sel.i_hat),
        "counts": {"p": d.p - 1, "u_hat": len(sel.u_hat), "i_hat": len(sel.i_hat),
                   "m_alpha_hat": len(sel.m_alpha_hat), "m_beta_hat": len(sel.m_beta_hat)},
        "lambda": {"propensity": sel.fit_ps.lambda_used, "outcome_treated": sel.fit_om1.lambda_used,
                   "outcome_control": sel.fit_om0.lambda_used},
        "n": d.n, "n_treated": d.n_treated, "n_control": d.n_control,
        "n_clipped": primary.n_clipped,
        "clip": list(config.clip),
        "seed": args.seed,
        "balance": result.balance,
        "comparison": comparison,
    }
    _emit(dumps(out), args.out, "estimate.json")
    return EXIT_OK


def cmd_select(args) -> int:
    data = _load(args)
    data = data.subset_rows(canonical_order(data))
    std, _ = standardize(data)
    sel = select_variables(std, _selection_config(args))
    fits = {"propensity": sel.fit_ps, "outcome_treated": sel.fit_om1, "outcome_control": sel.fit_om0}
    out = {
        "m_alpha_hat": _names(data, sel.m_alpha_hat),
        "m_beta_hat": _names(data, sel.m_beta_hat),
        "u_hat": _names(data, sel.u_hat),
        "i_hat": _names(data, sel.i_hat),
        "fits": {k: {"lambda": f.lambda_used, "active": _names(data, f.active_set), "iterations": f.iterations,
                     "cv_table": [{"lambda": l, "loss": m, "sd": s} for l, m, s in f.cv_table]}
                 for k, f in fits.items()},
        "n": data.n,
        "seed": args.seed,
    }
    _emit(dumps(out), args.out, "selection.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    profile = PROFILES[args.profile]
    n = args.n if args.n is not None else profile["n"]
    reps = args.reps if args.reps is not None else profile["reps"]
    strategies = tuple(s.strip().upper() for s in args.strategies.split(",")) if args.strategies else STRATEGIES
    config = SimConfig(n=n, seed=args.seed, strategies=strategies, clip=tuple(args.clip),
                       grid_size=args.grid_size, folds=args.folds, lambda_min_om=args.lambda_min_om,
                       lambda_min_ps=args.lambda_min_ps, boot_reps=args.boot_reps, fallback=not args.no_fallback)
    scenarios = args.scenario or list(SCENARIOS)
    settings = args.setting or list(SETTINGS)
    records = run_grid(scenarios, settings, reps, config, args.workers)
    report = aggregate(records)
    out = args.out or os.environ.get(OUTPUT_ENV) or "simulation"
    files = export(report, out)
    for name in files.values():
        logger.info("wrote %s", name)
    return EXIT_OK


def cmd_dgp_emit(args) -> int:
    data, _ = generate(ScenarioSpec(args.scenario, args.setting, args.n, args.p, args.seed))
    names = list(data.column_names[1:])
    lines = [",".join(["Y", "A", *names])]
    for i in range(data.n):
        lines.append(",".join(repr(float(v)) for v in (data.y[i], data.a[i], *data.x[i, 1:])))
    _emit("\n".join(lines) + "\n", args.out, f"scenario{args.scenario}{args.setting}.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _clip(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    if not 0.0 < lo < hi < 1.0:
        raise argparse.ArgumentTypeError("clipping bounds must satisfy 0 < LO < HI < 1")
    return lo, hi


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _add_common(p, *, simulate=False):
    p.add_argument("--lambda-min-om", type=_positive_float, default=None if simulate else 0.1,
                   help="floor of the outcome-model lambda grid"
                        + (" (default: 0.1 for linear, 0.3 for nonlinear outcome settings)" if simulate else ""))
    p.add_argument("--lambda-min-ps", type=_positive_float, default=0.02, help="floor of the propensity lambda grid")
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--clip", type=_clip, default=(0.01, 0.99), help="propensity clipping bounds LO,HI")
    p.add_argument("--boot-reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0 if not simulate else 2024)
    p.add_argument("--out", default=None)
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-fallback", action="store_true",
                   help="fail instead of switching to the bootstrap when the information matrix is singular")


def _add_input(p):
    p.add_argument("--input", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--treatment", required=True)
    p.add_argument("--covariates", default=None, help="comma-separated names (default: all other columns)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drselect", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate the average causal effect")
    _add_input(est)
    est.add_argument("--strategy", choices=[s.value for s in Strategy], default="UNION", type=str.upper)
    est.add_argument("--variance", choices=[v.value for v in VarianceMethod], default="analytic")
    est.add_argument("--reselect-in-bootstrap", action="store_true")
    _add_common(est)
    est.set_defaults(func=cmd_estimate)

    sel = sub.add_parser("select", help="variable selection only")
    _add_input(sel)
    _add_common(sel)
    sel.set_defaults(func=cmd_select)

    sim = sub.add_parser("simulate", help="Monte Carlo simulation study")
    sim.add_argument("--scenario", type=int, choices=SCENARIOS, action="append")
    sim.add_argument("--setting", choices=SETTINGS, action="append")
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--strategies", default=None, help=f"comma-separated subset of {','.join(STRATEGIES)}")
    _add_common(sim, simulate=True)
    sim.set_defaults(func=cmd_simulate)

    dgp = sub.add_parser("dgp", help="simulation data generator")
    dgp_sub = dgp.add_subparsers(dest="dgp_command", required=True)
    emit = dgp_sub.add_parser("emit", help="write one simulated dataset as CSV")
    emit.add_argument("--scenario", type=int, choices=SCENARIOS, required=True)
    emit.add_argument("--setting", choices=SETTINGS, required=True)
    emit.add_argument("--n", type=int, default=2000)
    emit.add_argument("--p", type=int, default=50)
    emit.add_argument("--seed", type=int, default=0)
    emit.add_argument("--out", default=None)
    emit.set_defaults(func=cmd_dgp_emit)
    return parser


def exit_code(err: Exception) -> int:
    for kind, code in ((ParseError, EXIT_PARSE), (DataError, EXIT_SCHEMA), (SingularInformation, EXIT_SINGULAR),
                       (SolverError, EXIT_SOLVER), (EmptyCell, EXIT_EMPTY)):
        if isinstance(err, kind):
            return code
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DRSelectError as err:
        print(f"drselect: error: {err}", file=sys.stderr)
        return exit_code(err)


if __name__ == "__main__":
    sys.exit(main())
