"""Monte Carlo driver for the scenario x setting simulation grid.

Each replicate draws one dataset, runs selection once, then refits and
estimates for every requested strategy. Oracle strategies (``O-*``) use the
true important-variable sets instead of the selected ones. Replicates are
independent units of work keyed by ``(seed, scenario, setting, replicate)``,
so aggregates do not depend on the number of workers or execution order.

CSV numbers are written with 6 significant digits (``%.6g``).
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aipw import estimate
from .core import IndexSet, standardize
from .dgp import SETTINGS, ScenarioSpec, generate, om_model, truth_sets
from .exceptions import DRSelectError, EmptyCell
from .refit import DEFAULT_CLIP, build_refit
from .rng import derive_seed
from .selection import SelectionConfig, select_variables

logger = logging.getLogger(__name__)

STRATEGIES = ("UNI", "INT", "OUT", "O-UNI", "O-INT", "O-OUT")
PROFILES = {"desk": {"n": 2000, "reps": 200}, "paper": {"n": 5000, "reps": 2000}}
LAMBDA_MIN_OM_LINEAR = 0.1
LAMBDA_MIN_OM_NONLINEAR = 0.3
LAMBDA_MIN_PS = 0.02


@dataclass(frozen=True)
class SimConfig:
    n: int = 2000
    p: int = 50
    seed: int = 2024
    strategies: tuple[str, ...] = STRATEGIES
    clip: tuple[float, float] = DEFAULT_CLIP
    grid_size: int = 100
    folds: int = 10
    lambda_min_om: float | None = None
    lambda_min_ps: float = LAMBDA_MIN_PS
    boot_reps: int = 500
    fallback: bool = True

    def __post_init__(self):
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ValueError(f"unknown strategies {bad}; choose from {STRATEGIES}")

    def om_floor(self, setting: str) -> float:
        if self.lambda_min_om is not None:
            return self.lambda_min_om
        return LAMBDA_MIN_OM_NONLINEAR if om_model(setting) == "II" else LAMBDA_MIN_OM_LINEAR


@dataclass(frozen=True)
class StrategyRecord:
    strategy: str
    adjustment_set: IndexSet = ()
    tau_hat: float = math.nan
    se: float = math.nan
    ci_lower: float = math.nan
    ci_upper: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ReplicateRecord:
    scenario: int
    setting: str
    replicate: int
    seed: int
    n_treated: int
    true_ace: float
    m_alpha_hat: IndexSet | None = None
    m_beta_hat: IndexSet | None = None
    selection_error: str | None = None
    strategies: tuple[StrategyRecord, ...] = ()

    @property
    def key(self):
        return (self.scenario, self.setting, self.replicate)


def replicate_seeds(base_seed: int, scenario: int, setting: str, replicate: int) -> tuple[int, int]:
    """(data seed, selection seed) for one replicate."""
    si = SETTINGS.index(setting)
    return (derive_seed(base_seed, scenario, si, replicate, 0),
            derive_seed(base_seed, scenario, si, replicate, 1))


def _describe(err: Exception) -> str:
    return f"{type(err).__name__}: {err}"


def run_replicate(scenario: int, setting: str, replicate: int, config: SimConfig = SimConfig()) -> ReplicateRecord:
    data_seed, sel_seed = replicate_seeds(config.seed, scenario, setting, replicate)
    data, truth = generate(ScenarioSpec(scenario, setting, config.n, config.p, data_seed))
    base = dict(scenario=scenario, setting=setting, replicate=replicate, seed=data_seed,
                n_treated=data.n_treated, true_ace=truth.true_ace)
    if not config.strategies:
        return ReplicateRecord(**base)
    try:
        std, _ = standardize(data)
    except DRSelectError as err:
        return ReplicateRecord(**base, selection_error=_describe(err),
                               strategies=tuple(StrategyRecord(s, error=_describe(err)) for s in config.strategies))
    sets = {"O-UNI": truth.sets.union, "O-INT": truth.sets.intersection, "O-OUT": truth.sets.m_beta}
    m_alpha = m_beta = None
    sel_error = None
    if any(not s.startswith("O-") for s in config.strategies):
        sel_cfg = SelectionConfig(config.om_floor(setting), config.lambda_min_ps, config.grid_size,
                                  config.folds, seed=sel_seed)
        try:
            sel = select_variables(std, sel_cfg)
            m_alpha, m_beta = sel.m_alpha_hat, sel.m_beta_hat
            sets.update({"UNI": sel.u_hat, "INT": sel.i_hat, "OUT": sel.m_beta_hat})
        except DRSelectError as err:
            sel_error = _describe(err)
    records = []
    for s in config.strategies:
        if s not in sets:
            records.append(StrategyRecord(s, error=sel_error))
            continue
        try:
            models = build_refit(std, sets[s], config.clip)
            est = estimate(std, models, "analytic", strategy=s, boot_reps=config.boot_reps,
                           seed=sel_seed, fallback=config.fallback)
            records.append(StrategyRecord(s, sets[s], est.tau_hat, est.se, est.ci_lower, est.ci_upper))
        except DRSelectError as err:
            records.append(StrategyRecord(s, sets[s], error=_describe(err)))
    return ReplicateRecord(**base, m_alpha_hat=m_alpha, m_beta_hat=m_beta, selection_error=sel_error,
                           strategies=tuple(records))


def _run_task(task):
    scenario, setting, replicate, config = task
    return run_replicate(scenario, setting, replicate, config)


def run_grid(scenarios, settings, reps: int, config: SimConfig = SimConfig(), workers: int = 1,
             first_replicate: int = 0) -> list[ReplicateRecord]:
    """All replicates of the requested cells, returned in (scenario, setting, replicate) order."""
    tasks = [(sc, st, r, config) for sc in scenarios for st in settings
             for r in range(first_replicate, first_replicate + reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        records = [_run_task(t) for t in tasks]
    return sorted(records, key=lambda r: r.key)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class SelectionMetrics:
    over: float
    under: float
    fn: float
    fp: float
    replicates: int


def selection_metrics(selected, truth) -> SelectionMetrics:
    """Over/under-selection proportions and average FN/FP counts.

    Over-selection is the fraction of replicates with at least one false
    positive; under-selection the fraction with at least one false negative.
    """
    truth = set(truth)
    selected = [set(s) for s in selected]
    if not selected:
        return SelectionMetrics(math.nan, math.nan, math.nan, math.nan, 0)
    fp = np.array([len(s - truth) for s in selected], dtype=float)
    fn = np.array([len(truth - s) for s in selected], dtype=float)
    return SelectionMetrics(float(np.mean(fp > 0)), float(np.mean(fn > 0)), float(fn.mean()), float(fp.mean()),
                            len(selected))


@dataclass(frozen=True)
class CoverageMetrics:
    coverage: float
    bias: float
    sd: float
    rmse: float
    mean_se: float
    replicates: int
    failures: int


def coverage_metrics(estimates, truth: float, failures: int = 0) -> CoverageMetrics:
    """Coverage, bias, SD (n-1 denominator) and RMSE = sqrt(bias^2 + SD^2).

    ``estimates`` is a sequence of ``(tau_hat, se, ci_lower, ci_upper)``.
    A single replicate has SD 0.
    """
    arr = np.asarray(estimates, dtype=float).reshape(-1, 4)
    k = arr.shape[0]
    if k == 0:
        return CoverageMetrics(math.nan, math.nan, math.nan, math.nan, math.nan, 0, failures)
    tau = arr[:, 0]
    bias = float(tau.mean() - truth)
    sd = float(tau.std(ddof=1)) if k > 1 else 0.0
    covered = (arr[:, 2] <= truth) & (truth <= arr[:, 3])
    return CoverageMetrics(float(covered.mean()), bias, sd, math.sqrt(bias * bias + sd * sd),
                           float(arr[:, 1].mean()), k, failures)


@dataclass(frozen=True, eq=False)
class SimReport:
    selection: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)
    records: tuple[ReplicateRecord, ...] = ()


def aggregate(records) -> SimReport:
    """Reduce replicate records to per-cell metrics.

    Records are sorted by key first, so the result is independent of the
    order in which they were produced.

    Raises
    ------
    EmptyCell
        If some (scenario, setting, strategy) cell has no successful replicate.
    """
    records = tuple(sorted(records, key=lambda r: r.key))
    cells = {}
    for r in records:
        cells.setdefault((r.scenario, r.setting), []).append(r)
    selection, coverage, empty = {}, {}, []
    for (sc, st), recs in cells.items():
        sets = truth_sets(sc)
        chosen = [r for r in recs if r.m_alpha_hat is not None]
        if chosen:
            selection[(sc, st, "beta")] = selection_metrics([r.m_beta_hat for r in chosen], sets.m_beta)
            selection[(sc, st, "alpha")] = selection_metrics([r.m_alpha_hat for r in chosen], sets.m_alpha)
        names = [s.strategy for s in recs[0].strategies]
        for name in names:
            rows = [s for r in recs for s in r.strategies if s.strategy == name]
            good = [(s.tau_hat, s.se, s.ci_lower, s.ci_upper) for s in rows if s.ok]
            if not good:
                empty.append((sc, st, name))
                continue
            coverage[(sc, st, name)] = coverage_metrics(good, recs[0].true_ace, len(rows) - len(good))
    if empty:
        raise EmptyCell(empty)
    return SimReport(selection, coverage, records)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _set_str(s) -> str:
    return "" if s is None else ";".join(str(j) for j in s)


def export(report: SimReport, path) -> dict:
    """Write ``selection_metrics.csv``, ``coverage.csv`` and ``replicates.csv`` into directory ``path``."""
    os.makedirs(path, exist_ok=True)
    files = {name: os.path.join(path, name) for name in ("selection_metrics.csv", "coverage.csv", "replicates.csv")}
    _write(files["selection_metrics.csv"], ["scenario", "setting", "model", "over", "under", "fn", "fp", "replicates"],
           [(sc, st, m, v.over, v.under, v.fn, v.fp, v.replicates) for (sc, st, m), v in report.selection.items()])
    _write(files["coverage.csv"],
           ["scenario", "setting", "strategy", "coverage", "bias", "sd", "rmse", "mean_se", "replicates", "failures"],
           [(sc, st, s, v.coverage, v.bias, v.sd, v.rmse, v.mean_se, v.replicates, v.failures)
            for (sc, st, s), v in report.coverage.items()])
    rows = []
    for r in report.records:
        for s in r.strategies:
            rows.append((r.scenario, r.setting, r.replicate, r.seed, s.strategy, int(s.ok), s.tau_hat, s.se,
                         s.ci_lower, s.ci_upper, int(s.ok and s.ci_lower <= r.true_ace <= s.ci_upper),
                         _set_str(s.adjustment_set), _set_str(r.m_alpha_hat), _set_str(r.m_beta_hat),
                         s.error or ""))
    _write(files["replicates.csv"],
           ["scenario", "setting", "replicate", "seed", "strategy", "ok", "tau_hat", "se", "ci_lower", "ci_upper",
            "covered", "adjustment_set", "m_alpha_hat", "m_beta_hat", "error"], rows)
    return files


def double_robustness_check(scenario: int, which_model_correct: str, reps: int = 200, n: int = 2000,
                            strategies=("UNI", "INT", "OUT"), seed: int = 2024, workers: int = 1,
                            records=None) -> dict:
    """Monte Carlo bias and coverage with one working model misspecified.

    ``which_model_correct="PS"`` uses setting (c) (outcome model wrong),
    ``"OM"`` uses setting (b) (treatment model wrong), ``"both"`` setting (a).
    Precomputed ``records`` for that cell may be passed to skip the simulation.
    """
    setting = {"PS": "c", "OM": "b", "both": "a"}[which_model_correct]
    if records is None:
        config = SimConfig(n=n, seed=seed, strategies=tuple(strategies))
        records = run_grid([scenario], [setting], reps, config, workers)
    records = [r for r in records if (r.scenario, r.setting) == (scenario, setting)]
    report = aggregate(records)
    return {s: report.coverage[(scenario, setting, s)] for s in strategies}
