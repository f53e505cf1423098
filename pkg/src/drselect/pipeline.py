"""End-to-end estimation: standardize, select, refit on a strategy set, AIPW."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aipw import AipwEstimate, VarianceMethod, estimate
from .core import Dataset, canonical_order, standardize
from .refit import DEFAULT_CLIP, build_refit
from .selection import SelectionConfig, SelectionResult, Strategy, select_variables, strategy_set


@dataclass(frozen=True)
class EstimateConfig:
    selection: SelectionConfig = SelectionConfig()
    strategy: Strategy = Strategy.UNION
    clip: tuple[float, float] = DEFAULT_CLIP
    variance: VarianceMethod = VarianceMethod.ANALYTIC
    boot_reps: int = 500
    reselect_in_bootstrap: bool = False
    workers: int = 1
    fallback: bool = True


@dataclass(frozen=True)
class Reselector:
    """Re-run standardization and selection on a bootstrap resample."""

    config: SelectionConfig
    strategy: Strategy

    def __call__(self, sample: Dataset):
        std, _ = standardize(sample)
        return strategy_set(select_variables(std, self.config), self.strategy)


@dataclass(frozen=True, eq=False)
class EstimateResult:
    data: Dataset
    selection: SelectionResult
    estimates: dict
    balance: list

    @property
    def primary(self) -> AipwEstimate:
        return next(iter(self.estimates.values()))


def balance_table(data: Dataset, ps: np.ndarray) -> list[dict]:
    """Standardized mean differences per covariate, raw and inverse-probability weighted.

    The denominator is the pooled unweighted SD ``sqrt((s1^2 + s0^2)/2)`` in
    both columns so the two are directly comparable.
    """
    a = data.a == 1.0
    w1 = 1.0 / ps[a]
    w0 = 1.0 / (1.0 - ps[~a])
    rows = []
    for j in range(1, data.p):
        x1, x0 = data.x[a, j], data.x[~a, j]
        pooled = np.sqrt(0.5 * (x1.var(ddof=1) + x0.var(ddof=1))) if min(len(x1), len(x0)) > 1 else 0.0
        raw = x1.mean() - x0.mean()
        weighted = np.average(x1, weights=w1) - np.average(x0, weights=w0)
        scale = pooled if pooled > 0 else 1.0
        rows.append({"column": data.column_names[j], "smd_raw": float(raw / scale),
                     "smd_weighted": float(weighted / scale)})
    return rows


def run_estimate(data: Dataset, config: EstimateConfig = EstimateConfig(), all_strategies: bool = True,
                 seed: int | None = None) -> EstimateResult:
    """Full pipeline on ``data``.

    Rows are first put in canonical (content-sorted) order so every output is
    identical under any permutation of the input rows. The requested strategy
    comes first in ``estimates``; with ``all_strategies`` the other two follow
    for comparison.
    """
    data.require_both_arms()
    data = data.subset_rows(canonical_order(data))
    std, _ = standardize(data)
    sel = select_variables(std, config.selection)
    order = [config.strategy] + ([s for s in Strategy if s is not config.strategy] if all_strategies else [])
    boot_seed = config.selection.seed if seed is None else seed
    estimates = {}
    balance = None
    for strategy in order:
        chosen = strategy_set(sel, strategy)
        models = build_refit(std, chosen, config.clip)
        reselect = Reselector(config.selection, strategy) if config.reselect_in_bootstrap else None
        estimates[strategy.value] = estimate(std, models, config.variance, strategy=strategy.value,
                                             boot_reps=config.boot_reps, seed=boot_seed,
                                             workers=config.workers, reselect=reselect,
                                             fallback=config.fallback)
        if balance is None:
            balance = balance_table(data, models.fitted_ps)
    return EstimateResult(data, sel, estimates, balance)
