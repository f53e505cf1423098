"""Penalized variable selection for the outcome and treatment models.

Each arm gets its own SCAD least-squares fit; the treatment model is a SCAD
logistic fit on all rows. The outcome-relevant set is the union of the two
arm-level active sets, and the adjustment sets compared downstream are built
from it and the treatment-relevant set.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import Dataset, IndexSet, set_intersection, set_union, split_by_arm
from .pglm import LambdaGrid, PenalizedFit, fit_penalized_linear, fit_penalized_logistic
from .rng import derive_seed
from .scad import DEFAULT_A


class Strategy(str, enum.Enum):
    UNION = "UNION"
    INTERSECTION = "INTERSECTION"
    OUTCOME = "OUTCOME"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        key = str(value).upper()
        aliases = {"UNI": "UNION", "INT": "INTERSECTION", "OUT": "OUTCOME"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class SelectionConfig:
    """Grid and cross-validation settings for the three penalized fits."""

    lambda_min_om: float = 0.1
    lambda_min_ps: float = 0.02
    grid_size: int = 100
    folds: int = 10
    a: float = DEFAULT_A
    seed: int = 0
    lambda_max_rule: str = "null_gradient"

    def grid(self, model: str) -> LambdaGrid:
        floor = self.lambda_min_ps if model == "propensity" else self.lambda_min_om
        return LambdaGrid(floor, None, self.grid_size, self.folds, self.lambda_max_rule)


@dataclass(frozen=True)
class SelectionResult:
    m_alpha_hat: IndexSet
    m_beta_hat: IndexSet
    u_hat: IndexSet
    i_hat: IndexSet
    fit_ps: PenalizedFit | None = None
    fit_om0: PenalizedFit | None = None
    fit_om1: PenalizedFit | None = None

    def __post_init__(self):
        if self.u_hat != set_union(self.m_alpha_hat, self.m_beta_hat):
            raise ValueError("u_hat must equal m_alpha_hat | m_beta_hat")
        if self.i_hat != set_intersection(self.m_alpha_hat, self.m_beta_hat):
            raise ValueError("i_hat must equal m_alpha_hat & m_beta_hat")

    @classmethod
    def from_sets(cls, m_alpha, m_beta, **fits) -> "SelectionResult":
        m_alpha = tuple(sorted(set(m_alpha)))
        m_beta = tuple(sorted(set(m_beta)))
        return cls(m_alpha, m_beta, set_union(m_alpha, m_beta), set_intersection(m_alpha, m_beta), **fits)


def select_variables(data: Dataset, config: SelectionConfig = SelectionConfig()) -> SelectionResult:
    """Run the three penalized fits and assemble the candidate sets.

    ``data`` should already be standardized. Each fit draws its folds from its
    own substream of ``config.seed``. Solver errors carry the name of the fit
    that failed (``outcome_treated``, ``outcome_control`` or ``propensity``).
    """
    treated, control = split_by_arm(data)
    fit1 = fit_penalized_linear(treated, config.grid("outcome"), config.a,
                                derive_seed(config.seed, 1), model="outcome_treated")
    fit0 = fit_penalized_linear(control, config.grid("outcome"), config.a,
                                derive_seed(config.seed, 0), model="outcome_control")
    fit_ps = fit_penalized_logistic(data, config.grid("propensity"), config.a,
                                    derive_seed(config.seed, 2), model="propensity")
    m_beta = set_union(fit0.active_set, fit1.active_set)
    return SelectionResult.from_sets(fit_ps.active_set, m_beta, fit_ps=fit_ps, fit_om0=fit0, fit_om1=fit1)


def strategy_set(result: SelectionResult, strategy) -> IndexSet:
    strategy = Strategy.parse(strategy)
    if strategy is Strategy.UNION:
        return result.u_hat
    if strategy is Strategy.INTERSECTION:
        return result.i_hat
    return result.m_beta_hat
