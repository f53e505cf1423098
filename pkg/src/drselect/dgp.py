"""Simulation designs: four covariate-role scenarios crossed with four settings.

Covariates are ``X = (1, X_1, ..., X_{p-1})`` with i.i.d. standard normal
predictors. Coefficient vectors below are indexed like ``X`` (entry 0 hits the
intercept).

Treatment models
    PSM I   logit e = alpha1'X
    PSM II  logit e = 3.5 + alpha2' log(X^2) - cos(X_3 + X_4)

Outcome models (``b = beta_a``)
    OM I    Y_a = b'X + eps
    OM II   Y_0 = 1 + exp(sin(b'X))   - 2 cos(b_3 X_3 + b_4 X_4) + b_5 X_5 - b_6 X_6 + eps
            Y_1 = 1 + exp(2 sin(b'X)) -   cos(b_3 X_3 + b_4 X_4) + b_5 X_5 - b_6 X_6 + eps

Settings: (a) PSM I + OM I, (b) PSM II + OM I, (c) PSM I + OM II,
(d) PSM II + OM II. Fitted working models are always logistic-linear and
linear, so (b), (c) and (d) are misspecified by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, IndexSet
from .rng import substream

SCENARIOS = (1, 2, 3, 4)
SETTINGS = ("a", "b", "c", "d")

# nonzero entries of alpha1 / alpha2 / beta0 / beta1 by scenario, X-indexed
_ALPHA_SUPPORT = {1: (1, 2, 3, 4), 2: (3, 4), 3: (3, 4), 4: (1, 2, 3, 4)}
_BETA_SUPPORT = {1: (3, 4, 5, 6), 2: (3, 4), 3: (3, 4, 5, 6), 4: (3, 4)}

# reported true ACE under OM II; OM I has ACE 0
REFERENCE_ACE_OM2 = {1: 1.6031, 2: 1.4280, 3: 1.6031, 4: 1.4280}

_LOG_FLOOR = 1e-12


def ps_model(setting: str) -> str:
    return "I" if setting in ("a", "c") else "II"


def om_model(setting: str) -> str:
    return "I" if setting in ("a", "b") else "II"


def coefficients(scenario: int, p: int = 50) -> dict[str, np.ndarray]:
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}")
    if p < 7:
        raise ValueError("p must be at least 7 to hold the six structured predictors")
    alpha1 = np.zeros(p)
    alpha1[list(_ALPHA_SUPPORT[scenario])] = 1.0
    alpha2 = 3.0 * alpha1
    beta0 = np.zeros(p)
    beta0[0] = 1.0
    beta0[list(_BETA_SUPPORT[scenario])] = 1.0
    beta1 = np.zeros(p)
    beta1[0] = 1.0
    beta1[list(_BETA_SUPPORT[scenario])] = 2.0
    return {"alpha1": alpha1, "alpha2": alpha2, "beta0": beta0, "beta1": beta1}


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: int
    setting: str
    n: int = 5000
    p: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        coefficients(self.scenario, self.p)

    @property
    def coef(self) -> dict[str, np.ndarray]:
        return coefficients(self.scenario, self.p)


@dataclass(frozen=True)
class TruthSets:
    m_alpha: IndexSet
    m_beta: IndexSet

    @property
    def union(self) -> IndexSet:
        return tuple(sorted(set(self.m_alpha) | set(self.m_beta)))

    @property
    def intersection(self) -> IndexSet:
        return tuple(sorted(set(self.m_alpha) & set(self.m_beta)))

    @property
    def instrumental(self) -> IndexSet:
        return tuple(sorted(set(self.m_alpha) - set(self.m_beta)))

    @property
    def confounders(self) -> IndexSet:
        return self.intersection

    @property
    def precision(self) -> IndexSet:
        return tuple(sorted(set(self.m_beta) - set(self.m_alpha)))


def truth_sets(scenario: int, p: int = 50) -> TruthSets:
    """Important-variable sets read off the nonzero generating coefficients."""
    c = coefficients(scenario, p)
    m_alpha = tuple(int(j) for j in np.flatnonzero(c["alpha1"][1:]) + 1)
    m_beta = tuple(int(j) for j in np.flatnonzero((c["beta0"][1:] != 0) | (c["beta1"][1:] != 0)) + 1)
    return TruthSets(m_alpha, m_beta)


@dataclass(frozen=True, eq=False)
class Truth:
    """Oracle quantities for one generated dataset."""

    propensity: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    sets: TruthSets
    true_ace: float
    extras: dict = field(default_factory=dict)


def propensity(x: np.ndarray, scenario: int, setting: str) -> np.ndarray:
    c = coefficients(scenario, x.shape[1])
    if ps_model(setting) == "I":
        eta = x @ c["alpha1"]
    else:
        logsq = np.log(np.maximum(x * x, _LOG_FLOOR))
        eta = 3.5 + logsq @ c["alpha2"] - np.cos(x[:, 3] + x[:, 4])
    return 1.0 / (1.0 + np.exp(-eta))


def outcome_means(x: np.ndarray, scenario: int, setting: str) -> tuple[np.ndarray, np.ndarray]:
    """Conditional means ``(E[Y(0)|X], E[Y(1)|X])``.

    ``x`` may be truncated to its first seven columns (intercept plus
    X_1..X_6); the outcome models read nothing else.
    """
    c = coefficients(scenario, x.shape[1])
    b0, b1 = c["beta0"], c["beta1"]
    if om_model(setting) == "I":
        return x @ b0, x @ b1
    x3, x4, x5, x6 = x[:, 3], x[:, 4], x[:, 5], x[:, 6]
    mu0 = (1.0 + np.exp(np.sin(x @ b0)) - 2.0 * np.cos(b0[3] * x3 + b0[4] * x4)
           + b0[5] * x5 - b0[6] * x6)
    mu1 = (1.0 + np.exp(2.0 * np.sin(x @ b1)) - np.cos(b1[3] * x3 + b1[4] * x4)
           + b1[5] * x5 - b1[6] * x6)
    return mu0, mu1


def reference_ace(scenario: int, setting: str) -> float:
    return 0.0 if om_model(setting) == "I" else REFERENCE_ACE_OM2[scenario]


def generate(spec: ScenarioSpec) -> tuple[Dataset, Truth]:
    """Draw one dataset and its oracle bundle.

    Draw order from the seeded Philox stream: covariates, treatment uniforms,
    control-outcome noise, treated-outcome noise.
    """
    rng = substream(spec.seed)
    n, p = spec.n, spec.p
    covariates = rng.standard_normal((n, p - 1))
    x = np.column_stack([np.ones(n), covariates])
    e = propensity(x, spec.scenario, spec.setting)
    a = (rng.random(n) < e).astype(float)
    mu0, mu1 = outcome_means(x, spec.scenario, spec.setting)
    y0 = mu0 + rng.standard_normal(n)
    y1 = mu1 + rng.standard_normal(n)
    y = np.where(a == 1.0, y1, y0)
    data = Dataset(y, a, x)
    truth = Truth(e, y0, y1, mu0, mu1, truth_sets(spec.scenario, p), reference_ace(spec.scenario, spec.setting))
    return data, truth


def true_ace(spec: ScenarioSpec, mc_draws: int = 1_000_000, antithetic: bool = True,
             chunk: int = 250_000) -> tuple[float, float]:
    """Monte Carlo ACE ``E[mu_1(X) - mu_0(X)]`` and its standard error.

    Only ``X_1..X_6`` enter the outcome models, so only those are drawn. With
    ``antithetic=True`` each draw is paired with its negation and the pair
    average is the Monte Carlo unit.
    """
    if mc_draws < 100_000:
        raise ValueError("mc_draws must be at least 1e5")
    rng = substream(spec.seed)
    units = mc_draws // 2 if antithetic else mc_draws
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < units:
        m = min(chunk, units - done)
        z = rng.standard_normal((m, 6))
        x = np.column_stack([np.ones(m), z])
        mu0, mu1 = outcome_means(x, spec.scenario, spec.setting)
        diff = mu1 - mu0
        if antithetic:
            xm = np.column_stack([np.ones(m), -z])
            nu0, nu1 = outcome_means(xm, spec.scenario, spec.setting)
            diff = 0.5 * (diff + (nu1 - nu0))
        total += diff.sum()
        total_sq += (diff * diff).sum()
        done += m
    mean = total / units
    var = max(total_sq / units - mean * mean, 0.0) * units / (units - 1)
    return float(mean), float(np.sqrt(var / units))
