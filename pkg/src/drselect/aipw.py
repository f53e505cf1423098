"""AIPW point estimate, plug-in influence values and standard errors.

With clipped propensities ``e`` and outcome means ``mu0, mu1`` the per-unit
contribution is::

    phi_i = A Y / e + (1 - A/e) mu1 - (1 - A) Y / (1 - e) - (1 - (1 - A)/(1 - e)) mu0

and ``tau_hat = mean(phi)``. The influence value adds first-order corrections
for estimating the three working models on the restricted design ``X_r``::

    psi_i = phi_i - tau_hat
            - h' Sigma^{-1} (A_i - e_i) x_i                  (treatment model)
            + m1' D1^{-1} A_i x_i (Y_i - mu1_i)              (treated outcome model)
            - m0' D0^{-1} (1 - A_i) x_i (Y_i - mu0_i)        (control outcome model)

where, with every expectation replaced by a full-sample mean,

    h     = mean[{A (Y - mu1) / e^2 + (1 - A)(Y - mu0) / (1 - e)^2} de/dalpha]
    Sigma = mean[e (1 - e) x x']        (unclipped e; Fisher information)
    m1    = mean[(1 - A/e) x],            D1 = mean[A x x']
    m0    = mean[(1 - (1 - A)/(1 - e)) x], D0 = mean[(1 - A) x x']

``de/dalpha = e (1 - e) x`` except at clipped units, where the clipped value
does not move with ``alpha`` and the derivative is zero. The treatment-model
term enters with a minus sign because ``d phi / d e`` is
``-A (Y - mu1)/e^2 - (1 - A)(Y - mu0)/(1 - e)^2``.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, IndexSet, canonical_order
from .exceptions import DRSelectError, NonFinite, SingularInformation
from .refit import DEFAULT_CLIP, RefitModels, build_refit
from .rng import substream

logger = logging.getLogger(__name__)

Z_975 = 1.959964
MIN_EIG = 1e-10
DEFAULT_BOOT_REPS = 500


class VarianceMethod(str, enum.Enum):
    ANALYTIC = "analytic"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True, eq=False)
class InfluenceComponents:
    sigma_alpha: np.ndarray | None
    h_alpha: np.ndarray | None
    m1: np.ndarray | None
    d1: np.ndarray | None
    m0: np.ndarray | None
    d0: np.ndarray | None
    phi: np.ndarray
    correction_alpha: np.ndarray
    correction_beta1: np.ndarray
    correction_beta0: np.ndarray


@dataclass(frozen=True, eq=False)
class AipwEstimate:
    tau_hat: float
    se: float
    ci_lower: float
    ci_upper: float
    variance_method: VarianceMethod
    psi_hat: np.ndarray | None = None
    strategy: str = ""
    adjustment_set: IndexSet = ()
    n_clipped: int = 0
    boot_failures: int = 0
    fallback_reason: str | None = None
    extras: dict = field(default_factory=dict)

    def covers(self, value: float) -> bool:
        return self.ci_lower <= value <= self.ci_upper


def _phi(data: Dataset, models: RefitModels) -> np.ndarray:
    y, a, e = data.y, data.a, models.fitted_ps
    mu0, mu1 = models.fitted_mu0, models.fitted_mu1
    with np.errstate(all="ignore"):
        phi = a * y / e + (1.0 - a / e) * mu1 - (1.0 - a) * y / (1.0 - e) - (1.0 - (1.0 - a) / (1.0 - e)) * mu0
    if not np.all(np.isfinite(phi)):
        raise NonFinite("AIPW terms (check the propensity clipping bounds)")
    return phi


def aipw_point(data: Dataset, models: RefitModels) -> float:
    """AIPW estimate of the average causal effect."""
    return float(np.mean(_phi(data, models)))


def influence_components(data: Dataset, models: RefitModels) -> InfluenceComponents:
    y, a = data.y, data.a
    e, e_raw = models.fitted_ps, models.fitted_ps_raw
    mu0, mu1 = models.fitted_mu0, models.fitted_mu1
    phi = _phi(data, models)
    n = data.n
    xr = data.x[:, models.columns]
    zero = np.zeros(n)
    corr_a, corr_1, corr_0 = zero, zero, zero
    sigma = h = m1 = d1 = m0 = d0 = None
    if models.ps_estimated:
        w = e_raw * (1.0 - e_raw)
        sigma = (xr * w[:, None]).T @ xr / n
        min_eig = float(np.linalg.eigvalsh(sigma)[0])
        if not min_eig > MIN_EIG:
            raise SingularInformation("propensity information matrix", min_eig, "propensity")
        moving = (e_raw == e).astype(float)
        weight = a * (y - mu1) / e**2 + (1.0 - a) * (y - mu0) / (1.0 - e) ** 2
        h = xr.T @ (weight * w * moving) / n
        scores = xr * (a - e_raw)[:, None]
        corr_a = -scores @ np.linalg.solve(sigma, h)
    if models.om_estimated:
        m1 = xr.T @ (1.0 - a / e) / n
        d1 = (xr * a[:, None]).T @ xr / n
        corr_1 = (xr * (a * (y - mu1))[:, None]) @ np.linalg.solve(d1, m1)
        m0 = xr.T @ (1.0 - (1.0 - a) / (1.0 - e)) / n
        d0 = (xr * (1.0 - a)[:, None]).T @ xr / n
        corr_0 = (xr * ((1.0 - a) * (y - mu0))[:, None]) @ np.linalg.solve(d0, m0)
    return InfluenceComponents(sigma, h, m1, d1, m0, d0, phi, corr_a, corr_1, corr_0)


def influence_values(data: Dataset, models: RefitModels, tau_hat: float | None = None) -> np.ndarray:
    """Plug-in influence value for each unit."""
    comp = influence_components(data, models)
    if tau_hat is None:
        tau_hat = float(np.mean(comp.phi))
    return comp.phi - tau_hat + comp.correction_alpha + comp.correction_beta1 - comp.correction_beta0


def analytic_se(psi: np.ndarray) -> float:
    psi = np.asarray(psi, dtype=float)
    return float(np.sqrt(psi @ psi) / len(psi))


def wald_interval(tau_hat: float, se: float) -> tuple[float, float]:
    return tau_hat - Z_975 * se, tau_hat + Z_975 * se


def _bootstrap_chunk(args):
    data, index_set, clip, seed, indices, reselect = args
    order = canonical_order(data)
    out = []
    for b in indices:
        rows = order[substream(seed, b).integers(0, data.n, data.n)]
        sample = data.subset_rows(rows)
        try:
            chosen = reselect(sample) if reselect is not None else index_set
            out.append(aipw_point(sample, build_refit(sample, chosen, clip)))
        except DRSelectError:
            out.append(np.nan)
    return out


def bootstrap_se(data: Dataset, index_set, clip=DEFAULT_CLIP, reps: int = DEFAULT_BOOT_REPS, seed: int = 0,
                 workers: int = 1, reselect=None) -> tuple[float, int]:
    """Nonparametric bootstrap SD of the AIPW estimate.

    Rows are drawn from the content-sorted data with substream ``(seed, b)``
    for draw ``b``, so the result does not depend on input row order or on
    ``workers``. With ``reselect=None`` the adjustment set is held fixed;
    otherwise ``reselect(sample)`` must return the set for each resample.
    Draws whose refit fails are dropped and counted.

    Returns
    -------
    se, failures
    """
    if reps < 2:
        raise ValueError("at least two bootstrap draws are required")
    chunks = [list(c) for c in np.array_split(np.arange(reps), max(1, min(workers, reps)))]
    jobs = [(data, tuple(index_set), clip, seed, c, reselect) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_bootstrap_chunk, jobs))
    else:
        parts = [_bootstrap_chunk(j) for j in jobs]
    draws = np.array([v for part in parts for v in part])
    ok = draws[np.isfinite(draws)]
    failures = int(reps - ok.size)
    if ok.size < 2:
        raise SingularInformation("bootstrap", None, "aipw")
    return float(np.std(ok, ddof=1)), failures


def estimate(data: Dataset, models: RefitModels, variance=VarianceMethod.ANALYTIC, *, strategy: str = "",
             boot_reps: int = DEFAULT_BOOT_REPS, seed: int = 0, workers: int = 1, reselect=None,
             fallback: bool = True) -> AipwEstimate:
    """Point estimate plus standard error and 95% Wald interval.

    Analytic variance falls back to the bootstrap when the treatment-model
    information matrix is singular, unless ``fallback`` is False.
    """
    variance = VarianceMethod(variance)
    tau = aipw_point(data, models)
    psi = None
    reason = None
    failures = 0
    if variance is VarianceMethod.ANALYTIC:
        try:
            psi = influence_values(data, models, tau)
            se = analytic_se(psi)
        except SingularInformation as err:
            if not fallback:
                raise
            logger.warning("%s; falling back to bootstrap", err)
            reason = str(err)
            variance = VarianceMethod.BOOTSTRAP
    if variance is VarianceMethod.BOOTSTRAP:
        se, failures = bootstrap_se(data, models.restriction_set, models.clip, boot_reps, seed, workers, reselect)
    lo, hi = wald_interval(tau, se)
    return AipwEstimate(tau, se, lo, hi, variance, psi, strategy, models.restriction_set,
                        models.n_clipped, failures, reason)
