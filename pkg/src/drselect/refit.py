"""Unpenalized refits of the working models on a chosen adjustment set.

The outcome model in each arm is ordinary least squares; the treatment model
is maximum-likelihood logistic regression by damped Newton iterations. Both
use the intercept plus the columns in the adjustment set and keep every other
coefficient at exactly zero.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit

from .core import Dataset, IndexSet, make_index_set, split_by_arm
from .exceptions import EmptyArm, NotConverged, RankDeficient, SeparationWarning, SolverError

logger = logging.getLogger(__name__)

DEFAULT_CLIP = (0.01, 0.99)
SCORE_TOL = 1e-8
NEWTON_MAX_ITER = 100
MAX_HALVINGS = 30
SEPARATION_COEF = 1e3
_RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class RefitModels:
    """Refitted nuisance models and their fitted values on the full sample.

    ``fitted_ps`` is clipped into ``clip``; ``fitted_ps_raw`` is the
    unclipped logistic fit. ``ps_estimated`` / ``om_estimated`` are False when
    the corresponding model was supplied rather than fitted, in which case the
    influence function carries no correction for it.
    """

    alpha_hat: np.ndarray
    beta0_hat: np.ndarray
    beta1_hat: np.ndarray
    fitted_ps: np.ndarray
    fitted_ps_raw: np.ndarray
    fitted_mu0: np.ndarray
    fitted_mu1: np.ndarray
    restriction_set: IndexSet
    clip: tuple[float, float] = DEFAULT_CLIP
    ps_estimated: bool = True
    om_estimated: bool = True
    separation: bool = False

    @property
    def n_clipped(self) -> int:
        return int(np.count_nonzero(self.fitted_ps != self.fitted_ps_raw))

    @property
    def columns(self) -> list[int]:
        return [0, *self.restriction_set]


def _check_clip(clip):
    lo, hi = clip
    if not 0.0 < lo < hi < 1.0:
        raise ValueError(f"clipping bounds must satisfy 0 < lo < hi < 1, got {clip}")
    return float(lo), float(hi)


def _restricted(x, index_set, model):
    cols = [0, *make_index_set(index_set, x.shape[1])]
    xr = np.asarray(x)[:, cols]
    if xr.shape[0] < len(cols):
        raise RankDeficient(cols[xr.shape[0]:], model)
    _, r, piv = scipy.linalg.qr(xr, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.count_nonzero(diag > _RANK_RTOL * max(diag[0], 1.0)))
    if rank < len(cols):
        raise RankDeficient(sorted(cols[k] for k in piv[rank:]), model)
    return xr, cols


def _embed(coef_r, cols, p):
    out = np.zeros(p)
    out[cols] = coef_r
    return out


def refit_outcome(arm_data: Dataset, index_set, model: str = "outcome") -> np.ndarray:
    """Least squares of ``y`` on the intercept plus ``index_set``, embedded in length ``p``."""
    xr, cols = _restricted(arm_data.x, index_set, model)
    coef_r, *_ = np.linalg.lstsq(xr, arm_data.y, rcond=None)
    # one refinement step on the residual tightens the normal equations
    resid = arm_data.y - xr @ coef_r
    coef_r = coef_r + np.linalg.lstsq(xr, resid, rcond=None)[0]
    return _embed(coef_r, cols, arm_data.p)


def _loglik(xr, a, coef):
    eta = xr @ coef
    return float(a @ eta - np.logaddexp(0.0, eta).sum())


def refit_ps(data: Dataset, index_set, model: str = "propensity") -> np.ndarray:
    """Logistic MLE of treatment on the intercept plus ``index_set``.

    Newton steps are halved (up to 30 times) until the log-likelihood does not
    decrease. Iteration stops when every score component ``X_r'(A - e)`` is at
    most 1e-8 in absolute value. If a coefficient exceeds 1e3 in magnitude the
    fit is treated as separated: a :class:`SeparationWarning` is issued and
    the last iterate below that bound is returned.
    """
    if data.n_treated == 0 or data.n_control == 0:
        raise EmptyArm(data.n_treated, data.n_control)
    xr, cols = _restricted(data.x, index_set, model)
    a = data.a
    m = a.mean()
    coef = np.zeros(len(cols))
    coef[0] = np.log(m / (1.0 - m))
    ll = _loglik(xr, a, coef)
    for _ in range(NEWTON_MAX_ITER):
        e = expit(xr @ coef)
        score = xr.T @ (a - e)
        if np.max(np.abs(score)) <= SCORE_TOL:
            return _embed(coef, cols, data.p)
        info = (xr * (e * (1.0 - e))[:, None]).T @ xr
        try:
            step = scipy.linalg.solve(info, score, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            step = np.linalg.lstsq(info, score, rcond=None)[0]
        # near the optimum the likelihood gain drops below rounding error, so
        # changes within that slack count as no decrease
        slack = 1e-12 * max(1.0, abs(ll))
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = coef + t * step
            ll_trial = _loglik(xr, a, trial)
            if ll_trial >= ll - slack:
                break
            t *= 0.5
        else:
            raise NotConverged(NEWTON_MAX_ITER, model)
        if np.max(np.abs(trial)) > SEPARATION_COEF:
            warnings.warn(f"[{model}] coefficients diverge (separation); returning last stable iterate",
                          SeparationWarning, stacklevel=2)
            return _embed(coef, cols, data.p)
        coef, ll = trial, ll_trial
    raise NotConverged(NEWTON_MAX_ITER, model)


def build_refit(data: Dataset, index_set, clip=DEFAULT_CLIP) -> RefitModels:
    """Refit all three working models on ``index_set`` and materialize fitted values."""
    lo, hi = _check_clip(clip)
    index_set = make_index_set(index_set, data.p)
    treated, control = split_by_arm(data)
    beta1 = refit_outcome(treated, index_set, model="outcome_treated")
    beta0 = refit_outcome(control, index_set, model="outcome_control")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SeparationWarning)
        alpha = refit_ps(data, index_set)
    separation = any(issubclass(w.category, SeparationWarning) for w in caught)
    for w in caught:
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    raw = expit(data.x @ alpha)
    fitted = np.clip(raw, lo, hi)
    return RefitModels(alpha, beta0, beta1, fitted, raw, data.x @ beta0, data.x @ beta1,
                       index_set, (lo, hi), True, True, separation)


def known_models(data: Dataset, ps, mu0=None, mu1=None, clip=DEFAULT_CLIP) -> RefitModels:
    """Wrap externally supplied nuisance values as a :class:`RefitModels`.

    Used for oracle comparisons. Supplied models are treated as known, so the
    influence function carries no estimation correction for them. Outcome
    means default to zero.
    """
    lo, hi = _check_clip(clip)
    raw = np.broadcast_to(np.asarray(ps, dtype=float), (data.n,)).copy()
    if np.any((raw <= 0) | (raw >= 1)):
        raise SolverError("supplied propensities must lie strictly inside (0, 1)", "propensity")
    zeros = np.zeros(data.p)
    mu0 = np.zeros(data.n) if mu0 is None else np.broadcast_to(np.asarray(mu0, float), (data.n,)).copy()
    mu1 = np.zeros(data.n) if mu1 is None else np.broadcast_to(np.asarray(mu1, float), (data.n,)).copy()
    return RefitModels(zeros, zeros, zeros, np.clip(raw, lo, hi), raw, mu0, mu1, (), (lo, hi),
                       False, False)
