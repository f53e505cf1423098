"""SCAD-penalized linear and logistic regression by coordinate descent.

Both solvers leave the intercept (column 0) unpenalized and trace a path of
decreasing ``lambda`` values with warm starts.

Linear model, fitted on one treatment arm of size ``m``::

    (1/(2m)) * ||y - X b||^2 + sum_{j>=1} P_lambda(|b_j|)

Coordinate updates run on the Gram matrix ``X'X/m`` so a sweep costs O(p^2).

Logistic model::

    (1/n) * sum_i [log(1 + exp(x_i'a)) - A_i x_i'a] + sum_{j>=1} P_lambda(|a_j|)

Each outer step replaces the log-likelihood by the quadratic majorizer with
fixed curvature ``X'X/(4n)`` (valid because ``e(1-e) <= 1/4``) and minimizes
the penalized surrogate by coordinate descent with the SCAD thresholding rule.
Outer steps only touch an active set; inactive coordinates are checked
against the thresholding rule at the full gradient before a path point is
accepted.

At a converged solution each coordinate satisfies the penalized estimating
equation: ``grad_j = q_lambda(|b_j|) * sign(b_j)`` when ``b_j != 0`` and
``|grad_j| <= lambda`` when ``b_j = 0``, where ``grad`` is the (arm-size or
sample-size normalized) score.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from .core import Dataset, IndexSet, active_indices
from .exceptions import EmptyArm, EmptyGrid, NotConverged, SeparationWarning, TooFewRows
from .rng import substream
from .scad import DEFAULT_A, _penalty_sum, _rate, _threshold

logger = logging.getLogger(__name__)

TOL = 1e-7
MAX_ITER = 10_000
SEPARATION_ETA = 30.0


@dataclass(frozen=True)
class LambdaGrid:
    """Log-uniform grid on ``[lambda_min, lambda_max]``, scanned from the top.

    ``lambda_max=None`` resolves it from the data (see ``lambda_max_rule``):
    ``"null_gradient"`` is the smallest lambda at which every penalized
    coefficient is zero; ``"eigenvalue"`` is the largest eigenvalue of
    ``X'X/n`` over the penalized columns. The lower end of the grid is a
    hard floor: cross-validation never picks anything below ``lambda_min``.
    """

    lambda_min: float
    lambda_max: float | None = None
    count: int = 100
    folds: int = 10
    lambda_max_rule: str = "null_gradient"

    def __post_init__(self):
        if not self.lambda_min > 0:
            raise ValueError("lambda_min must be positive")
        if self.count < 0:
            raise ValueError("count must be nonnegative")
        if self.folds < 2:
            raise ValueError("at least two folds are required")
        if self.lambda_max_rule not in ("null_gradient", "eigenvalue"):
            raise ValueError(f"unknown lambda_max_rule {self.lambda_max_rule!r}")
        if self.lambda_max is not None:
            if self.count == 1 and self.lambda_max != self.lambda_min:
                raise ValueError("a one-point grid needs lambda_max == lambda_min")
            if self.count > 1 and not self.lambda_min < self.lambda_max:
                raise ValueError("lambda_min must be below lambda_max")

    @classmethod
    def single(cls, lam: float, folds: int = 10) -> "LambdaGrid":
        return cls(lambda_min=lam, lambda_max=lam, count=1, folds=folds)

    def values(self, data_lambda_max: float | None = None) -> np.ndarray:
        """Grid values in decreasing order."""
        if self.count == 0:
            raise EmptyGrid()
        top = self.lambda_max if self.lambda_max is not None else data_lambda_max
        if top is None:
            raise ValueError("lambda_max must be supplied by the grid or the data")
        if self.count == 1 or top <= self.lambda_min:
            # nothing is selected anywhere above the floor: collapse to the floor
            return np.array([self.lambda_min])
        return np.exp(np.linspace(np.log(top), np.log(self.lambda_min), self.count))


@dataclass(frozen=True, eq=False)
class PenalizedFit:
    coefficients: np.ndarray
    active_set: IndexSet
    lambda_used: float
    converged: bool
    iterations: int
    cv_table: tuple[tuple[float, float, float], ...] = ()
    separation: bool = False
    model: str = ""

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        if tuple(self.active_set) != active_indices(coef):
            raise ValueError("active_set must list exactly the nonzero penalized coefficients")


# ---------------------------------------------------------------------------
# jitted kernels


@njit(cache=True)
def _expit(t):
    if t >= 0.0:
        return 1.0 / (1.0 + np.exp(-t))
    e = np.exp(t)
    return e / (1.0 + e)


@njit(cache=True)
def _log1pexp(t):
    if t > 0.0:
        return t + np.log1p(np.exp(-t))
    return np.log1p(np.exp(t))


@njit(cache=True)
def _linear_path(G, b, yty, lambdas, a, tol, max_sweeps, beta_init, hist):
    p = G.shape[0]
    n_lam = lambdas.shape[0]
    coefs = np.zeros((n_lam, p))
    iters = np.zeros(n_lam, np.int64)
    conv = np.zeros(n_lam, np.bool_)
    beta = beta_init.copy()
    grad = b - G @ beta
    n_hist = 0
    for li in range(n_lam):
        lam = lambdas[li]
        sweeps = 0
        while sweeps < max_sweeps:
            sweeps += 1
            max_step = 0.0
            for j in range(p):
                c = G[j, j]
                cur = beta[j]
                z = grad[j] + c * cur
                if j == 0:
                    new = z / c
                else:
                    new = _threshold(z, c, lam, a)
                d = new - cur
                if d != 0.0:
                    beta[j] = new
                    for k in range(p):
                        grad[k] -= G[k, j] * d
                    if abs(d) > max_step:
                        max_step = abs(d)
            if n_hist < hist.shape[0]:
                # beta'G beta = beta'(b - grad)
                hist[n_hist] = 0.5 * (yty - b @ beta - beta @ grad) + _penalty_sum(beta, lam, a)
                n_hist += 1
            if max_step <= tol:
                conv[li] = True
                break
        coefs[li] = beta
        iters[li] = sweeps
    return coefs, iters, conv


@njit(cache=True)
def _logistic_objective(XT, y, alpha, lam, a):
    p, n = XT.shape
    s = 0.0
    for i in range(n):
        eta = 0.0
        for j in range(p):
            eta += XT[j, i] * alpha[j]
        s += _log1pexp(eta) - y[i] * eta
    return s / n + _penalty_sum(alpha, lam, a)


@njit(cache=True)
def _logistic_path(XT, y, lambdas, a, tol, max_iter, alpha_init, H, hist):
    # XT is the transposed design (p x n), so each covariate is a contiguous row
    p, n = XT.shape
    n_lam = lambdas.shape[0]
    coefs = np.zeros((n_lam, p))
    iters = np.zeros(n_lam, np.int64)
    conv = np.zeros(n_lam, np.bool_)
    alpha = alpha_init.copy()
    active = np.zeros(p, np.bool_)
    active[0] = True
    for j in range(p):
        if alpha[j] != 0.0:
            active[j] = True
    eta = np.zeros(n)
    for j in range(p):
        if alpha[j] != 0.0:
            for i in range(n):
                eta[i] += XT[j, i] * alpha[j]
    r = np.empty(n)
    gs = np.zeros(p)
    delta = np.zeros(p)
    idx = np.empty(p, np.int64)
    n_hist = 0
    for li in range(n_lam):
        lam = lambdas[li]
        count = 0
        ok = False
        while count < max_iter:
            m = 0
            for j in range(p):
                if active[j]:
                    idx[m] = j
                    m += 1
            settled = False
            while count < max_iter:
                count += 1
                for i in range(n):
                    r[i] = y[i] - _expit(eta[i])
                for jj in range(m):
                    j = idx[jj]
                    s = 0.0
                    for i in range(n):
                        s += XT[j, i] * r[i]
                    gs[j] = s / n
                    delta[j] = 0.0
                # coordinate descent on the penalized quadratic majorizer
                for _ in range(max_iter):
                    max_inner = 0.0
                    for jj in range(m):
                        j = idx[jj]
                        c = H[j, j]
                        cur = alpha[j] + delta[j]
                        z = gs[j] + c * cur
                        if j == 0:
                            new = z / c
                        else:
                            new = _threshold(z, c, lam, a)
                        d = new - cur
                        if d != 0.0:
                            delta[j] += d
                            for kk in range(m):
                                k = idx[kk]
                                gs[k] -= H[k, j] * d
                            if abs(d) > max_inner:
                                max_inner = abs(d)
                    if max_inner <= 0.01 * tol:
                        break
                step = 0.0
                for jj in range(m):
                    j = idx[jj]
                    d = delta[j]
                    if d != 0.0:
                        alpha[j] += d
                        for i in range(n):
                            eta[i] += XT[j, i] * d
                        if abs(d) > step:
                            step = abs(d)
                if n_hist < hist.shape[0]:
                    hist[n_hist] = _logistic_objective(XT, y, alpha, lam, a)
                    n_hist += 1
                if step <= tol:
                    settled = True
                    break
            if not settled:
                break
            # refresh the predictor exactly, then screen inactive coordinates
            for i in range(n):
                t = 0.0
                for jj in range(m):
                    j = idx[jj]
                    t += XT[j, i] * alpha[j]
                eta[i] = t
                r[i] = y[i] - _expit(t)
            added = False
            for j in range(1, p):
                if not active[j]:
                    s = 0.0
                    for i in range(n):
                        s += XT[j, i] * r[i]
                    if _threshold(s / n, H[j, j], lam, a) != 0.0:
                        active[j] = True
                        added = True
            if not added:
                ok = True
                break
        coefs[li] = alpha
        iters[li] = count
        conv[li] = ok
    return coefs, iters, conv


# ---------------------------------------------------------------------------
# paths, objectives and diagnostics

_NO_HIST = np.zeros(0)


def _intercept_start(p, value):
    start = np.zeros(p)
    start[0] = value
    return start


def _logit(q):
    return float(np.log(q / (1.0 - q)))


def linear_path(x, y, lambdas, a=DEFAULT_A, tol=TOL, max_iter=MAX_ITER, init=None, history=None):
    """Coefficient path (one row per lambda) of the SCAD-penalized least squares fit."""
    x = np.ascontiguousarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = x.shape[0]
    gram = x.T @ x / m
    b = x.T @ y / m
    init = _intercept_start(x.shape[1], y.mean()) if init is None else np.asarray(init, float)
    hist = _NO_HIST if history is None else history
    return _linear_path(gram, b, float(y @ y / m), np.asarray(lambdas, float), float(a),
                        float(tol), int(max_iter), init, hist)


def logistic_path(x, a_vec, lambdas, a=DEFAULT_A, tol=TOL, max_iter=MAX_ITER, init=None, history=None):
    """Coefficient path of the SCAD-penalized logistic fit."""
    xt = np.ascontiguousarray(np.asarray(x, dtype=float).T)
    a_vec = np.asarray(a_vec, dtype=float)
    n = xt.shape[1]
    majorizer = xt @ xt.T / (4.0 * n)
    if init is None:
        init = _intercept_start(xt.shape[0], _logit(np.clip(a_vec.mean(), 1e-12, 1 - 1e-12)))
    hist = _NO_HIST if history is None else history
    return _logistic_path(xt, a_vec, np.asarray(lambdas, float), float(a), float(tol), int(max_iter),
                          np.asarray(init, float), majorizer, hist)


def linear_objective(x, y, beta, lam, a=DEFAULT_A):
    resid = np.asarray(y) - np.asarray(x) @ beta
    return 0.5 * float(resid @ resid) / len(resid) + float(_penalty_sum(np.asarray(beta, float), lam, a))


def logistic_objective(x, a_vec, alpha, lam, a=DEFAULT_A):
    return float(_logistic_objective(np.ascontiguousarray(np.asarray(x, float).T), np.asarray(a_vec, float),
                                     np.asarray(alpha, float), lam, a))


def linear_score(x, y, beta):
    """Normalized least-squares score ``X'(y - X beta)/m``."""
    x = np.asarray(x)
    return x.T @ (np.asarray(y) - x @ beta) / x.shape[0]


def logistic_score(x, a_vec, alpha):
    """Normalized logistic score ``X'(A - e(X'alpha))/n``."""
    x = np.asarray(x)
    eta = x @ alpha
    return x.T @ (np.asarray(a_vec) - 1.0 / (1.0 + np.exp(-eta))) / x.shape[0]


def stationarity_violation(score, coef, lam, a=DEFAULT_A):
    """Per-coordinate violation of the penalized estimating equation.

    For nonzero penalized coordinates this is
    ``|score_j - q(|b_j|) sign(b_j)|``; for zero ones it is
    ``max(|score_j| - lam, 0)``; for the intercept it is ``|score_0|``.
    """
    score = np.asarray(score, float)
    coef = np.asarray(coef, float)
    out = np.empty_like(score)
    out[0] = abs(score[0])
    for j in range(1, len(coef)):
        if coef[j] != 0.0:
            out[j] = abs(score[j] - _rate(abs(coef[j]), lam, a) * np.sign(coef[j]))
        else:
            out[j] = max(abs(score[j]) - lam, 0.0)
    return out


def null_gradient_lambda_max(x, target):
    """Smallest lambda for which the all-zero penalized fit is stationary."""
    x = np.asarray(x)
    resid = np.asarray(target) - np.mean(target)
    if x.shape[1] < 2:
        return 0.0
    return float(np.max(np.abs(x[:, 1:].T @ resid)) / x.shape[0])


def eigenvalue_lambda_max(x):
    x = np.asarray(x)[:, 1:]
    if x.shape[1] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(x.T @ x / x.shape[0])[-1])


def squared_error(y, eta):
    return (y[:, None] - eta) ** 2


def binomial_deviance(y, eta):
    return 2.0 * (np.logaddexp(0.0, eta) - y[:, None] * eta)


def assign_folds(x, y, folds, seed):
    """Fold label per row: contiguous blocks of a seeded shuffle of the
    content-sorted rows, so labels follow rows under any input permutation."""
    n = len(y)
    keys = [x[:, j] for j in range(x.shape[1] - 1, 0, -1)] + [y]
    order = np.lexsort(keys)
    shuffled = order[substream(seed).permutation(n)]
    labels = np.empty(n, dtype=np.int64)
    for k, block in enumerate(np.array_split(shuffled, folds)):
        labels[block] = k
    return labels


def cross_validate(path_fn: Callable, x, y, lambdas, folds=10, seed=0, loss: Callable = squared_error):
    """Pick the grid lambda with the smallest pooled held-out loss.

    ``path_fn(x_train, y_train, lambdas)`` must return an array of shape
    ``(len(lambdas), p)``. Ties go to the earlier (larger) lambda.

    Returns
    -------
    lambda_star, index, cv_table
        ``cv_table`` rows are ``(lambda, mean loss, SD of per-fold mean loss)``.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size == 0:
        raise EmptyGrid()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < folds:
        raise TooFewRows(n, folds)
    labels = assign_folds(x, y, folds, seed)
    losses = np.empty((n, lambdas.size))
    fold_means = np.empty((folds, lambdas.size))
    for k in range(folds):
        test = labels == k
        coefs = path_fn(x[~test], y[~test], lambdas)
        losses[test] = loss(y[test], x[test] @ coefs.T)
        fold_means[k] = losses[test].mean(axis=0)
    mean = losses.mean(axis=0)
    sd = fold_means.std(axis=0, ddof=1)
    best = int(np.argmin(mean))
    table = tuple((float(l), float(m), float(s)) for l, m, s in zip(lambdas, mean, sd))
    return float(lambdas[best]), best, table


def _checked_path(kind, a, tol, max_iter, model):
    solver = linear_path if kind == "linear" else logistic_path

    def path(x_train, y_train, lambdas):
        coefs, _, conv = solver(x_train, y_train, lambdas, a=a, tol=tol, max_iter=max_iter)
        if not conv.all():
            raise NotConverged(max_iter, model)
        return coefs

    return path


def _fit(kind, x, y, grid, a, seed, tol, max_iter, model):
    if grid.count == 0:
        raise EmptyGrid(model)
    if len(y) < grid.folds:
        raise TooFewRows(len(y), grid.folds)
    if grid.lambda_max is None and grid.lambda_max_rule == "eigenvalue":
        top = eigenvalue_lambda_max(x)
    else:
        top = null_gradient_lambda_max(x, y)
    lambdas = grid.values(top)
    loss = squared_error if kind == "linear" else binomial_deviance
    path = _checked_path(kind, a, tol, max_iter, model)
    lam_star, best, table = cross_validate(path, x, y, lambdas, grid.folds, seed, loss)
    solver = linear_path if kind == "linear" else logistic_path
    coefs, iters, conv = solver(x, y, lambdas[: best + 1], a=a, tol=tol, max_iter=max_iter)
    if not conv.all():
        raise NotConverged(max_iter, model)
    coef = coefs[-1]
    separation = False
    if kind == "logistic":
        separation = bool(np.max(np.abs(x @ coef)) > SEPARATION_ETA)
        if separation:
            warnings.warn(f"[{model}] |linear predictor| exceeds {SEPARATION_ETA:g}", SeparationWarning, stacklevel=3)
    logger.debug("%s: lambda*=%.4g active=%s", model, lam_star, active_indices(coef))
    return PenalizedFit(coef, active_indices(coef), lam_star, bool(conv[-1]), int(iters.sum()),
                        table, separation, model)


def fit_penalized_linear(arm_data: Dataset, grid: LambdaGrid, a: float = DEFAULT_A, seed: int = 0,
                         tol: float = TOL, max_iter: int = MAX_ITER, model: str = "outcome") -> PenalizedFit:
    """SCAD least squares on a single treatment arm, lambda chosen by CV squared error."""
    if len(np.unique(arm_data.a)) != 1:
        raise ValueError("fit_penalized_linear expects a single-arm dataset")
    return _fit("linear", arm_data.x, arm_data.y, grid, a, seed, tol, max_iter, model)


def fit_penalized_logistic(data: Dataset, grid: LambdaGrid, a: float = DEFAULT_A, seed: int = 0,
                           tol: float = TOL, max_iter: int = MAX_ITER, model: str = "propensity") -> PenalizedFit:
    """SCAD logistic regression of treatment on covariates, lambda chosen by CV deviance."""
    if data.n_treated == 0 or data.n_control == 0:
        raise EmptyArm(data.n_treated, data.n_control)
    return _fit("logistic", data.x, data.a, grid, a, seed, tol, max_iter, model)
