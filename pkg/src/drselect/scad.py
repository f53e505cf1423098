"""SCAD penalty: rate function, its primitive and the univariate thresholding rule.

The rate ``q(t)`` is the derivative of the penalty with respect to ``|theta|``::

    q(t) = lam                         for t < lam
         = (a*lam - t)_+ / (a - 1)     for t >= lam

The primitive with ``P(0) = 0`` is::

    P(t) = lam * t                                    t <= lam
         = (2*a*lam*t - t**2 - lam**2) / (2*(a - 1))  lam < t <= a*lam
         = (a + 1) * lam**2 / 2                       t > a*lam

The jitted kernels are shared by the coordinate-descent solvers in
:mod:`drselect.pglm`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

DEFAULT_A = 3.7


@dataclass(frozen=True)
class ScadParams:
    lam: float
    a: float = DEFAULT_A

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not self.a > 2:
            raise ValueError(f"SCAD requires a > 2, got {self.a}")


@njit(cache=True)
def _rate(t, lam, a):
    if t < lam:
        return lam
    v = a * lam - t
    if v > 0.0:
        return v / (a - 1.0)
    return 0.0


@njit(cache=True)
def _penalty(t, lam, a):
    if t <= lam:
        return lam * t
    if t <= a * lam:
        return (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
    return 0.5 * (a + 1.0) * lam * lam


@njit(cache=True)
def _univariate_objective(b, z, c, lam, a):
    return 0.5 * c * b * b - z * b + _penalty(abs(b), lam, a)


@njit(cache=True)
def _threshold(z, c, lam, a):
    """Global minimizer of ``c/2 * b**2 - z*b + P(|b|)``."""
    if lam <= 0.0:
        return z / c
    if z == 0.0:
        return 0.0
    s = 1.0 if z > 0.0 else -1.0
    t = abs(z)
    if c * (a - 1.0) > 1.0:
        # strictly convex: closed-form three-branch rule
        if t <= lam:
            return 0.0
        if t <= lam * (1.0 + c):
            return s * (t - lam) / c
        if t <= a * lam * c:
            return s * (t - a * lam / (a - 1.0)) / (c - 1.0 / (a - 1.0))
        return s * t / c
    # nonconvex in the middle piece: compare the per-piece minimizers
    # (ascending magnitude, strict improvement, so ties keep the sparser value)
    best = 0.0
    best_f = 0.0
    cand = (t - lam) / c
    if cand < 0.0:
        cand = 0.0
    elif cand > lam:
        cand = lam
    f = _univariate_objective(cand, t, c, lam, a)
    if f < best_f:
        best, best_f = cand, f
    k = c - 1.0 / (a - 1.0)
    if k > 0.0:
        cand = (t - a * lam / (a - 1.0)) / k
        if cand < lam:
            cand = lam
        elif cand > a * lam:
            cand = a * lam
        f = _univariate_objective(cand, t, c, lam, a)
        if f < best_f:
            best, best_f = cand, f
    else:
        for cand in (lam, a * lam):
            f = _univariate_objective(cand, t, c, lam, a)
            if f < best_f:
                best, best_f = cand, f
    cand = t / c
    if cand < a * lam:
        cand = a * lam
    f = _univariate_objective(cand, t, c, lam, a)
    if f < best_f:
        best, best_f = cand, f
    return s * best


@njit(cache=True)
def _penalty_sum(beta, lam, a):
    total = 0.0
    for j in range(1, beta.shape[0]):
        total += _penalty(abs(beta[j]), lam, a)
    return total


def scad_rate(theta_abs: float, params: ScadParams) -> float:
    """Penalty rate ``q_lambda(|theta|)``."""
    if theta_abs < 0:
        raise ValueError("theta_abs must be nonnegative")
    return float(_rate(float(theta_abs), float(params.lam), float(params.a)))


def scad_penalty(theta_abs: float, params: ScadParams) -> float:
    """Penalty value ``P_lambda(|theta|)`` with ``P_lambda(0) = 0``."""
    if theta_abs < 0:
        raise ValueError("theta_abs must be nonnegative")
    return float(_penalty(float(theta_abs), float(params.lam), float(params.a)))


def scad_threshold(z: float, step_curvature: float, params: ScadParams) -> float:
    """Minimize ``0.5*c*(b - z/c)**2 + P_lambda(|b|)`` over ``b``.

    With ``c*(a-1) > 1`` the objective is strictly convex and the three-branch
    rule applies: soft-threshold at ``lam`` up to ``|z| <= lam*(1+c)``, the
    linear interpolation branch up to ``|z| <= a*lam*c``, and ``z/c`` beyond.
    Smaller curvature (e.g. the 1/4 logistic majorizer with ``a = 3.7``) makes
    the middle piece concave; the global minimizer is then found by comparing
    the minimizers of the three pieces.
    """
    if not step_curvature > 0:
        raise ValueError("step_curvature must be positive")
    return float(_threshold(float(z), float(step_curvature), float(params.lam), float(params.a)))


def univariate_objective(b: float, z: float, step_curvature: float, params: ScadParams) -> float:
    """``c/2 * b**2 - z*b + P(|b|)``, i.e. the thresholding objective minus a constant."""
    return float(_univariate_objective(float(b), float(z), float(step_curvature), float(params.lam), float(params.a)))


def scad_rate_vec(theta: np.ndarray, lam: float, a: float = DEFAULT_A) -> np.ndarray:
    t = np.abs(np.asarray(theta, dtype=float))
    return np.where(t < lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1.0))
