"""Closed-form value components, threshold equation and ruin quantities.

Every ratio of exponentials is evaluated after dividing through by its
dominant term, so the functions stay finite for arbitrarily large thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import CharRoots, ModelParams, characteristic_roots


class DomainError(ValueError):
    """Raised when a closed form is requested outside its domain of validity."""


@dataclass(frozen=True)
class ThresholdCoefficients:
    """Coefficients of the piecewise value components for threshold ``b``.

    ``A2 = -A1``, ``C2 = lam - C1`` and ``B1 = D1 = 0`` are implied.
    """

    b: float
    A1: float
    B2: float
    C1: float
    D2: float


@dataclass(frozen=True)
class _Scaled:
    # Coefficients multiplied by the exponential at the threshold:
    # a1s = A1 e^{a1 b}, b2s = B2 e^{b2 b}, c1s = C1 e^{c1 b}, d2s = D2 e^{d2 b}.
    b: float
    a1s: float
    b2s: float
    c1s: float
    d2s: float


def _roots(params: ModelParams, roots: CharRoots | None) -> CharRoots:
    return roots if roots is not None else characteristic_roots(params)


def _check_penalty_branch(params: ModelParams) -> None:
    if params.beta == 0.0 and params.mu <= params.lmax:
        raise DomainError(
            "beta = 0 with mu <= lmax: the penalty component degenerates "
            "(ruin is certain under every finite threshold)"
        )


def _scaled(b: float, params: ModelParams, r: CharRoots) -> _Scaled:
    if b < 0:
        raise DomainError("threshold b must be >= 0")
    p = params
    k = p.lmax / p.delta
    ea = math.exp((r.a2 - r.a1) * b)
    den1 = (r.a1 - r.b2) + (r.b2 - r.a2) * ea
    a1s = -k * r.b2 / den1
    # written around -k so that V1(0) = 0 holds exactly when b = 0
    b2s = -k - a1s * math.expm1((r.a2 - r.a1) * b)

    ec = math.exp((r.c2 - r.c1) * b)
    den2 = (r.d2 - r.c1) + (r.c2 - r.d2) * ec
    c1s = p.lam * (r.c2 - r.d2) * math.exp(r.c2 * b) / den2
    # D2 e^{d2 b} = C1 e^{c1 b} + (lam - C1) e^{c2 b}
    d2s = p.lam * math.exp(r.c2 * b) - c1s * math.expm1((r.c2 - r.c1) * b)
    return _Scaled(b, a1s, b2s, c1s, d2s)


def _safe_exp(z: float) -> float:
    try:
        return math.exp(z)
    except OverflowError:
        return math.inf


def coefficients(params: ModelParams, roots: CharRoots | None, b: float) -> ThresholdCoefficients:
    """Coefficients ``A1, B2, C1, D2`` making V1, V2 C^1 across ``x = b``.

    Raises:
        DomainError: for ``b < 0`` or for ``beta == 0`` with ``mu <= lmax``.
    """
    _check_penalty_branch(params)
    r = _roots(params, roots)
    s = _scaled(b, params, r)
    return ThresholdCoefficients(
        b=b,
        A1=s.a1s * _safe_exp(-r.a1 * b),
        B2=s.b2s * _safe_exp(-r.b2 * b),
        C1=s.c1s * _safe_exp(-r.c1 * b),
        D2=s.d2s * _safe_exp(-r.d2 * b),
    )


def _v1_scaled(x, s: _Scaled, params: ModelParams, r: CharRoots, deriv: int):
    x = np.asarray(x, dtype=float)
    b = s.b
    lo = np.minimum(x, b)
    below = s.a1s * (
        r.a1**deriv * np.exp(r.a1 * (lo - b))
        - r.a2**deriv * np.exp(r.a2 * lo - r.a1 * b)
    )
    hi = np.maximum(x, b)
    above = s.b2s * r.b2**deriv * np.exp(r.b2 * (hi - b))
    if deriv == 0:
        above = above + params.lmax / params.delta
    # the upper branch owns x == b
    return np.where(x < b, below, above)


def _v2_scaled(x, s: _Scaled, params: ModelParams, r: CharRoots, deriv: int):
    x = np.asarray(x, dtype=float)
    b = s.b
    lam = params.lam
    lo = np.minimum(x, b)
    # (lam - C1) e^{c2 x} = lam e^{c2 x} - c1s e^{c2 x - c1 b}; grouped so V2(0) = 0 exactly
    below = s.c1s * (r.c1**deriv * np.exp(r.c1 * (lo - b)) - r.c2**deriv * np.exp(r.c2 * lo - r.c1 * b))
    if deriv == 0:
        below = below + lam * np.expm1(r.c2 * lo)
    else:
        below = below + lam * r.c2**deriv * np.exp(r.c2 * lo)
    hi = np.maximum(x, b)
    above = s.d2s * r.d2**deriv * np.exp(r.d2 * (hi - b))
    if deriv == 0:
        above = above - lam
    return np.where(x < b, below, above)


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def v1(x, b: float, params: ModelParams, roots: CharRoots | None = None, deriv: int = 0):
    """Discounted-dividend component ``V1(x; b)`` or its ``deriv``-th x-derivative."""
    r = _roots(params, roots)
    return _out(_v1_scaled(x, _scaled(b, params, r), params, r, deriv))


def v2(x, b: float, params: ModelParams, roots: CharRoots | None = None, deriv: int = 0):
    """Penalty component ``V2(x; b)`` or its ``deriv``-th x-derivative."""
    _check_penalty_branch(params)
    r = _roots(params, roots)
    return _out(_v2_scaled(x, _scaled(b, params, r), params, r, deriv))


def nu(r_time, t, x, b: float, params: ModelParams, roots: CharRoots | None = None, deriv: int = 0):
    """Candidate equilibrium value ``nu(r, t, x; b)``.

    ``deriv`` selects the order of the x-derivative; the constant
    ``lam * (1 - alpha)`` only enters the value itself.
    """
    _check_penalty_branch(params)
    rt = _roots(params, roots)
    s = _scaled(b, params, rt)
    elapsed = np.asarray(t, dtype=float) - np.asarray(r_time, dtype=float)
    out = (
        np.exp(-params.delta * elapsed) * _v1_scaled(x, s, params, rt, deriv)
        + np.exp(-params.beta * elapsed) * _v2_scaled(x, s, params, rt, deriv)
    )
    if deriv == 0:
        out = out + params.lam * (1.0 - params.alpha)
    return _out(out)


def nu_dt(r_time, t, x, b: float, params: ModelParams, roots: CharRoots | None = None):
    """Partial derivative of ``nu`` in its second (time) argument."""
    _check_penalty_branch(params)
    rt = _roots(params, roots)
    s = _scaled(b, params, rt)
    elapsed = np.asarray(t, dtype=float) - np.asarray(r_time, dtype=float)
    out = (
        -params.delta * np.exp(-params.delta * elapsed) * _v1_scaled(x, s, params, rt, 0)
        - params.beta * np.exp(-params.beta * elapsed) * _v2_scaled(x, s, params, rt, 0)
    )
    return _out(out)


def n1(b, params: ModelParams, roots: CharRoots | None = None):
    """Slope of ``V1`` at ``b-``: the dividend part of the threshold equation."""
    r = _roots(params, roots)
    b = np.asarray(b, dtype=float)
    ea = np.exp((r.a2 - r.a1) * b)
    val = (params.lmax / params.delta) * (-r.b2) * (r.a1 - r.a2 * ea) / ((r.a1 - r.b2) + (r.b2 - r.a2) * ea)
    return _out(val)


def n2(b, params: ModelParams, roots: CharRoots | None = None):
    """Slope of ``V2 / lam`` at ``b-``: the penalty part of the threshold equation."""
    r = _roots(params, roots)
    b = np.asarray(b, dtype=float)
    ec = np.exp((r.c2 - r.c1) * b)
    val = (r.c2 - r.c1) * r.d2 * np.exp(r.c2 * b) / ((r.d2 - r.c1) + (r.c2 - r.d2) * ec)
    return _out(val)


def g_of_b(b, params: ModelParams, roots: CharRoots | None = None):
    """Threshold-equation residual ``G(b)``; zero at the equilibrium threshold.

    Requires ``beta > 0``; use :func:`g0_of_b` for the ruin-probability limit.
    """
    if not params.beta > 0:
        raise DomainError("g_of_b requires beta > 0; use g0_of_b for beta = 0")
    r = _roots(params, roots)
    return _out(np.asarray(n1(b, params, r)) + params.lam * np.asarray(n2(b, params, r)) - 1.0)


def g0_of_b(b, params: ModelParams, roots: CharRoots | None = None):
    """Threshold-equation residual in the ``beta -> 0`` limit (``params.beta`` ignored)."""
    r = _roots(params, roots)
    p = params
    out = np.asarray(n1(b, p, r)) - 1.0
    if p.mu > p.lmax:
        s2 = p.sigma**2
        e = np.exp(-2.0 * p.mu / s2 * np.asarray(b, dtype=float))
        # 2 mu (mu - lmax) / s2 / (-(mu - lmax) e^{2 mu b / s2} - lmax), scaled by e^{-2 mu b / s2}
        out = out + p.lam * (2.0 * p.mu / s2) * (p.mu - p.lmax) * e / (-(p.mu - p.lmax) - p.lmax * e)
    return _out(out)


def classical_threshold(params: ModelParams, roots: CharRoots | None = None) -> float:
    """Optimal barrier ``b_bar`` of the unpenalised bounded-rate problem (0 if paying always is optimal)."""
    r = _roots(params, roots)
    if (-r.b2) * params.lmax / params.delta - 1.0 <= 0.0:
        return 0.0
    ratio = r.a2 * (r.b2 - r.a2) / (r.a1 * (r.b2 - r.a1))
    return max(0.0, math.log(ratio) / (r.a1 - r.a2))


def capital_lambda(params: ModelParams, roots: CharRoots | None = None) -> float:
    """Critical penalty ``Lambda``: for ``lam < Lambda`` the equilibrium threshold is positive."""
    _check_penalty_branch(params)
    r = _roots(params, roots)
    return (1.0 + r.b2 * params.lmax / params.delta) / r.d2


def lambda_of_b(b: float, params: ModelParams, roots: CharRoots | None = None) -> float:
    """Penalty weight for which ``b`` is the equilibrium threshold.

    Raises:
        DomainError: when ``Lambda > 0`` and ``b < b_bar`` (no admissible
            ``lam <= 0`` exists there).
    """
    _check_penalty_branch(params)
    r = _roots(params, roots)
    if b < 0:
        raise DomainError("threshold b must be >= 0")
    if capital_lambda(params, r) > 0:
        b_bar = classical_threshold(params, r)
        if b < b_bar:
            raise DomainError(f"b = {b} lies below the classical threshold {b_bar}; no lam <= 0 matches")
    return (1.0 - n1(b, params, r)) / n2(b, params, r)


def laplace_w(x, b: float, params: ModelParams, roots: CharRoots | None = None):
    """``E[exp(-beta * tau)]`` from surplus ``x`` under the threshold-``b`` strategy.

    With ``beta == 0`` and ``mu > lmax`` this is the ruin probability.
    """
    if b < 0:
        raise DomainError("threshold b must be >= 0")
    r = _roots(params, roots)
    x = np.asarray(x, dtype=float)
    ec = math.exp((r.c2 - r.c1) * b)
    # denominator and numerators divided by e^{-c2 b}
    den = (r.d2 - r.c2) * ec + (r.c1 - r.d2)
    lo = np.minimum(x, b)
    below = ((r.d2 - r.c2) * np.exp(-r.c1 * (b - lo) + r.c2 * b) + (r.c1 - r.d2) * np.exp(r.c2 * lo)) / den
    hi = np.maximum(x, b)
    above = (r.c1 - r.c2) * np.exp(r.d2 * (hi - b) + r.c2 * b) / den
    # rounding can lift w(0) one ulp above 1
    return _out(np.minimum(np.where(x < b, below, above), 1.0))


def ruin_probability(x, l: float, mu: float, sigma: float):
    """Ruin probability of Brownian motion with drift ``mu - l`` started at ``x``.

    Raises:
        DomainError: if ``mu - l <= 0`` (ruin is certain and no constraint
            ``< 1`` can be met).
    """
    if mu - l <= 0:
        raise DomainError(f"drift mu - l = {mu - l} <= 0: ruin is certain")
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-2.0 * (mu - l) * x / sigma**2))


def x_bar(params: ModelParams, roots: CharRoots | None = None) -> float:
    """Surplus at or below which ``w(x, b) <= alpha`` fails for every finite ``b``."""
    if params.alpha == 1.0:
        return 0.0
    r = _roots(params, roots)
    return math.log(params.alpha) / r.c2


def min_unconstrained_x(params: ModelParams) -> float:
    """Smallest surplus meeting a ruin-probability constraint ``alpha`` without dividends."""
    if params.alpha == 1.0:
        return 0.0
    return -(params.sigma**2 / 2.0) * math.log(params.alpha) / params.mu
