"""Equilibrium thresholds, regime classification and constraint matching."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import closed_form as cf
from .model import CharRoots, ModelParams, characteristic_roots

XTOL = 1e-13
G_TOL = 1e-10


class Regime(str, enum.Enum):
    POSITIVE_CLASSICAL = "POSITIVE_CLASSICAL"
    PENALTY_FORCED = "PENALTY_FORCED"
    DEGENERATE = "DEGENERATE"
    BETA0_CLASSICAL = "BETA0_CLASSICAL"


class RootFindingError(RuntimeError):
    pass


class InfeasibleConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class RegimeInfo:
    regime: Regime
    b_bar: float
    Lambda: float
    g_at_zero: float
    explanation: str


@dataclass(frozen=True)
class EquilibriumSolution:
    """Equilibrium threshold together with the parameters it solves.

    ``residual`` is ``|G(b_star)|`` for a numerically found root and 0 for
    closed-form branches.
    """

    b_star: float
    regime: Regime
    params: ModelParams
    residual: float = 0.0

    def control(self, t, x):
        """Threshold law: pay ``lmax`` at or above ``b_star``, nothing below."""
        return np.where(np.asarray(x) >= self.b_star, self.params.lmax, 0.0)

    def value(self, r, t, x):
        """Equilibrium value ``nu(r, t, x)``."""
        p = self.params
        if self.regime is Regime.BETA0_CLASSICAL:
            # penalty part is constant: the classical value shifted by lam (1 - alpha)
            elapsed = np.asarray(t, dtype=float) - np.asarray(r, dtype=float)
            out = np.exp(-p.delta * elapsed) * np.asarray(cf.v1(x, self.b_star, p)) + p.lam * (1 - p.alpha)
            return float(out) if np.ndim(out) == 0 else out
        return cf.nu(r, t, x, self.b_star, p)


@dataclass(frozen=True)
class ConstraintMatch:
    x0: float
    alpha: float
    b_star: float
    lambda_star: float
    binding: bool
    slack: float
    x_bar: float
    w: float


def _roots(params, roots):
    return roots if roots is not None else characteristic_roots(params)


def _expanding_root(f: Callable[[float], float], lo: float, what: str) -> float:
    """Root of a strictly decreasing ``f`` on ``[lo, inf)``, bracket doubled from ``lo + 1``.

    Returns ``lo`` when ``f(lo) <= 0`` already.
    """
    if not f(lo) > 0:
        return lo
    width = 1.0
    hi = lo + width
    f_hi = f(hi)
    while f_hi > 0:
        width *= 2.0
        hi = lo + width
        if width > 1e6:
            raise RootFindingError(f"could not bracket the root of {what}")
        f_hi = f(hi)
    if f_hi == 0.0:
        return hi
    return brentq(f, lo, hi, xtol=XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)


def _threshold_function(params: ModelParams, r: CharRoots):
    if params.beta > 0:
        return lambda b: cf.g_of_b(b, params, r)
    return lambda b: cf.g0_of_b(b, params, r)


def classify_regime(params: ModelParams, roots: CharRoots | None = None) -> RegimeInfo:
    r = _roots(params, roots)
    b_bar = cf.classical_threshold(params, r)
    if params.beta == 0 and params.mu <= params.lmax:
        return RegimeInfo(Regime.BETA0_CLASSICAL, b_bar, math.nan, math.nan,
                          "beta = 0 and mu <= lmax: ruin is certain, the penalty is a constant shift")
    Lam = cf.capital_lambda(params, r)
    g0 = (-r.b2) * params.lmax / params.delta + params.lam * r.d2 - 1.0
    if (-r.b2) * params.lmax / params.delta - 1.0 > 0:
        return RegimeInfo(Regime.POSITIVE_CLASSICAL, b_bar, Lam, g0,
                          "classical threshold positive, so b* > 0")
    if params.lam < Lam:
        return RegimeInfo(Regime.PENALTY_FORCED, b_bar, Lam, g0,
                          "classical threshold zero but lam < Lambda: penalty forces b* > 0")
    return RegimeInfo(Regime.DEGENERATE, b_bar, Lam, g0,
                      "classical threshold zero and lam >= Lambda: pay at the maximal rate everywhere")


def solve_threshold(params: ModelParams, roots: CharRoots | None = None) -> EquilibriumSolution:
    """Equilibrium threshold ``b*`` for a fixed penalty weight.

    Raises:
        RootFindingError: if the bracket cannot be established or the root
            misses the residual tolerance.
    """
    r = _roots(params, roots)
    info = classify_regime(params, r)
    if info.regime is Regime.BETA0_CLASSICAL:
        return EquilibriumSolution(info.b_bar, info.regime, params, 0.0)
    g = _threshold_function(params, r)
    if not g(0.0) > 0:
        return EquilibriumSolution(0.0, Regime.DEGENERATE, params, 0.0)
    if params.lam == 0.0 and info.b_bar > 0:
        # the penalty term vanishes and G reduces to N1 - 1, solved by b_bar
        return EquilibriumSolution(info.b_bar, info.regime, params, abs(g(info.b_bar)))
    b = _expanding_root(g, max(info.b_bar, 0.0), "G")
    res = abs(g(b))
    if not res < G_TOL:
        raise RootFindingError(f"|G(b*)| = {res:.3e} exceeds {G_TOL}")
    return EquilibriumSolution(b, info.regime, params, res)


def degenerate_value(r_time, t, x, params: ModelParams, roots: CharRoots | None = None):
    """Value when paying ``lmax`` everywhere is the equilibrium (``b* = 0``)."""
    rt = _roots(params, roots)
    info = classify_regime(params, rt)
    if info.regime is Regime.BETA0_CLASSICAL or info.g_at_zero > 0:
        raise ValueError("degenerate_value requires (-b2) lmax/delta + lam d2 - 1 <= 0")
    p = params
    x = np.asarray(x, dtype=float)
    elapsed = np.asarray(t, dtype=float) - np.asarray(r_time, dtype=float)
    out = (
        np.exp(-p.delta * elapsed) * (p.lmax / p.delta) * (1.0 - np.exp(rt.b2 * x))
        + np.exp(-p.beta * elapsed) * p.lam * (np.exp(rt.d2 * x) - 1.0)
        + p.lam * (1.0 - p.alpha)
    )
    return float(out) if np.ndim(out) == 0 else out


def _check_feasible(x0: float, params: ModelParams, r: CharRoots) -> float:
    if params.beta == 0 and params.mu <= params.lmax:
        raise InfeasibleConstraintError(
            "constraint infeasible: beta = 0 with mu <= lmax makes ruin certain")
    xb = cf.x_bar(params, r)
    if not x0 > xb:
        raise InfeasibleConstraintError(f"constraint infeasible: x0 ≤ x_bar ({x0} ≤ {xb})")
    return xb


def _binding_threshold(x0: float, alpha: float, lo: float, params: ModelParams, r: CharRoots) -> float:
    return _expanding_root(lambda b: cf.laplace_w(x0, b, params, r) - alpha, lo, "w(x0, b) - alpha")


def match_constraint(x0: float, params: ModelParams, alpha: float | None = None,
                     roots: CharRoots | None = None) -> ConstraintMatch:
    """Pair ``(b*, lam*)`` meeting ``w(x0, b*) <= alpha`` with complementary slackness.

    ``params.lam`` is ignored; ``alpha`` defaults to ``params.alpha``.

    Raises:
        InfeasibleConstraintError: if ``x0 <= x_bar`` or ruin is certain.
    """
    alpha = params.alpha if alpha is None else alpha
    base = params.with_(alpha=alpha, lam=0.0)
    r = _roots(base, roots)
    xb = _check_feasible(x0, base, r)
    Lam = cf.capital_lambda(base, r)
    start = 0.0 if Lam <= 0 else cf.classical_threshold(base, r)
    w_start = cf.laplace_w(x0, start, base, r)
    if w_start <= alpha:
        b_star, lam_star = start, 0.0
    else:
        b_star = _binding_threshold(x0, alpha, start, base, r)
        lam_star = min(cf.lambda_of_b(b_star, base, r), 0.0)
    w = cf.laplace_w(x0, b_star, base, r)
    slack = alpha - w
    return ConstraintMatch(
        x0=x0, alpha=alpha, b_star=b_star, lambda_star=lam_star,
        binding=lam_star < 0, slack=slack, x_bar=xb, w=w,
    )


def constrained_threshold(x: float, params: ModelParams, roots: CharRoots | None = None,
                          alpha: float | None = None) -> float:
    """Optimal threshold ``b_tilde`` of the constrained problem within threshold strategies."""
    alpha = params.alpha if alpha is None else alpha
    base = params.with_(alpha=alpha, lam=0.0)
    r = _roots(base, roots)
    _check_feasible(x, base, r)
    b_bar = cf.classical_threshold(base, r)
    if cf.laplace_w(x, b_bar, base, r) <= alpha:
        return b_bar
    return _binding_threshold(x, alpha, b_bar, base, r)


def alpha_process_level(t, x_t, x0: float, params: ModelParams, roots: CharRoots | None = None,
                        alpha: float | None = None):
    """Adapted constraint level ``exp(-beta t) w(x_t, b*(x0))`` along a path."""
    m = match_constraint(x0, params, alpha, roots)
    out = np.exp(-params.beta * np.asarray(t, dtype=float)) * np.asarray(
        cf.laplace_w(x_t, m.b_star, params, roots))
    return float(out) if np.ndim(out) == 0 else out
