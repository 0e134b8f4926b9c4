"""Numerical checks that the constructed value function solves the extended HJB system."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import closed_form as cf
from .equilibrium import EquilibriumSolution, Regime
from .model import CharRoots, ModelParams, characteristic_roots


def running_reward(r, s, l, params: ModelParams):
    """Auxiliary running reward ``exp(-delta (s - r)) l - lam beta exp(-beta (s - r))``."""
    return np.exp(-params.delta * (s - r)) * l - params.lam * params.beta * np.exp(-params.beta * (s - r))


@dataclass(frozen=True)
class Grid:
    r_values: tuple = (0.0, 0.5, 1.0)
    t_span: float = 5.0
    t_points: int = 51
    x_extent: float = 10.0
    x_points: int = 401

    def __post_init__(self):
        if self.t_points < 2 or self.x_points < 2 or self.t_span <= 0 or self.x_extent <= 0:
            raise ValueError(f"grid misconfigured: {self}")


@dataclass
class HjbResidualReport:
    grid: Grid
    b_star: float
    max_residual_below: float
    max_residual_above: float
    max_boundary_deviation: float
    max_sup_violation: float
    maximizer_is_threshold_law: bool
    n_points: int = field(default=0)

    def passed(self, tol: float = 1e-8) -> bool:
        return (
            max(self.max_residual_below, self.max_residual_above, self.max_sup_violation) < tol
            and self.max_boundary_deviation == 0.0
            and self.maximizer_is_threshold_law
        )


def _generator_terms(r, t, x, b, params, roots):
    """``d/dt nu``, ``d/dx nu`` and ``d2/dx2 nu`` at the given points."""
    return (
        np.asarray(cf.nu_dt(r, t, x, b, params, roots)),
        np.asarray(cf.nu(r, t, x, b, params, roots, deriv=1)),
        np.asarray(cf.nu(r, t, x, b, params, roots, deriv=2)),
    )


def hjb_residual(params: ModelParams, roots: CharRoots | None, solution: EquilibriumSolution,
                 grid: Grid | None = None, tol: float = 1e-8) -> HjbResidualReport:
    """Residuals of the threshold HJB equations using analytic derivatives of ``nu``.

    Points within one x-step of ``b*`` are excluded. The supremum over the
    control is checked at ``l in {0, lmax}`` on the diagonal ``r = t``.
    """
    if solution.regime is Regime.BETA0_CLASSICAL:
        raise ValueError("the beta = 0, mu <= lmax branch has no penalty component to verify")
    grid = grid or Grid()
    p = params
    rt = roots if roots is not None else characteristic_roots(p)
    b = solution.b_star
    xs = np.linspace(0.0, b + grid.x_extent, grid.x_points)
    dx = xs[1] - xs[0]
    xs = xs[np.abs(xs - b) > dx] if b > 0 else xs[xs > dx]
    below = xs < b
    res_lo = res_hi = bnd = sup_violation = 0.0
    law_ok = True
    n = 0
    for r in grid.r_values:
        for t in np.linspace(r, r + grid.t_span, grid.t_points):
            d_t, d_x, d_xx = _generator_terms(r, t, xs, b, p, rt)
            l_hat = np.where(below, 0.0, p.lmax)
            res = d_t + (p.mu - l_hat) * d_x + 0.5 * p.sigma**2 * d_xx + running_reward(r, t, l_hat, p)
            n += res.size
            if below.any():
                res_lo = max(res_lo, float(np.max(np.abs(res[below]))))
            if (~below).any():
                res_hi = max(res_hi, float(np.max(np.abs(res[~below]))))
            bnd = max(bnd, abs(cf.nu(r, t, 0.0, b, p, rt) - p.lam * (1 - p.alpha)))
            if r == t:
                phi = [d_t + (p.mu - l) * d_x + 0.5 * p.sigma**2 * d_xx + running_reward(t, t, l, p)
                       for l in (0.0, p.lmax)]
                best = np.maximum(phi[0], phi[1])
                sup_violation = max(sup_violation, float(np.max(np.maximum(best, 0.0))))
                attained = np.where(below, phi[0], phi[1])
                law_ok = law_ok and bool(np.all(attained >= best - tol))
    return HjbResidualReport(grid, b, res_lo, res_hi, bnd, sup_violation, law_ok, n)


@dataclass(frozen=True)
class SmoothFit:
    value_jump: tuple
    slope_jump: tuple
    slope_minus_one: float
    curvature_jump: float


def smooth_fit_check(params: ModelParams, roots: CharRoots | None, b: float) -> SmoothFit:
    """One-sided mismatches of ``V1``, ``V2`` and ``nu(t, t, .)`` at ``x = b``."""
    rt = roots if roots is not None else characteristic_roots(params)
    coef = cf.coefficients(params, rt, b)
    a1s_below = lambda x, k: coef.A1 * (rt.a1**k * np.exp(rt.a1 * x) - rt.a2**k * np.exp(rt.a2 * x))
    v1_above = lambda x, k: (params.lmax / params.delta if k == 0 else 0.0) + coef.B2 * rt.b2**k * np.exp(rt.b2 * x)
    c2 = params.lam - coef.C1
    v2_below = lambda x, k: (-params.lam if k == 0 else 0.0) + coef.C1 * rt.c1**k * np.exp(rt.c1 * x) + c2 * rt.c2**k * np.exp(rt.c2 * x)
    v2_above = lambda x, k: (-params.lam if k == 0 else 0.0) + coef.D2 * rt.d2**k * np.exp(rt.d2 * x)
    vj = (abs(a1s_below(b, 0) - v1_above(b, 0)), abs(v2_below(b, 0) - v2_above(b, 0)))
    sj = (abs(a1s_below(b, 1) - v1_above(b, 1)), abs(v2_below(b, 1) - v2_above(b, 1)))
    slope = a1s_below(b, 1) + v2_below(b, 1)
    curv = abs(a1s_below(b, 2) + v2_below(b, 2) - v1_above(b, 2) - v2_above(b, 2))
    return SmoothFit(vj, sj, abs(slope - 1.0), curv)


@dataclass(frozen=True)
class ShapeReport:
    increasing: bool
    concave: bool
    slope_above_one_below_b: bool
    slope_at_most_one_above_b: bool
    min_slope: float
    max_curvature: float

    @property
    def ok(self) -> bool:
        return self.increasing and self.concave and self.slope_above_one_below_b and self.slope_at_most_one_above_b


def shape_check(params: ModelParams, roots: CharRoots | None, solution: EquilibriumSolution,
                x_extent: float = 20.0, points: int = 4001, tol: float = 1e-12) -> ShapeReport:
    """Monotonicity and concavity of ``x -> nu(t, t, x)`` on a dense grid."""
    rt = roots if roots is not None else characteristic_roots(params)
    b = solution.b_star
    xs = np.linspace(0.0, b + x_extent, points)
    d1 = np.asarray(cf.nu(0.0, 0.0, xs, b, params, rt, deriv=1))
    d2 = np.asarray(cf.nu(0.0, 0.0, xs, b, params, rt, deriv=2))
    below = xs < b
    return ShapeReport(
        increasing=bool(np.all(d1 > 0)),
        concave=bool(np.all(d2 < 0)),
        slope_above_one_below_b=bool(np.all(d1[below] > 1)),
        slope_at_most_one_above_b=bool(np.all(d1[~below] <= 1 + tol)),
        min_slope=float(d1.min()),
        max_curvature=float(d2.max()),
    )
