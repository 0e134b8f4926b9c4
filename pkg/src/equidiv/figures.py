"""Datasets behind the threshold plots: region map in x, beta sweeps and lambda sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import closed_form as cf
from .equilibrium import constrained_threshold, solve_threshold
from .model import ModelParams, characteristic_roots

BASE = ModelParams(mu=2.0, sigma=1.0, delta=0.1, beta=0.2, lmax=1.9, lam=-50.0, alpha=0.5)
REGION = ModelParams(mu=2.0, sigma=1.0, delta=0.1, beta=0.2, lmax=4.0, lam=-10.0, alpha=0.01)

BETA_GRID = np.concatenate(([0.0], np.geomspace(1e-4, 20.0, 81)))
LAMBDA_GRID = np.linspace(-200.0, 0.0, 81)


@dataclass
class Dataset:
    columns: list[str]
    rows: list[tuple]
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows], dtype=float)


def _meta(params: ModelParams, **extra) -> dict:
    meta = {k: v for k, v in params.as_dict().items()}
    meta.update(extra)
    return meta


def precommitment_threshold(x: float, params: ModelParams, b_max: float = 15.0, points: int = 301) -> float:
    """Maximiser of ``b -> nu(t, t, x; b)`` for fixed ``lam``, by grid search then bounded refinement."""
    r = characteristic_roots(params)
    bs = np.linspace(0.0, b_max, points)
    vals = np.array([cf.nu(0.0, 0.0, x, b, params, r) for b in bs])
    i = int(np.argmax(vals))
    lo, hi = bs[max(i - 1, 0)], bs[min(i + 1, points - 1)]
    if hi - lo <= 0:
        return float(bs[i])
    res = minimize_scalar(lambda b: -cf.nu(0.0, 0.0, x, b, params, r), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x) if -res.fun >= vals[i] else float(bs[i])


def region_map(xs=None) -> Dataset:
    """Thresholds against the initial surplus for the constrained problem."""
    p = REGION
    r = characteristic_roots(p)
    xb = cf.x_bar(p, r)
    b_bar = cf.classical_threshold(p, r)
    b_eq = solve_threshold(p, r).b_star
    if xs is None:
        xs = np.unique(np.concatenate((np.linspace(0.25, 4.0, 76), xb + np.geomspace(1e-3, 0.5, 25))))
    rows = []
    for x in xs:
        feasible = bool(x > xb)
        b_tilde = constrained_threshold(float(x), p, r) if feasible else math.nan
        rows.append((float(x), b_bar, b_tilde, b_eq, precommitment_threshold(float(x), p), feasible))
    return Dataset(
        ["x", "b_bar", "b_tilde", "b_lambda_-10", "b_precommit_-10", "feasible"], rows,
        _meta(p, x_bar=xb, note="b_tilde is the constraint boundary w(x, b') = alpha floored at b_bar"),
    )


def beta_sweep(params: ModelParams, betas=BETA_GRID) -> Dataset:
    r0 = characteristic_roots(params)
    b_bar = cf.classical_threshold(params, r0)
    rows = []
    for beta in betas:
        sol = solve_threshold(params.with_(beta=float(beta)))
        rows.append((float(beta), sol.b_star, b_bar, sol.regime.value))
    b_at_delta = solve_threshold(params.with_(beta=params.delta)).b_star
    return Dataset(["beta", "b_star", "b_bar", "regime"], rows,
                   _meta(params.with_(beta=math.nan), b_bar=b_bar, b_star_at_beta_eq_delta=b_at_delta))


def lambda_sweep(params: ModelParams, lams=LAMBDA_GRID, with_beta0: bool = True) -> Dataset:
    b_bar = cf.classical_threshold(params, characteristic_roots(params))
    cols = ["lambda", "b_star", "b_bar"] + (["b_star_beta0"] if with_beta0 else [])
    rows = []
    for lam in lams:
        row = [float(lam), solve_threshold(params.with_(lam=float(lam))).b_star, b_bar]
        if with_beta0:
            row.append(solve_threshold(params.with_(lam=float(lam), beta=0.0)).b_star)
        rows.append(tuple(row))
    return Dataset(cols, rows, _meta(params.with_(lam=math.nan), b_bar=b_bar))


def figure(fig_id: int) -> Dataset:
    """Dataset for plot ``fig_id`` in 1..5; parameter sets are recorded in ``meta``."""
    if fig_id == 1:
        return region_map()
    if fig_id == 2:
        return beta_sweep(BASE)
    if fig_id == 3:
        return lambda_sweep(BASE)
    if fig_id == 4:
        return beta_sweep(BASE.with_(lmax=4.0))
    if fig_id == 5:
        return lambda_sweep(BASE.with_(lmax=4.0))
    raise ValueError(f"unknown figure id {fig_id}; expected 1-5")
