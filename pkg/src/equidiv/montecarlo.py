"""Euler-Maruyama simulation of the controlled surplus with absorption at zero.

Scenarios (initial surplus plus feedback strategy) are simulated in lockstep
on shared Gaussian increments, which gives exact common random numbers for
paired comparisons. Paths are grouped into fixed-size blocks of draw units;
block ``i`` draws from a PCG64 stream spawned as child ``i`` of
``SeedSequence(seed)``, so the first ``n`` paths of a run do not depend on the
total path count or on evaluation order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numba
import numpy as np

from . import closed_form as cf
from .equilibrium import match_constraint, solve_threshold
from .model import CharRoots, ModelParams, characteristic_roots

BLOCK_UNITS = 1024
HORIZON_FACTOR = 12.0
RUIN_TAIL_EPS = 1e-12


@dataclass(frozen=True)
class ThresholdStrategy:
    """Pay ``above`` when the surplus is at or above ``level`` and ``below`` otherwise."""

    level: float
    below: float = 0.0
    above: float = 0.0

    def __call__(self, t, x):
        return np.where(np.asarray(x) >= self.level, self.above, self.below)


@dataclass(frozen=True)
class SwitchedStrategy:
    """Follow ``first`` on ``[t0, until)`` and ``then`` afterwards (a perturbed control)."""

    first: ThresholdStrategy
    then: ThresholdStrategy
    until: float

    def __call__(self, t, x):
        return np.where(np.asarray(t) < self.until, self.first(t, x), self.then(t, x))


FeedbackStrategy = Union[ThresholdStrategy, SwitchedStrategy]


def threshold_law(b: float, lmax: float) -> ThresholdStrategy:
    return ThresholdStrategy(b, 0.0, lmax)


def constant_rate(l: float) -> ThresholdStrategy:
    return ThresholdStrategy(0.0, l, l)


def never_pay() -> ThresholdStrategy:
    return ThresholdStrategy(0.0, 0.0, 0.0)


def perturbed(deviation: ThresholdStrategy, base: ThresholdStrategy, t0: float, h: float) -> SwitchedStrategy:
    return SwitchedStrategy(deviation, base, t0 + h)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings. ``horizon`` is the absolute truncation time ``T``.

    ``horizon=None`` resolves to ``t0 + HORIZON_FACTOR / min(delta, beta)``
    (``beta`` omitted when zero). ``bridge`` enables the Brownian-bridge test
    for zero crossings between grid points.
    """

    x0: float = 1.0
    t0: float = 0.0
    dt: float = 1e-3
    horizon: float | None = None
    paths: int = 10_000
    seed: int = 0
    antithetic: bool = False
    bridge: bool = True

    def __post_init__(self):
        problems = []
        if not self.dt > 0:
            problems.append("dt must be > 0")
        if self.horizon is not None and not self.horizon > self.t0:
            problems.append("horizon must exceed t0")
        if self.paths < 1:
            problems.append("paths must be >= 1")
        if self.antithetic and self.paths % 2:
            problems.append("antithetic sampling needs an even number of paths")
        if self.seed < 0:
            problems.append("seed must be >= 0")
        if not self.x0 >= 0:
            problems.append("x0 must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))

    def resolved_horizon(self, params: ModelParams) -> float:
        if self.horizon is not None:
            return self.horizon
        rate = min(params.delta, params.beta) if params.beta > 0 else params.delta
        return self.t0 + HORIZON_FACTOR / rate


@dataclass(frozen=True)
class SimEstimate:
    """Monte Carlo mean with its standard error.

    ``bias_bound`` bounds the absolute bias caused by truncating at the horizon.
    """

    mean: float
    stderr: float
    n_paths: int
    n_ruined: int
    truncation_fraction: float
    bias_bound: float = 0.0
    seed: int = 0

    def agrees_with(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr + self.bias_bound


@numba.njit(cache=True)
def _simulate_block(rng, n_units, n_signs, x0, table, switch_steps, mu, sigma, dt, n_steps,
                    delta, bridge, upper, chk_steps):
    n_scen = x0.shape[0]
    n_state = n_scen * n_signs
    n_out = n_units * n_signs
    n_chk = chk_steps.shape[0]
    tau = np.full((n_scen, n_out), np.inf)
    div = np.zeros((n_scen, n_out))
    x_end = np.zeros((n_scen, n_out))
    x_chk = np.zeros((n_scen, n_out, n_chk))

    sq = sigma * math.sqrt(dt)
    cross = 2.0 / (sigma * sigma * dt)
    pay_step = (1.0 - math.exp(-delta * dt)) / delta
    decay = math.exp(-delta * dt)
    x = np.empty(n_state)
    xn = np.empty(n_state)
    alive = np.empty(n_state, dtype=np.bool_)

    for u in range(n_units):
        n_alive = 0
        for k in range(n_scen):
            for s in range(n_signs):
                j = k * n_signs + s
                x[j] = x0[k]
                alive[j] = False
                if x0[k] <= 0.0:
                    x[j] = 0.0
                    tau[k, u * n_signs + s] = 0.0
                elif x0[k] < upper[k]:
                    alive[j] = True
                    n_alive += 1
        ci = 0
        while ci < n_chk and chk_steps[ci] == 0:
            for k in range(n_scen):
                for s in range(n_signs):
                    x_chk[k, u * n_signs + s, ci] = x[k * n_signs + s]
            ci += 1

        disc = 1.0
        n = 0
        while n < n_steps and n_alive > 0:
            z = rng.standard_normal()
            need_bridge = False
            for k in range(n_scen):
                if n < switch_steps[k]:
                    lev = table[k, 0]
                    lo = table[k, 1]
                    hi = table[k, 2]
                else:
                    lev = table[k, 3]
                    lo = table[k, 4]
                    hi = table[k, 5]
                for s in range(n_signs):
                    j = k * n_signs + s
                    if not alive[j]:
                        continue
                    rate = hi if x[j] >= lev else lo
                    div[k, u * n_signs + s] += disc * rate * pay_step
                    zz = z if s == 0 else -z
                    xn[j] = x[j] + (mu - rate) * dt + sq * zz
                    if bridge and xn[j] > 0.0 and cross * x[j] * xn[j] < 40.0:
                        need_bridge = True
            uu = rng.random() if need_bridge else 1.0
            n += 1
            disc *= decay
            for k in range(n_scen):
                for s in range(n_signs):
                    j = k * n_signs + s
                    if not alive[j]:
                        continue
                    out = u * n_signs + s
                    hit = xn[j] <= 0.0
                    if not hit and bridge:
                        a = cross * x[j] * xn[j]
                        if a < 40.0 and uu < math.exp(-a):
                            hit = True
                    if hit:
                        alive[j] = False
                        n_alive -= 1
                        x[j] = 0.0
                        tau[k, out] = n * dt
                    elif xn[j] >= upper[k]:
                        alive[j] = False
                        n_alive -= 1
                        x[j] = xn[j]
                    else:
                        x[j] = xn[j]
            while ci < n_chk and chk_steps[ci] == n:
                for k in range(n_scen):
                    for s in range(n_signs):
                        x_chk[k, u * n_signs + s, ci] = x[k * n_signs + s]
                ci += 1
        # checkpoints after every state stopped: frozen states
        while ci < n_chk:
            for k in range(n_scen):
                for s in range(n_signs):
                    x_chk[k, u * n_signs + s, ci] = x[k * n_signs + s]
            ci += 1
        for k in range(n_scen):
            for s in range(n_signs):
                x_end[k, u * n_signs + s] = x[k * n_signs + s]
    return tau, div, x_end, x_chk


@numba.njit(cache=True)
def _simulate_single(rng, n_units, x0, row, switch_step, mu, sigma, dt, n_steps, delta, bridge, upper,
                     chk_steps):
    # scalar specialisation of _simulate_block for one scenario without antithetics;
    # draws are consumed in the same order, so results are bit-identical
    n_chk = chk_steps.shape[0]
    tau = np.full((1, n_units), np.inf)
    div = np.zeros((1, n_units))
    x_end = np.zeros((1, n_units))
    x_chk = np.zeros((1, n_units, n_chk))
    sq = sigma * math.sqrt(dt)
    cross = 2.0 / (sigma * sigma * dt)
    pay_step = (1.0 - math.exp(-delta * dt)) / delta
    decay = math.exp(-delta * dt)
    for u in range(n_units):
        x = x0
        alive = x0 > 0.0 and x0 < upper
        if x0 <= 0.0:
            x = 0.0
            tau[0, u] = 0.0
        ci = 0
        while ci < n_chk and chk_steps[ci] == 0:
            x_chk[0, u, ci] = x
            ci += 1
        d = 0.0
        disc = 1.0
        n = 0
        lev, lo, hi = (row[0], row[1], row[2]) if switch_step > 0 else (row[3], row[4], row[5])
        while n < n_steps and alive:
            if n == switch_step:
                lev, lo, hi = row[3], row[4], row[5]
            z = rng.standard_normal()
            rate = hi if x >= lev else lo
            d += disc * rate * pay_step
            xn = x + (mu - rate) * dt + sq * z
            n += 1
            disc *= decay
            hit = xn <= 0.0
            if not hit and bridge:
                a = cross * x * xn
                if a < 40.0 and rng.random() < math.exp(-a):
                    hit = True
            if hit:
                alive = False
                x = 0.0
                tau[0, u] = n * dt
            else:
                x = xn
                if xn >= upper:
                    alive = False
            while ci < n_chk and chk_steps[ci] == n:
                x_chk[0, u, ci] = x
                ci += 1
        while ci < n_chk:
            x_chk[0, u, ci] = x
            ci += 1
        div[0, u] = d
        x_end[0, u] = x
    return tau, div, x_end, x_chk


@numba.njit(cache=True)
def _laplace_coupled(rng, n_units, x0, level, lmax, mu, sigma, dt, n_coarse, beta, bridge):
    # threshold-law paths at steps dt and dt/2 driven by the same Brownian increments
    out = np.zeros((2, n_units))
    h = 0.5 * dt
    sq_f = sigma * math.sqrt(h)
    cross_c = 2.0 / (sigma * sigma * dt)
    cross_f = 2.0 / (sigma * sigma * h)
    for u in range(n_units):
        xc = x0
        xf = x0
        alive_c = x0 > 0.0
        alive_f = x0 > 0.0
        if not alive_c:
            out[0, u] = 1.0
            out[1, u] = 1.0
        n = 0
        while n < n_coarse and (alive_c or alive_f):
            z1 = rng.standard_normal()
            z2 = rng.standard_normal()
            uc = rng.random()
            u1 = rng.random()
            u2 = rng.random()
            if alive_f:
                for half in range(2):
                    rate = lmax if xf >= level else 0.0
                    xn = xf + (mu - rate) * h + sq_f * (z1 if half == 0 else z2)
                    hit = xn <= 0.0
                    if not hit and bridge:
                        a = cross_f * xf * xn
                        hit = a < 40.0 and (u1 if half == 0 else u2) < math.exp(-a)
                    if hit:
                        alive_f = False
                        out[1, u] = math.exp(-beta * (2 * n + half + 1) * h)
                        break
                    xf = xn
            if alive_c:
                rate = lmax if xc >= level else 0.0
                xn = xc + (mu - rate) * dt + sq_f * (z1 + z2)
                hit = xn <= 0.0
                if not hit and bridge:
                    a = cross_c * xc * xn
                    hit = a < 40.0 and uc < math.exp(-a)
                if hit:
                    alive_c = False
                    out[0, u] = math.exp(-beta * (n + 1) * dt)
                else:
                    xc = xn
            n += 1
    return out


@dataclass
class _Paths:
    tau: np.ndarray      # elapsed ruin time, inf if not ruined by the horizon
    div: np.ndarray      # discounted dividends paid before ruin or horizon
    x_end: np.ndarray    # surplus where simulation stopped (0 if ruined)
    x_chk: np.ndarray    # surplus at checkpoints (frozen after ruin)
    elapsed: float       # horizon - t0
    antithetic: bool


def _clamped(strategy: ThresholdStrategy, lmax: float) -> ThresholdStrategy:
    lo = min(max(strategy.below, 0.0), lmax)
    hi = min(max(strategy.above, 0.0), lmax)
    if (lo, hi) != (strategy.below, strategy.above):
        warnings.warn(f"strategy rates clamped to [0, {lmax}]: {strategy}", stacklevel=3)
    return ThresholdStrategy(strategy.level, lo, hi)


def _encode(strategy: FeedbackStrategy, params: ModelParams, t0: float, dt: float):
    if isinstance(strategy, SwitchedStrategy):
        first = _clamped(strategy.first, params.lmax)
        then = _clamped(strategy.then, params.lmax)
        switch = int(round((strategy.until - t0) / dt))
    elif isinstance(strategy, ThresholdStrategy):
        first = then = _clamped(strategy, params.lmax)
        switch = 0
    else:
        raise TypeError(f"unsupported strategy type {type(strategy).__name__}")
    row = [first.level, first.below, first.above, then.level, then.below, then.above]
    return row, switch


def _simulate(scenarios: Sequence[tuple[float, FeedbackStrategy]], params: ModelParams, config: SimConfig,
              upper: Sequence[float] | None = None, checkpoints: Sequence[float] = (),
              _force_bundle: bool = False) -> _Paths:
    horizon = config.resolved_horizon(params)
    elapsed = horizon - config.t0
    n_steps = int(math.ceil(elapsed / config.dt - 1e-9))
    rows, switches = zip(*(_encode(s, params, config.t0, config.dt) for _, s in scenarios))
    x0 = np.array([x for x, _ in scenarios], dtype=float)
    table = np.array(rows, dtype=float)
    switch_steps = np.array(switches, dtype=np.int64)
    upper_arr = np.full(len(scenarios), np.inf) if upper is None else np.asarray(upper, dtype=float)
    chk = np.array([int(round(c / config.dt)) for c in checkpoints], dtype=np.int64)
    if np.any(chk > n_steps) or np.any(np.diff(chk) < 0):
        raise ValueError("checkpoints must be sorted and lie within the horizon")
    n_signs = 2 if config.antithetic else 1
    n_units = config.paths // n_signs
    n_blocks = -(-n_units // BLOCK_UNITS)
    children = np.random.SeedSequence(config.seed).spawn(n_blocks)
    parts = []
    for i, child in enumerate(children):
        units = min(BLOCK_UNITS, n_units - i * BLOCK_UNITS)
        rng = np.random.Generator(np.random.PCG64(child))
        if len(scenarios) == 1 and n_signs == 1 and not _force_bundle:
            parts.append(_simulate_single(rng, units, x0[0], table[0], switch_steps[0], params.mu, params.sigma,
                                          config.dt, n_steps, params.delta, config.bridge, upper_arr[0], chk))
        else:
            parts.append(_simulate_block(rng, units, n_signs, x0, table, switch_steps, params.mu, params.sigma,
                                         config.dt, n_steps, params.delta, config.bridge, upper_arr, chk))
    tau, div, x_end, x_chk = (np.concatenate(arrs, axis=1) for arrs in zip(*parts))
    return _Paths(tau, div, x_end, x_chk, n_steps * config.dt, config.antithetic)


def _mean_and_stderr(values: np.ndarray, antithetic: bool) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if antithetic:
        values = values.reshape(-1, 2).mean(axis=1)
    n = values.size
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, stderr


def _estimate(values, paths: _Paths, k: int, seed: int, bias_bound: float = 0.0) -> SimEstimate:
    mean, se = _mean_and_stderr(values, paths.antithetic)
    ruined = np.isfinite(paths.tau[k])
    return SimEstimate(mean, se, values.size, int(ruined.sum()), float(1.0 - ruined.mean()), bias_bound, seed)


def _reward_payoffs(paths: _Paths, k: int, params: ModelParams) -> np.ndarray:
    tau = paths.tau[k]
    if params.beta > 0:
        ruin_term = np.where(np.isfinite(tau), np.exp(-params.beta * np.where(np.isfinite(tau), tau, 0.0)), 0.0)
    else:
        ruin_term = np.isfinite(tau).astype(float)
    return paths.div[k] + params.lam * (ruin_term - params.alpha)


def _reward_bias_bound(paths: _Paths, k: int, params: ModelParams) -> float:
    alive = float(np.mean(~np.isfinite(paths.tau[k])))
    tail_div = params.lmax / params.delta * math.exp(-params.delta * paths.elapsed)
    tail_pen = abs(params.lam) * (math.exp(-params.beta * paths.elapsed) if params.beta > 0 else 1.0)
    return alive * (tail_div + tail_pen)


def simulate_reward(strategy: FeedbackStrategy, params: ModelParams, config: SimConfig) -> SimEstimate:
    """Estimate of ``J(t0, x0, strategy)``: discounted dividends plus the ruin penalty."""
    paths = _simulate([(config.x0, strategy)], params, config)
    return _estimate(_reward_payoffs(paths, 0, params), paths, 0, config.seed,
                     _reward_bias_bound(paths, 0, params))


def simulate_laplace(b: float, params: ModelParams, config: SimConfig) -> SimEstimate:
    """Estimate of ``E[exp(-beta (tau - t0))]`` under the threshold-``b`` law."""
    if not params.beta > 0:
        raise ValueError("simulate_laplace requires beta > 0")
    paths = _simulate([(config.x0, threshold_law(b, params.lmax))], params, config)
    tau = paths.tau[0]
    values = np.where(np.isfinite(tau), np.exp(-params.beta * np.where(np.isfinite(tau), tau, 0.0)), 0.0)
    alive = float(np.mean(~np.isfinite(tau)))
    return _estimate(values, paths, 0, config.seed, alive * math.exp(-params.beta * paths.elapsed))


def simulate_laplace_paired(bs: Sequence[float], params: ModelParams, config: SimConfig,
                            x0s: Sequence[float] | None = None) -> list[SimEstimate]:
    """Laplace-transform estimates for several thresholds (or starting points) on common noise."""
    if not params.beta > 0:
        raise ValueError("simulate_laplace requires beta > 0")
    x0s = [config.x0] * len(bs) if x0s is None else list(x0s)
    paths = _simulate([(x, threshold_law(b, params.lmax)) for x, b in zip(x0s, bs)], params, config)
    out = []
    for k in range(len(bs)):
        tau = paths.tau[k]
        values = np.where(np.isfinite(tau), np.exp(-params.beta * np.where(np.isfinite(tau), tau, 0.0)), 0.0)
        alive = float(np.mean(~np.isfinite(tau)))
        out.append(_estimate(values, paths, k, config.seed, alive * math.exp(-params.beta * paths.elapsed)))
    return out


@dataclass(frozen=True)
class DtComparison:
    coarse: SimEstimate
    fine: SimEstimate
    difference: SimEstimate  # fine minus coarse, per path


def laplace_dt_halving(b: float, params: ModelParams, config: SimConfig) -> DtComparison:
    """Laplace-transform estimates at steps ``dt`` and ``dt / 2`` on the same Brownian paths.

    Each coarse increment is the sum of two fine ones, so the per-path
    difference isolates the discretisation effect from sampling noise.
    Antithetic sampling is ignored here.
    """
    if not params.beta > 0:
        raise ValueError("simulate_laplace requires beta > 0")
    elapsed = config.resolved_horizon(params) - config.t0
    n_coarse = int(math.ceil(elapsed / config.dt - 1e-9))
    children = np.random.SeedSequence(config.seed).spawn(-(-config.paths // BLOCK_UNITS))
    parts = []
    for i, child in enumerate(children):
        units = min(BLOCK_UNITS, config.paths - i * BLOCK_UNITS)
        rng = np.random.Generator(np.random.PCG64(child))
        parts.append(_laplace_coupled(rng, units, config.x0, b, params.lmax, params.mu, params.sigma,
                                      config.dt, n_coarse, params.beta, config.bridge))
    vals = np.concatenate(parts, axis=1)
    bias = math.exp(-params.beta * n_coarse * config.dt)

    def est(v, ruined, bound):
        mean, se = _mean_and_stderr(v, False)
        n_ruined = int(np.count_nonzero(ruined))
        return SimEstimate(mean, se, v.size, n_ruined, 1.0 - n_ruined / v.size, bound, config.seed)

    coarse_hit, fine_hit = vals[0] > 0, vals[1] > 0
    return DtComparison(est(vals[0], coarse_hit, bias), est(vals[1], fine_hit, bias),
                        est(vals[1] - vals[0], fine_hit, 0.0))


def simulate_ruin_probability(l_const: float, params: ModelParams, config: SimConfig,
                              x0s: Sequence[float] | None = None):
    """Fraction of paths ruined under the constant payout rate ``l_const``.

    Paths are stopped once the remaining ruin probability from their current
    level falls below ``RUIN_TAIL_EPS``; the residual ruin probability of every
    unruined path is reported as ``bias_bound``. Passing ``x0s`` simulates
    several starting points on common noise and returns a list.
    """
    drift = params.mu - l_const
    level = math.inf
    if drift > 0:
        level = -math.log(RUIN_TAIL_EPS) * params.sigma**2 / (2.0 * drift)
    starts = [config.x0] if x0s is None else list(x0s)
    strat = constant_rate(l_const)
    paths = _simulate([(x, strat) for x in starts], params, config, upper=[level] * len(starts))
    out = []
    for k in range(len(starts)):
        ruined = np.isfinite(paths.tau[k])
        if drift > 0:
            tail = float(np.mean(np.where(ruined, 0.0, cf.ruin_probability(paths.x_end[k], l_const, params.mu, params.sigma))))
        else:
            tail = float(np.mean(~ruined))
        out.append(_estimate(ruined.astype(float), paths, k, config.seed, tail))
    return out[0] if x0s is None else out


def perturbation_sweep(x0: float, hs: Sequence[float], deviations: dict[str, ThresholdStrategy],
                       params: ModelParams, roots: CharRoots | None, config: SimConfig,
                       b_star: float | None = None) -> dict[tuple[str, float], SimEstimate]:
    """Difference quotients ``(J(l_hat) - J(l_h)) / h`` for every (deviation, h) cell.

    All cells share the Gaussian increments of the equilibrium run, so each
    quotient is a paired common-random-number estimate.
    """
    if any(h <= 0 for h in hs):
        raise ValueError("perturbation windows must be positive")
    b = solve_threshold(params, roots).b_star if b_star is None else b_star
    l_hat = threshold_law(b, params.lmax)
    cfg = replace(config, x0=x0)
    cells = [(name, h) for name in deviations for h in hs]
    scenarios = [(x0, l_hat)] + [(x0, perturbed(deviations[name], l_hat, cfg.t0, h)) for name, h in cells]
    paths = _simulate(scenarios, params, cfg)
    base = _reward_payoffs(paths, 0, params)
    out = {}
    for k, (name, h) in enumerate(cells, start=1):
        diff = (base - _reward_payoffs(paths, k, params)) / h
        out[(name, h)] = _estimate(diff, paths, k, cfg.seed)
    return out


def perturbation_test(x0: float, h: float, deviation: ThresholdStrategy, params: ModelParams,
                      roots: CharRoots | None, config: SimConfig) -> SimEstimate:
    """Paired estimate of ``(J(l_hat) - J(l_h)) / h`` for a single deviation."""
    return perturbation_sweep(x0, [h], {"deviation": deviation}, params, roots, config)[("deviation", h)]


def martingale_check(x0: float, params: ModelParams, roots: CharRoots | None, alpha: float,
                     checkpoints: Sequence[float], config: SimConfig) -> list[SimEstimate]:
    """Estimates of ``E[exp(-beta (t ^ tau)) w(X_{t ^ tau}, b*)]`` at each checkpoint.

    ``b*`` is the matched threshold for ``(x0, alpha)``; checkpoints are
    elapsed times after ``t0``.
    """
    r = roots if roots is not None else characteristic_roots(params)
    match = match_constraint(x0, params, alpha, r)
    cps = sorted(checkpoints)
    cfg = replace(config, x0=x0, horizon=config.t0 + max(cps) if max(cps) > 0 else config.t0 + config.dt)
    paths = _simulate([(x0, threshold_law(match.b_star, params.lmax))], params, cfg, checkpoints=cps)
    out = []
    for i, c in enumerate(cps):
        stopped = np.minimum(paths.tau[0], c)
        values = np.exp(-params.beta * stopped) * np.asarray(cf.laplace_w(paths.x_chk[0, :, i], match.b_star, params, r))
        out.append(_estimate(values, paths, 0, cfg.seed))
    return out
