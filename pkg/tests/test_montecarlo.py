import math
import warnings

import numpy as np
import pytest

from conftest import FAST, BASE_SET
from equidiv import closed_form as cf
from equidiv import montecarlo as mc
from equidiv.equilibrium import match_constraint, solve_threshold
from equidiv.model import characteristic_roots

SMALL = mc.SimConfig(x0=1.0, dt=2e-3, horizon=10.0, paths=3000, seed=11)


def test_config_validation():
    with pytest.raises(ValueError, match="dt must be > 0"):
        mc.SimConfig(dt=0.0)
    with pytest.raises(ValueError, match="horizon must exceed t0"):
        mc.SimConfig(t0=1.0, horizon=1.0)
    with pytest.raises(ValueError, match="paths"):
        mc.SimConfig(paths=0)
    with pytest.raises(ValueError, match="even number"):
        mc.SimConfig(paths=11, antithetic=True)
    assert mc.SimConfig().resolved_horizon(BASE_SET) == pytest.approx(12 / 0.1)
    assert mc.SimConfig(t0=2.0).resolved_horizon(BASE_SET.with_(beta=0.0)) == pytest.approx(2.0 + 12 / 0.1)


def test_identical_inputs_give_identical_estimates():
    b = solve_threshold(FAST).b_star
    law = mc.threshold_law(b, FAST.lmax)
    assert mc.simulate_reward(law, FAST, SMALL) == mc.simulate_reward(law, FAST, SMALL)
    assert mc.simulate_laplace(b, FAST, SMALL) == mc.simulate_laplace(b, FAST, SMALL)


def test_leading_paths_do_not_depend_on_path_count():
    law = mc.threshold_law(1.4, FAST.lmax)
    short = mc._simulate([(1.0, law)], FAST, SMALL.__class__(**{**SMALL.__dict__, "paths": 1500}))
    long = mc._simulate([(1.0, law)], FAST, SMALL)
    assert np.array_equal(short.tau[0], long.tau[0, :1500])
    assert np.array_equal(short.div[0], long.div[0, :1500])


def test_scalar_and_bundled_kernels_agree():
    law = mc.threshold_law(1.4, FAST.lmax)
    a = mc._simulate([(1.0, law)], FAST, SMALL)
    b = mc._simulate([(1.0, law)], FAST, SMALL, _force_bundle=True)
    for name in ("tau", "div", "x_end"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_boundary_start():
    cfg = mc.SimConfig(x0=0.0, dt=1e-2, horizon=5.0, paths=200)
    p = FAST.with_(lam=0.0)
    est = mc.simulate_reward(mc.constant_rate(p.lmax), p, cfg)
    assert est.mean == 0.0 and est.n_ruined == 200
    assert mc.simulate_laplace(1.0, FAST, cfg).mean == 1.0
    assert mc.simulate_ruin_probability(0.0, FAST, cfg).mean == 1.0


def test_per_path_reward_bound():
    b = solve_threshold(FAST).b_star
    paths = mc._simulate([(1.0, mc.threshold_law(b, FAST.lmax))], FAST, SMALL)
    payoff = mc._reward_payoffs(paths, 0, FAST)
    assert np.all(np.abs(payoff) <= FAST.lmax / FAST.delta + abs(FAST.lam))


def test_no_payout_after_ruin():
    paths = mc._simulate([(0.5, mc.constant_rate(FAST.lmax))], FAST, SMALL)
    tau = paths.tau[0]
    ruined = np.isfinite(tau)
    assert ruined.any()
    paid_until_ruin = FAST.lmax / FAST.delta * (1 - np.exp(-FAST.delta * tau[ruined]))
    assert np.all(paths.div[0, ruined] <= paid_until_ruin + 1e-9)
    assert np.all(paths.x_end[0, ruined] == 0.0)


def test_rates_are_clamped_with_a_warning():
    bad = mc.ThresholdStrategy(1.0, -1.0, 10.0)
    with pytest.warns(UserWarning, match="clamped"):
        est = mc.simulate_reward(bad, FAST, SMALL)
    good = mc.simulate_reward(mc.ThresholdStrategy(1.0, 0.0, FAST.lmax), FAST, SMALL)
    assert est.mean == good.mean
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mc.simulate_reward(mc.threshold_law(1.0, FAST.lmax), FAST, SMALL)


def test_strategy_objects():
    law = mc.threshold_law(2.0, 3.0)
    assert list(law(0.0, [1.0, 2.0, 5.0])) == [0.0, 3.0, 3.0]
    switched = mc.perturbed(mc.never_pay(), law, 0.0, 0.5)
    assert switched(0.2, 3.0) == 0.0 and switched(0.6, 3.0) == 3.0


def test_larger_threshold_lowers_laplace_transform():
    lo, hi = mc.simulate_laplace_paired([1.0, 2.0], FAST, SMALL)
    assert hi.mean < lo.mean


def test_ruin_is_pathwise_monotone_in_start():
    starts = [0.3, 0.6, 1.2]
    paths = mc._simulate([(x, mc.constant_rate(1.0)) for x in starts], FAST, SMALL)
    ruined = np.isfinite(paths.tau)
    assert np.all(ruined[1] <= ruined[0]) and np.all(ruined[2] <= ruined[1])
    ests = mc.simulate_ruin_probability(1.0, FAST, SMALL, x0s=starts)
    assert ests[0].mean > ests[1].mean > ests[2].mean


def test_ruin_probability_agrees():
    p = FAST.with_(mu=2.0, sigma=1.0)
    cfg = mc.SimConfig(x0=1.0, dt=1e-3, horizon=30.0, paths=20_000, seed=3)
    est = mc.simulate_ruin_probability(0.0, p, cfg)
    assert est.agrees_with(math.exp(-4.0))
    assert 0 <= est.bias_bound < 1e-9
    assert est.n_ruined + round(est.truncation_fraction * est.n_paths) == est.n_paths


def test_ruin_with_non_positive_drift_reports_alive_fraction():
    cfg = mc.SimConfig(x0=1.0, dt=1e-2, horizon=3.0, paths=500, seed=2)
    est = mc.simulate_ruin_probability(FAST.mu, FAST.with_(lmax=FAST.mu), cfg)
    assert est.bias_bound == pytest.approx(est.truncation_fraction)


def test_laplace_agrees_fast_set():
    b = solve_threshold(FAST).b_star
    cfg = mc.SimConfig(x0=1.0, dt=1e-3, horizon=25.0, paths=20_000, seed=5)
    est = mc.simulate_laplace(b, FAST, cfg)
    assert est.agrees_with(cf.laplace_w(1.0, b, FAST))


def test_reward_agrees_reference_set():
    sol = solve_threshold(BASE_SET)
    cfg = mc.SimConfig(x0=1.0, dt=2e-3, horizon=40.0, paths=20_000, seed=9)
    est = mc.simulate_reward(mc.threshold_law(sol.b_star, BASE_SET.lmax), BASE_SET, cfg)
    assert est.agrees_with(sol.value(0.0, 0.0, 1.0))


def test_laplace_requires_positive_beta():
    with pytest.raises(ValueError):
        mc.simulate_laplace(1.0, BASE_SET.with_(beta=0.0), SMALL)


def test_antithetic_agrees_with_plain():
    b = solve_threshold(FAST).b_star
    plain = mc.simulate_laplace(b, FAST, SMALL.__class__(**{**SMALL.__dict__, "paths": 10_000}))
    anti = mc.simulate_laplace(b, FAST, SMALL.__class__(**{**SMALL.__dict__, "paths": 10_000, "antithetic": True}))
    assert abs(plain.mean - anti.mean) <= 3 * math.hypot(plain.stderr, anti.stderr)


def test_halving_dt_moves_laplace_within_noise():
    b = solve_threshold(BASE_SET).b_star
    cfg = mc.SimConfig(x0=1.0, dt=2e-3, horizon=15.0, paths=20_000, seed=21)
    cmp = mc.laplace_dt_halving(b, BASE_SET, cfg)
    assert abs(cmp.difference.mean) < 2 * cmp.fine.stderr
    # the coupled difference is far less noisy than either estimate
    assert cmp.difference.stderr < 0.5 * cmp.fine.stderr


def test_coupled_coarse_run_matches_plain_statistics():
    b = solve_threshold(FAST).b_star
    cfg = mc.SimConfig(x0=1.0, dt=4e-3, horizon=20.0, paths=10_000, seed=6)
    cmp = mc.laplace_dt_halving(b, FAST, cfg)
    exact = cf.laplace_w(1.0, b, FAST)
    assert cmp.coarse.agrees_with(exact) and cmp.fine.agrees_with(exact)


def test_bridge_reduces_crossing_bias():
    # a coarse step misses crossings; the bridge test recovers most of them
    b = solve_threshold(FAST).b_star
    exact = cf.laplace_w(1.0, b, FAST)
    base = dict(x0=1.0, dt=5e-2, horizon=25.0, paths=20_000, seed=4)
    with_bridge = mc.simulate_laplace(b, FAST, mc.SimConfig(**base))
    without = mc.simulate_laplace(b, FAST, mc.SimConfig(**base, bridge=False))
    assert abs(with_bridge.mean - exact) < abs(without.mean - exact)
    assert without.mean < exact


def test_self_deviation_is_exactly_zero():
    r = characteristic_roots(FAST)
    b = solve_threshold(FAST, r).b_star
    est = mc.perturbation_test(1.0, 0.1, mc.threshold_law(b, FAST.lmax), FAST, r, SMALL)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_perturbation_rejects_bad_window():
    with pytest.raises(ValueError):
        mc.perturbation_sweep(1.0, [0.0], {"never": mc.never_pay()}, FAST, None, SMALL)


def test_martingale_start_and_ruined_paths():
    p = FAST
    r = characteristic_roots(p)
    x0, alpha = 0.6, 0.1
    m = match_constraint(x0, p, alpha, r)
    assert m.binding
    cfg = mc.SimConfig(dt=2e-3, paths=4000, seed=8)
    est = mc.martingale_check(x0, p, r, alpha, [0.0, 1.0, 30.0], cfg)
    assert est[0].mean == pytest.approx(alpha, abs=1e-12) and est[0].stderr < 1e-15
    assert abs(est[1].mean - alpha) <= 3 * est[1].stderr + 1e-3
    # late in the run almost every contribution is frozen at exp(-beta tau) w(0, b*) = exp(-beta tau)
    paths = mc._simulate([(x0, mc.threshold_law(m.b_star, p.lmax))], p,
                         mc.SimConfig(x0=x0, dt=2e-3, horizon=30.0, paths=4000, seed=8), checkpoints=[30.0])
    ruined = np.isfinite(paths.tau[0])
    assert np.all(paths.x_chk[0, ruined, 0] == 0.0)


def test_pay_always_quotient_approaches_its_limit():
    # for x0 < b*, paying lmax on [t0, t0 + h) costs lmax (nu_x - 1) per unit time in the limit;
    # the finite-h quotients sit above that limit and fall toward it as h shrinks
    p = BASE_SET
    r = characteristic_roots(p)
    b = solve_threshold(p, r).b_star
    x0 = b / 2
    limit = p.lmax * (cf.nu(0.0, 0.0, x0, b, p, r, deriv=1) - 1.0)
    cfg = mc.SimConfig(dt=2e-3, horizon=40.0, paths=5000, seed=17)
    cells = mc.perturbation_sweep(x0, (0.2, 0.1, 0.05), {"always": mc.constant_rate(p.lmax)}, p, r, cfg, b_star=b)
    q = [cells[("always", h)] for h in (0.2, 0.1, 0.05)]
    assert q[0].mean > q[1].mean > q[2].mean
    assert q[2].mean > limit - 3 * q[2].stderr
    assert q[2].mean - limit < 0.5 * (q[0].mean - limit)
