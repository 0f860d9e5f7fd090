from __future__ import annotations

import math

import numpy as np
import pytest
from oracles import constant_kill_resolvent, geometric_Q, matrix_resolvent

from hybridsde.errors import ThresholdViolated
from hybridsde.integrator import IntegratorConfig
from hybridsde.model import ctmc_model, geometric_rates_model, zero_model
from hybridsde.resolvent import (
    alpha_threshold, horizon, kill_bound_check, killed_expectation, killed_resolvent,
    remainder_bound, resolvent_G, series_psi, series_terms, simulate_killed, verify_series,
)


def one(x, k):
    return np.ones(len(x))


def _kill_chain(c):
    """Regime 1 leaves at constant rate ``c``."""
    return ctmc_model([[-c, c], [1.0, -1.0]])


def _trapezoid_tol(lam, dt):
    # composite trapezoid error of int e^{-lam t} dt on a uniform grid
    return lam * dt * dt / 12 * 1.01


def test_alpha_threshold_values():
    assert alpha_threshold(1.0) == 1.0
    assert alpha_threshold(0.0) == 0.25
    assert np.all(np.diff([alpha_threshold(k) for k in np.linspace(0, 5, 11)]) > 0)


def test_horizon_floor():
    assert horizon(0.1) == 100.0 and horizon(2.0) == 20.0


def test_zero_rates_weight_is_one():
    ks = simulate_killed(zero_model(1, 2), [0.0], 1, [0.5, 2.0], IntegratorConfig(dt=0.1), n_paths=5)
    assert np.all(ks.weight == 1.0)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_constant_rate_weight_is_exponential(lam):
    cfg = IntegratorConfig(dt=0.05)
    m, se = killed_expectation(_kill_chain(lam), one, [0.0], 1, 1.5, cfg, 10)
    assert m == pytest.approx(math.exp(-lam * 1.5), rel=1e-12)
    assert se == 0.0


def test_constant_rate_hard_kill_survival():
    lam, t, n = 1.0, 0.7, 20_000
    cfg = IntegratorConfig(dt=0.05, seed=3)
    m, _ = killed_expectation(_kill_chain(lam), one, [0.0], 1, t, cfg, n, variant="hard-kill")
    p = math.exp(-lam * t)
    assert abs(m - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_killed_sample_rejects_unknown_variant():
    with pytest.raises(ValueError):
        simulate_killed(zero_model(), [0.0], 1, 1.0, IntegratorConfig(), variant="soft")


@pytest.mark.parametrize("alpha", [0.5, 2.0])
def test_resolvent_of_constant_is_inverse_alpha(alpha):
    cfg = IntegratorConfig(dt=0.01, seed=1)
    est = resolvent_G(geometric_rates_model(1.0, M=3), one, alpha, [0.0], 1, cfg, 200, f_norm=1.0)
    target = 1 / alpha
    assert abs(est.value - target) <= 3 * est.se + est.tail + _trapezoid_tol(alpha, cfg.dt)


def test_indicator_without_switching_is_inverse_alpha():
    cfg = IntegratorConfig(dt=0.01)
    f = lambda x, k: (np.asarray(k) == 2).astype(float)
    est = resolvent_G(zero_model(1, 3), f, 1.5, [0.0], 2, cfg, 10, f_norm=1.0)
    assert est.se == 0.0
    assert abs(est.value - 1 / 1.5) <= est.tail + _trapezoid_tol(1.5, cfg.dt)


def test_frozen_resolvent_matches_matrix_inverse():
    Q = geometric_Q(1.0, 3)
    fvec = np.array([1.0, 0.0, 0.5])
    want = matrix_resolvent(Q, 2.0, fvec)
    cfg = IntegratorConfig(dt=0.01, seed=9)
    f = lambda x, k: fvec[np.asarray(k) - 1]
    for k in (1, 3):
        est = resolvent_G(ctmc_model(Q), f, 2.0, [0.0], k, cfg, 4000, f_norm=1.0)
        assert abs(est.value - want[k - 1]) <= 3 * est.se + est.tail + _trapezoid_tol(2.0, cfg.dt)


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_weighted_constant_kill_resolvent(c):
    alpha, cfg = 1.0, IntegratorConfig(dt=0.01)
    est = killed_resolvent(_kill_chain(c), one, alpha, [0.0], 1, cfg, 5, f_norm=1.0)
    assert est.se == 0.0
    err = abs(est.value - constant_kill_resolvent(alpha, c))
    assert err <= _trapezoid_tol(alpha + c, cfg.dt) + est.tail


def test_killed_resolvent_without_rates_and_norm_bound():
    est = killed_resolvent(zero_model(), one, 2.0, [0.0], 1, IntegratorConfig(dt=0.01), 5,
                           f_norm=1.0)
    assert abs(est.value - 0.5) <= _trapezoid_tol(2.0, 0.01) + est.tail
    est = killed_resolvent(_kill_chain(1.0), one, 2.0, [0.0], 1, IntegratorConfig(dt=0.01), 5,
                           f_norm=1.0)
    assert est.value <= 1 / 2.0


def test_killed_resolvent_needs_norm():
    with pytest.raises(ValueError):
        killed_resolvent(zero_model(), one, 1.0, [0.0], 1, IntegratorConfig(), 5)


def test_psi0_equals_killed_resolvent():
    cfg = IntegratorConfig(dt=0.01, seed=2)
    model = geometric_rates_model(1.0, M=3)
    psi0 = series_psi(model, one, 2.0, [0.0], 2, cfg, 2000, 0, f_norm=1.0)
    killed = killed_resolvent(model, one, 2.0, [0.0], 2, cfg, 5, f_norm=1.0)
    assert abs(psi0.value - killed.value) <= 3 * psi0.se + _trapezoid_tol(3.0, cfg.dt)


def test_psi_vanish_without_switching():
    terms = series_terms(zero_model(1, 2), one, 1.0, [0.0], 1, 3, IntegratorConfig(dt=0.01), 5,
                         f_norm=1.0)
    for i in range(1, 4):
        assert terms.psi(i)[0] == 0.0
    assert terms.remainder()[0] == 0.0


@pytest.mark.parametrize("i", [0, 1, 2, 3])
def test_psi_norm_bound_on_geometric_chain(i):
    alpha, kappa = 2.0, 1.0
    cfg = IntegratorConfig(dt=0.01, seed=4)
    terms = series_terms(geometric_rates_model(kappa, M=6), one, alpha, [0.0], 1, 3, cfg, 3000,
                         f_norm=1.0)
    v, se = terms.psi(i)
    assert v <= (3 * kappa / (4 * alpha)) ** i / alpha + 3 * se


def test_zero_rates_remainder_is_zero():
    rep = verify_series(zero_model(1, 2), one, 1.0, [0.0], 1, 2, IntegratorConfig(dt=0.01), 5,
                        kappa=1.0, f_norm=1.0, exact=1.0)
    assert rep.D == 0.0 and rep.passed


def test_remainder_decreases_with_m():
    model = geometric_rates_model(1.0, M=6)
    cfg = IntegratorConfig(dt=0.01, seed=5)
    terms = series_terms(model, one, 2.0, [0.0], 1, 4, cfg, 2000, f_norm=1.0)
    Ds = [verify_series(model, one, 2.0, [0.0], 1, m, cfg, 0, 1.0, 1.0, terms=terms).D
          for m in range(5)]
    assert np.all(np.diff(Ds) < 0)
    assert remainder_bound(2.0, 1.0, 0, 1.0) == pytest.approx(0.375 / 2)


def test_threshold_warning():
    with pytest.warns(ThresholdViolated):
        verify_series(zero_model(1, 2), one, 0.5, [0.0], 1, 1, IntegratorConfig(dt=0.05), 5,
                      kappa=1.0, f_norm=1.0)


def test_kill_bound_on_constant_rate():
    cfg = IntegratorConfig(dt=0.05)
    rep = kill_bound_check(_kill_chain(1.0), one, [0.0], 1, 0.5, 1.0, 1.0, cfg, 10, 1.0)
    # frozen chain: P_s g_s = e^{-(t-s)}, P~_t f = e^{-t}
    assert rep.diff == pytest.approx(math.exp(-0.5) - math.exp(-1.0), rel=1e-12)
    assert rep.passed
    with pytest.raises(ValueError):
        kill_bound_check(_kill_chain(1.0), one, [0.0], 1, 1.0, 0.5, 1.0, cfg, 10, 1.0)
