from __future__ import annotations

import math

import numpy as np
import pytest
from models import linear_contraction_model, toy_2d_model
from oracles import bihari_linear

from hybridsde.coupling import (
    CoupledState, bihari_bound, couple_paths, couple_step_switch, coupled_rates, estimate_Wf,
    feller_bound, metric_F, metric_f, run_coupled_ensemble,
)
from hybridsde.diagnostics import modulus
from hybridsde.integrator import IntegratorConfig, mean_se, run_ensemble
from hybridsde.model import ModelSpec


def _two_state(low=1.0, high=3.0):
    """Regime 1 jumps to 2 at rate ``low`` for x < 0 and ``high`` for x >= 0; x never moves."""
    def rates(x, k):
        q = np.zeros((len(x), 2))
        q[:, 1] = np.where(np.asarray(k) == 1, np.where(x[:, 0] < 0, low, high), 0.0)
        q[:, 0] = np.where(np.asarray(k) == 2, 1.0, 0.0)
        return q

    return ModelSpec(1, 2, lambda x, k: np.zeros_like(x),
                     lambda x, k: np.zeros((len(x), 1, 1)), rates, frozen=True, name="two-state")


def test_metric_F_values_and_concavity():
    assert metric_F(0.0) == 0.0
    assert metric_F(1.0) == 0.5
    r = np.linspace(0, 10, 201)
    assert np.all(np.diff(metric_F(r), 2) <= 1e-15)


def test_metric_f_identity_and_regime_gap():
    x = np.array([0.2, -0.4])
    assert metric_f(CoupledState(x, 2, x, 2)) == 0.0
    assert metric_f(CoupledState(x, 1, x, 2)) == 1.0


def test_metric_f_triangle_inequality():
    g = np.random.default_rng(3)
    d = lambda u, v: metric_f(CoupledState(u[0], u[1], v[0], v[1]))
    for _ in range(1000):
        p, q, s = ((g.normal(size=2) * 2, int(g.integers(1, 4))) for _ in range(3))
        assert d(p, s) <= d(p, q) + d(q, s) + 1e-12


def test_coupled_state_rejects_mismatched_dims():
    with pytest.raises(ValueError):
        CoupledState(np.zeros(2), 1, np.zeros(3), 1)


def test_coupled_rates_basic_coupling():
    m = _two_state()
    both, first, second = coupled_rates(m, np.array([[-1.0]]), np.array([1]),
                                        np.array([[1.0]]), np.array([1]))
    assert both[0, 1] == 1.0 and first[0, 1] == 0.0 and second[0, 1] == 2.0
    assert np.allclose(both + first, m.rate_matrix(np.array([[-1.0]]), np.array([1])))


def test_coupled_event_frequencies():
    m = _two_state()
    rng = np.random.default_rng(11)
    st = CoupledState([-1.0], 1, [1.0], 1)
    counts = {"none": 0, "together": 0, "first": 0, "second": 0}
    for _ in range(30000):
        counts[couple_step_switch(m, st, 0.1, rng)[2]] += 1
    fired = counts["together"] + counts["second"]
    assert counts["first"] == 0
    p = 1 / 3
    assert abs(counts["together"] / fired - p) <= 3 * math.sqrt(p * (1 - p) / fired)


def test_identical_starts_stay_glued():
    cfg = IntegratorConfig(dt=0.01, T=0.5, seed=2)
    rec = couple_paths(toy_2d_model(), [0.3, 0.1], [0.3, 0.1], 1, cfg, checkpoints=[0.5])
    assert np.array_equal(rec.xs, rec.zs) and np.array_equal(rec.is_, rec.js)
    est = estimate_Wf(toy_2d_model(), 0.5, [0.3, 0.1], [0.3, 0.1], 1, cfg, 200)
    assert est.estimate == 0.0 and est.se == 0.0


def test_time_zero_gives_F_of_distance():
    cfg = IntegratorConfig(dt=0.01, T=1.0)
    est = estimate_Wf(toy_2d_model(), 0.0, [0.0, 0.0], [0.3, 0.4], 1, cfg, 10)
    assert est.estimate == pytest.approx(metric_F(0.5))


def test_contraction_distance_decays():
    cfg = IntegratorConfig(dt=1e-3, T=1.0)
    rec = couple_paths(linear_contraction_model(2), [1.0, 0.0], [0.0, 0.5], 1, cfg)
    r = np.linalg.norm(rec.xs[-1] - rec.zs[-1])
    r0 = math.hypot(1.0, 0.5)
    assert r == pytest.approx(r0 * (1 - 1e-3) ** 1000, rel=1e-9)
    assert r == pytest.approx(r0 * math.exp(-1.0), rel=1e-3)


def test_regimes_agree_before_split():
    cfg = IntegratorConfig(dt=0.01, T=2.0, seed=5)
    rec = couple_paths(toy_2d_model(), [1.0, -0.5], [-0.5, 0.8], 1, cfg)
    rec.check_invariants()
    if math.isfinite(rec.zeta):
        assert rec.is_[rec.times >= rec.zeta][0] != rec.js[rec.times >= rec.zeta][0]


def test_coupled_marginal_matches_plain_simulation():
    m = toy_2d_model()
    cfg = IntegratorConfig(dt=0.01, T=0.5, seed=7, chunk_size=10_000)
    x0, z0 = [0.5, -0.2], [-0.3, 0.4]
    n = 10_000
    cp = run_coupled_ensemble(m, x0, z0, 1, cfg, n, 0.5)
    plain = run_ensemble(m, x0, 1, cfg.replace(seed=8), n)
    for c in range(2):
        a, sa = mean_se(cp.x[:, c])
        b, sb = mean_se(plain.x[:, c])
        assert abs(a - b) <= 3 * math.hypot(sa, sb)
    a, sa = mean_se(cp.i == 2)
    b, sb = mean_se(plain.k == 2)
    assert abs(a - b) <= 3 * math.hypot(sa, sb)


@pytest.mark.parametrize("r0,t,kappa", [(0.1, 0.1, 1.0), (0.05, 0.3, 2.0), (1.0, 0.05, 0.5)])
def test_bihari_linear_modulus_closed_form(r0, t, kappa):
    want = bihari_linear(r0, t, kappa)
    assert want < 1
    assert bihari_bound(r0, t, kappa) == pytest.approx(want, abs=1e-8)


def test_bihari_limits():
    assert bihari_bound(0.3, 0.0, 1.0) == pytest.approx(metric_F(0.3))
    assert bihari_bound(0.0, 1.0, 1.0) == 0.0
    assert bihari_bound(5.0, 10.0, 1.0) == 1.0
    assert bihari_bound(1e-12, 0.5, 1.0, modulus("rlog")) < 1e-3


@pytest.mark.parametrize("name", ["r", "rlog", "rloglog"])
def test_bihari_monotone_in_start(name):
    rho = modulus(name)
    vals = [bihari_bound(r, 0.2, 1.0, rho) for r in np.geomspace(1e-6, 2.0, 15)]
    assert np.all(np.diff(vals) >= 0)


def test_feller_bound_decomposition():
    out = feller_bound(0.1, 0.5, 1.0, 0.5, 0.01)
    A = (1 + 2 * 0.5) / 0.5 * out["bihari"]
    assert out["A"] == pytest.approx(A)
    assert out["bound"] == pytest.approx(A + 0.01 + 2 * (0.01 + 0.5 * (A + 0.01)))
