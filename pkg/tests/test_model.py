from __future__ import annotations

import math

import numpy as np
import pytest

import oracles
from hybridsde.errors import NegativeRate, NonFiniteRate
from hybridsde.levy import levy_decompose, no_jumps, power_law_levy
from hybridsde.model import (ModelSpec, ctmc_model, example1_model, frozen_model,
                             generator_matrix, geometric_rates_model, model_from_json, q_row,
                             tail_mass_bound, zero_model)

X_UNIT = np.array([1.0, 0.0, 0.0])


def test_total_rate_example1_matches_partial_geometric_sum():
    M = 30
    model = example1_model(M=M)
    q1 = float(model.total_rate(X_UNIT[None, :], [1])[0])
    assert q1 == pytest.approx(oracles.example1_total_rate(X_UNIT, 1, M), rel=1e-14)
    # the M -> infinity limit is 1/4
    assert q1 == pytest.approx(0.25, abs=2.0 ** -M)


def test_zero_rates_give_absorbing_regime():
    model = zero_model(dim=2, M=3)
    x = np.random.default_rng(0).normal(size=(5, 2))
    assert np.all(model.rate_matrix(x, np.full(5, 2)) == 0)
    assert np.all(model.total_rate(x, np.full(5, 2)) == 0)


def test_example1_rates_vanish_at_origin():
    model = example1_model()
    rates, q = q_row(model, np.zeros(3), 3)
    assert q == 0.0 and all(v == 0.0 for v in rates.values())


@pytest.mark.parametrize("k", [1, 4, 9])
def test_example1_coefficients_at_origin(k):
    model = example1_model()
    x = np.zeros((1, 3))
    assert np.all(model.drift(x, [k]) == 0)
    np.testing.assert_array_equal(model.diffusion(x, [k])[0], np.eye(3))


@pytest.mark.parametrize("alpha", [0.3, 0.5, 1.0, 1.7])
def test_example1_gamma_closed_form(alpha):
    model = example1_model(alpha=alpha)
    assert oracles.radial_second_moment(alpha) == pytest.approx(4 * math.pi / (2 - alpha), rel=1e-10)
    assert model.params["gamma"] == pytest.approx(oracles.gamma_closed(alpha), rel=1e-10)


def test_signed_cube_root_keeps_drift_odd():
    model = example1_model()
    x = np.random.default_rng(1).normal(size=(20, 3))
    k = np.full(20, 3)
    np.testing.assert_allclose(model.drift(-x, k), -model.drift(x, k), rtol=1e-15)


def test_invalid_rates_are_rejected():
    bad = ModelSpec(1, 2, lambda x, k: np.zeros_like(x), lambda x, k: np.zeros((len(x), 1, 1)),
                    lambda x, k: np.full((len(x), 2), -1.0))
    with pytest.raises(NegativeRate):
        bad.rate_matrix([[0.0]], [1])
    nan = ModelSpec(1, 2, lambda x, k: np.zeros_like(x), lambda x, k: np.zeros((len(x), 1, 1)),
                    lambda x, k: np.full((len(x), 2), np.nan))
    with pytest.raises(NonFiniteRate):
        nan.total_rate([[0.0]], [1])


def test_diagonal_rate_is_not_queried():
    with pytest.raises(ValueError):
        example1_model().q(X_UNIT, 2, 2)


def test_generator_rows_sum_to_zero_and_match_oracle():
    M = 12
    model = example1_model(M=M)
    x = np.array([0.3, -1.2, 0.7])
    Q = generator_matrix(model, x)
    np.testing.assert_allclose(Q.sum(axis=1), 0, atol=1e-14)
    np.testing.assert_allclose(Q, oracles.example1_Q(x, M), rtol=1e-14, atol=1e-16)


def test_lump_tail_moves_missing_mass_to_last_regime():
    M = 6
    plain = example1_model(M=M)
    lumped = example1_model(M=M, lump_tail=True)
    x = X_UNIT[None, :]
    gap = lumped.total_rate(x, [2])[0] - plain.total_rate(x, [2])[0]
    assert gap == pytest.approx(2 * 0.5 * 2.0 ** -M, rel=1e-12)


def test_tail_mass_bound_is_geometric_tail():
    kappa, M = 1.5, 8
    direct = math.fsum(kappa * l * 3.0 ** -l for l in range(M + 1, 400))
    assert tail_mass_bound(kappa, M) == pytest.approx(direct, rel=1e-12)


def test_frozen_model_uses_rates_at_fixed_point():
    base = example1_model(M=8)
    model = frozen_model(base, X_UNIT)
    far = np.array([[5.0, 5.0, 5.0]])
    np.testing.assert_allclose(model.rate_matrix(far, [1]), base.rate_matrix(X_UNIT[None], [1]))
    assert model.frozen and np.all(model.drift(far, [1]) == 0)


def test_still_model_reads_rates_at_current_point():
    base = example1_model(M=8)
    model = frozen_model(base, None)
    pts = np.array([[0.2, 0.0, 0.0], [2.0, 1.0, 0.0]])
    np.testing.assert_allclose(model.rate_matrix(pts, [1, 1]), base.rate_matrix(pts, [1, 1]))


def test_geometric_model_rates():
    model = geometric_rates_model(kappa_prime=2.0, M=5)
    Q = generator_matrix(model, [0.0])
    np.testing.assert_allclose(Q, oracles.geometric_Q(2.0, 5), rtol=1e-14)


def test_ctmc_model_requires_square_generator():
    with pytest.raises(ValueError):
        ctmc_model(np.zeros((2, 3)))


@pytest.mark.parametrize("doc", [
    {"name": "example1", "alpha": 0.7, "M": 5},
    {"name": "zero", "dim": 2},
    {"name": "frozen-example1", "x_star": [1, 0, 0]},
    {"name": "geometric", "kappa_prime": 1.0, "M": 4},
])
def test_model_from_json_families(doc):
    model = model_from_json(doc)
    assert model.name.endswith(doc["name"].replace("frozen-", "")) or model.name == doc["name"]


def test_model_from_json_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown keys"):
        model_from_json({"name": "example1", "beta": 1})
    with pytest.raises(ValueError, match="unknown model"):
        model_from_json({"name": "nope"})


# -- Levy measures -----------------------------------------------------------


@pytest.mark.parametrize("alpha,eps", [(0.5, 0.1), (1.2, 0.05), (1.9, 0.2)])
def test_mass_above_cutoff(alpha, eps):
    levy = power_law_levy(3, alpha, eps=eps)
    dec = levy_decompose(levy)
    assert oracles.mass_above(alpha, eps) == pytest.approx(oracles.mass_above_closed(alpha, eps),
                                                           rel=1e-10)
    assert dec.intensity == pytest.approx(oracles.mass_above_closed(alpha, eps), rel=1e-10)


def test_cutoff_at_outer_radius_has_no_jumps():
    levy = power_law_levy(3, 0.5, eps=1.0)
    assert levy_decompose(levy).intensity == 0.0


def test_zero_measure_has_no_mass():
    levy = no_jumps(2)
    assert levy_decompose(levy).intensity == 0.0
    model = ModelSpec(2, 1, lambda x, k: np.zeros_like(x), lambda x, k: np.zeros((len(x), 2, 2)),
                      lambda x, k: np.zeros((len(x), 1)), levy=levy,
                      jump_coeff=lambda x, k, u: u)
    assert not model.has_jumps
    np.testing.assert_array_equal(model.drift_compensator(np.ones((3, 2)), [1, 1, 1]), 0.0)


def test_sampled_radii_follow_power_law():
    alpha, eps = 0.5, 0.1
    levy = power_law_levy(3, alpha, eps=eps)
    r = levy.sample_radius(np.random.default_rng(2).random(200_000))
    assert r.min() >= eps and r.max() <= 1.0
    # P(|u| > 0.5) under the normalised restriction
    p = (0.5 ** -alpha - 1) / (eps ** -alpha - 1)
    se = math.sqrt(p * (1 - p) / r.size)
    assert abs(np.mean(r > 0.5) - p) < 3 * se


def test_quadrature_compensator_matches_closed_form():
    model = example1_model()
    generic = type(model)(**{**model.__dict__, "compensator": None, "jump_sq_moment": None})
    x = np.random.default_rng(3).normal(size=(7, 3))
    k = np.arange(1, 8)
    np.testing.assert_allclose(generic.drift_compensator(x, k), model.drift_compensator(x, k),
                               rtol=1e-9)
    np.testing.assert_allclose(generic.jump_second_moment(x, k), model.jump_second_moment(x, k),
                               rtol=1e-9)
