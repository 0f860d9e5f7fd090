"""Killed subprocesses, resolvents and the series over switch counts.

The resolvent ``G_a f(x, k) = E int_0^inf e^{-a t} f(X(t), Lambda(t)) dt`` is
estimated on ``[0, T_cut]`` with ``T_cut = max(10/a, 20)``; the neglected tail
is at most ``|f| e^{-a T_cut} / a`` and is reported separately.

The series terms are estimated from one ensemble by splitting the time
integral according to the number of switches made so far:

    psi_i(x, k) = E int_0^inf e^{-a t} f(X(t), Lambda(t)) 1{N(t) = i} dt,

where ``N(t)`` counts switches in ``[0, t]``.  ``psi_0`` is the killed
resolvent and ``G_a f - sum_{i<=m} psi_i`` is the remainder after ``m`` terms.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diagnostics import SmoothFunction
from .errors import ThresholdViolated
from .integrator import IntegratorConfig, mean_se, run_ensemble
from .model import ModelSpec


def horizon(alpha: float) -> float:
    return max(10.0 / alpha, 20.0)


def alpha_threshold(kappa: float) -> float:
    """``alpha_1 = (3 kappa + 1) / 4``."""
    return (3.0 * kappa + 1.0) / 4.0


def _unwrap(f, f_norm):
    if isinstance(f, SmoothFunction):
        return f.value, f.sup_norm if f_norm is None else f_norm
    if f_norm is None:
        raise ValueError("the sup norm of f is needed for the tail bound")
    return f, f_norm


@dataclass
class ResolventEstimate:
    alpha: float
    target: str
    value: float
    se: float
    T_cut: float
    tail: float
    n: int = 0
    truncated_count: int = 0

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "target": self.target, "value": self.value, "se": self.se,
                "T_cut": self.T_cut, "tail": self.tail, "n": self.n,
                "truncated_count": self.truncated_count}


# ---------------------------------------------------------------------------
# killed process


@dataclass
class KilledSample:
    """Checkpoint view of killed paths of ``X^(k)``.

    ``weight[c, p]`` is ``exp(int_0^t q_kk)`` for the weight variant and
    ``1{t < tau}`` for the hard-kill variant; ``tau`` is the first switch
    time (``inf`` for the weight variant or if no switch fired).
    """

    variant: str
    times: np.ndarray
    x: np.ndarray
    weight: np.ndarray
    tau: np.ndarray
    truncated: np.ndarray

    @property
    def alive(self) -> np.ndarray:
        return self.weight > 0


def simulate_killed(model: ModelSpec, x, k: int, t, cfg: IntegratorConfig, rng=None,
                    variant: str = "weight", n_paths: int = 1) -> KilledSample:
    """Paths of ``X^(k)`` killed at rate ``-q_kk``, observed at times ``t``.

    ``rng`` is ignored beyond the seed in ``cfg``: streams are split per
    chunk from ``cfg.seed``.
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    t_end = float(times.max())
    if variant == "weight":
        out = run_ensemble(model, x, k, cfg, n_paths, t_end=t_end, checkpoints=times,
                           switching=False, kill_weight=True)
        w = np.exp(out.ck_logw)
        tau = np.full(out.n, np.inf)
    elif variant == "hard-kill":
        out = run_ensemble(model, x, k, cfg, n_paths, t_end=t_end, checkpoints=times,
                           hard_kill=True)
        w = out.ck_alive.astype(float)
        tau = out.death_time
    else:
        raise ValueError(f"unknown variant {variant!r}")
    order = np.searchsorted(out.checkpoints, times)
    return KilledSample(variant, times, out.ck_x[order], w[order], tau, out.truncated)


def killed_expectation(model: ModelSpec, f: Callable, x, k: int, t: float,
                       cfg: IntegratorConfig, n_paths: int, variant: str = "weight"):
    """``E[f(X^(k)(t)) exp(int_0^t q_kk)]`` (or ``E[f; t < tau]``): mean, SE."""
    ks = simulate_killed(model, x, k, [t], cfg, variant=variant, n_paths=n_paths)
    ok = ~ks.truncated
    xt = ks.x[0][ok]
    vals = np.zeros(len(xt))
    alive = ks.weight[0][ok] > 0
    if alive.any():
        vals[alive] = f(xt[alive], np.full(int(alive.sum()), k)) * ks.weight[0][ok][alive]
    return mean_se(vals)


# ---------------------------------------------------------------------------
# resolvents


def _discounted(alpha, fv, weighted=False):
    if weighted:
        return lambda t, x, k, logw: np.exp(-alpha * t + logw) * fv(x, k)
    return lambda t, x, k, logw: np.exp(-alpha * t) * fv(x, k)


def resolvent_G(model: ModelSpec, f, alpha: float, x, k: int, cfg: IntegratorConfig,
                n_paths: int, f_norm: float | None = None) -> ResolventEstimate:
    """``G_a f(x, k)`` along full hybrid paths, trapezoid rule on the path grid."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    fv, nf = _unwrap(f, f_norm)
    T = horizon(alpha)
    out = run_ensemble(model, x, k, cfg, n_paths, t_end=T, integrand=_discounted(alpha, fv))
    ok = ~out.truncated
    m, se = mean_se(out.bins[ok, 0])
    return ResolventEstimate(alpha, getattr(f, "name", "f"), m, se, T,
                             nf * math.exp(-alpha * T) / alpha, int(ok.sum()),
                             int(out.truncated.sum()))


def killed_resolvent(model: ModelSpec, f, alpha: float, x, k: int, cfg: IntegratorConfig,
                     n_paths: int, f_norm: float | None = None,
                     variant: str = "weight") -> ResolventEstimate:
    """Resolvent of ``L_k + q_kk``: discounted integral of ``f`` along killed paths."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    fv, nf = _unwrap(f, f_norm)
    T = horizon(alpha)
    if variant == "weight":
        out = run_ensemble(model, x, k, cfg, n_paths, t_end=T, switching=False, kill_weight=True,
                           integrand=_discounted(alpha, fv, weighted=True))
    elif variant == "hard-kill":
        out = run_ensemble(model, x, k, cfg, n_paths, t_end=T, hard_kill=True,
                           integrand=_discounted(alpha, fv))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    ok = ~out.truncated
    m, se = mean_se(out.bins[ok, 0])
    return ResolventEstimate(alpha, getattr(f, "name", "f"), m, se, T,
                             nf * math.exp(-alpha * T) / alpha, int(ok.sum()),
                             int(out.truncated.sum()))


@dataclass
class SeriesTerms:
    """Per-path discounted integrals split by switch count.

    ``values[:, i]`` for ``i <= m`` integrates over times with exactly ``i``
    switches; ``values[:, m + 1]`` collects everything after more switches.
    """

    alpha: float
    m: int
    values: np.ndarray
    T_cut: float
    tail: float

    def psi(self, i: int) -> tuple[float, float]:
        return mean_se(self.values[:, i])

    def total(self) -> tuple[float, float]:
        return mean_se(self.values.sum(axis=1))

    def remainder(self) -> tuple[float, float]:
        """``G_a f - sum_{i<=m} psi_i`` from the same paths."""
        return mean_se(self.values[:, self.m + 1])

    def partial_sum(self) -> tuple[float, float]:
        return mean_se(self.values[:, : self.m + 1].sum(axis=1))


def series_terms(model: ModelSpec, f, alpha: float, x, k: int, m: int, cfg: IntegratorConfig,
                 n_paths: int, f_norm: float | None = None) -> SeriesTerms:
    """``psi_0 .. psi_m`` and the remainder from a single ensemble."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    fv, nf = _unwrap(f, f_norm)
    T = horizon(alpha)
    out = run_ensemble(model, x, k, cfg, n_paths, t_end=T, integrand=_discounted(alpha, fv),
                       n_bins=m + 2)
    return SeriesTerms(alpha, m, out.bins[~out.truncated], T, nf * math.exp(-alpha * T) / alpha)


def series_psi(model: ModelSpec, f, alpha: float, x, k: int, cfg: IntegratorConfig,
               n_paths: int, i: int, f_norm: float | None = None) -> ResolventEstimate:
    """Single term ``psi_i`` of the series."""
    terms = series_terms(model, f, alpha, x, k, i, cfg, n_paths, f_norm)
    v, se = terms.psi(i)
    return ResolventEstimate(alpha, f"psi_{i}", v, se, terms.T_cut, terms.tail, len(terms.values))


@dataclass
class SeriesReport:
    alpha: float
    kappa: float
    m: int
    D: float
    B: float
    se: float
    tail: float
    passed: bool
    D_exact: float | None = None
    se_partial: float | None = None
    psi: list | None = None

    def to_dict(self) -> dict:
        out = {"alpha": self.alpha, "kappa": self.kappa, "m": self.m, "D": self.D, "B": self.B,
               "se": self.se, "tail": self.tail, "pass": self.passed}
        if self.D_exact is not None:
            out["D_exact"] = self.D_exact
            out["se_partial"] = self.se_partial
        if self.psi is not None:
            out["psi"] = self.psi
        return out


def remainder_bound(alpha: float, kappa: float, m: int, f_norm: float) -> float:
    """``(3 kappa / (4 alpha))^(m+1) |f| / alpha``."""
    return (3.0 * kappa / (4.0 * alpha)) ** (m + 1) * f_norm / alpha


def verify_series(model: ModelSpec, f, alpha: float, x, k: int, m: int, cfg: IntegratorConfig,
                  n_paths: int, kappa: float, f_norm: float | None = None,
                  exact: float | None = None, terms: SeriesTerms | None = None) -> SeriesReport:
    """Compare ``G_a f`` with ``sum_{i<=m} psi_i`` against the remainder bound.

    ``D`` is estimated from the same paths as the partial sum, so its SE is
    that of the per-path remainder.  With an ``exact`` reference value the
    partial sum is also compared to it, allowing for the horizon tail.
    """
    fv, nf = _unwrap(f, f_norm)
    thr = alpha_threshold(kappa)
    if alpha < thr:
        warnings.warn(f"alpha={alpha} below the threshold {thr}", ThresholdViolated, stacklevel=2)
    if terms is None or terms.m < m:
        terms = series_terms(model, fv, alpha, x, k, m, cfg, n_paths, nf)
    vals = terms.values
    rem = vals[:, m + 1:].sum(axis=1)
    D, se = mean_se(rem)
    D = abs(D)
    B = remainder_bound(alpha, kappa, m, nf)
    tail = terms.tail
    passed = D <= B + 3 * se + tail
    D_exact = se_p = None
    if exact is not None:
        ps, se_p = mean_se(vals[:, : m + 1].sum(axis=1))
        D_exact = abs(exact - ps)
        passed = passed and D_exact <= B + 3 * se_p + tail
    psi = [list(mean_se(vals[:, i])) for i in range(m + 1)]
    return SeriesReport(alpha, kappa, m, D, B, se, tail, bool(passed), D_exact, se_p, psi)


# ---------------------------------------------------------------------------
# semigroup kill bound


@dataclass
class KillBoundReport:
    s: float
    t: float
    diff: float
    se: float
    bound: float
    passed: bool
    P_s_g: float
    P_t_f: float

    def to_dict(self) -> dict:
        return {"s": self.s, "t": self.t, "diff": self.diff, "se": self.se, "bound": self.bound,
                "pass": self.passed, "P_s_g_s": self.P_s_g, "P_tilde_t_f": self.P_t_f}


def kill_bound_check(model: ModelSpec, f: Callable, x, k: int, s: float, t: float, H: float,
                     cfg: IntegratorConfig, n_paths: int, f_norm: float) -> KillBoundReport:
    """``|P_s g_s - P~_t f| <= (1 - e^{-H s}) |f|`` with ``g_s = P~_{t-s} f``.

    Both sides come from the same paths of ``X^(k)``:
    ``P~_t f = E[f(X_t) exp(int_0^t q_kk)]`` and
    ``P_s g_s = E[f(X_t) exp(int_s^t q_kk)]`` by the Markov property.
    """
    if not 0 < s < t:
        raise ValueError("need 0 < s < t")
    out = run_ensemble(model, x, k, cfg, n_paths, t_end=t, checkpoints=[s, t], switching=False,
                       kill_weight=True)
    ok = ~out.truncated
    lw_s, lw_t = out.ck_logw[0][ok], out.ck_logw[1][ok]
    ft = f(out.ck_x[1][ok], np.full(int(ok.sum()), k))
    a = ft * np.exp(lw_t - lw_s)
    b = ft * np.exp(lw_t)
    d, se = mean_se(a - b)
    bound = (1.0 - math.exp(-H * s)) * f_norm
    return KillBoundReport(s, t, abs(d), se, bound, bool(abs(d) <= bound + 3 * se),
                           mean_se(a)[0], mean_se(b)[0])


__all__ = [
    "horizon", "alpha_threshold", "ResolventEstimate", "KilledSample", "simulate_killed",
    "killed_expectation", "resolvent_G", "killed_resolvent", "SeriesTerms", "series_terms",
    "series_psi", "SeriesReport", "verify_series", "remainder_bound", "KillBoundReport",
    "kill_bound_check",
]
