"""Hybrid model definitions: coefficients, Levy measure and switching rates.

All evaluators are vectorised over a batch of points: ``x`` has shape
``(n, d)`` and ``k`` (1-based regimes) has shape ``(n,)``.  ``rates(x, k)``
returns the ``(n, M)`` array of ``q_{k,l}(x)`` for ``l = 1..M``; the entry at
``l = k`` is ignored and the total rate ``q_k`` is always recomputed as the
off-diagonal sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NegativeRate, NonFiniteRate
from .levy import LevyMeasureSpec, direction_set, no_jumps, power_law_levy, radial_rule


# cap on points x quadrature nodes evaluated at once
_QUAD_BLOCK = 1 << 18


def _one(r):
    return np.ones_like(np.asarray(r, dtype=float))


def _identity_weight(k):
    return np.asarray(k, dtype=float)


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of one regime-switching jump diffusion.

    ``compensator`` and ``jump_sq_moment`` are optional closed forms for
    ``int_{|u|>eps} c(x,k,u) nu(du)`` and ``int_U |c(x,k,u)|^2 nu(du)``; when
    absent they are evaluated with a fixed radial x angular quadrature.
    ``jump_isotropic`` declares that ``c`` depends on ``u`` only through
    ``|u|``, which lets the quadrature use a single direction.
    """

    dim: int
    regime_cap: int
    drift: Callable
    diffusion: Callable
    rates: Callable
    levy: LevyMeasureSpec | None = None
    jump_coeff: Callable | None = None
    growth_modulus: Callable = _one
    regime_weight: Callable = _identity_weight
    jump_isotropic: bool = False
    compensator: Callable | None = None
    jump_sq_moment: Callable | None = None
    frozen: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1 or self.regime_cap < 1:
            raise ValueError("dim and regime_cap must be positive")
        if self.levy is not None and self.levy.dim != self.dim:
            raise ValueError("Levy measure dimension mismatch")

    # -- batch helpers ----------------------------------------------------
    @property
    def has_jumps(self) -> bool:
        return (self.jump_coeff is not None and self.levy is not None
                and self.levy.mass_above_eps > 0.0)

    def rate_matrix(self, x, k) -> np.ndarray:
        """Validated ``(n, M)`` off-diagonal rates with the diagonal zeroed."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        q = np.array(self.rates(x, k), dtype=float, copy=True)
        q[np.arange(len(k)), k - 1] = 0.0
        if not np.all(np.isfinite(q)):
            raise NonFiniteRate("switching rate evaluated to NaN or infinity")
        if np.any(q < 0.0):
            raise NegativeRate("switching rate is negative")
        return q

    def total_rate(self, x, k) -> np.ndarray:
        return self.rate_matrix(x, k).sum(axis=1)

    def q(self, x, k: int, l: int) -> float:
        """Scalar ``q_{kl}(x)`` for ``k != l``."""
        if k == l:
            raise ValueError("diagonal rate is derived, not queried")
        return float(self.rate_matrix(np.asarray(x, float)[None, :], [k])[0, l - 1])

    def drift_compensator(self, x, k, eps: float | None = None) -> np.ndarray:
        """``int_{eps<|u|<=r_max} c(x,k,u) nu(du)`` for a batch of points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.jump_coeff is None or self.levy is None:
            return np.zeros_like(x)
        eps = self.levy.eps if eps is None else eps
        if self.compensator is not None:
            return self.compensator(x, k, eps)
        return self._blocked(x, k, lambda c: c, lo=eps)

    def jump_integral(self, x, k, integrand, lo=0.0, hi=None, z=None, j=None):
        """Quadrature of ``int integrand(c(x,k,u)[, c(z,j,u)]) nu(du)`` over an annulus.

        ``integrand`` maps an array of jump displacements of shape
        ``(n, nodes, d)`` (and optionally the paired displacements at ``z``) to
        shape ``(n, nodes[, d])``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        n, d = x.shape
        hi = self.levy.r_max if hi is None else hi
        r, w = radial_rule(self.levy, lo, hi)
        dirs = direction_set(d, self.jump_isotropic)
        if r.size == 0:
            probe = integrand(np.zeros((n, 1, d))) if z is None else integrand(
                np.zeros((n, 1, d)), np.zeros((n, 1, d)))
            return np.zeros((n,) + probe.shape[2:])
        marks = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)  # (nodes*dirs, d)
        m = marks.shape[0]
        wts = np.repeat(w / len(dirs), len(dirs))
        xx = np.repeat(x, m, axis=0)
        kk = np.repeat(k, m)
        uu = np.tile(marks, (n, 1))
        cx = self.jump_coeff(xx, kk, uu).reshape(n, m, d)
        if z is None:
            vals = integrand(cx)
        else:
            z = np.atleast_2d(np.asarray(z, dtype=float))
            j = np.atleast_1d(np.asarray(j, dtype=np.int64))
            cz = self.jump_coeff(np.repeat(z, m, axis=0), np.repeat(j, m), uu).reshape(n, m, d)
            vals = integrand(cx, cz)
        return np.tensordot(vals, wts, axes=([1], [0])) if vals.ndim == 2 else \
            np.einsum("nm...,m->n...", vals, wts)

    def jump_second_moment(self, x, k) -> np.ndarray:
        """``int_U |c(x,k,u)|^2 nu(du)`` for a batch of points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.jump_coeff is None or self.levy is None:
            return np.zeros(x.shape[0])
        if self.jump_sq_moment is not None:
            return self.jump_sq_moment(x, k)
        return self._blocked(x, k, lambda c: np.sum(c * c, axis=-1))

    def _blocked(self, x, k, integrand, lo=0.0):
        """``jump_integral`` for a pointwise integrand, a block of points at a time."""
        k = np.broadcast_to(np.atleast_1d(np.asarray(k, dtype=np.int64)), (x.shape[0],))
        r, _ = radial_rule(self.levy, lo, self.levy.r_max)
        nodes = max(1, r.size * len(direction_set(self.dim, self.jump_isotropic)))
        block = max(1, _QUAD_BLOCK // nodes)
        if x.shape[0] <= block:
            return self.jump_integral(x, k, integrand, lo=lo)
        return np.concatenate([self.jump_integral(x[s:s + block], k[s:s + block], integrand, lo=lo)
                               for s in range(0, x.shape[0], block)])


@dataclass(frozen=True)
class HybridState:
    x: np.ndarray
    k: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("state coordinates must be finite")
        if int(self.k) < 1:
            raise ValueError("regime index starts at 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "k", int(self.k))

    def check(self, model: ModelSpec) -> "HybridState":
        if self.k > model.regime_cap or self.x.shape[0] != model.dim:
            raise ValueError("state incompatible with model")
        return self


def q_row(model: ModelSpec, x, k: int):
    """Rates ``{l: q_kl(x)}`` for ``l != k`` and the total ``q_k(x)``.

    The total uses compensated summation so it does not depend on the order
    of the targets.
    """
    if not 1 <= k <= model.regime_cap:
        raise ValueError(f"regime {k} outside 1..{model.regime_cap}")
    row = model.rate_matrix(np.asarray(x, dtype=float)[None, :], [k])[0]
    rates = {l: float(row[l - 1]) for l in range(1, model.regime_cap + 1) if l != k}
    return rates, math.fsum(rates.values())


def tail_mass_bound(kappa: float, M: int) -> float:
    """``sum_{l>M} kappa l 3^-l``: switching mass lost by truncating at M."""
    x = 1.0 / 3.0
    # sum_{l>M} l x^l = x^(M+1) ((M+1) - M x) / (1-x)^2
    return kappa * x ** (M + 1) * ((M + 1) - M * x) / (1 - x) ** 2


# ---------------------------------------------------------------------------
# signed-real fractional powers


def cbrt(x):
    return np.cbrt(x)


def pow23(x):
    return np.abs(x) ** (2.0 / 3.0)


def pow43(x):
    return np.abs(x) ** (4.0 / 3.0)


def example1_gamma(alpha: float, levy: LevyMeasureSpec | None = None) -> float:
    """``gamma`` with ``gamma^2 int_U |u|^2 nu(du) = 1/2``."""
    levy = levy or power_law_levy(3, alpha)
    return math.sqrt(0.5 / levy.second_moment)


def example1_model(alpha: float = 0.5, M: int = 20, eps: float = 0.1,
                   lump_tail: bool = False) -> ModelSpec:
    """The three-dimensional non-Lipschitz example with countably many regimes.

    ``b_j = -x_j^{1/3} - k x_j^3``, ``c_j = gamma x_j^{2/3} |u|``,
    ``q_kl(x) = k 2^-l |x|^2/(1+|x|^2)`` and ``nu(du) = du/|u|^{3+alpha}`` on
    the unit ball.  Switching mass to regimes above ``M`` is dropped unless
    ``lump_tail`` moves it onto regime ``M``.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2)")
    if M < 2:
        raise ValueError("M must be at least 2")
    levy = power_law_levy(3, alpha, r_max=1.0, eps=eps)
    gamma = example1_gamma(alpha, levy)
    two_pow = 2.0 ** -np.arange(1, M + 1)
    sq2 = math.sqrt(2.0)

    def drift(x, k):
        k = np.asarray(k, dtype=float)[:, None]
        return -cbrt(x) - k * x ** 3

    def diffusion(x, k):
        n = x.shape[0]
        rk = np.sqrt(np.asarray(k, dtype=float))
        off = rk[:, None] * x ** 2 / 3.0               # entry (i, j) uses x_j
        s = np.broadcast_to(off[:, None, :], (n, 3, 3)).copy()
        idx = np.arange(3)
        s[:, idx, idx] = pow23(x) / sq2 + 1.0
        return s

    def jump_coeff(x, k, u):
        return gamma * pow23(x) * np.linalg.norm(u, axis=1, keepdims=True)

    def compensator(x, k, eps_):
        return gamma * pow23(x) * levy.radial_moment(1.0, eps_)

    def jump_sq_moment(x, k):
        return gamma ** 2 * levy.second_moment * np.sum(pow43(x), axis=1)

    def rates(x, k):
        r2 = np.sum(x * x, axis=1)
        g = r2 / (1.0 + r2)
        k = np.asarray(k, dtype=float)
        q = (k * g)[:, None] * two_pow[None, :]
        if lump_tail:
            q[:, -1] += k * g * 2.0 ** -M
        return q

    return ModelSpec(
        dim=3, regime_cap=M, drift=drift, diffusion=diffusion, rates=rates, levy=levy,
        jump_coeff=jump_coeff, growth_modulus=_one, regime_weight=_identity_weight,
        jump_isotropic=True, compensator=compensator, jump_sq_moment=jump_sq_moment,
        name="example1", params={"alpha": alpha, "M": M, "eps": eps, "gamma": gamma,
                                 "lump_tail": lump_tail},
    )


def _zero_dynamics(dim):
    def drift(x, k):
        return np.zeros_like(x)

    def diffusion(x, k):
        return np.zeros((x.shape[0], dim, dim))

    return drift, diffusion


def zero_model(dim: int = 1, M: int = 2) -> ModelSpec:
    """All coefficients and all rates identically zero."""
    drift, diffusion = _zero_dynamics(dim)
    return ModelSpec(dim, M, drift, diffusion, lambda x, k: np.zeros((x.shape[0], M)),
                     levy=None, frozen=True, name="zero", params={"dim": dim, "M": M})


def ctmc_model(Q, dim: int = 1, name: str = "ctmc") -> ModelSpec:
    """Frozen continuous component; regimes follow the fixed generator ``Q``."""
    Q = np.array(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("Q must be a square matrix")
    off = Q.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0):
        raise ValueError("off-diagonal rates must be nonnegative")
    drift, diffusion = _zero_dynamics(dim)
    return ModelSpec(dim, Q.shape[0], drift, diffusion,
                     lambda x, k: off[np.asarray(k) - 1], levy=None, frozen=True,
                     name=name, params={"Q": Q.tolist()})


def frozen_model(base: ModelSpec, x_star) -> ModelSpec:
    """Switching rates of ``base`` evaluated at a fixed ``x_star``; no motion in x.

    With ``x_star=None`` the rates are read at the (motionless) current state, so
    paths started from different points keep their own rates.
    """
    drift, diffusion = _zero_dynamics(base.dim)
    if x_star is None:
        rates = base.rates
    else:
        x_star = np.asarray(x_star, dtype=float).reshape(1, -1)

        def rates(x, k):
            return base.rates(np.repeat(x_star, len(k), axis=0), k)

    return ModelSpec(base.dim, base.regime_cap, drift, diffusion, rates, levy=None,
                     regime_weight=base.regime_weight, growth_modulus=base.growth_modulus,
                     frozen=True, name=f"frozen-{base.name}",
                     params={"base": base.params,
                             "x_star": None if x_star is None else x_star[0].tolist()})


def generator_matrix(model: ModelSpec, x) -> np.ndarray:
    """Truncated ``Q(x)`` as an ``M x M`` matrix with rows summing to zero."""
    M = model.regime_cap
    xs = np.repeat(np.asarray(x, dtype=float).reshape(1, -1), M, axis=0)
    Q = model.rate_matrix(xs, np.arange(1, M + 1))
    Q[np.diag_indices(M)] = -Q.sum(axis=1)
    return Q


def geometric_rates_model(kappa_prime: float = 1.0, M: int = 10, dim: int = 1) -> ModelSpec:
    """State-independent rates ``q_kl = kappa' l 3^-l``; frozen x."""
    l = np.arange(1, M + 1, dtype=float)
    row = kappa_prime * l * 3.0 ** -l
    Q = np.tile(row, (M, 1))
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    m = ctmc_model(Q, dim=dim, name="geometric")
    return m


def model_from_json(doc: dict) -> ModelSpec:
    """Build one of the built-in parametric families from a JSON-like mapping.

    Unknown keys raise ``ValueError``.
    """
    doc = dict(doc)
    name = doc.pop("name")
    if name == "example1":
        model = example1_model(alpha=float(doc.pop("alpha", 0.5)), M=int(doc.pop("M", 20)),
                               eps=float(doc.pop("eps", 0.1)),
                               lump_tail=bool(doc.pop("lump_tail", False)))
    elif name == "zero":
        model = zero_model(dim=int(doc.pop("dim", 1)), M=int(doc.pop("M", 2)))
    elif name == "frozen-example1":
        x_star = doc.pop("x_star")
        base = example1_model(alpha=float(doc.pop("alpha", 0.5)), M=int(doc.pop("M", 20)),
                              eps=float(doc.pop("eps", 0.1)))
        model = frozen_model(base, x_star)
    elif name == "geometric":
        model = geometric_rates_model(float(doc.pop("kappa_prime", 1.0)), int(doc.pop("M", 10)),
                                      int(doc.pop("dim", 1)))
    else:
        raise ValueError(f"unknown model family {name!r}")
    if doc:
        raise ValueError(f"unknown keys for model {name!r}: {sorted(doc)}")
    return model


__all__ = [
    "ModelSpec", "HybridState", "LevyMeasureSpec", "q_row", "tail_mass_bound",
    "example1_model", "example1_gamma", "zero_model", "ctmc_model", "frozen_model",
    "generator_matrix", "geometric_rates_model", "model_from_json", "no_jumps",
]
