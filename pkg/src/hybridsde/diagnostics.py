"""Sampled checks of the growth, continuity and rate conditions, the
Lyapunov function ``V = 1 + Phi + f`` and the generator ``A = L_k + Q(x)``.

Every check is a sampled sup (or inf) of a defining ratio: the report says
"no violation found on N points" together with the witness where the
extreme value was attained.  Nothing here certifies an inequality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .integrator import IntegratorConfig, run_ensemble
from .levy import _quad
from .model import ModelSpec
from .rng import substream

# stream tags for the sampling plan (kept apart from simulation streams)
_POINTS, _REGIMES, _DIRECTIONS, _RADII, _MARKS = 101, 102, 103, 104, 105


# ---------------------------------------------------------------------------
# Lyapunov function


def _phi_exponent(r2: float, zeta: Callable) -> float:
    if r2 <= 0.0:
        return 0.0
    val, _ = _quad(lambda r: 1.0 / (r * float(zeta(r)) + 1.0), 0.0, r2)
    return val


def phi(x, zeta: Callable) -> np.ndarray | float:
    """``Phi(x) = exp(int_0^{|x|^2} dr / (r zeta(r) + 1))`` by adaptive quadrature.

    Accepts a single point ``(d,)`` or a batch ``(n, d)``.
    """
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if r2.ndim == 0:
        return math.exp(_phi_exponent(float(r2), zeta))
    cache: dict[float, float] = {}
    out = np.empty(r2.shape)
    for i, v in enumerate(r2.ravel()):
        v = float(v)
        if v not in cache:
            cache[v] = math.exp(_phi_exponent(v, zeta))
        out.flat[i] = cache[v]
    return out


def lyapunov_V(x, k, model: ModelSpec):
    """``V(x, k) = 1 + Phi(x) + f(k)``."""
    fk = model.regime_weight(np.asarray(k))
    return 1.0 + phi(x, model.growth_modulus) + fk


# ---------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class SmoothFunction:
    """Test function ``f(x, k)`` evaluated on batches, with optional derivatives.

    ``value(x, k) -> (n,)``, ``grad -> (n, d)``, ``hess -> (n, d, d)``.
    ``hess_bound`` is a global bound on the operator norm of the Hessian.
    """

    value: Callable
    grad: Callable | None = None
    hess: Callable | None = None
    sup_norm: float | None = None
    hess_bound: float | None = None
    name: str = "f"


@dataclass(frozen=True)
class GeneratorValue:
    value: float
    small_jump_error: float
    parts: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value


def _fd_grad(fn, x, k, h):
    d = x.shape[0]
    pts = np.concatenate([x + h * np.eye(d), x - h * np.eye(d)])
    v = fn.value(pts, np.full(2 * d, k))
    return (v[:d] - v[d:]) / (2 * h)


def _fd_hess(fn, x, k, h):
    d = x.shape[0]
    e = np.eye(d) * h
    pts, idx = [], []
    for i in range(d):
        for j in range(i, d):
            pts += [x + e[i] + e[j], x + e[i] - e[j], x - e[i] + e[j], x - e[i] - e[j]]
            idx.append((i, j))
    v = fn.value(np.array(pts), np.full(len(pts), k)).reshape(-1, 4)
    H = np.zeros((d, d))
    for (i, j), (pp, pm, mp, mm) in zip(idx, v):
        H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * h * h)
    return H


def apply_generator(model: ModelSpec, fn: SmoothFunction, x, k: int,
                    eps: float | None = None, fd_step: float = 1e-5) -> GeneratorValue:
    """``A f(x, k) = L_k f(x, k) + sum_l q_kl(x) [f(x, l) - f(x, k)]``.

    The jump part is integrated by quadrature above ``eps``; below ``eps`` the
    second-order Taylor term ``1/2 int c' D^2 f c dnu`` is added and the bound
    ``1/2 sup|D^2 f| int_{|u|<=eps} |c|^2 dnu`` is returned as an error bar.
    Derivatives fall back to central differences with step ``fd_step``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = model.dim
    X = x[None, :]
    K = np.array([k])
    f0 = float(fn.value(X, K)[0])
    g = fn.grad(X, K)[0] if fn.grad is not None else _fd_grad(fn, x, k, fd_step)
    H = fn.hess(X, K)[0] if fn.hess is not None else _fd_hess(fn, x, k, fd_step)

    sig = model.diffusion(X, K)[0]
    a = sig @ sig.T
    diffusion = 0.5 * float(np.sum(a * H))
    drift = float(model.drift(X, K)[0] @ g)

    jump = small = err = 0.0
    if model.jump_coeff is not None and model.levy is not None:
        eps = model.levy.eps if eps is None else eps

        def big(c):
            n, m, _ = c.shape
            vals = fn.value((x + c).reshape(-1, d), np.full(n * m, k)).reshape(n, m)
            return vals - f0 - c @ g

        jump = float(model.jump_integral(X, K, big, lo=eps)[0])
        small = float(model.jump_integral(
            X, K, lambda c: 0.5 * np.einsum("nmi,ij,nmj->nm", c, H, c), lo=0.0, hi=eps)[0])
        c2 = float(model.jump_integral(X, K, lambda c: np.sum(c * c, axis=-1), lo=0.0, hi=eps)[0])
        hb = fn.hess_bound if fn.hess_bound is not None else float(np.linalg.norm(H, 2))
        err = 0.5 * hb * c2

    row = model.rate_matrix(X, K)[0]
    M = model.regime_cap
    fl = fn.value(np.repeat(X, M, axis=0), np.arange(1, M + 1))
    switching = math.fsum(row * (fl - f0))
    total = diffusion + drift + jump + small + switching
    return GeneratorValue(total, err, {"diffusion": diffusion, "drift": drift, "jump": jump,
                                       "small_jump_taylor": small, "switching": switching})


# ---------------------------------------------------------------------------
# moduli of continuity


@dataclass(frozen=True)
class ModulusSpec:
    """Nondecreasing concave ``rho`` with ``rho(0) = 0``.

    Past the cutoff ``delta`` the built-ins continue linearly with the slope
    at ``delta`` so they stay concave and nondecreasing on ``[0, inf)``.
    """

    name: str
    fn: Callable
    delta: float = math.inf
    slope: float = 0.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        inner = np.minimum(r, self.delta)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(inner > 0, self.fn(np.where(inner > 0, inner, 1.0)), 0.0)
        if math.isfinite(self.delta):
            v = v + self.slope * np.maximum(r - self.delta, 0.0)
        return v

    def is_concave(self, grid=None, tol: float = 1e-12) -> bool:
        """Midpoint test on a grid."""
        grid = np.geomspace(1e-8, 10.0, 400) if grid is None else np.asarray(grid, float)
        a, b = grid[:-1], grid[1:]
        return bool(np.all(self((a + b) / 2) >= (self(a) + self(b)) / 2 - tol))

    def positive_on(self, delta0: float) -> bool:
        return bool(np.all(self(np.geomspace(1e-12, delta0, 200)) > 0))

    def G(self, r: float) -> float:
        """``G(r) = int_1^r ds / rho(s)``."""
        if self.name == "r":
            return math.log(r)
        val, _ = _quad(lambda s: 1.0 / float(self(s)), 1.0, r)
        return val


def modulus(name: str) -> ModulusSpec:
    """Built-in moduli ``r``, ``r log(1/r)`` and ``r log log(1/r)``."""
    if name == "r":
        return ModulusSpec("r", lambda r: r)
    if name == "rlog":
        d = math.exp(-2.0)  # slope log(1/r) - 1 equals 1 here
        return ModulusSpec("rlog", lambda r: r * np.log(1.0 / r), d, 1.0)
    if name == "rloglog":
        d = math.exp(-math.e)
        slope = math.log(math.log(1.0 / d)) - 1.0 / math.log(1.0 / d)
        return ModulusSpec("rloglog", lambda r: r * np.log(np.log(1.0 / r)), d, slope)
    raise ValueError(f"unknown modulus {name!r}")


# ---------------------------------------------------------------------------
# sampling plan


@dataclass(frozen=True)
class SamplePlan:
    """Points from a centred Student-t(3) scaled by ``scale / 3`` and
    near-diagonal pairs at radii ``delta0 / 4**i``.

    Samples are drawn in fixed-size blocks, each from its own stream, so a
    plan with more points extends a smaller one (nested samples).
    """

    n_points: int = 10_000
    scale: float = 5.0
    delta0: float = 1.0
    n_levels: int = 8
    seed: int = 0
    df: float = 3.0
    block: int = 1024

    def _blocks(self, tag, n, draw):
        nb = -(-n // self.block)
        parts = [draw(substream(self.seed, tag, b), self.block) for b in range(nb)]
        return np.concatenate(parts)[:n]

    def points(self, dim: int, n: int | None = None) -> np.ndarray:
        n = self.n_points if n is None else n
        return self._blocks(_POINTS, n, lambda g, m: g.standard_t(self.df, (m, dim))) \
            * (self.scale / 3.0)

    def regimes(self, cap: int, n: int | None = None) -> np.ndarray:
        n = self.n_points if n is None else n
        return self._blocks(_REGIMES, n, lambda g, m: g.integers(1, cap + 1, m))

    def unit_vectors(self, dim: int, n: int | None = None) -> np.ndarray:
        n = self.n_points if n is None else n
        v = self._blocks(_DIRECTIONS, n, lambda g, m: g.standard_normal((m, dim)))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def radii(self, n: int | None = None) -> np.ndarray:
        n = self.n_points if n is None else n
        return self.delta0 / 4.0 ** (np.arange(n) % self.n_levels)

    def pairs(self, dim: int, n: int | None = None, R: float | None = None):
        """Pairs ``(x, z)`` with ``|x - z|`` on the log-spaced radii.

        With ``R`` given, pairs leaving the ball are scaled towards the
        origin, which keeps ``|x| v |z| <= R`` and only shrinks ``|x - z|``.
        """
        x = self.points(dim, n)
        z = x + self.radii(len(x))[:, None] * self.unit_vectors(dim, len(x))
        if R is not None:
            m = np.maximum(np.linalg.norm(x, axis=1), np.linalg.norm(z, axis=1))
            s = np.where(m > R, R / np.where(m > 0, m, 1.0), 1.0)[:, None]
            x, z = x * s, z * s
        return x, z

    def far_pairs(self, dim: int, n: int | None = None, R: float | None = None):
        """Independent pairs (second point is the shifted sample)."""
        x = self.points(dim, n)
        z = np.roll(x, 1, axis=0)
        if R is not None:
            for p in (x, z):
                m = np.linalg.norm(p, axis=1)
                p *= np.where(m > R, R / np.where(m > 0, m, 1.0), 1.0)[:, None]
        return x, z


# ---------------------------------------------------------------------------
# reports


@dataclass
class CheckReport:
    assumption: str
    n_samples: int
    fitted_constant: float
    witness: dict
    passed: bool
    user_constant: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"assumption": self.assumption, "n_samples": self.n_samples,
               "fitted_constant": self.fitted_constant, "witness": self.witness,
               "pass": self.passed}
        if self.user_constant is not None:
            out["user_constant"] = self.user_constant
        if self.details:
            out["details"] = self.details
        return out


def _fit(assumption, ratio, witness_fn, user=None, floor=0.0, mode="max", details=None,
         violated=False) -> CheckReport:
    ratio = np.asarray(ratio, dtype=float)
    if ratio.size == 0:
        return CheckReport(assumption, 0, floor, {}, True, user, details or {})
    i = int(np.argmax(ratio) if mode == "max" else np.argmin(ratio))
    val = float(ratio[i])
    fitted = max(floor, val) if mode == "max" else val
    if user is not None:
        ok = fitted <= user if mode == "max" else fitted >= user
    else:
        ok = math.isfinite(fitted)
    if violated:
        ok = False
    return CheckReport(assumption, int(ratio.size), fitted, witness_fn(i), bool(ok), user,
                       details or {})


def _safe_div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))


def _pt(x):
    return [float(v) for v in np.ravel(x)]


# ---------------------------------------------------------------------------
# growth / switching / Holder


def growth_lhs(model: ModelSpec, x, k) -> np.ndarray:
    """``2<x, b> + |sigma|^2 + int |c|^2 dnu`` on a batch."""
    b = model.drift(x, k)
    s = model.diffusion(x, k)
    return 2 * np.sum(x * b, axis=1) + np.sum(s * s, axis=(1, 2)) + model.jump_second_moment(x, k)


def switching_moment(model: ModelSpec, x, k) -> np.ndarray:
    """``sum_{l != k} (f(l) - f(k)) q_kl(x)``."""
    q = model.rate_matrix(x, k)
    fl = model.regime_weight(np.arange(1, model.regime_cap + 1))
    fk = model.regime_weight(k)
    return q @ fl - fk * q.sum(axis=1)


def rate_variation(model: ModelSpec, x, z, k) -> np.ndarray:
    """``sum_{l != k} |q_kl(x) - q_kl(z)|``."""
    return np.abs(model.rate_matrix(x, k) - model.rate_matrix(z, k)).sum(axis=1)


def check_assumption_2_1(model: ModelSpec, plan: SamplePlan | None = None, delta: float = 1.0,
                         H: float | None = None) -> list[CheckReport]:
    """Growth, rate bound ``q_k <= H k``, switching moment and Holder continuity of q."""
    plan = plan or SamplePlan()
    d, M = model.dim, model.regime_cap
    x = plan.points(d)
    k = plan.regimes(M)
    r2 = np.sum(x * x, axis=1)

    def wit(i, **extra):
        return {"x": _pt(x[i]), "k": int(k[i]), **extra}

    growth = _safe_div(growth_lhs(model, x, k), r2 * model.growth_modulus(r2) + 1.0)
    rate = model.total_rate(x, k) / k
    V = 1.0 + phi(x, model.growth_modulus) + model.regime_weight(k)
    moment = switching_moment(model, x, k) / V

    xn, zn = plan.pairs(d)
    xf, zf = plan.far_pairs(d)
    xp, zp = np.concatenate([xn, xf]), np.concatenate([zn, zf])
    kp = np.concatenate([k, k])
    dist = np.linalg.norm(xp - zp, axis=1)
    holder = _safe_div(rate_variation(model, xp, zp, kp), dist ** delta)

    def wit_pair(i):
        return {"x": _pt(xp[i]), "z": _pt(zp[i]), "k": int(kp[i])}

    return [
        _fit("2.1-growth", growth, wit, H),
        _fit("2.1-rate-bound", rate, wit, H),
        _fit("2.1-switching-moment", moment, wit, H),
        _fit("2.1-holder", holder, wit_pair, H, details={"delta": delta}),
    ]


# ---------------------------------------------------------------------------
# continuity of coefficients


def _paired_jump_sq(model, x, z, k, capped=False):
    if model.jump_coeff is None or model.levy is None:
        return np.zeros(len(x))
    dist = np.linalg.norm(x - z, axis=1)

    def integrand(cx, cz):
        dc2 = np.sum((cx - cz) ** 2, axis=-1)
        if capped:
            return np.minimum(dc2, 4 * dist[:, None] * np.sqrt(dc2))
        return dc2

    return model.jump_integral(x, k, integrand, z=z, j=k)


def path_lhs(model: ModelSpec, x, z, k, capped: bool = False, sigma=None) -> np.ndarray:
    """``2<x-z, b(x)-b(z)> + |s(x)-s(z)|^2 + int |c(x)-c(z)|^2 dnu`` (optionally capped)."""
    db = model.drift(x, k) - model.drift(z, k)
    sig = sigma or model.diffusion
    ds = sig(x, k) - sig(z, k)
    return (2 * np.sum((x - z) * db, axis=1) + np.sum(ds * ds, axis=(1, 2))
            + _paired_jump_sq(model, x, z, k, capped))


def check_assumption_2_2_and_3_2(model: ModelSpec, rho: ModulusSpec, R: float, delta0: float,
                                 plan: SamplePlan | None = None,
                                 kappa: float | None = None) -> list[CheckReport]:
    """Local continuity conditions with modulus ``rho`` on ``|x| v |z| <= R``.

    Regimes are sampled in ``1..min(M, R)``: the localisation of the proof
    stops the regime component as well.
    """
    plan = plan or SamplePlan()
    plan = SamplePlan(plan.n_points, plan.scale, delta0, plan.n_levels, plan.seed, plan.df,
                      plan.block)
    d = model.dim
    kcap = max(1, min(model.regime_cap, int(math.floor(R))))
    x, z = plan.pairs(d, R=R)
    k = plan.regimes(kcap)
    dist = np.linalg.norm(x - z, axis=1)

    def wit(i):
        return {"x": _pt(x[i]), "z": _pt(z[i]), "k": int(k[i])}

    reports = []
    xf, zf = plan.far_pairs(d, R=R)
    xq, zq = np.concatenate([x, xf]), np.concatenate([z, zf])
    kq = np.concatenate([k, k])
    from .coupling import metric_F  # local import: coupling depends on diagnostics
    qv = _safe_div(rate_variation(model, xq, zq, kq), rho(metric_F(np.linalg.norm(xq - zq, axis=1))))
    reports.append(_fit("3.2-rates", qv, lambda i: {"x": _pt(xq[i]), "z": _pt(zq[i]),
                                                    "k": int(kq[i])}, kappa))
    if d >= 2:
        lhs = path_lhs(model, x, z, k)
        reports.append(_fit("2.2-path", _safe_div(lhs, rho(dist ** 2)), wit, kappa,
                            details={"max_lhs": float(np.max(lhs))}))
        lhs_c = path_lhs(model, x, z, k, capped=True)
        reports.append(_fit("3.2-drift-diffusion-jump", _safe_div(lhs_c, 2 * dist * rho(dist)),
                            wit, kappa))
        return reports

    sgn = np.where(x[:, 0] - z[:, 0] > 0, 1.0, -1.0)
    drift_gap = sgn * (model.drift(x, k) - model.drift(z, k))[:, 0]
    reports.append(_fit("2.2-1d-drift", _safe_div(drift_gap, rho(dist)), wit, kappa))
    ds = model.diffusion(x, k) - model.diffusion(z, k)
    sc = np.sum(ds * ds, axis=(1, 2)) + _paired_jump_sq(model, x, z, k)
    reports.append(_fit("2.2-1d-diffusion-jump", _safe_div(sc, dist), wit, kappa))
    reports.append(_check_1d_jump_monotone(model, x, z, k, plan))
    return reports


def _check_1d_jump_monotone(model, x, z, k, plan) -> CheckReport:
    """``x -> x + c(x,k,u)`` nondecreasing, else the fitted ``beta`` of the lower bound."""
    if model.jump_coeff is None or model.levy is None:
        return CheckReport("2.2-1d-jump-monotone", len(x), 0.0, {}, True,
                           details={"monotone": True, "beta": 1.0})
    g = substream(plan.seed, _MARKS)
    u = model.levy.sample_marks(len(x), g, model.levy.eps)
    cx = model.jump_coeff(x, k, u)[:, 0]
    cz = model.jump_coeff(z, k, u)[:, 0]
    dx = x[:, 0] - z[:, 0]
    inc = np.sign(dx) * ((x[:, 0] + cx) - (z[:, 0] + cz))
    monotone = bool(np.all(inc >= -1e-12 * np.abs(dx)))
    thetas = np.linspace(0.0, 1.0, 11)
    ratios = np.min(np.abs(dx[:, None] + thetas[None, :] * (cx - cz)[:, None]), axis=1) / \
        np.where(np.abs(dx) > 0, np.abs(dx), 1.0)
    i = int(np.argmin(ratios))
    beta = float(ratios[i])
    return CheckReport("2.2-1d-jump-monotone", len(x), beta,
                       {"x": _pt(x[i]), "z": _pt(z[i]), "k": int(k[i]), "u": _pt(u[i])},
                       monotone or beta > 0, details={"monotone": monotone, "beta": beta})


# ---------------------------------------------------------------------------
# bounded rates and ellipticity


def _cap_growth(seq, tol) -> bool:
    """True when the last entries of a sup-sequence keep growing at the cap."""
    if len(seq) < 3:
        return False
    return bool(seq[-1] > seq[-2] * (1 + tol))


def check_assumption_4_3_and_ellipticity(model: ModelSpec, R: float,
                                         plan: SamplePlan | None = None,
                                         kappa: float | None = None, H: float | None = None,
                                         vartheta: Callable | None = None) -> list[CheckReport]:
    """``sup q_k``, the geometric bound ``q_kl <= kappa l 3^-l``, ``lambda_R`` and the
    continuity condition of the square root of ``a - lambda_R I``.

    Both rate constants are fitted on every regime pair of the truncated
    chain.  Growth of the sup at the truncation cap (``k = M`` or ``l = M``)
    means the constant is unbounded on the countable state space and the
    report fails regardless of the fitted value.
    """
    plan = plan or SamplePlan()
    d, M = model.dim, model.regime_cap
    x = plan.points(d)
    n = len(x)
    reports = []

    # sup over x of q_kl for every (k, l), on the same x sample for all k
    T = np.zeros((M, M))
    qk = np.zeros(M)
    arg_T = np.zeros((M, M), dtype=np.int64)
    arg_q = np.zeros(M, dtype=np.int64)
    for kk in range(1, M + 1):
        Q = model.rate_matrix(x, np.full(n, kk))
        tot = Q.sum(axis=1)
        arg_q[kk - 1] = int(np.argmax(tot))
        qk[kk - 1] = tot[arg_q[kk - 1]]
        arg_T[kk - 1] = np.argmax(Q, axis=0)
        T[kk - 1] = Q.max(axis=0)
    l = np.arange(1, M + 1)
    ratio = T * 3.0 ** l[None, :] / l[None, :]
    np.fill_diagonal(ratio, 0.0)

    # H: growth of sup_x q_k with k that does not decay at the cap
    incr = np.diff(qk)
    h_grow = bool(len(incr) >= 2 and incr[-1] > 0 and incr[-1] >= 0.9 * incr[-2])
    i = int(np.argmax(qk))
    reports.append(CheckReport(
        "4.3-rates-bounded", n * M, float(qk[i]), {"x": _pt(x[arg_q[i]]), "k": i + 1},
        (not h_grow) and (H is None or qk[i] <= H), H,
        {"unbounded_at_cap": h_grow, "sup_by_regime": qk.tolist()}))

    col = ratio.max(axis=0)   # sup over k, per target l
    row = ratio.max(axis=1)   # sup over l, per source k
    grow = _cap_growth(col, 1e-9) or _cap_growth(row, 1e-9)
    kk, ll = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    fitted = float(ratio[kk, ll])
    reports.append(CheckReport(
        "4.3-geometric-rates", n * M * (M - 1), fitted,
        {"x": _pt(x[arg_T[kk, ll]]), "k": int(kk + 1), "l": int(ll + 1)},
        (not grow) and (kappa is None or fitted <= kappa), kappa,
        {"unbounded_at_cap": grow, "sup_by_target": col.tolist()}))

    # ellipticity on the ball: minimum eigenvalue of a = sigma sigma'
    kcap = max(1, min(M, int(math.floor(R))))
    xb, zb = plan.pairs(d, R=R)
    k = plan.regimes(kcap)
    sig = model.diffusion(xb, k)
    a = sig @ np.transpose(sig, (0, 2, 1))
    eig = np.linalg.eigvalsh(a)[:, 0]
    j = int(np.argmin(eig))
    lam = float(eig[j])
    reports.append(CheckReport("4.4-ellipticity", n, lam, {"x": _pt(xb[j]), "k": int(k[j])},
                               lam > 0, None, {"R": R}))

    # continuity with sigma_lambda = sqrt(a - lambda_R I)
    lam_c = max(lam, 0.0)

    def sigma_lam(p, kk):
        s = model.diffusion(p, kk)
        w, v = np.linalg.eigh(s @ np.transpose(s, (0, 2, 1)) - lam_c * np.eye(d))
        return (v * np.sqrt(np.clip(w, 0.0, None))[:, None, :]) @ np.transpose(v, (0, 2, 1))

    dist = np.linalg.norm(xb - zb, axis=1)
    lhs = path_lhs(model, xb, zb, k, capped=True, sigma=sigma_lam)
    vt = vartheta or np.sqrt
    cont = _safe_div(lhs, 2 * dist * vt(dist))
    levels = plan.radii(n)
    profile = {float(r): float(np.max(lhs[levels == r] / (2 * dist[levels == r])))
               for r in np.unique(levels)}
    reports.append(_fit("4.4-continuity", cont,
                        lambda i: {"x": _pt(xb[i]), "z": _pt(zb[i]), "k": int(k[i])}, kappa,
                        details={"lambda_R": lam, "max_ratio_by_distance": profile}))
    return reports


# ---------------------------------------------------------------------------
# supermartingale trend


@dataclass
class TrendReport:
    times: list
    means: list
    ses: list
    step_ses: list
    passed: bool
    H: float
    n_paths: int
    truncated_count: int

    def to_dict(self) -> dict:
        return {"times": self.times, "means": self.means, "se": self.ses,
                "step_se": self.step_ses, "pass": self.passed, "H": self.H,
                "n_paths": self.n_paths, "truncated_count": self.truncated_count}


def supermartingale_test(model: ModelSpec, x0, k0: int, H: float, cfg: IntegratorConfig,
                         n_paths: int) -> TrendReport:
    """Monte Carlo trend of ``e^{-2Ht} V(X(t), Lambda(t))`` at five checkpoints.

    Successive means are compared through the per-path differences, whose
    standard error is the combined SE of the two correlated means.
    """
    from .errors import AllPathsTruncated
    from .integrator import mean_se

    ts = [cfg.T * i / 4 for i in range(5)]
    out = run_ensemble(model, x0, k0, cfg, n_paths, checkpoints=ts)
    ok = ~out.truncated
    if not ok.any():
        raise AllPathsTruncated("every path was truncated")
    vals = []
    for c, t in enumerate(ts):
        v = lyapunov_V(out.ck_x[c][ok], out.ck_k[c][ok], model)
        vals.append(math.exp(-2 * H * t) * v)
    means, ses = zip(*(mean_se(v) for v in vals))
    step = [mean_se(vals[i + 1] - vals[i]) for i in range(4)]
    passed = all(dm <= 3 * s for dm, s in step)
    return TrendReport(ts, list(means), list(ses), [s for _, s in step], bool(passed), H,
                       int(ok.sum()), int(out.truncated.sum()))


__all__ = [
    "phi", "lyapunov_V", "SmoothFunction", "GeneratorValue", "apply_generator",
    "ModulusSpec", "modulus", "SamplePlan", "CheckReport", "check_assumption_2_1",
    "check_assumption_2_2_and_3_2", "check_assumption_4_3_and_ellipticity",
    "TrendReport", "supermartingale_test", "growth_lhs", "switching_moment",
    "rate_variation", "path_lhs",
]
