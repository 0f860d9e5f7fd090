"""Coupled pairs ``(X, Lambda, Z, Xi)``: synchronous noise for the continuous
parts, basic coupling for the regimes, and the Bihari-type bound on
``E f(X(t), Lambda(t), Z(t), Xi(t))`` used to diagnose continuity of the
transition law in the starting point.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .diagnostics import ModulusSpec, modulus
from .errors import InversionBracketFailure, MajorantViolated, NonFiniteState
from .integrator import IntegratorConfig, mean_se
from .levy import levy_decompose
from .model import ModelSpec
from .rng import Streams, as_streams, chunk_sizes


def metric_F(r):
    """``F(r) = r / (1 + r)``."""
    r = np.asarray(r, dtype=float)
    out = r / (1.0 + r)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CoupledState:
    x: np.ndarray
    i: int
    z: np.ndarray
    j: int

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).reshape(-1))
        if self.x.shape != self.z.shape:
            raise ValueError("paired states must have the same dimension")
        if min(self.i, self.j) < 1:
            raise ValueError("regimes start at 1")


def metric_f(state: CoupledState) -> float:
    """``F(|x - z|) + 1{i != j}``: a bounded metric on ``R^d x S``."""
    return metric_F(math.hypot(*(state.x - state.z))) + float(state.i != state.j)


def _metric_f_batch(x, i, z, j):
    return metric_F(np.hypot.reduce(x - z, axis=1)) + (i != j)


# ---------------------------------------------------------------------------
# basic coupling of the regimes


def coupled_rates(model: ModelSpec, x, i, z, j):
    """Rate tables ``(together, first_only, second_only)``, each ``(n, M)``.

    Column ``l`` holds ``q_il(x) ^ q_jl(z)``, ``(q_il(x) - q_jl(z))^+`` and
    ``(q_jl(z) - q_il(x))^+``; row sums of ``together + first_only`` give
    ``q_i(x)``, so each marginal keeps its own switching law.
    """
    qx = model.rate_matrix(x, i)
    qz = model.rate_matrix(z, j)
    both = np.minimum(qx, qz)
    return both, qx - both, qz - both


def _fire(both, first, second, i, j, h, uniforms, majorant=None):
    """At most one event per step; returns new regimes, event kind and in-step time."""
    n, M = both.shape
    table = np.concatenate([both, first, second], axis=1)
    total = table.sum(axis=1)
    if majorant is not None and np.any(total > majorant * (1 + 1e-12)):
        raise MajorantViolated("coupled switching rate above the majorant")
    p_fire = -np.expm1(-total * h)
    u_fire, u_pick, u_time = uniforms
    fire = (u_fire < p_fire) & (total > 0)
    kind = np.zeros(n, dtype=np.int64)       # 0 none, 1 together, 2 first, 3 second
    ni, nj = i.copy(), j.copy()
    s = np.full(n, np.nan)
    if fire.any():
        f = np.flatnonzero(fire)
        cum = np.cumsum(table[f], axis=1)
        r = u_pick[f] * total[f]
        col = np.minimum((cum <= r[:, None]).sum(axis=1), 3 * M - 1)
        # guard against landing on an empty column through rounding
        empty = table[f, col] == 0.0
        for a in np.flatnonzero(empty):
            nz = np.flatnonzero(table[f[a]] > 0)
            col[a] = nz[min(np.searchsorted(cum[a, nz], r[a], side="right"), nz.size - 1)]
        fam, l = np.divmod(col, M)
        l = l + 1
        kind[f] = fam + 1
        ni[f] = np.where(fam <= 1, l, i[f])
        nj[f] = np.where((fam == 0) | (fam == 2), l, j[f])
        # time of the event given that one fired in [0, h): truncated exponential
        tot = total[f]
        s[f] = -np.log1p(-u_time[f] * p_fire[f]) / tot
    return ni, nj, kind, s


def couple_step_switch(model: ModelSpec, state: CoupledState, dt: float, rng,
                       majorant: float | None = None):
    """Regimes after ``[t, t + dt)`` under the basic coupling.

    Returns ``(i', j', kind, s)`` with ``kind`` in ``{"none", "together",
    "first", "second"}`` and ``s`` the time of the event inside the step.
    """
    x, z = state.x[None, :], state.z[None, :]
    i, j = np.array([state.i]), np.array([state.j])
    both, first, second = coupled_rates(model, x, i, z, j)
    u = rng.random(3)
    ni, nj, kind, s = _fire(both, first, second, i, j, dt, (u[:1], u[1:2], u[2:]), majorant)
    names = ("none", "together", "first", "second")
    return int(ni[0]), int(nj[0]), names[int(kind[0])], float(s[0])


# ---------------------------------------------------------------------------
# coupled paths


@dataclass
class CoupledBatch:
    x: np.ndarray
    i: np.ndarray
    z: np.ndarray
    j: np.ndarray
    zeta: np.ndarray
    coalescence: np.ndarray
    exit_R: np.ndarray
    exit_delta0: np.ndarray
    truncated: np.ndarray
    checkpoints: np.ndarray
    ck_f: np.ndarray
    records: list | None = None

    @staticmethod
    def concat(parts):
        cat = lambda name, ax=0: np.concatenate([getattr(p, name) for p in parts], axis=ax)
        recs = [r for p in parts for r in p.records] if parts[0].records is not None else None
        return CoupledBatch(cat("x"), cat("i"), cat("z"), cat("j"), cat("zeta"),
                            cat("coalescence"), cat("exit_R"), cat("exit_delta0"),
                            cat("truncated"), parts[0].checkpoints, cat("ck_f", 1), recs)


def _grid(t_end, dt, checkpoints):
    base = np.arange(0.0, t_end, dt)
    pts = np.concatenate([base, np.asarray(checkpoints, dtype=float), [t_end]])
    pts = np.unique(pts)
    keep = np.concatenate([[True], np.diff(pts) > 1e-9 * dt])
    return pts[keep]


def run_coupled(model: ModelSpec, x0, z0, k: int, cfg: IntegratorConfig, streams: Streams, n: int,
                t_end: float, checkpoints=(), R: float = math.inf, delta0: float = math.inf,
                record: bool = False, majorant: float | None = None) -> CoupledBatch:
    """Advance ``n`` coupled pairs started at ``(x0, k, z0, k)``.

    Both components use the same Brownian increments and the same Poisson
    jump times and marks.  The regime event of a step is drawn from the
    rates at the start of the step and takes effect at the end of the step.
    Pairs with ``(x, i) == (z, j)`` are glued from then on.
    """
    d = model.dim
    x = np.tile(np.asarray(x0, dtype=float), (n, 1))
    z = np.tile(np.asarray(z0, dtype=float), (n, 1))
    i = np.full(n, int(k), dtype=np.int64)
    j = i.copy()
    grid = _grid(t_end, cfg.dt, checkpoints) if t_end > 0 else np.array([0.0])
    ck = np.array(sorted(set(float(c) for c in checkpoints)))
    ck_f = np.full((ck.size, n), np.nan)
    ck_at = {float(c): a for a, c in enumerate(ck)}
    zeta = np.full(n, np.inf)
    coal = np.where(np.all(x == z, axis=1), 0.0, np.inf)
    exit_R = np.full(n, np.inf)
    exit_d = np.full(n, np.inf)
    trunc = np.zeros(n, dtype=bool)
    jumps = model.has_jumps and not model.frozen
    if jumps:
        dec = levy_decompose(model.levy, cfg.eps)
        lam, eps = dec.intensity, dec.eps
    else:
        lam, eps = 0.0, None
    recs = None
    if record:
        recs = [{"t": [0.0], "x": [x[p].copy()], "i": [int(i[p])], "z": [z[p].copy()],
                 "j": [int(j[p])], "events": []} for p in range(n)]

    def flags(t):
        nx = np.linalg.norm(x, axis=1)
        nz = np.linalg.norm(z, axis=1)
        out_R = (np.maximum(nx, nz) > R) | (np.maximum(i, j) > R)
        exit_R[out_R & ~np.isfinite(exit_R)] = t
        out_d = np.linalg.norm(x - z, axis=1) > delta0
        exit_d[out_d & ~np.isfinite(exit_d)] = t
        if 0.0 in ck_at and t == 0.0:
            ck_f[ck_at[0.0]] = _metric_f_batch(x, i, z, j)

    flags(0.0)
    for s in range(grid.size - 1):
        t0, t1 = grid[s], grid[s + 1]
        h = t1 - t0
        live = ~trunc
        glued = (i == j) & np.all(x == z, axis=1)
        if not model.frozen:
            dW = streams.w.standard_normal((n, d)) * math.sqrt(h)

            def euler(p, k_):
                b = model.drift(p, k_)
                if jumps:
                    b = b - model.drift_compensator(p, k_, eps)
                return p + b * h + np.einsum("nij,nj->ni", model.diffusion(p, k_), dW)

            x_new = euler(x, i)
            z_new = np.where(glued[:, None], x_new, euler(z, j))
            if lam > 0:
                counts = streams.n.poisson(lam * h, size=n)
                J = int(counts.sum())
                if J:
                    owner = np.repeat(np.arange(n), counts)
                    u = dec.sample_marks(J, streams.n)
                    cx = model.jump_coeff(x[owner], i[owner], u)
                    cz = model.jump_coeff(z[owner], j[owner], u)
                    for c in range(d):
                        x_new[:, c] += np.bincount(owner, cx[:, c], minlength=n)
                        z_new[:, c] += np.bincount(owner, cz[:, c], minlength=n)
                    z_new[glued] = x_new[glued]
            if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(z_new))):
                raise NonFiniteState("coupled state became NaN or infinite")
        else:
            x_new, z_new = x, z
        both, first, second = coupled_rates(model, x, i, z, j)
        uni = streams.xi.random((3, n))
        ni, nj, kind, s_in = _fire(both, first, second, i, j, h, uni, majorant)
        if record:
            for p in np.flatnonzero(kind > 0):
                recs[p]["events"].append({"time": float(t0 + s_in[p]), "kind": int(kind[p]),
                                          "from": [int(i[p]), int(j[p])],
                                          "to": [int(ni[p]), int(nj[p])]})
        x = np.where(live[:, None], x_new, x)
        z = np.where(live[:, None], z_new, z)
        i = np.where(live, ni, i)
        j = np.where(live, nj, j)
        split = (i != j) & ~np.isfinite(zeta) & live
        zeta[split] = t1
        met = (i == j) & np.all(x == z, axis=1) & ~np.isfinite(coal)
        coal[met] = t1
        big = np.maximum(np.linalg.norm(x, axis=1), np.linalg.norm(z, axis=1)) > cfg.R_max
        trunc |= big
        flags(t1)
        if t1 in ck_at:
            ck_f[ck_at[t1]] = _metric_f_batch(x, i, z, j)
        if record:
            for p in range(n):
                r = recs[p]
                r["t"].append(float(t1))
                r["x"].append(x[p].copy())
                r["i"].append(int(i[p]))
                r["z"].append(z[p].copy())
                r["j"].append(int(j[p]))
    return CoupledBatch(x, i, z, j, zeta, coal, exit_R, exit_d, trunc, ck, ck_f, recs)


@dataclass
class CouplingRecord:
    """One coupled trajectory on the shared grid."""

    times: np.ndarray
    xs: np.ndarray
    is_: np.ndarray
    zs: np.ndarray
    js: np.ndarray
    zeta: float
    coalescence_time: float
    f_values: dict
    events: list
    exit_R: float
    exit_delta0: float
    seed_lineage: dict = field(default_factory=dict)

    def check_invariants(self) -> None:
        pre = self.times < self.zeta
        if np.any(self.is_[pre] != self.js[pre]):
            raise AssertionError("regimes differ before zeta")


def couple_paths(model: ModelSpec, x, z, k: int, cfg: IntegratorConfig, rng=None,
                 checkpoints=(), R: float = math.inf, delta0: float = math.inf) -> CouplingRecord:
    """Single coupled run from ``(x, k, z, k)`` on ``[0, cfg.T]``."""
    streams = as_streams(rng, cfg.seed)
    out = run_coupled(model, x, z, k, cfg, streams, 1, cfg.T, checkpoints, R, delta0, record=True)
    r = out.records[0]
    return CouplingRecord(np.array(r["t"]), np.array(r["x"]), np.array(r["i"]), np.array(r["z"]),
                          np.array(r["j"]), float(out.zeta[0]), float(out.coalescence[0]),
                          {float(c): float(out.ck_f[a, 0]) for a, c in enumerate(out.checkpoints)},
                          r["events"], float(out.exit_R[0]), float(out.exit_delta0[0]),
                          streams.lineage)


def run_coupled_ensemble(model, x, z, k, cfg: IntegratorConfig, n_paths: int, t_end: float,
                         **kw) -> CoupledBatch:
    sizes = chunk_sizes(n_paths, cfg.chunk_size)

    def job(c):
        return run_coupled(model, x, z, k, cfg, Streams.from_seed(cfg.seed, c), sizes[c],
                           t_end, **kw)

    if cfg.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(c) for c in range(len(sizes))]
    return CoupledBatch.concat(parts)


@dataclass
class WfEstimate:
    t: float
    r0: float
    estimate: float
    se: float
    n: int
    p_exit_R: float
    p_exit_delta0: float
    p_split: float
    truncated_count: int

    def to_dict(self) -> dict:
        return {"t": self.t, "r0": self.r0, "estimate": self.estimate, "se": self.se,
                "n": self.n, "p_exit_R": self.p_exit_R, "p_exit_delta0": self.p_exit_delta0,
                "p_split": self.p_split, "truncated_count": self.truncated_count}


def estimate_Wf(model: ModelSpec, t: float, x, z, k: int, cfg: IntegratorConfig, n_paths: int,
                R: float = math.inf, delta0: float = math.inf) -> WfEstimate:
    """Mean of ``f(X(t), Lambda(t), Z(t), Xi(t))``: an upper bound on ``W_f``.

    Reusing ``cfg.seed`` across starting points gives common random numbers.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    r0 = float(np.linalg.norm(x - z))
    if t == 0:
        return WfEstimate(0.0, r0, metric_F(r0), 0.0, n_paths, 0.0, 0.0, 0.0, 0)
    out = run_coupled_ensemble(model, x, z, k, cfg, n_paths, t, checkpoints=[t], R=R,
                               delta0=delta0)
    ok = ~out.truncated
    mean, se = mean_se(out.ck_f[0][ok])
    return WfEstimate(t, r0, mean, se, int(ok.sum()), float(np.mean(out.exit_R <= t)),
                      float(np.mean(out.exit_delta0 <= t)), float(np.mean(out.zeta <= t)),
                      int(out.truncated.sum()))


# ---------------------------------------------------------------------------
# Bihari bound


def bihari_bound(r0: float, t: float, kappa_R: float, rho: ModulusSpec | None = None) -> float:
    """``G^{-1}(G(F(r0)) + 2 kappa_R t)`` with ``G(r) = int_1^r ds / rho(s)``, capped at 1."""
    rho = rho or modulus("r")
    u0 = metric_F(r0)
    if u0 <= 0.0:
        return 0.0
    if t == 0 or kappa_R == 0:
        return min(u0, 1.0)
    target = rho.G(u0) + 2.0 * kappa_R * t
    if not math.isfinite(target):
        raise InversionBracketFailure("G is not finite at F(r0)")
    if target >= 0.0:   # G(1) = 0
        return 1.0
    try:
        return optimize.brentq(lambda u: rho.G(u) - target, u0, 1.0, xtol=1e-15, rtol=1e-14)
    except ValueError as exc:
        raise InversionBracketFailure(str(exc)) from exc


def feller_bound(r0: float, t: float, kappa_R: float, delta0: float, eps: float,
                 rho: ModulusSpec | None = None) -> dict:
    """Bound on ``E f`` at time ``t`` along the coupling argument.

    ``A = (1 + 2 delta0) / delta0 * bihari`` bounds ``E F(|X - Z|)`` up to the
    mismatch time and ``eps`` bounds the probability of leaving the
    localising ball; the regime-split probability adds
    ``eps + kappa_R t rho(A + eps)`` twice.
    """
    rho = rho or modulus("r")
    B = bihari_bound(r0, t, kappa_R, rho)
    A = (1.0 + 2.0 * delta0) / delta0 * B
    split = eps + kappa_R * t * float(rho(A + eps))
    return {"bihari": B, "A": A, "switch_loss": eps + 2.0 * split, "bound": A + eps + 2.0 * split}


__all__ = [
    "metric_F", "metric_f", "CoupledState", "coupled_rates", "couple_step_switch",
    "run_coupled", "couple_paths", "CouplingRecord", "estimate_Wf", "WfEstimate",
    "bihari_bound", "feller_bound", "run_coupled_ensemble",
]
