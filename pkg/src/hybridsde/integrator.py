"""Euler-Maruyama simulation of the hybrid process by interlacing.

Paths are advanced in vectorised batches.  Every path carries its own clock:
a segment in regime ``k`` is stepped with step ``dt`` until the integrated
switching rate crosses an Exp(1) level (or a thinning candidate is
accepted); the crossing step is cut back to the switching time with a
Brownian bridge, the regime is resampled, and the grid restarts at the
switching time.  ``x`` is continuous across switches, only ``k`` jumps.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import AllPathsTruncated, MajorantViolated, NonFiniteState
from .levy import levy_decompose
from .model import ModelSpec
from .rng import Streams, as_streams, chunk_sizes
from .switching import SwitchEvent, _pick_targets


@dataclass
class IntegratorConfig:
    dt: float = 1e-3
    T: float = 1.0
    R_max: float = 1e3
    eps: float | None = None
    seed: int = 0
    switching: str = "clock"
    majorant: float | Callable | None = None
    chunk_size: int = 8192
    threads: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0 and self.R_max > 0):
            raise ValueError("dt, T and R_max must be positive")
        if self.switching not in ("clock", "thinning"):
            raise ValueError("switching must be 'clock' or 'thinning'")
        if self.switching == "thinning" and self.majorant is None:
            raise ValueError("thinning needs a majorant")

    def replace(self, **kw) -> "IntegratorConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return IntegratorConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if callable(d["majorant"]):
            d["majorant"] = getattr(self.majorant, "description", "callable")
        return d

    def qbar(self, k: np.ndarray) -> np.ndarray:
        if callable(self.majorant):
            return np.asarray(self.majorant(k), dtype=float)
        return np.full(len(k), float(self.majorant))


def regime_majorant(H: float):
    """Majorant ``q_k <= H k``."""
    def f(k):
        return H * np.asarray(k, dtype=float)
    f.description = f"H*k with H={H!r}"
    return f


@dataclass
class JumpEvent:
    time: float
    mark: tuple
    displacement: tuple


@dataclass
class PathRecord:
    """One simulated trajectory on its own (switch-restarted) time grid."""

    times: np.ndarray
    xs: np.ndarray
    ks: np.ndarray
    switches: list
    jumps: list
    termination: str
    seed_lineage: dict
    config: dict = field(default_factory=dict)

    def check_invariants(self, atol: float = 0.0) -> None:
        """Regime constant between switches, switch times increasing, x continuous."""
        taus = [e.tau for e in self.switches]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise AssertionError("switch times must strictly increase")
        if np.any(np.diff(self.times) <= 0):
            raise AssertionError("grid times must strictly increase")
        changes = np.nonzero(np.diff(self.ks) != 0)[0] + 1
        real = [e for e in self.switches if e.dst != e.src]
        if len(changes) != len(real):
            raise AssertionError("regime changes without a switch event")
        for i, e in zip(changes, real):
            if self.times[i] != e.tau or self.ks[i] != e.dst or self.ks[i - 1] != e.src:
                raise AssertionError("regime change does not match switch event")
            if not np.allclose(self.xs[i], e.x_pre, atol=atol, rtol=0):
                raise AssertionError("x jumps across a switch")


@dataclass
class BatchResult:
    """Final and checkpoint states of a batch of paths."""

    x: np.ndarray
    k: np.ndarray
    t: np.ndarray
    n_switches: np.ndarray
    truncated: np.ndarray
    dead: np.ndarray
    death_time: np.ndarray
    checkpoints: np.ndarray
    ck_x: np.ndarray
    ck_k: np.ndarray
    ck_logw: np.ndarray
    ck_alive: np.ndarray
    ck_nsw: np.ndarray
    bins: np.ndarray | None
    martingale: np.ndarray | None
    first_switch: np.ndarray
    records: list | None = None
    partition: list | None = None

    @property
    def n(self) -> int:
        return len(self.k)

    @staticmethod
    def concat(parts: list["BatchResult"]) -> "BatchResult":
        def cat(name, axis=0):
            vals = [getattr(p, name) for p in parts]
            if vals[0] is None:
                return None
            return np.concatenate(vals, axis=axis)

        recs = None
        if parts[0].records is not None:
            recs = [r for p in parts for r in p.records]
        return BatchResult(
            x=cat("x"), k=cat("k"), t=cat("t"), n_switches=cat("n_switches"),
            truncated=cat("truncated"), dead=cat("dead"), death_time=cat("death_time"),
            checkpoints=parts[0].checkpoints, ck_x=cat("ck_x", 1), ck_k=cat("ck_k", 1),
            ck_logw=cat("ck_logw", 1), ck_alive=cat("ck_alive", 1), ck_nsw=cat("ck_nsw", 1),
            bins=cat("bins"), martingale=cat("martingale"), first_switch=cat("first_switch"),
            records=recs, partition=[p.n for p in parts],
        )


def _sum_rows(values: np.ndarray, owner: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, values.shape[1]))
    for j in range(values.shape[1]):
        out[:, j] = np.bincount(owner, weights=values[:, j], minlength=n)
    return out


def run_batch(model: ModelSpec, x0, k0, cfg: IntegratorConfig, streams: Streams, *,
              t_end: float | None = None, checkpoints=(), switching: bool = True,
              hard_kill: bool = False, kill_weight: bool = False, record: bool = False,
              integrand: Callable | None = None, n_bins: int = 1,
              track_martingale: bool = False) -> BatchResult:
    """Advance a batch of paths from ``(x0, k0)`` to ``t_end``.

    Parameters
    ----------
    switching : bool
        ``False`` freezes the regime (segment / killed-process simulation).
    hard_kill : bool
        Stop each path at its first switch and mark it dead (cemetery).
    kill_weight : bool
        Accumulate ``log w = int_0^t q_kk(X(s)) ds`` by the trapezoid rule.
    integrand : callable, optional
        ``g(t, x, k, logw) -> (n,)``; its time integral is accumulated per path,
        split into ``n_bins`` bins by the number of switches so far (the last
        bin collects everything beyond).
    track_martingale : bool
        Accumulate the Euler martingale increments (Brownian plus compensated
        retained jumps), whose expectation is zero.
    """
    t_end = cfg.T if t_end is None else float(t_end)
    k0 = np.atleast_1d(np.asarray(k0, dtype=np.int64))
    n = k0.size
    d = model.dim
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (n, d)), dtype=float)
    k = k0.copy()
    if np.any(k < 1) or np.any(k > model.regime_cap):
        raise ValueError("initial regime outside 1..M")
    t = np.zeros(n)
    ck = np.array(sorted(set(float(c) for c in checkpoints)), dtype=float)
    if ck.size and (ck[0] < 0 or ck[-1] > t_end):
        raise ValueError("checkpoints must lie in [0, t_end]")
    stops = np.array(sorted(set(ck.tolist()) | {t_end}))
    ck_pos = {v: i for i, v in enumerate(ck.tolist())}
    n_ck = ck.size
    ck_x = np.full((n_ck, n, d), np.nan)
    ck_k = np.zeros((n_ck, n), dtype=np.int64)
    ck_logw = np.full((n_ck, n), np.nan)
    ck_alive = np.zeros((n_ck, n), dtype=bool)
    ck_nsw = np.zeros((n_ck, n), dtype=np.int64)

    mode = cfg.switching if switching else None
    need_q = mode is not None or kill_weight
    jumps = model.has_jumps and not model.frozen
    if jumps:
        decomp = levy_decompose(model.levy, cfg.eps)
        lam, eps = decomp.intensity, decomp.eps
    else:
        lam, eps = 0.0, None

    q_cur = model.total_rate(x, k) if need_q else None
    xi = acc = cand = None
    if mode == "clock":
        xi = streams.xi.exponential(size=n)
        acc = np.zeros(n)
    elif mode == "thinning":
        qb = cfg.qbar(k)
        cand = np.where(qb > 0, streams.xi.exponential(size=n) / np.where(qb > 0, qb, 1.0), np.inf)
    logw = np.zeros(n)
    n_sw = np.zeros(n, dtype=np.int64)
    first_switch = np.full(n, np.inf)
    truncated = np.zeros(n, dtype=bool)
    dead = np.zeros(n, dtype=bool)
    death_time = np.full(n, np.inf)
    bins = np.zeros((n, n_bins)) if integrand is not None else None
    g_cur = integrand(t, x, k, logw) if integrand is not None else None
    mart = np.zeros((n, d)) if track_martingale else None
    records = None
    if record:
        records = [{"t": [0.0], "x": [x[i].copy()], "k": [int(k[i])], "sw": [], "jumps": []}
                   for i in range(n)]

    stop_idx = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)

    def hit_stops(sel):
        """Record checkpoints for paths in ``sel`` sitting exactly on their next stop."""
        for i in sel:
            s = stops[stop_idx[i]]
            if s in ck_pos:
                c = ck_pos[s]
                ck_x[c, i] = x[i]
                ck_k[c, i] = k[i]
                ck_logw[c, i] = logw[i]
                ck_alive[c, i] = not dead[i]
                ck_nsw[c, i] = n_sw[i]
            stop_idx[i] += 1
            if s >= t_end:
                active[i] = False

    if stops[0] == 0.0:
        hit_stops(range(n))

    sqrt = np.sqrt
    # rates are constant along a frozen path, so one step per stop is exact
    # unless a time integrand has to be resolved on the grid
    step = math.inf if (model.frozen and integrand is None) else cfg.dt
    while active.any():
        idx = np.flatnonzero(active)
        m = idx.size
        ts = t[idx]
        nxt = stops[stop_idx[idx]]
        te = np.where(nxt <= ts + step * (1 + 1e-9), nxt, ts + step)
        at_cand = np.zeros(m, dtype=bool)
        if mode == "thinning":
            cs = cand[idx]
            at_cand = cs <= te
            te = np.where(at_cand, cs, te)
        h = te - ts
        xs = x[idx]
        ks = k[idx]

        # -- Euler-Maruyama step -------------------------------------------
        if model.frozen:
            x_new = xs.copy()
            drift = sig = dW = None
            inc = np.zeros((m, d))
        else:
            drift = model.drift(xs, ks)
            if jumps:
                drift = drift - model.drift_compensator(xs, ks, eps)
            sig = model.diffusion(xs, ks)
            Z = streams.w.standard_normal((m, d))
            dW = Z * sqrt(h)[:, None]
            inc = np.einsum("nij,nj->ni", sig, dW)
            owner = None
            if lam > 0:
                counts = streams.n.poisson(lam * h)
                J = int(counts.sum())
                owner = np.repeat(np.arange(m), counts)
                if J:
                    u = decomp.sample_marks(J, streams.n)
                    frac = streams.n.random(J)
                    cj = model.jump_coeff(xs[owner], ks[owner], u)
                    inc = inc + _sum_rows(cj, owner, m)
                else:
                    u = frac = cj = np.zeros((0, d))
                if jumps:
                    comp_h = model.drift_compensator(xs, ks, eps) * h[:, None]
            x_new = xs + drift * h[:, None] + inc
            if jumps and lam > 0:
                inc = inc - comp_h
            if not np.all(np.isfinite(x_new)):
                raise NonFiniteState("state became NaN or infinite")

        # -- switching -------------------------------------------------------
        crossed = np.zeros(m, dtype=bool)
        phi = np.ones(m)
        q_new = model.total_rate(x_new, ks) if need_q else None
        if mode == "clock":
            a0 = acc[idx]
            a1 = a0 + 0.5 * (q_cur[idx] + q_new) * h
            crossed = a1 > xi[idx]
            if crossed.any():
                phi[crossed] = (xi[idx][crossed] - a0[crossed]) / (a1[crossed] - a0[crossed])
            acc[idx] = a1
        elif mode == "thinning" and at_cand.any():
            qb = cfg.qbar(ks[at_cand])
            if np.any(q_new[at_cand] > qb * (1 + 1e-12)):
                raise MajorantViolated("switching rate above the thinning majorant")
            accept = streams.xi.random(int(at_cand.sum())) * qb < q_new[at_cand]
            crossed[np.flatnonzero(at_cand)[accept]] = True
            rej = np.flatnonzero(at_cand)[~accept]
            if rej.size:
                qr = cfg.qbar(ks[rej])
                cand[idx[rej]] = te[rej] + streams.xi.exponential(size=rej.size) / qr

        bridge = np.flatnonzero(crossed & (phi < 1.0))
        if bridge.size:
            te[bridge] = ts[bridge] + phi[bridge] * h[bridge]
            if not model.frozen:
                pb, hb = phi[bridge], h[bridge]
                Z2 = streams.w.standard_normal((bridge.size, d))
                dWb = pb[:, None] * dW[bridge] + sqrt(pb * (1 - pb) * hb)[:, None] * Z2
                inc_b = np.einsum("nij,nj->ni", sig[bridge], dWb)
                if lam > 0 and owner is not None and owner.size:
                    pos = np.full(m, -1)
                    pos[bridge] = np.arange(bridge.size)
                    keep = (pos[owner] >= 0) & (frac < phi[owner])
                    if keep.any():
                        inc_b = inc_b + _sum_rows(cj[keep], pos[owner[keep]], bridge.size)
                x_new[bridge] = xs[bridge] + drift[bridge] * (pb * hb)[:, None] + inc_b
                if jumps and lam > 0:
                    inc_b = inc_b - comp_h[bridge] * pb[:, None]
                inc[bridge] = inc_b
            h = te - ts

        if kill_weight:
            q_end = q_new
            if bridge.size and not model.frozen:
                q_end = q_new.copy()
                q_end[bridge] = model.total_rate(x_new[bridge], ks[bridge])
            logw[idx] -= 0.5 * (q_cur[idx] + q_end) * h
            q_new = q_end

        # -- bookkeeping -----------------------------------------------------
        t[idx] = te
        x[idx] = x_new
        if mart is not None:
            mart[idx] += inc
        if integrand is not None:
            g_end = integrand(te, x_new, ks, logw[idx])
            b_i = np.minimum(n_sw[idx], n_bins - 1)
            bins[idx, b_i] += 0.5 * (g_cur[idx] + g_end) * h
            g_cur[idx] = g_end
        if need_q:
            q_cur[idx] = q_new

        norm = np.linalg.norm(x_new, axis=1)
        trunc = norm > cfg.R_max
        if trunc.any():
            truncated[idx[trunc]] = True
            active[idx[trunc]] = False
            crossed &= ~trunc

        sw = np.flatnonzero(crossed)
        if record:
            _record_step(records, idx, ts, h, te, x_new, ks, crossed, phi,
                         owner if (not model.frozen and lam > 0) else None,
                         u if (not model.frozen and lam > 0) else None,
                         frac if (not model.frozen and lam > 0) else None,
                         cj if (not model.frozen and lam > 0) else None)
        if sw.size:
            gi = idx[sw]
            rows = model.rate_matrix(x_new[sw], ks[sw])
            new_k = _pick_targets(rows, ks[sw], streams.xi.random(sw.size))
            first_switch[gi] = np.minimum(first_switch[gi], te[sw])
            if record:
                for j, i in enumerate(gi):
                    rec = records[i]
                    residual = float(xi[i]) if mode == "clock" else 0.0
                    rec["sw"].append(SwitchEvent(float(te[sw][j]), int(ks[sw][j]), int(new_k[j]),
                                                 tuple(float(v) for v in x_new[sw][j]), residual))
            if hard_kill:
                dead[gi] = True
                death_time[gi] = te[sw]
                active[gi] = False
            else:
                k[gi] = new_k
                n_sw[gi] += 1
                if need_q:
                    q_cur[gi] = model.total_rate(x_new[sw], new_k)
                if mode == "clock":
                    xi[gi] = streams.xi.exponential(size=sw.size)
                    acc[gi] = 0.0
                else:
                    qb = cfg.qbar(new_k)
                    cand[gi] = te[sw] + np.where(
                        qb > 0, streams.xi.exponential(size=sw.size) / np.where(qb > 0, qb, 1.0),
                        np.inf)
                if integrand is not None:
                    g_cur[gi] = integrand(te[sw], x_new[sw], new_k, logw[gi])
                if record:
                    for j, i in enumerate(gi):
                        records[i]["k"][-1] = int(new_k[j])

        on_stop = (te == nxt) & active[idx]
        if on_stop.any():
            hit_stops(idx[on_stop])

    if records is not None:
        for i, rec in enumerate(records):
            rec["termination"] = "truncated-at-R_max" if truncated[i] else (
                "killed" if dead[i] else "completed")
    return BatchResult(
        x=x, k=k, t=t, n_switches=n_sw, truncated=truncated, dead=dead, death_time=death_time,
        checkpoints=ck, ck_x=ck_x, ck_k=ck_k, ck_logw=ck_logw, ck_alive=ck_alive, ck_nsw=ck_nsw,
        bins=bins, martingale=mart, first_switch=first_switch, records=records, partition=[n],
    )


def _record_step(records, idx, ts, h, te, x_new, ks, crossed, phi, owner, u, frac, cj):
    if owner is not None and owner.size:
        for j in range(owner.size):
            p = owner[j]
            if crossed[p] and frac[j] >= phi[p]:
                continue
            hp = h[p] / phi[p] if crossed[p] and phi[p] < 1 else h[p]
            records[idx[p]]["jumps"].append(JumpEvent(float(ts[p] + frac[j] * hp),
                                                      tuple(float(v) for v in u[j]),
                                                      tuple(float(v) for v in cj[j])))
    for j, i in enumerate(idx):
        rec = records[i]
        rec["t"].append(float(te[j]))
        rec["x"].append(x_new[j].copy())
        rec["k"].append(int(ks[j]))


def _to_path_record(rec: dict, lineage: dict, cfg: IntegratorConfig) -> PathRecord:
    return PathRecord(np.array(rec["t"]), np.array(rec["x"]), np.array(rec["k"], dtype=np.int64),
                      rec["sw"], sorted(rec["jumps"], key=lambda e: e.time), rec["termination"],
                      lineage, cfg.to_dict())


def simulate_segment(model: ModelSpec, x0, k: int, t_end: float, cfg: IntegratorConfig,
                     rng=None) -> PathRecord:
    """One frozen-regime segment of the jump diffusion on ``[0, t_end]``."""
    streams = as_streams(rng, cfg.seed)
    out = run_batch(model, np.asarray(x0, float)[None, :], [k], cfg, streams, t_end=t_end,
                    switching=False, record=True)
    return _to_path_record(out.records[0], streams.lineage, cfg)


def simulate_hybrid(model: ModelSpec, x0, k0: int, cfg: IntegratorConfig, rng=None) -> PathRecord:
    """Full interlaced path of ``(X, Lambda)`` on ``[0, cfg.T]``."""
    streams = as_streams(rng, cfg.seed)
    out = run_batch(model, np.asarray(x0, float)[None, :], [k0], cfg, streams, record=True)
    return _to_path_record(out.records[0], streams.lineage, cfg)


def run_ensemble(model: ModelSpec, x0, k0, cfg: IntegratorConfig, n_paths: int,
                 stream_prefix: tuple = (), **kw) -> BatchResult:
    """Run ``n_paths`` paths split into chunks with independent streams.

    Chunk ``c`` uses streams keyed by ``(cfg.seed, *stream_prefix, c)``, so
    the result is reproducible for a fixed ``chunk_size`` whatever the
    number of worker threads.
    """
    sizes = chunk_sizes(n_paths, cfg.chunk_size)
    k0 = int(k0) if np.ndim(k0) == 0 else k0
    x0 = np.asarray(x0, dtype=float)

    def job(c):
        streams = Streams.from_seed(cfg.seed, c, *stream_prefix)
        kk = np.full(sizes[c], k0, dtype=np.int64) if np.ndim(k0) == 0 else \
            np.asarray(k0)[sum(sizes[:c]):sum(sizes[:c + 1])]
        xx = x0 if x0.ndim == 1 else x0[sum(sizes[:c]):sum(sizes[:c + 1])]
        return run_batch(model, xx, kk, cfg, streams, **kw)

    if cfg.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(c) for c in range(len(sizes))]
    out = BatchResult.concat(parts)
    out.partition = sizes
    return out


def mean_se(values) -> tuple[float, float]:
    """Order-independent mean and standard error (compensated summation)."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(v) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass
class EnsembleResult:
    mean: float
    se: float
    n: int
    truncated_count: int
    valid: bool
    values: np.ndarray | None = None
    partition: list | None = None

    def to_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se, "n": self.n,
                "truncated_count": self.truncated_count, "valid": self.valid}


def ensemble(model: ModelSpec, x0, k0: int, cfg: IntegratorConfig, n_paths: int,
             statistic: Callable, truncation_invalidates: bool = True,
             keep_values: bool = False, **kw) -> EnsembleResult:
    """Monte Carlo mean and standard error of ``statistic(batch) -> (n,)``.

    Truncated paths are excluded from the average and counted; when
    ``truncation_invalidates`` is set the estimate is flagged invalid if any
    path was truncated.
    """
    if n_paths < 2:
        raise ValueError("an ensemble needs at least two paths")
    out = run_ensemble(model, x0, k0, cfg, n_paths, **kw)
    vals = np.asarray(statistic(out), dtype=float)
    ok = ~out.truncated
    n_tr = int(out.truncated.sum())
    if not ok.any():
        raise AllPathsTruncated(f"all {n_paths} paths left the ball of radius {cfg.R_max}")
    mean, se = mean_se(vals[ok])
    return EnsembleResult(mean, se, int(ok.sum()), n_tr,
                          valid=not (truncation_invalidates and n_tr > 0),
                          values=vals if keep_values else None, partition=out.partition)
