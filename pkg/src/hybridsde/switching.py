"""Discrete-component machinery: interval tables, the jump function ``h``,
switching clocks and post-switch regime sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MajorantViolated
from .model import ModelSpec

BEYOND_HORIZON = math.inf


@dataclass(frozen=True)
class IntervalTable:
    """Breakpoints of the intervals ``Delta_kl(x)`` that tile ``[0, q_k(x))``.

    Targets are visited in the order ``l = 1, 2, ..., M`` skipping ``k``;
    ``breaks[i]`` is the right end of the interval of ``targets[i]``.
    """

    k: int
    targets: np.ndarray
    widths: np.ndarray
    breaks: np.ndarray

    @property
    def total(self) -> float:
        return float(self.breaks[-1]) if self.breaks.size else 0.0

    @classmethod
    def from_rates(cls, k: int, row) -> "IntervalTable":
        row = np.asarray(row, dtype=float)
        targets = np.array([l for l in range(1, row.size + 1) if l != k], dtype=np.int64)
        widths = row[targets - 1]
        return cls(k, targets, widths, np.cumsum(widths))

    @classmethod
    def build(cls, model: ModelSpec, x, k: int) -> "IntervalTable":
        row = model.rate_matrix(np.asarray(x, dtype=float)[None, :], [k])[0]
        return cls.from_rates(k, row)

    def interval(self, l: int) -> tuple[float, float]:
        i = int(np.nonzero(self.targets == l)[0][0])
        lo = float(self.breaks[i - 1]) if i else 0.0
        return lo, float(self.breaks[i])


def h_eval(table: IntervalTable, r: float) -> int:
    """Displacement ``l - k`` for the interval containing ``r``; 0 past ``q_k``.

    Intervals are closed on the left, so a point sitting exactly on a
    breakpoint belongs to the next target.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    i = int(np.searchsorted(table.breaks, r, side="right"))
    if i >= table.targets.size:
        return 0
    return int(table.targets[i]) - table.k


def _pick_targets(rates: np.ndarray, k: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Vectorised ``k + h(x, k, U q_k)``; rows with ``q_k = 0`` keep ``k``."""
    q = rates.copy()
    q[np.arange(len(k)), k - 1] = 0.0
    cum = np.cumsum(q, axis=1)
    total = cum[:, -1]
    r = uniforms * total
    # closed-left intervals: first column whose cumulative sum exceeds r
    idx = (cum <= r[:, None]).sum(axis=1)
    idx = np.minimum(idx, q.shape[1] - 1)
    # skip zero-width columns landing on the diagonal through rounding
    out = idx + 1
    bad = (q[np.arange(len(k)), idx] == 0.0) & (total > 0)
    if np.any(bad):
        for i in np.nonzero(bad)[0]:
            nz = np.nonzero(q[i] > 0)[0]
            out[i] = nz[np.searchsorted(np.cumsum(q[i, nz]), r[i], side="right").clip(max=nz.size - 1)] + 1
    return np.where(total > 0, out, k)


def sample_post_switch(model: ModelSpec, x, k: int, rng: np.random.Generator) -> int:
    """New regime after a switch fired at ``X(tau-) = x`` from regime ``k``."""
    rates = model.rate_matrix(np.asarray(x, dtype=float)[None, :], [k])
    return int(_pick_targets(rates, np.array([k]), rng.random(1))[0])


@dataclass(frozen=True)
class SwitchEvent:
    tau: float
    src: int
    dst: int
    x_pre: tuple
    residual: float

    def as_dict(self):
        return {"tau": self.tau, "from": self.src, "to": self.dst,
                "x_pre": list(self.x_pre), "residual": self.residual}


def next_switch_time(model: ModelSpec, times, xs, k: int, rng: np.random.Generator,
                     mode: str = "clock", majorant: float | None = None) -> float:
    """Holding time in regime ``k`` along a precomputed segment ``(times, xs)``.

    ``clock`` integrates ``q_k`` with the trapezoid rule and inverts the
    crossing of an Exp(1) level linearly inside the step.  ``thinning``
    proposes candidates at rate ``majorant`` and accepts with probability
    ``q_k(X(t))/majorant``, with ``X`` piecewise constant between grid nodes.
    Returns ``BEYOND_HORIZON`` when no switch fires before ``times[-1]``.
    """
    times = np.asarray(times, dtype=float)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    q = model.total_rate(xs, np.full(len(times), k))
    t0 = times[0]
    if mode == "clock":
        xi = rng.exponential()
        acc = np.concatenate([[0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * np.diff(times))])
        i = int(np.searchsorted(acc, xi, side="right"))
        if i >= len(times):
            return BEYOND_HORIZON
        frac = (xi - acc[i - 1]) / (acc[i] - acc[i - 1])
        return float(times[i - 1] + frac * (times[i] - times[i - 1]) - t0)
    if mode == "thinning":
        if majorant is None or majorant <= 0:
            if np.all(q == 0):
                return BEYOND_HORIZON
            raise ValueError("thinning needs a positive majorant")
        t = t0
        while True:
            t += rng.exponential(1.0 / majorant)
            if t >= times[-1]:
                return BEYOND_HORIZON
            j = int(np.searchsorted(times, t, side="right")) - 1
            if q[j] > majorant * (1 + 1e-12):
                raise MajorantViolated(f"q_k={q[j]:.6g} exceeds majorant {majorant:.6g}")
            if rng.random() * majorant < q[j]:
                return float(t - t0)
    raise ValueError(f"unknown switching mode {mode!r}")
