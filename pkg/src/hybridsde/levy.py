"""Radially symmetric Levy measures on a punctured ball of R^d.

The measure is ``nu(du) = rho(|u|) du`` on ``U = {0 < |u| < r_max}``.  Only
the large jumps ``|u| > eps`` are simulated (compound Poisson); the small
jumps and their compensator are dropped together.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DivergentMass, QuadratureFailure

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-12


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in R^dim (2 points for dim=1)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def _quad(fn, lo, hi, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fn, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                                      limit=500, **kw)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    return val, err


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Radial-density Levy measure.

    Parameters
    ----------
    dim : int
    r_max : float
        Outer radius of the mark space.
    radial_density : callable
        ``rho(r)``, vectorised over ``r``.
    small_jump_cutoff : float
        Jumps with ``|u| <= eps`` are not simulated.
    power : tuple (C, beta), optional
        Declares ``rho(r) = C r**(-beta)`` so that radii can be sampled by an
        exact inverse CDF.  Without it a tabulated inverse CDF is used.
    """

    dim: int
    r_max: float
    radial_density: Callable
    small_jump_cutoff: float
    power: tuple | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not (0.0 < self.small_jump_cutoff <= self.r_max):
            raise ValueError("need 0 < small_jump_cutoff <= r_max")

    @property
    def eps(self) -> float:
        return self.small_jump_cutoff

    def radial_weight(self, r):
        """Density of ``|u|`` under ``nu``: ``S_{d-1} r^{d-1} rho(r)``."""
        r = np.asarray(r, dtype=float)
        return sphere_area(self.dim) * r ** (self.dim - 1) * self.radial_density(r)

    def radial_moment(self, p: float, lo: float = 0.0, hi: float | None = None) -> float:
        """``int_{lo < |u| <= hi} |u|^p nu(du)`` by adaptive quadrature (cached)."""
        hi = self.r_max if hi is None else hi
        key = ("moment", float(p), float(lo), float(hi))
        if key not in self._cache:
            if hi <= lo:
                self._cache[key] = 0.0
            else:
                val, _ = _quad(lambda r: r ** p * float(self.radial_weight(r)), lo, hi)
                self._cache[key] = val
        return self._cache[key]

    @property
    def mass_above_eps(self) -> float:
        return self.radial_moment(0.0, self.eps)

    @property
    def second_moment(self) -> float:
        return self.radial_moment(2.0, 0.0)

    def with_cutoff(self, eps: float) -> "LevyMeasureSpec":
        return LevyMeasureSpec(self.dim, self.r_max, self.radial_density, eps, self.power)

    # -- sampling ---------------------------------------------------------
    def sample_radius(self, uniforms: np.ndarray, eps: float | None = None) -> np.ndarray:
        """Map U(0,1) draws to radii distributed as ``nu`` restricted to (eps, r_max]."""
        eps = self.eps if eps is None else eps
        u = np.asarray(uniforms, dtype=float)
        if self.power is not None:
            _, beta = self.power
            a = self.dim - beta  # radial law proportional to r^(a-1)
            if abs(a) < 1e-14:
                return eps * (self.r_max / eps) ** u
            lo, hi = eps ** a, self.r_max ** a
            return (lo + u * (hi - lo)) ** (1.0 / a)
        grid, cdf = self._tabulated_cdf(eps)
        return np.interp(u, cdf, grid)

    def _tabulated_cdf(self, eps: float):
        key = ("cdf", float(eps))
        if key not in self._cache:
            grid = np.geomspace(eps, self.r_max, 2049)
            pieces = [self.radial_moment(0.0, a, b) for a, b in zip(grid[:-1], grid[1:])]
            cdf = np.concatenate([[0.0], np.cumsum(pieces)])
            if cdf[-1] <= 0.0:
                raise DivergentMass("no mass above the cutoff to sample from")
            self._cache[key] = (grid, cdf / cdf[-1])
        return self._cache[key]

    def sample_marks(self, count: int, rng: np.random.Generator, eps: float | None = None):
        """Draw ``count`` marks from the normalised restriction of ``nu`` to |u| > eps."""
        r = self.sample_radius(rng.random(count), eps)
        if self.dim == 1:
            direction = np.where(rng.random(count) < 0.5, -1.0, 1.0)[:, None]
        else:
            g = rng.standard_normal((count, self.dim))
            direction = g / np.linalg.norm(g, axis=1, keepdims=True)
        return r[:, None] * direction


def power_law_levy(dim: int, alpha: float, r_max: float = 1.0, eps: float = 0.1,
                   scale: float = 1.0) -> LevyMeasureSpec:
    """``nu(du) = scale * du / |u|^(d + alpha)`` on ``0 < |u| < r_max``."""
    beta = dim + alpha
    return LevyMeasureSpec(dim, r_max, lambda r: scale * np.asarray(r, dtype=float) ** (-beta),
                           eps, power=(scale, beta))


def uniform_ball_levy(dim: int, intensity: float, r_max: float = 1.0,
                      eps: float = 1e-9) -> LevyMeasureSpec:
    """Finite measure with total mass ``intensity`` spread uniformly on the ball."""
    vol = sphere_area(dim) * r_max ** dim / dim
    c = intensity / vol
    return LevyMeasureSpec(dim, r_max, lambda r: np.full_like(np.asarray(r, dtype=float), c),
                           eps, power=(c, 0.0))


def no_jumps(dim: int) -> LevyMeasureSpec:
    return LevyMeasureSpec(dim, 1.0, lambda r: np.zeros_like(np.asarray(r, dtype=float)),
                           1.0, power=None)


@dataclass(frozen=True)
class LevyDecomposition:
    eps: float
    intensity: float
    levy: LevyMeasureSpec
    small_jump_first_moment: np.ndarray
    note: str

    def sample_marks(self, count, rng):
        return self.levy.sample_marks(count, rng, self.eps)


def levy_decompose(levy: LevyMeasureSpec | None, eps: float | None = None) -> LevyDecomposition:
    """Split ``nu`` at ``eps`` into a simulated compound-Poisson part and a dropped part."""
    if levy is None:
        raise ValueError("levy measure required")
    eps = levy.eps if eps is None else float(eps)
    if not (0.0 < eps <= levy.r_max):
        raise ValueError("need 0 < eps <= r_max")
    lam = levy.radial_moment(0.0, eps) if eps < levy.r_max else 0.0
    if not math.isfinite(lam):
        raise DivergentMass(f"mass above eps={eps} is not finite")
    note = ("small jumps |u| <= eps dropped together with their compensator; the "
            "retained jumps are compensated exactly by -int_{|u|>eps} c nu(du) per step. "
            "For radial nu the first moment of the dropped part is zero.")
    return LevyDecomposition(eps, lam, levy.with_cutoff(eps), np.zeros(levy.dim), note)


@lru_cache(maxsize=64)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def radial_rule(levy: LevyMeasureSpec, lo: float, hi: float, panels: int = 48,
                order: int = 8, floor: float = 1e-12):
    """Composite Gauss-Legendre rule on log-spaced panels for ``int_lo^hi g(r) |u|-law``.

    Returns radii ``r`` and weights ``w`` such that
    ``sum(w * g(r)) ~= int_{lo<|u|<=hi} g(|u|) nu(du)`` for smooth ``g``.
    A lower limit of zero is replaced by ``floor * hi``.
    """
    key = ("rule", float(lo), float(hi), panels, order, floor)
    if key in levy._cache:
        return levy._cache[key]
    lo_eff = max(lo, floor * hi)
    if hi <= lo_eff:
        out = (np.zeros(0), np.zeros(0))
    else:
        edges = np.geomspace(lo_eff, hi, panels + 1)
        x, w = _gauss_legendre(order)
        a, b = edges[:-1, None], edges[1:, None]
        r = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
        wr = 0.5 * (b - a) * w[None, :]
        r, wr = r.ravel(), wr.ravel()
        out = (r, wr * levy.radial_weight(r))
    levy._cache[key] = out
    return out


def direction_set(dim: int, isotropic: bool, count: int = 24) -> np.ndarray:
    """Deterministic antipodally-paired unit vectors; one vector if c is radial."""
    if isotropic:
        e = np.zeros((1, dim))
        e[0, 0] = 1.0
        return e
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    half = count // 2
    i = np.arange(half) + 0.5
    if dim == 3:
        phi = np.arccos(1 - 2 * i / half)
        theta = np.pi * (1 + 5 ** 0.5) * i
        v = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], 1)
    else:
        v = np.random.default_rng(12345).standard_normal((half, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.concatenate([v, -v])
