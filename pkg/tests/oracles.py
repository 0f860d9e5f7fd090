"""Reference values computed independently of the package.

Everything here is either a closed form, a scipy quadrature or plain linear
algebra; nothing imports ``hybridsde``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, linalg


def example1_weight(x) -> float:
    r2 = float(np.dot(x, x))
    return r2 / (1.0 + r2)


def example1_Q(x, M: int) -> np.ndarray:
    """Truncated generator with ``q_kl = k 2^-l |x|^2/(1+|x|^2)``, super-M mass dropped."""
    g = example1_weight(np.asarray(x, dtype=float))
    Q = np.zeros((M, M))
    for k in range(1, M + 1):
        for l in range(1, M + 1):
            if l != k:
                Q[k - 1, l - 1] = k * g / 2.0 ** l
        Q[k - 1, k - 1] = -Q[k - 1].sum()
    return Q


def geometric_Q(kappa_prime: float, M: int) -> np.ndarray:
    """``q_kl = kappa' l 3^-l`` for every row."""
    Q = np.zeros((M, M))
    for k in range(M):
        for l in range(M):
            if l != k:
                Q[k, l] = kappa_prime * (l + 1) * 3.0 ** -(l + 1)
        Q[k, k] = -Q[k].sum()
    return Q


def transition_law(Q: np.ndarray, t: float) -> np.ndarray:
    return linalg.expm(t * Q)


def radial_second_moment(alpha: float) -> float:
    """``int_{|u|<1} |u|^2 du / |u|^{3+alpha}`` in three dimensions, by quadrature."""
    val, _ = integrate.quad(lambda r: 4 * math.pi * r ** (1 - alpha), 0.0, 1.0,
                            epsabs=0, epsrel=1e-13, limit=200)
    return val


def gamma_closed(alpha: float) -> float:
    return math.sqrt((2 - alpha) / (8 * math.pi))


def mass_above(alpha: float, eps: float) -> float:
    val, _ = integrate.quad(lambda r: 4 * math.pi * r ** (-1 - alpha), eps, 1.0,
                            epsabs=0, epsrel=1e-13, limit=200)
    return val


def mass_above_closed(alpha: float, eps: float) -> float:
    return 4 * math.pi * (eps ** -alpha - 1) / alpha


def growth_rhs(x, k: int) -> float:
    """Closed form of ``2<x,b> + |sigma|^2 + int |c|^2 dnu`` for the 3-d example."""
    a = np.abs(np.asarray(x, dtype=float))
    return float(-16 * k / 9 * np.sum(a ** 4) - np.sum(a ** (4 / 3))
                 + math.sqrt(2) * np.sum(a ** (2 / 3)) + 3)


def matrix_resolvent(Q: np.ndarray, alpha: float, f) -> np.ndarray:
    """``(alpha I - Q)^{-1} f`` for a finite generator."""
    return np.linalg.solve(alpha * np.eye(Q.shape[0]) - Q, np.asarray(f, dtype=float))


def psi_nested(Q: np.ndarray, alpha: float, f, i: int) -> np.ndarray:
    """Series term ``psi_i`` for a motionless chain by nested quadrature.

    ``psi_0(k) = int e^{-(a+q_k)t} f(k) dt`` and
    ``psi_i(k) = int e^{-(a+q_k)t} sum_{l!=k} q_kl psi_{i-1}(l) dt``.
    """
    M = Q.shape[0]
    q = -np.diag(Q)
    prev = np.asarray(f, dtype=float)
    for level in range(i + 1):
        if level == 0:
            src = prev
        else:
            off = Q - np.diag(np.diag(Q))
            src = off @ prev
        cur = np.empty(M)
        for k in range(M):
            val, _ = integrate.quad(lambda t: math.exp(-(alpha + q[k]) * t) * src[k], 0, np.inf,
                                    epsabs=1e-14, epsrel=1e-12)
            cur[k] = val
        prev = cur
    return prev


def bihari_linear(r0: float, t: float, kappa: float) -> float:
    """``G^{-1}(G(F(r0)) + 2 kappa t)`` for ``rho(r) = r``, i.e. ``F(r0) e^{2 kappa t}``."""
    return r0 / (1 + r0) * math.exp(2 * kappa * t)


def constant_kill_resolvent(alpha: float, c: float) -> float:
    return 1.0 / (alpha + c)


def example1_total_rate(x, k: int, M: int) -> float:
    g = example1_weight(np.asarray(x, dtype=float))
    return math.fsum(k * g / 2.0 ** l for l in range(1, M + 1) if l != k)
