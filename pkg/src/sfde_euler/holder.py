"""Hölder seminorms, Young Riemann sums and discrete two-parameter norms.

All norms here are maxima over grid points. They are lower bounds for the
corresponding suprema over continuum intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
from scipy.special import zeta

from .errors import DomainError

__all__ = [
    "TwoParamField",
    "sewing_constant",
    "young_constant",
    "holder_seminorm",
    "sup_norm",
    "young_riemann",
    "young_bound_probe",
    "two_param_norm",
    "delta_of_two_param",
    "delta_norm",
    "consecutive_norm",
    "sewing_check",
    "SewingCheck",
    "EXACT_PAIR_LIMIT",
]

# Above this many grid points, pair scans may be restricted to a lag window.
EXACT_PAIR_LIMIT = 2**14


def sewing_constant(mu: float) -> float:
    """C_mu = 2^mu * zeta(mu), the classical sewing-lemma constant (mu > 1)."""
    if mu <= 1:
        raise DomainError(f"sewing constant needs mu > 1, got {mu}")
    return float(2.0**mu * zeta(mu))


def young_constant(alpha: float, beta: float) -> float:
    return sewing_constant(alpha + beta)


def _window_slice(times: np.ndarray, window) -> slice:
    if window is None:
        return slice(0, len(times))
    a, b = window
    lo = int(np.searchsorted(times, a, side="left"))
    hi = int(np.searchsorted(times, b, side="right"))
    return slice(lo, hi)


def _grid(values, times, step):
    values = np.asarray(values, dtype=float)
    if times is None:
        times = np.arange(len(values)) * (1.0 if step is None else step)
    times = np.asarray(times, dtype=float)
    if times.shape != values.shape:
        raise ValueError(f"times and values differ in length: {times.shape} vs {values.shape}")
    return values, times


def holder_seminorm(
    values,
    lam: float,
    times=None,
    *,
    step: float | None = None,
    window: tuple[float, float] | None = None,
    max_lag: int | None = None,
) -> float:
    """Largest |v_j - v_i| / |t_j - t_i|^lam over grid pairs inside ``window``.

    ``times`` defaults to a uniform grid with spacing ``step`` (1 if omitted).
    With ``max_lag`` only pairs with j - i <= max_lag are scanned, which gives
    an approximation from below.
    """
    if not 0 < lam <= 1:
        raise DomainError(f"Hölder exponent must lie in (0, 1], got {lam}")
    values, times = _grid(values, times, step)
    sl = _window_slice(times, window)
    v, t = values[sl], times[sl]
    if len(v) < 2:
        raise ValueError("Hölder seminorm needs at least two grid points in the window")
    n = len(v)
    top = n - 1 if max_lag is None else min(n - 1, int(max_lag))
    best = 0.0
    for lag in range(1, top + 1):
        ratio = np.abs(v[lag:] - v[:-lag]) / (t[lag:] - t[:-lag]) ** lam
        best = max(best, float(ratio.max()))
    return best


def sup_norm(values, times=None, *, step: float | None = None, window=None) -> float:
    values, times = _grid(values, times, step)
    v = values[_window_slice(times, window)]
    if len(v) == 0:
        raise ValueError("sup norm over an empty window")
    return float(np.max(np.abs(v)))


def young_riemann(integrand, integrator, i0: int, i1: int) -> float:
    """Left-point sum of integrand[i] * (integrator[i+1] - integrator[i]), i0 <= i < i1.

    The products are summed with ``math.fsum``, so the result is the correctly
    rounded value of the exact sum of the rounded products.
    """
    f = np.asarray(integrand, dtype=float)
    g = np.asarray(integrator, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"integrand and integrator lengths differ: {f.shape} vs {g.shape}")
    if not 0 <= i0 < i1 < len(g):
        raise ValueError(f"need 0 <= i0 < i1 < {len(g)}, got i0={i0}, i1={i1}")
    return math.fsum(f[i0:i1] * np.diff(g[i0 : i1 + 1]))


def young_bound_probe(integrand, integrator, alpha: float, beta: float, i0: int, i1: int, times=None, step=None):
    """Both sides of the Young-integral estimate on [t_{i0}, t_{i1}].

    Returns ``(lhs, rhs)`` with lhs = |Riemann sum| and
    rhs = |h(s)||g(t) - g(s)| + ||h||_alpha ||g||_beta |t - s|^(alpha+beta),
    the seminorms taken over the sub-window. No constant is applied; callers
    compare lhs against ``young_constant(alpha, beta) * rhs``.
    """
    if alpha + beta <= 1:
        raise DomainError(f"Young estimate needs alpha + beta > 1, got {alpha} + {beta}")
    h, ts = _grid(integrand, times, step)
    g = np.asarray(integrator, dtype=float)
    lhs = abs(young_riemann(h, g, i0, i1))
    sl = slice(i0, i1 + 1)
    h_norm = holder_seminorm(h[sl], alpha, ts[sl])
    g_norm = holder_seminorm(g[sl], beta, ts[sl])
    span = ts[i1] - ts[i0]
    rhs = abs(h[i0]) * abs(g[i1] - g[i0]) + h_norm * g_norm * span ** (alpha + beta)
    return lhs, rhs


@dataclass(eq=False)
class TwoParamField:
    """A function h(t_i, t_j) on the discrete simplex i <= j.

    ``values`` is a square matrix; only the upper triangle (i <= j) is read.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.times)
        if self.values.shape != (n, n):
            raise ValueError(f"field matrix must be {n}x{n}, got {self.values.shape}")

    @property
    def size(self) -> int:
        return len(self.times)

    @classmethod
    def from_function(cls, times, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "TwoParamField":
        t = np.asarray(times, dtype=float)
        return cls(t, func(t[:, None], t[None, :]))

    @classmethod
    def from_increments(cls, times, path) -> "TwoParamField":
        """The coboundary field (s, t) -> path(t) - path(s)."""
        p = np.asarray(path, dtype=float)
        return cls(times, p[None, :] - p[:, None])


@numba.njit(cache=True)
def _pair_sup(h, times, mu, max_lag):
    n = h.shape[0]
    best = 0.0
    for i in range(n - 1):
        top = min(n, i + max_lag + 1)
        for j in range(i + 1, top):
            r = abs(h[i, j]) / (times[j] - times[i]) ** mu
            if r > best:
                best = r
    return best


@numba.njit(cache=True)
def _delta_sup(h, times, mu):
    n = h.shape[0]
    inv = np.empty(n)
    best = 0.0
    for s in range(n - 2):
        for t in range(s + 2, n):
            inv[t] = 1.0 / (times[t] - times[s]) ** mu
        for u in range(s + 1, n - 1):
            hsu = h[s, u]
            for t in range(u + 1, n):
                r = abs(h[s, t] - hsu - h[u, t]) * inv[t]
                if r > best:
                    best = r
    return best


def two_param_norm(h: TwoParamField, mu: float, max_lag: int | None = None) -> float:
    """sup_{i<j} |h(t_i, t_j)| / |t_j - t_i|^mu over the grid simplex."""
    if mu <= 0:
        raise DomainError(f"mu must be positive, got {mu}")
    if h.size < 2:
        return 0.0
    lag = h.size if max_lag is None else int(max_lag)
    return float(_pair_sup(np.ascontiguousarray(h.values), h.times, float(mu), lag))


def delta_of_two_param(h: TwoParamField) -> np.ndarray:
    """Dense three-parameter field dh[s, u, t] = h(s,t) - h(s,u) - h(u,t).

    Entries outside s <= u <= t are set to 0. Memory is O(N^3); use
    :func:`delta_norm` for the norm on large grids.
    """
    v = h.values
    out = v[:, None, :] - v[:, :, None] - v[None, :, :]
    n = h.size
    idx = np.arange(n)
    ordered = (idx[:, None, None] <= idx[None, :, None]) & (idx[None, :, None] <= idx[None, None, :])
    return np.where(ordered, out, 0.0)


def delta_norm(h: TwoParamField, mu: float) -> float:
    """sup_{s<u<t} |dh(s,u,t)| / |t - s|^mu, by exact O(N^3) enumeration."""
    if mu <= 0:
        raise DomainError(f"mu must be positive, got {mu}")
    if h.size < 3:
        return 0.0
    return float(_delta_sup(np.ascontiguousarray(h.values), h.times, float(mu)))


def consecutive_norm(h: TwoParamField, mu: float) -> float:
    """max_i |h(t_i, t_{i+1})| / |t_{i+1} - t_i|^mu."""
    if h.size < 2:
        return 0.0
    i = np.arange(h.size - 1)
    return float(np.max(np.abs(h.values[i, i + 1]) / np.diff(h.times) ** mu))


@dataclass(frozen=True)
class SewingCheck:
    lhs: float
    bound: float
    diag: float
    delta: float
    constant: float

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.bound)


def sewing_check(h: TwoParamField, mu: float) -> SewingCheck:
    """Evaluate ||h||_mu against C_mu ||dh||_mu + M_mu(h).

    ``lhs`` is ||h||_mu, ``diag`` is the consecutive-node term M_mu(h) and
    ``bound`` the full right-hand side with C_mu = 2^mu zeta(mu).
    """
    if mu <= 1:
        raise DomainError(f"sewing inequality requires mu > 1, got {mu}")
    c = sewing_constant(mu)
    lhs = two_param_norm(h, mu)
    d = delta_norm(h, mu)
    diag = consecutive_norm(h, mu)
    return SewingCheck(lhs=lhs, bound=c * d + diag, diag=diag, delta=d, constant=c)
