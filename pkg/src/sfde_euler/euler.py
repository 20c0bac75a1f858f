"""Euler-Maruyama scheme for dX(t) = f(X_t-segment) dB^H(t) on a uniform grid.

On grid nodes the scheme is

    X(t_{k+1}) = X(t_k) + f(segment at t_k) * (B(t_{k+1}) - B(t_k)),

with X = xi on [-tau, 0]. Every segment boundary t_k - tau is a grid node, so
one forward pass over [0, T] covers the delay-interval recursion: the segment
at t_k only reads the n nodes behind it, all of which are already final.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .coefficient import FunctionalCoefficient, IntegralFunctional
from .errors import AlignmentError, DivergenceError, DomainError
from .fbm import FbmPath
from .holder import TwoParamField
from .path import GridPath, GridSpec, InitialCondition, write_path_csv

__all__ = [
    "SolveResult",
    "RemainderField",
    "default_lambda",
    "euler_solve",
    "reference_solve",
    "scheme_remainder",
    "solution_remainder",
    "remainder_norm",
    "chaining_identity_check",
    "chaining_scale",
    "write_solution_csv",
    "DIVERGENCE_BOUND",
    "MATERIALIZE_LIMIT",
]

DIVERGENCE_BOUND = 1e12
MATERIALIZE_LIMIT = 2**11


def default_lambda(H: float, margin: float = 0.05) -> float:
    """H - margin, clamped into the open interval (1/2, H)."""
    if not 0.5 < H < 1:
        raise DomainError(f"the scheme needs 1/2 < H < 1, got {H}")
    lam = H - margin
    if lam <= 0.5:
        lam = 0.5 + 0.5 * (H - 0.5)
    return min(lam, H - 1e-9)


@dataclass(eq=False)
class SolveResult:
    """Output of one Euler solve.

    ``trace[k]`` is f evaluated on the segment anchored at t_k, k = 0..N.
    ``stride`` is the refinement factor of a reference solve: node k * stride
    of this result sits on node k of the coarse grid it was built for.
    """

    path: GridPath
    trace: np.ndarray = field(repr=False)
    driver: FbmPath = field(repr=False)
    spec: GridSpec
    lam: float
    stride: int = 1
    inner_range: tuple[float, float] | None = None

    def __post_init__(self):
        if len(self.trace) != self.spec.n_forward + 1:
            raise ValueError("trace length does not match the forward grid")

    @property
    def X(self) -> np.ndarray:
        """Solution on the non-negative nodes t_0 .. t_N."""
        return self.path.forward

    @property
    def B(self) -> np.ndarray:
        """Driver on the non-negative nodes t_0 .. t_N."""
        return self.driver.values[: self.spec.n_forward + 1]

    @property
    def coarse_index(self) -> np.ndarray:
        """Indices into ``X`` of the coarse-grid nodes."""
        return np.arange(0, self.spec.n_forward + 1, self.stride)


def _check_driver(driver: FbmPath, spec: GridSpec) -> None:
    if not math.isclose(driver.step, spec.step, rel_tol=1e-9):
        raise AlignmentError(f"driver step {driver.step!r} differs from grid step {spec.step!r}")
    if driver.n_steps < spec.n_forward:
        raise AlignmentError(
            f"driver covers {driver.n_steps} steps but the grid needs {spec.n_forward}"
        )


def euler_solve(
    coeff: FunctionalCoefficient,
    xi: InitialCondition,
    driver: FbmPath,
    spec: GridSpec,
    lam: float | None = None,
) -> SolveResult:
    """Run the scheme over [0, T] on ``spec`` driven by ``driver``.

    Raises DomainError unless 1/2 < lam < H (lam defaults to H - 0.05),
    AlignmentError when the driver grid does not match and DivergenceError
    when a value becomes non-finite or exceeds 1e12.
    """
    _check_driver(driver, spec)
    if lam is None:
        lam = default_lambda(driver.hurst)
    elif not 0.5 < lam < driver.hurst:
        raise DomainError(f"lambda must lie in (1/2, H={driver.hurst}), got {lam}")
    n, N = spec.n, spec.n_forward
    path = GridPath.from_initial(spec, xi)
    vals = path.values
    dB = np.diff(driver.values[: N + 1])
    f = coeff.bind(n, spec.tau)
    trace = np.empty(N + 1)
    for k in range(N):
        fk = f(vals[k : k + n + 1])
        trace[k] = fk
        x = vals[k + n] + fk * dB[k]
        if not abs(x) <= DIVERGENCE_BOUND:
            raise DivergenceError(f"solution left [-1e12, 1e12] at step {k + 1} (value {x!r})", step=k + 1)
        vals[k + n + 1] = x
    trace[N] = f(vals[N : N + n + 1])

    inner_range = None
    if isinstance(coeff, IntegralFunctional):
        inner = np.correlate(vals, coeff.measure.weights(n), mode="valid")
        inner_range = (float(inner.min()), float(inner.max()))
    return SolveResult(path=path, trace=trace, driver=driver, spec=spec, lam=float(lam), inner_range=inner_range)


def reference_solve(
    coeff: FunctionalCoefficient,
    xi: InitialCondition,
    driver_fine: FbmPath,
    spec_coarse: GridSpec,
    m: int,
    lam: float | None = None,
) -> SolveResult:
    """Euler solve on the m-times refined grid, tagged with stride m."""
    if int(m) != m or m < 1:
        raise ValueError(f"refinement must be a positive integer, got {m}")
    m = int(m)
    result = euler_solve(coeff, xi, driver_fine, spec_coarse.refine(m), lam)
    result.stride = m
    return result


@dataclass(eq=False)
class RemainderField(TwoParamField):
    """R(s, t) = dX(s, t) - f(segment at s) dB(s, t) on the non-negative grid."""

    exponent: float = 1.0


def _remainder(result: SolveResult, stride: int) -> RemainderField:
    idx = np.arange(0, result.spec.n_forward + 1, stride)
    if len(idx) > MATERIALIZE_LIMIT:
        raise ValueError(
            f"{len(idx)} nodes exceed the materialization limit {MATERIALIZE_LIMIT}; "
            "use remainder_norm for a streaming sup"
        )
    X, B, f = result.X[idx], result.B[idx], result.trace[idx]
    vals = (X[None, :] - X[:, None]) - f[:, None] * (B[None, :] - B[:, None])
    times = idx * result.spec.step
    return RemainderField(times=times, values=vals, exponent=2.0 * result.lam)


def scheme_remainder(result: SolveResult) -> RemainderField:
    """R^n over all non-negative nodes of ``result``; zero on consecutive nodes."""
    return _remainder(result, 1)


def solution_remainder(result: SolveResult, stride: int | None = None) -> RemainderField:
    """R^X on the coarse nodes of a (reference) solve.

    Intended for a fine reference result, whose nodes at ``stride`` spacing
    (default ``result.stride``) stand in for the exact solution.
    """
    return _remainder(result, result.stride if stride is None else int(stride))


@numba.njit(cache=True)
def _remainder_sup(X, B, f, times, mu):
    n = X.shape[0]
    best = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            r = abs((X[j] - X[i]) - f[i] * (B[j] - B[i])) / (times[j] - times[i]) ** mu
            if r > best:
                best = r
    return best


def remainder_norm(result: SolveResult, mu: float, stride: int = 1) -> float:
    """||R||_mu computed pairwise without storing the field."""
    idx = np.arange(0, result.spec.n_forward + 1, int(stride))
    times = idx * result.spec.step
    return float(
        _remainder_sup(
            np.ascontiguousarray(result.X[idx]),
            np.ascontiguousarray(result.B[idx]),
            np.ascontiguousarray(result.trace[idx]),
            times,
            float(mu),
        )
    )


@numba.njit(cache=True)
def _chain_defect(X, B, f, u, s, t):
    best = 0.0
    for q in range(u.shape[0]):
        a, b, c = u[q], s[q], t[q]
        r_ut = (X[c] - X[a]) - f[a] * (B[c] - B[a])
        r_us = (X[b] - X[a]) - f[a] * (B[b] - B[a])
        r_st = (X[c] - X[b]) - f[b] * (B[c] - B[b])
        d = abs(r_ut - r_us - r_st - (f[b] - f[a]) * (B[c] - B[b]))
        if d > best:
            best = d
    return best


@numba.njit(cache=True)
def _chain_defect_all(X, B, f):
    n = X.shape[0]
    best = 0.0
    for a in range(n - 2):
        for b in range(a + 1, n - 1):
            fa, fb = f[a], f[b]
            r_us = (X[b] - X[a]) - fa * (B[b] - B[a])
            for c in range(b + 1, n):
                r_ut = (X[c] - X[a]) - fa * (B[c] - B[a])
                r_st = (X[c] - X[b]) - fb * (B[c] - B[b])
                d = abs(r_ut - r_us - r_st - (fb - fa) * (B[c] - B[b]))
                if d > best:
                    best = d
    return best


def chaining_identity_check(
    result: SolveResult, n_triples: int | None = None, seed: int = 0, stride: int = 1
) -> float:
    """Largest defect of R(u,t) - R(u,s) - R(s,t) = (f_s - f_u) dB(s,t).

    Enumerates every triple u < s < t when ``n_triples`` is None; otherwise
    draws that many sorted triples (u <= s <= t) from a seeded generator.
    """
    idx = np.arange(0, result.spec.n_forward + 1, int(stride))
    X = np.ascontiguousarray(result.X[idx])
    B = np.ascontiguousarray(result.B[idx])
    f = np.ascontiguousarray(result.trace[idx])
    if n_triples is None:
        return float(_chain_defect_all(X, B, f))
    rng = np.random.default_rng(seed)
    tri = np.sort(rng.integers(0, len(idx), size=(int(n_triples), 3)), axis=1)
    return float(_chain_defect(X, B, f, tri[:, 0].copy(), tri[:, 1].copy(), tri[:, 2].copy()))


def chaining_scale(result: SolveResult) -> float:
    """Magnitude against which chaining defects are judged: ||X|| + ||f|| ||B||."""
    return float(np.max(np.abs(result.X)) + np.max(np.abs(result.trace)) * np.max(np.abs(result.B)))


def write_solution_csv(result: SolveResult, dest) -> None:
    write_path_csv(result.path, dest, trace=result.trace)
