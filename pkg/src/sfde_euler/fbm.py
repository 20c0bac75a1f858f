"""Fractional Brownian motion on uniform grids.

Two exact-in-law generators are provided:

* ``sample_fbm_circulant`` -- circulant embedding of the fractional Gaussian
  noise autocovariance (Davies-Harte), O(m log m). This is the default.
* ``sample_fbm_cholesky`` -- Cholesky factor of the Toeplitz increment
  covariance, O(m^3). Used as an oracle and capped at 2048 steps.

Randomness: every call owns a ``numpy.random.Generator`` backed by PCG64 and
seeded with a 64-bit integer. Gaussian variates come from
``Generator.standard_normal`` (numpy's ziggurat sampler). Replication streams
are derived with :func:`mix_seed`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from .errors import DomainError, EmbeddingError, FactorizationError

__all__ = [
    "FbmPath",
    "validate_hurst",
    "fbm_covariance",
    "fgn_autocovariance",
    "mix_seed",
    "make_rng",
    "sample_fbm_circulant",
    "sample_fbm_cholesky",
    "sample_fbm",
    "subsample",
    "write_path_csv",
    "CHOLESKY_MAX_STEPS",
    "EIGEN_REL_TOL",
]

CHOLESKY_MAX_STEPS = 2048
EIGEN_REL_TOL = 1e-10

_MASK64 = (1 << 64) - 1
_GOLDEN64 = 0x9E3779B97F4A7C15


def validate_hurst(H: float) -> float:
    H = float(H)
    if not (0.0 < H < 1.0) or not np.isfinite(H):
        raise DomainError(f"Hurst parameter must lie in (0, 1), got {H}")
    return H


def fbm_covariance(s: float, t: float, H: float) -> float:
    """E[B(s) B(t)] = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2."""
    H = validate_hurst(H)
    if s < 0 or t < 0:
        raise DomainError(f"fBm covariance needs non-negative times, got s={s}, t={t}")
    two_h = 2.0 * H
    return 0.5 * (s**two_h + t**two_h - abs(t - s) ** two_h)


def fgn_autocovariance(k, H: float):
    """Autocovariance of unit-step fractional Gaussian noise at integer lag ``k``.

    Accepts a scalar or an integer array and returns the same shape.
    """
    H = validate_hurst(H)
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0):
        raise DomainError("lag must be non-negative")
    two_h = 2.0 * H
    gamma = 0.5 * (
        np.abs(k_arr + 1.0) ** two_h - 2.0 * np.abs(k_arr) ** two_h + np.abs(k_arr - 1.0) ** two_h
    )
    if np.ndim(k) == 0:
        return float(gamma)
    return gamma


def mix_seed(base_seed: int, index: int) -> int:
    """Derive an independent 64-bit seed for stream ``index`` from ``base_seed``.

    ``z = base_seed + (index + 1) * 0x9E3779B97F4A7C15 (mod 2^64)`` followed by
    the SplitMix64 finalizer. Distinct indices give distinct seeds.
    """
    z = (int(base_seed) + (int(index) + 1) * _GOLDEN64) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def make_rng(seed: int) -> np.random.Generator:
    if seed < 0:
        raise DomainError(f"seed must be an unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))


@dataclass(frozen=True, eq=False)
class FbmPath:
    """A sampled fBm path on the grid t_k = k * step, k = 0..n_steps."""

    hurst: float
    horizon: float
    step: float
    values: np.ndarray
    seed: int

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.step

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def _check_args(n_steps: int, H: float, T: float) -> float:
    H = validate_hurst(H)
    if int(n_steps) != n_steps or n_steps < 1:
        raise DomainError(f"n_steps must be a positive integer, got {n_steps}")
    if not T > 0:
        raise DomainError(f"horizon T must be positive, got {T}")
    return H


def _assemble(increments: np.ndarray, H: float, T: float, n_steps: int, seed: int) -> FbmPath:
    values = np.empty(n_steps + 1)
    values[0] = 0.0
    np.cumsum(increments, out=values[1:])
    return FbmPath(hurst=H, horizon=float(T), step=T / n_steps, values=values, seed=int(seed))


@lru_cache(maxsize=32)
def _circulant_sqrt_eigenvalues(n_steps: int, H: float) -> np.ndarray:
    # First row of the 2n x 2n circulant: gamma(0..n), gamma(n-1..1).
    gamma = fgn_autocovariance(np.arange(n_steps + 1), H)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    tol = EIGEN_REL_TOL * eig.max()
    worst = eig.min()
    if worst < -tol:
        raise EmbeddingError(
            f"circulant embedding has negative eigenvalue {worst:.3e} "
            f"(tolerance {tol:.3e}) for n_steps={n_steps}, H={H}",
            eigenvalue=float(worst),
        )
    eig = np.clip(eig, 0.0, None)
    out = np.sqrt(eig / len(row))
    out.setflags(write=False)
    return out


def sample_fbm_circulant(n_steps: int, H: float, T: float = 1.0, seed: int = 0) -> FbmPath:
    """Sample fBm on ``n_steps`` equal steps over [0, T] by circulant embedding."""
    H = _check_args(n_steps, H, T)
    sqrt_eig = _circulant_sqrt_eigenvalues(int(n_steps), H)
    size = len(sqrt_eig)
    rng = make_rng(seed)
    z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    w = np.fft.fft(sqrt_eig * z)
    # Real part has exactly the embedded covariance.
    fgn = w.real[:n_steps] * (T / n_steps) ** H
    return _assemble(fgn, H, T, int(n_steps), seed)


@lru_cache(maxsize=8)
def _cholesky_factor(n_steps: int, H: float) -> np.ndarray:
    gamma = fgn_autocovariance(np.arange(n_steps), H)
    idx = np.arange(n_steps)
    cov = gamma[np.abs(idx[:, None] - idx[None, :])]
    factor, info = lapack.dpotrf(cov, lower=1, clean=1)
    if info > 0:
        raise FactorizationError(
            f"increment covariance is not positive definite: leading minor {info} failed "
            f"(n_steps={n_steps}, H={H})",
            pivot=int(info),
        )
    factor.setflags(write=False)
    return factor


def sample_fbm_cholesky(n_steps: int, H: float, T: float = 1.0, seed: int = 0) -> FbmPath:
    """Sample fBm by Cholesky factorization of the increment covariance."""
    H = _check_args(n_steps, H, T)
    if n_steps > CHOLESKY_MAX_STEPS:
        raise DomainError(f"Cholesky generator is capped at {CHOLESKY_MAX_STEPS} steps")
    L = _cholesky_factor(int(n_steps), H)
    rng = make_rng(seed)
    fgn = (L @ rng.standard_normal(int(n_steps))) * (T / n_steps) ** H
    return _assemble(fgn, H, T, int(n_steps), seed)


def sample_fbm(n_steps: int, H: float, T: float = 1.0, seed: int = 0, method: str = "circulant") -> FbmPath:
    if method == "circulant":
        return sample_fbm_circulant(n_steps, H, T, seed)
    if method == "cholesky":
        return sample_fbm_cholesky(n_steps, H, T, seed)
    raise ValueError(f"unknown fBm method {method!r}")


def subsample(path: FbmPath, factor: int) -> FbmPath:
    """Keep every ``factor``-th grid value; retained values are bit-identical."""
    if int(factor) != factor or factor < 1 or path.n_steps % factor:
        raise ValueError(f"factor {factor} does not divide n_steps={path.n_steps}")
    factor = int(factor)
    return FbmPath(
        hurst=path.hurst,
        horizon=path.horizon,
        step=path.horizon / (path.n_steps // factor),
        values=path.values[::factor].copy(),
        seed=path.seed,
    )


def write_path_csv(path: FbmPath, dest: str | Path) -> None:
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "value"])
        for k, v in enumerate(path.values):
            writer.writerow([f"{k * path.step:.17g}", f"{v:.17g}"])
