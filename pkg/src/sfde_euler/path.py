"""Uniform grids on [-tau, T], solution paths and their history segments."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, DomainError

__all__ = [
    "GridSpec",
    "build_grid",
    "InitialCondition",
    "GridPath",
    "Segment",
    "segment_at",
    "evaluate",
]

# Alignment slack for T / step, in units of machine epsilon times the ratio.
_ALIGN_ULPS = 1024


@dataclass(frozen=True)
class GridSpec:
    """Grid t_k = k * step for k = -n .. n_forward, with step = tau / n."""

    tau: float
    n: int
    T: float
    n_forward: int

    @property
    def step(self) -> float:
        return self.tau / self.n

    @property
    def n_points(self) -> int:
        return self.n + self.n_forward + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.n, self.n_forward + 1)

    @property
    def times(self) -> np.ndarray:
        return self.indices * self.step

    @property
    def forward_times(self) -> np.ndarray:
        return np.arange(self.n_forward + 1) * self.step

    @property
    def history_times(self) -> np.ndarray:
        """Offsets theta_j = -tau + j * step, j = 0..n."""
        return np.arange(-self.n, 1) * self.step

    def refine(self, m: int) -> "GridSpec":
        return GridSpec(tau=self.tau, n=self.n * m, T=self.T, n_forward=self.n_forward * m)


def build_grid(tau: float, n: int, T: float) -> GridSpec:
    """Validate (tau, n, T) and return the grid with step tau / n.

    T must be an integer multiple of the step.
    """
    if not tau > 0 or not np.isfinite(tau):
        raise DomainError(f"delay tau must be positive, got {tau}")
    if int(n) != n or n < 1:
        raise DomainError(f"steps per delay n must be a positive integer, got {n}")
    if not T > 0 or not np.isfinite(T):
        raise DomainError(f"horizon T must be positive, got {T}")
    n = int(n)
    ratio = T * n / tau
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > _ALIGN_ULPS * np.finfo(float).eps * max(ratio, 1.0):
        nearest = max(k, 1) * (tau / n)
        raise AlignmentError(
            f"T={T} is not a multiple of step tau/n={tau / n}; nearest valid T is {nearest!r}"
        )
    return GridSpec(tau=float(tau), n=n, T=float(T), n_forward=k)


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """Initial segment xi on [-tau, 0].

    ``kind`` is ``"constant"`` (params = (c,)), ``"polynomial"`` (params are
    coefficients in increasing degree) or ``"tabulated"`` (params are values at
    equally spaced points covering [-tau, 0], linearly interpolated).
    """

    kind: str
    params: tuple = ()
    tau: float | None = None

    @classmethod
    def constant(cls, c: float) -> "InitialCondition":
        return cls("constant", (float(c),))

    @classmethod
    def polynomial(cls, *coefficients: float) -> "InitialCondition":
        return cls("polynomial", tuple(float(c) for c in coefficients))

    @classmethod
    def tabulated(cls, values, tau: float) -> "InitialCondition":
        vals = tuple(float(v) for v in values)
        if len(vals) < 2:
            raise ValueError("tabulated initial condition needs at least two values")
        return cls("tabulated", vals, float(tau))

    def __post_init__(self):
        if self.kind not in ("constant", "polynomial", "tabulated"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if self.kind == "constant" and len(self.params) != 1:
            raise ValueError("constant initial condition takes exactly one parameter")

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "constant":
            out = np.full_like(theta, self.params[0])
        elif self.kind == "polynomial":
            out = np.polynomial.polynomial.polyval(theta, self.params) * np.ones_like(theta)
        else:
            grid = np.linspace(-self.tau, 0.0, len(self.params))
            out = np.interp(theta, grid, self.params)
        return float(out) if out.ndim == 0 else out

    def sample(self, spec: GridSpec) -> np.ndarray:
        if self.kind == "tabulated" and not np.isclose(self.tau, spec.tau):
            raise AlignmentError(f"tabulated xi covers tau={self.tau}, grid has tau={spec.tau}")
        vals = np.asarray(self(spec.history_times), dtype=float)
        # xi(0) is exact at the anchor even for rounding-prone offsets.
        vals[-1] = self(0.0)
        return vals

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "params": list(self.params)}
        if self.tau is not None:
            out["tau"] = self.tau
        return out


@dataclass(eq=False)
class GridPath:
    """Values X(t_k) for k = -n .. n_forward.

    ``values[k + n]`` holds X(t_k). Indices k <= 0 carry the sampled initial
    condition.
    """

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.spec.n_points,):
            raise ValueError(f"expected {self.spec.n_points} values, got {self.values.shape}")

    @classmethod
    def from_initial(cls, spec: GridSpec, xi: InitialCondition) -> "GridPath":
        values = np.full(spec.n_points, np.nan)
        values[: spec.n + 1] = xi.sample(spec)
        return cls(spec, values)

    def __getitem__(self, k: int) -> float:
        if not -self.spec.n <= k <= self.spec.n_forward:
            raise IndexError(f"grid index {k} outside [-{self.spec.n}, {self.spec.n_forward}]")
        return float(self.values[k + self.spec.n])

    @property
    def forward(self) -> np.ndarray:
        """Values on the non-negative nodes t_0 .. t_N (a view)."""
        return self.values[self.spec.n :]

    @property
    def times(self) -> np.ndarray:
        return self.spec.times


@dataclass(frozen=True, eq=False)
class Segment:
    """The history window theta -> X(t_k + theta), theta in [-tau, 0]."""

    path: GridPath
    anchor: int

    @property
    def values(self) -> np.ndarray:
        """The n + 1 grid values X(t_{k-n}) .. X(t_k), oldest first (a view)."""
        start = self.anchor
        return self.path.values[start : start + self.path.spec.n + 1]

    @property
    def offsets(self) -> np.ndarray:
        return self.path.spec.history_times

    @property
    def tau(self) -> float:
        return self.path.spec.tau

    @property
    def n(self) -> int:
        return self.path.spec.n


def segment_at(path: GridPath, k: int) -> Segment:
    """The segment anchored at t_k; needs 0 <= k <= n_forward."""
    if not 0 <= k <= path.spec.n_forward:
        raise IndexError(f"segment anchor {k} outside [0, {path.spec.n_forward}]")
    return Segment(path, int(k))


def evaluate(segment: Segment, theta: float) -> float:
    """X(t_k + theta): exact on grid offsets, linear interpolation in between."""
    tau, n = segment.tau, segment.n
    if not -tau <= theta <= 0:
        raise DomainError(f"theta={theta} outside [-{tau}, 0]")
    pos = (theta + tau) / tau * n
    j = int(round(pos))
    vals = segment.values
    if abs(pos - j) <= 1e-9 * max(n, 1):
        return float(vals[j])
    lo = int(np.floor(pos))
    w = pos - lo
    return float((1.0 - w) * vals[lo] + w * vals[lo + 1])


def write_path_csv(path: GridPath, dest: str | Path, trace: np.ndarray | None = None) -> None:
    """Write ``t,X`` (or ``t,X,f_trace`` when a trace is given) over [-tau, T]."""
    n = path.spec.n
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "X", "f_trace"] if trace is not None else ["t", "value"])
        for idx, (t, x) in enumerate(zip(path.times, path.values)):
            row = [f"{t:.17g}", f"{x:.17g}"]
            if trace is not None:
                k = idx - n
                row.append(f"{trace[k]:.17g}" if 0 <= k < len(trace) else "")
            writer.writerow(row)
