"""Functional coefficients f acting on history segments.

The main family is ``f(psi) = sigma(integral of psi against nu)`` for an outer
function ``sigma`` and a finite signed measure ``nu`` on [-tau, 0]. The inner
integral is discretized on the segment grid: composite trapezoid weights for
the density part plus point masses sitting on grid offsets, so evaluating f
is one dot product with the segment values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .errors import AlignmentError
from .path import Segment

__all__ = [
    "OuterFunction",
    "Measure",
    "FunctionalCoefficient",
    "IntegralFunctional",
    "PointDelay",
    "ConstantCoefficient",
    "DeclaredConstants",
    "paper_coefficient",
    "eval_coefficient",
    "lipschitz_probe",
    "four_point_probe",
    "declared_constants",
]

_TANH_D2_MAX = 4.0 / (3.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class OuterFunction:
    """A scalar function sigma with its derivative and derivative bounds.

    Kinds: ``identity``, ``affine`` (params a, b: x -> a x + b), ``sin_shift``
    (x -> x + sin x), ``tanh`` and ``custom_table`` (params = (xs, ys),
    piecewise linear, constant extrapolation).
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in ("identity", "affine", "sin_shift", "tanh", "custom_table"):
            raise ValueError(f"unknown outer function {self.kind!r}")
        if self.kind == "affine" and len(self.params) != 2:
            raise ValueError("affine outer function takes (a, b)")
        if self.kind == "custom_table":
            xs, ys = self.params
            if len(xs) != len(ys) or len(xs) < 2 or np.any(np.diff(xs) <= 0):
                raise ValueError("custom_table needs matching, strictly increasing xs and ys")

    @classmethod
    def table(cls, xs, ys) -> "OuterFunction":
        return cls("custom_table", (tuple(map(float, xs)), tuple(map(float, ys))))

    def __call__(self, x: float) -> float:
        k = self.kind
        if k == "identity":
            return x
        if k == "affine":
            a, b = self.params
            return a * x + b
        if k == "sin_shift":
            return x + math.sin(x)
        if k == "tanh":
            return math.tanh(x)
        xs, ys = self.params
        return float(np.interp(x, xs, ys))

    def derivative(self, x: float) -> float:
        k = self.kind
        if k == "identity":
            return 1.0
        if k == "affine":
            return float(self.params[0])
        if k == "sin_shift":
            return 1.0 + math.cos(x)
        if k == "tanh":
            return 1.0 - math.tanh(x) ** 2
        xs, ys = self.params
        i = int(np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2))
        if x < xs[0] or x > xs[-1]:
            return 0.0
        return (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])

    @property
    def lipschitz(self) -> float:
        """Global bound on |sigma'|."""
        k = self.kind
        if k == "identity" or k == "tanh":
            return 1.0
        if k == "affine":
            return abs(float(self.params[0]))
        if k == "sin_shift":
            return 2.0
        xs, ys = self.params
        return float(np.max(np.abs(np.diff(ys) / np.diff(xs))))

    def lipschitz_on(self, lo: float, hi: float, samples: int = 1001) -> float:
        """Largest |sigma'| observed on [lo, hi]; used for run reports."""
        xs = np.linspace(lo, hi, samples)
        return float(max(abs(self.derivative(x)) for x in xs))

    @property
    def curvature(self) -> float | None:
        """Global bound on |sigma''|, or None when unknown."""
        k = self.kind
        if k in ("identity", "affine"):
            return 0.0
        if k == "sin_shift":
            return 1.0
        if k == "tanh":
            return _TANH_D2_MAX
        return None

    def to_dict(self) -> dict:
        if self.kind == "custom_table":
            xs, ys = self.params
            return {"name": self.kind, "xs": list(xs), "ys": list(ys)}
        return {"name": self.kind, "params": list(self.params)}


@dataclass(frozen=True)
class Measure:
    """Finite signed measure on [-tau, 0]: density part plus atoms.

    ``density`` is None (no density), a float (uniform density, 1.0 is
    Lebesgue measure) or a tuple of values at equally spaced points covering
    [-tau, 0], linearly interpolated. ``atoms`` is a tuple of (theta, mass).
    """

    tau: float
    density: float | tuple | None = 1.0
    atoms: tuple = ()

    @classmethod
    def lebesgue(cls, tau: float) -> "Measure":
        return cls(float(tau), 1.0)

    @classmethod
    def dirac(cls, tau: float, theta: float, mass: float = 1.0) -> "Measure":
        return cls(float(tau), None, ((float(theta), float(mass)),))

    def __post_init__(self):
        if self.density is not None and not isinstance(self.density, (int, float)):
            object.__setattr__(self, "density", tuple(float(d) for d in self.density))
        object.__setattr__(self, "atoms", tuple((float(t), float(m)) for t, m in self.atoms))
        for theta, _ in self.atoms:
            if not -self.tau - 1e-12 <= theta <= 1e-12:
                raise ValueError(f"atom at theta={theta} outside [-{self.tau}, 0]")

    def density_at(self, theta: np.ndarray) -> np.ndarray:
        if self.density is None:
            return np.zeros_like(theta)
        if isinstance(self.density, (int, float)):
            return np.full_like(theta, float(self.density))
        table = np.asarray(self.density, dtype=float)
        return np.interp(theta, np.linspace(-self.tau, 0.0, len(table)), table)

    def weights(self, n: int) -> np.ndarray:
        """Quadrature weights on the n + 1 offsets theta_j = -tau + j tau / n."""
        return _weights(self, int(n)).copy()

    def total_variation(self, n: int | None = None) -> float:
        """|nu| of the discretized measure on an n-step grid.

        Without ``n`` the continuum value is returned for uniform densities and
        a fine-grid (4096 steps) value otherwise.
        """
        if n is None:
            if self.density is None or isinstance(self.density, (int, float)):
                dens = 0.0 if self.density is None else abs(float(self.density)) * self.tau
                return dens + sum(abs(m) for _, m in self.atoms)
            n = 4096
        return float(np.sum(np.abs(_weights(self, int(n)))))

    def to_dict(self) -> dict:
        dens = self.density if not isinstance(self.density, tuple) else list(self.density)
        return {"tau": self.tau, "density": dens, "atoms": [list(a) for a in self.atoms]}


@lru_cache(maxsize=64)
def _weights(measure: Measure, n: int) -> np.ndarray:
    step = measure.tau / n
    theta = np.arange(-n, 1) * step
    w = measure.density_at(theta) * step
    w[0] *= 0.5
    w[-1] *= 0.5
    for atom, mass in measure.atoms:
        pos = (atom + measure.tau) / step
        j = int(round(pos))
        if abs(pos - j) > 1e-9 * max(n, 1):
            raise AlignmentError(f"atom at theta={atom} is not on the {n}-step grid")
        w[j] += mass
    w.setflags(write=False)
    return w


class DeclaredConstants(NamedTuple):
    """Constants M1 (Lipschitz), M2 (linear growth) and C (four-point term).

    ``C`` is None when the outer function has no known curvature bound.
    """

    M1: float
    M2: float
    C: float | None


class FunctionalCoefficient:
    """Base class: f maps a segment to a real number."""

    kind: str = ""

    def __call__(self, segment: Segment) -> float:
        return self.bind(segment.n, segment.tau)(segment.values)

    def bind(self, n: int, tau: float) -> Callable[[np.ndarray], float]:
        """A fast evaluator taking the n + 1 segment values, oldest first."""
        raise NotImplementedError

    def constants(self, n: int | None = None) -> DeclaredConstants:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class IntegralFunctional(FunctionalCoefficient):
    kind = "integral_functional"

    def __init__(self, outer: OuterFunction, measure: Measure):
        self.outer = outer
        self.measure = measure

    def bind(self, n, tau):
        if not math.isclose(tau, self.measure.tau, rel_tol=1e-12):
            raise AlignmentError(f"measure lives on tau={self.measure.tau}, segment has tau={tau}")
        w = _weights(self.measure, int(n))
        sigma = self.outer
        dot = np.dot
        return lambda vals: sigma(float(dot(w, vals)))

    def inner(self, segment: Segment) -> float:
        return float(np.dot(_weights(self.measure, segment.n), segment.values))

    def constants(self, n=None):
        tv = self.measure.total_variation(n)
        m1 = self.outer.lipschitz * tv
        m2 = max(m1, abs(self.outer(0.0)))
        curv = self.outer.curvature
        return DeclaredConstants(M1=m1, M2=m2, C=None if curv is None else curv * tv**2)

    def to_dict(self):
        return {"kind": self.kind, "outer": self.outer.to_dict(), "measure": self.measure.to_dict()}

    def __repr__(self):
        return f"IntegralFunctional({self.outer!r}, {self.measure!r})"


class PointDelay(IntegralFunctional):
    """f(psi) = g(psi(-tau)): an integral functional against a unit atom at -tau."""

    kind = "point_delay"

    def __init__(self, outer: OuterFunction, tau: float):
        super().__init__(outer, Measure.dirac(tau, -float(tau)))

    def bind(self, n, tau):
        if not math.isclose(tau, self.measure.tau, rel_tol=1e-12):
            raise AlignmentError(f"delay is tau={self.measure.tau}, segment has tau={tau}")
        g = self.outer
        return lambda vals: g(float(vals[0]))

    def to_dict(self):
        return {"kind": self.kind, "outer": self.outer.to_dict(), "tau": self.measure.tau}

    def __repr__(self):
        return f"PointDelay({self.outer!r}, tau={self.measure.tau})"


class ConstantCoefficient(FunctionalCoefficient):
    kind = "constant"

    def __init__(self, c: float):
        self.c = float(c)

    def bind(self, n, tau):
        c = self.c
        return lambda vals: c

    def constants(self, n=None):
        return DeclaredConstants(M1=0.0, M2=abs(self.c), C=0.0)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}

    def __repr__(self):
        return f"ConstantCoefficient({self.c})"


def paper_coefficient(tau: float = 0.1) -> IntegralFunctional:
    """f(psi) = I + sin(I) with I the Lebesgue integral of psi over [-tau, 0]."""
    return IntegralFunctional(OuterFunction("sin_shift"), Measure.lebesgue(tau))


def eval_coefficient(f: FunctionalCoefficient, psi: Segment) -> float:
    return f(psi)


def declared_constants(f: FunctionalCoefficient, n: int | None = None) -> DeclaredConstants:
    return f.constants(n)


def _seg_values(psi) -> np.ndarray:
    return psi.values if isinstance(psi, Segment) else np.asarray(psi, dtype=float)


def lipschitz_probe(f: FunctionalCoefficient, psi1: Segment, psi2: Segment) -> float:
    """|f(psi2) - f(psi1)| / ||psi2 - psi1||_sup, or 0 for identical segments."""
    gap = float(np.max(np.abs(psi2.values - psi1.values)))
    if gap == 0.0:
        return 0.0
    return abs(f(psi2) - f(psi1)) / gap


def four_point_probe(f: FunctionalCoefficient, psi1, psi2, psi3, psi4) -> tuple[float, float | None]:
    """Both sides of the four-point estimate for f.

    lhs = |f(psi1) - f(psi2) - f(psi3) + f(psi4)| and
    rhs = M1 ||D|| + C ||psi3 - psi4|| (||D|| + ||psi2 - psi4||) with
    D = psi1 - psi2 - psi3 + psi4. rhs is None when C is unknown.
    """
    v1, v2, v3, v4 = (_seg_values(p) for p in (psi1, psi2, psi3, psi4))
    lhs = abs(f(psi1) - f(psi2) - f(psi3) + f(psi4))
    consts = f.constants(psi1.n)
    if consts.C is None:
        return lhs, None
    d = np.max(np.abs(v1 - v2 - v3 + v4))
    rhs = consts.M1 * d + consts.C * np.max(np.abs(v3 - v4)) * (d + np.max(np.abs(v2 - v4)))
    return lhs, float(rhs)
