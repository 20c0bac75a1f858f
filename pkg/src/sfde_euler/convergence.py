"""Strong-error ladders and empirical convergence rates.

Each replication draws one fBm path on the finest grid (step tau / (m n_max)).
Every coarser driver is a subsample of it, so within a replication all
resolutions see the same Gaussian draw and error differences come from
discretization alone. The fine Euler solve on the full path is the reference.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .coefficient import FunctionalCoefficient, paper_coefficient
from .errors import AlignmentError, DomainError
from .euler import SolveResult, default_lambda, euler_solve
from .fbm import mix_seed, sample_fbm_circulant, subsample, validate_hurst
from .path import InitialCondition, build_grid

__all__ = [
    "RateExperimentConfig",
    "RateFit",
    "ConvergenceReport",
    "sup_error",
    "fit_rate",
    "error_moment",
    "run_ladder",
    "report_from_pairs",
]


@dataclass
class RateExperimentConfig:
    H: float = 0.75
    tau: float = 0.1
    T: float = 1.0
    lam: float | None = None
    eps_margin: float = 0.15
    resolutions: tuple[int, ...] = (10, 20, 40, 80, 160)
    refine: int = 16
    refine_alt: int | None = 8
    replications: int = 20
    base_seed: int = 0
    coefficient: FunctionalCoefficient = field(default_factory=paper_coefficient)
    xi: InitialCondition = field(default_factory=lambda: InitialCondition.polynomial(2.0, 0.0, 1.0))

    def __post_init__(self):
        self.resolutions = tuple(int(n) for n in self.resolutions)
        if self.lam is None:
            self.lam = default_lambda(self.H)

    def validate(self) -> None:
        validate_hurst(self.H)
        if not 0.5 < self.H:
            raise DomainError(f"the solver needs H > 1/2, got {self.H}")
        if not 0.5 < self.lam < self.H:
            raise DomainError(f"lambda must lie in (1/2, H={self.H}), got {self.lam}")
        if not self.eps_margin > 0:
            raise DomainError(f"eps_margin must be positive, got {self.eps_margin}")
        if not self.resolutions or min(self.resolutions) < 1:
            raise DomainError("resolutions must be positive integers")
        if self.refine < 1 or int(self.refine) != self.refine:
            raise DomainError(f"refine must be a positive integer, got {self.refine}")
        if self.refine_alt is not None and (self.refine_alt < 1 or self.refine % self.refine_alt):
            raise DomainError(f"refine_alt={self.refine_alt} must divide refine={self.refine}")
        if self.replications < 1:
            raise DomainError("need at least one replication")
        if self.base_seed < 0:
            raise DomainError("base_seed must be unsigned")
        fine = self.fine_n
        for n in self.resolutions:
            if fine % n:
                raise DomainError(f"resolution {n} does not divide the finest grid n={fine}")
            build_grid(self.tau, n, self.T)
        build_grid(self.tau, fine, self.T)

    @property
    def fine_n(self) -> int:
        return int(self.refine) * max(self.resolutions)

    @property
    def target_rate(self) -> float:
        return 2.0 * self.lam - 1.0

    @property
    def threshold(self) -> float:
        """Acceptance bound on the fitted slope: -(2 lambda - 1 - eps_margin)."""
        return -(self.target_rate - self.eps_margin)

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "tau": self.tau,
            "T": self.T,
            "lam": self.lam,
            "eps_margin": self.eps_margin,
            "resolutions": list(self.resolutions),
            "refine": self.refine,
            "refine_alt": self.refine_alt,
            "replications": self.replications,
            "base_seed": self.base_seed,
            "coefficient": self.coefficient.to_dict(),
            "xi": self.xi.to_dict(),
        }


def sup_error(coarse: SolveResult, reference: SolveResult, check_driver: bool = True) -> float:
    """max_k |X_ref(t_k) - X_coarse(t_k)| over the coarse non-negative nodes."""
    cs, rs = coarse.spec, reference.spec
    if not (math.isclose(cs.tau, rs.tau) and math.isclose(cs.T, rs.T)) or rs.n % cs.n:
        raise AlignmentError(f"reference grid (n={rs.n}) does not refine the coarse grid (n={cs.n})")
    r = rs.n // cs.n
    if rs.n_forward != r * cs.n_forward:
        raise AlignmentError("reference and coarse grids cover different horizons")
    if check_driver and not np.array_equal(reference.B[::r], coarse.B):
        raise AlignmentError("coarse and reference solves use different driver realizations")
    return float(np.max(np.abs(reference.X[::r] - coarse.X)))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    excluded: tuple = ()
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "slope": _finite_or_none(self.slope),
            "intercept": _finite_or_none(self.intercept),
            "r2": _finite_or_none(self.r_squared),
            "excluded": list(self.excluded),
            "degenerate": self.degenerate,
        }


def fit_rate(pairs: Iterable[tuple[float, float]]) -> RateFit:
    """Least-squares line through (log n, log error).

    Pairs with a zero or non-finite error are excluded and listed. Fewer than
    two distinct remaining n gives a degenerate fit with NaN slope.
    """
    pairs = list(pairs)
    keep = [(n, e) for n, e in pairs if e > 0 and math.isfinite(e)]
    excluded = tuple(n for n, e in pairs if not (e > 0 and math.isfinite(e)))
    if len({n for n, _ in keep}) < 2:
        return RateFit(math.nan, math.nan, math.nan, excluded, True)
    x = np.log([n for n, _ in keep])
    y = np.log([e for _, e in keep])
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(slope, intercept, r2, excluded, bool(excluded))


def error_moment(errors: Sequence[float], p: float) -> float:
    """(mean of e^p)^(1/p) over replications."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        raise ValueError("error moments need at least two replications")
    if p < 1:
        raise DomainError(f"moment order must be >= 1, got {p}")
    return float(np.mean(e**p) ** (1.0 / p))


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


@dataclass(eq=False)
class ConvergenceReport:
    """Errors e[r, i] for replication r and resolution ``resolutions[i]``."""

    resolutions: tuple[int, ...]
    errors: np.ndarray
    target_rate: float
    threshold: float
    errors_alt: np.ndarray | None = None
    refine: int | None = None
    refine_alt: int | None = None
    config: dict | None = None

    @property
    def per_n_median(self) -> np.ndarray:
        return np.median(self.errors, axis=0)

    @property
    def per_n_mean(self) -> np.ndarray:
        return np.mean(self.errors, axis=0)

    @property
    def per_n_mean_log(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.mean(np.log(self.errors), axis=0)

    def per_n_moment(self, p: float) -> np.ndarray:
        if self.errors.shape[0] < 2:
            return self.per_n_mean if p == 1 else np.mean(self.errors**p, axis=0) ** (1 / p)
        return np.array([error_moment(col, p) for col in self.errors.T])

    def _fit(self, values) -> RateFit:
        return fit_rate(zip(self.resolutions, values))

    @property
    def fit(self) -> RateFit:
        """Headline fit: median error per resolution."""
        return self._fit(self.per_n_median)

    @property
    def fit_mean(self) -> RateFit:
        return self._fit(self.per_n_mean)

    @property
    def fit_alt(self) -> RateFit | None:
        if self.errors_alt is None:
            return None
        return self._fit(np.median(self.errors_alt, axis=0))

    def fit_moment(self, p: float) -> RateFit:
        return self._fit(self.per_n_moment(p))

    @property
    def degenerate(self) -> bool:
        return self.fit.degenerate

    def checks(self, min_r2: float = 0.9, alt_tol: float = 0.05) -> dict:
        fit = self.fit
        out = {
            "slope_below_threshold": bool(fit.slope <= self.threshold),
            "r2_at_least": bool(fit.r_squared >= min_r2),
            "p2_slope_below_threshold": bool(self.fit_moment(2).slope <= self.threshold),
        }
        alt = self.fit_alt
        if alt is not None:
            out["alt_reference_agrees"] = bool(abs(fit.slope - alt.slope) <= alt_tol)
        return out

    @property
    def passed(self) -> bool:
        return all(self.checks().values())

    def summary(self) -> dict:
        fit = self.fit
        alt = self.fit_alt
        out = {
            "slope": _finite_or_none(fit.slope),
            "intercept": _finite_or_none(fit.intercept),
            "r2": _finite_or_none(fit.r_squared),
            "degenerate": fit.degenerate,
            "excluded": list(fit.excluded),
            "target_rate": _finite_or_none(self.target_rate),
            "threshold": _finite_or_none(self.threshold),
            "resolutions": list(self.resolutions),
            "replications": int(self.errors.shape[0]),
            "per_n_median": [float(v) for v in self.per_n_median],
            "per_n_mean": [float(v) for v in self.per_n_mean],
            "per_n_p2": [float(v) for v in self.per_n_moment(2)],
            "fit_mean": self.fit_mean.to_dict(),
            "fit_p2": self.fit_moment(2).to_dict(),
            "refine": self.refine,
        }
        if alt is not None:
            out["refine_alt"] = self.refine_alt
            out["fit_alt"] = alt.to_dict()
        if not fit.degenerate and math.isfinite(self.threshold):
            out["checks"] = self.checks()
        if self.config is not None:
            out["config"] = self.config
        return out

    def write_errors_csv(self, dest) -> None:
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replication", "n", "error"])
            for r, row in enumerate(self.errors):
                for n, e in zip(self.resolutions, row):
                    w.writerow([r, n, f"{e:.17g}"])

    def write_plot_csv(self, dest) -> None:
        """``n,median_error,target_line``; the target line has slope -(2 lambda - 1)
        and passes through the first median error."""
        med = self.per_n_median
        n0 = self.resolutions[0]
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "median_error", "target_line"])
            for n, e in zip(self.resolutions, med):
                line = med[0] * (n / n0) ** (-self.target_rate)
                w.writerow([n, f"{e:.17g}", f"{line:.17g}"])

    def write_summary_json(self, dest) -> None:
        Path(dest).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def _replicate(config: RateExperimentConfig, r: int):
    fine_spec = build_grid(config.tau, config.fine_n, config.T)
    seed = mix_seed(config.base_seed, r)
    driver = sample_fbm_circulant(fine_spec.n_forward, config.H, config.T, seed)
    coeff, xi, lam = config.coefficient, config.xi, config.lam
    n = config.fine_n
    try:
        ref = euler_solve(coeff, xi, driver, fine_spec, lam)
        ref.stride = config.refine
        ref_alt = None
        if config.refine_alt is not None:
            n = config.refine_alt * max(config.resolutions)
            alt_spec = build_grid(config.tau, n, config.T)
            ref_alt = euler_solve(coeff, xi, subsample(driver, config.fine_n // n), alt_spec, lam)
        errs, errs_alt = [], []
        for n in config.resolutions:
            spec = build_grid(config.tau, n, config.T)
            sol = euler_solve(coeff, xi, subsample(driver, config.fine_n // n), spec, lam)
            errs.append(sup_error(sol, ref))
            if ref_alt is not None:
                errs_alt.append(sup_error(sol, ref_alt))
    except Exception as exc:
        if exc.args:
            exc.args = (f"replication {r}, n={n}: {exc.args[0]}",) + exc.args[1:]
        raise
    return errs, errs_alt


def run_ladder(config: RateExperimentConfig, workers: int = 1) -> ConvergenceReport:
    """Run all replications of the resolution ladder and aggregate.

    The result depends only on ``config``; ``workers`` > 1 spreads
    replications over processes without changing any number.
    """
    config.validate()
    reps = range(config.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, [config] * len(reps), reps))
    else:
        results = [_replicate(config, r) for r in reps]
    errors = np.array([e for e, _ in results])
    errors_alt = np.array([a for _, a in results]) if config.refine_alt is not None else None
    return ConvergenceReport(
        resolutions=config.resolutions,
        errors=errors,
        errors_alt=errors_alt,
        target_rate=config.target_rate,
        threshold=config.threshold,
        refine=config.refine,
        refine_alt=config.refine_alt,
        config=config.to_dict(),
    )


def report_from_pairs(
    pairs: Iterable[tuple[int, float]], target_rate: float = math.nan, threshold: float = math.nan
) -> ConvergenceReport:
    """A single-replication report from directly supplied (n, error) pairs."""
    pairs = sorted((int(n), float(e)) for n, e in pairs)
    return ConvergenceReport(
        resolutions=tuple(n for n, _ in pairs),
        errors=np.array([[e for _, e in pairs]]),
        target_rate=target_rate,
        threshold=threshold,
    )
