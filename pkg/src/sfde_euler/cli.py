"""Command-line front end.

Subcommands ``fbm``, ``simulate``, ``convergence`` and ``diagnose``. Each run
writes into its own output directory a ``manifest.json`` (the fully resolved
configuration) plus CSV/JSON artifacts. Passing a manifest back through
``--config`` reproduces the run byte for byte.

Exit status: 0 success, 1 runtime or assertion failure, 2 validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coefficient import (
    ConstantCoefficient,
    FunctionalCoefficient,
    IntegralFunctional,
    Measure,
    OuterFunction,
    PointDelay,
)
from .convergence import RateExperimentConfig, report_from_pairs, run_ladder
from .errors import DomainError
from .euler import (
    MATERIALIZE_LIMIT,
    chaining_identity_check,
    chaining_scale,
    default_lambda,
    euler_solve,
    reference_solve,
    remainder_norm,
    scheme_remainder,
    write_solution_csv,
)
from .fbm import CHOLESKY_MAX_STEPS, sample_fbm, subsample, validate_hurst, write_path_csv
from .holder import (
    holder_seminorm,
    sewing_check,
    two_param_norm,
    young_bound_probe,
    young_constant,
    young_riemann,
)
from .path import InitialCondition, build_grid, segment_at

log = logging.getLogger("sfde_euler")

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2
CHAIN_TOL = 1e-12


class ValidationError(Exception):
    pass


DEFAULTS = {
    "fbm": {"H": 0.75, "n": 512, "T": 1.0, "method": "circulant", "seed": 0},
    "simulate": {
        "H": 0.75,
        "tau": 0.1,
        "n": 50,
        "T": 1.0,
        "coefficient": "paper",
        "xi": "paper",
        "lam": None,
        "seed": 0,
    },
    "convergence": {
        "H": 0.75,
        "tau": 0.1,
        "T": 1.0,
        "lam": None,
        "eps_margin": 0.15,
        "resolutions": [10, 20, 40, 80, 160],
        "refine": 16,
        "refine_alt": 8,
        "replications": 20,
        "coefficient": "paper",
        "xi": "paper",
        "inject": None,
        "check": False,
        "workers": 1,
        "seed": 0,
    },
    "diagnose": {
        "H": 0.75,
        "tau": 0.1,
        "n": 200,
        "T": 1.0,
        "coefficient": "paper",
        "xi": "paper",
        "lam": None,
        "mu": None,
        "refine": 4,
        "triples": 10000,
        "seed": 0,
    },
}


# -- spec parsing ------------------------------------------------------------


def _parse_outer(spec) -> OuterFunction:
    if isinstance(spec, dict):
        name = spec.get("name")
        if name == "custom_table":
            return OuterFunction.table(spec["xs"], spec["ys"])
        return OuterFunction(name, tuple(float(p) for p in spec.get("params", ())))
    name, _, rest = str(spec).partition(":")
    params = tuple(float(p) for p in rest.split(",")) if rest else ()
    return OuterFunction(name, params)


def parse_coefficient(spec, tau: float) -> FunctionalCoefficient:
    """Coefficient from a string (``paper``, ``constant:C``, ``integral:OUTER``,
    ``point_delay:OUTER``) or from the dict written to manifests."""
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "constant":
            return ConstantCoefficient(float(spec["c"]))
        if kind == "point_delay":
            return PointDelay(_parse_outer(spec["outer"]), float(spec.get("tau", tau)))
        if kind == "integral_functional":
            m = spec.get("measure", {})
            density = m.get("density", 1.0)
            if density == "uniform":
                density = 1.0
            measure = Measure(float(m.get("tau", tau)), density, tuple(tuple(a) for a in m.get("atoms", ())))
            return IntegralFunctional(_parse_outer(spec["outer"]), measure)
        raise ValueError(f"unknown coefficient kind {kind!r}")
    text = str(spec)
    if text == "paper":
        return IntegralFunctional(OuterFunction("sin_shift"), Measure.lebesgue(tau))
    head, _, rest = text.partition(":")
    if head == "constant":
        return ConstantCoefficient(float(rest))
    if head == "integral":
        return IntegralFunctional(_parse_outer(rest or "identity"), Measure.lebesgue(tau))
    if head == "point_delay":
        return PointDelay(_parse_outer(rest or "identity"), tau)
    raise ValueError(f"cannot parse coefficient spec {text!r}")


def parse_xi(spec, tau: float) -> InitialCondition:
    """Initial condition from ``paper`` (x^2 + 2), ``constant:C``,
    ``poly:c0,c1,...`` or a manifest dict."""
    if isinstance(spec, dict):
        kind = spec["kind"]
        if kind == "tabulated":
            return InitialCondition.tabulated(spec["params"], spec.get("tau", tau))
        return InitialCondition(kind, tuple(float(p) for p in spec["params"]))
    text = str(spec)
    if text == "paper":
        return InitialCondition.polynomial(2.0, 0.0, 1.0)
    head, _, rest = text.partition(":")
    if head == "constant":
        return InitialCondition.constant(float(rest))
    if head in ("poly", "polynomial"):
        return InitialCondition.polynomial(*(float(c) for c in rest.split(",")))
    raise ValueError(f"cannot parse initial condition spec {text!r}")


def parse_inject(spec) -> list[tuple[int, float]]:
    if isinstance(spec, (list, dict)):
        items = spec.items() if isinstance(spec, dict) else spec
        return [(int(n), float(e)) for n, e in items]
    pairs = []
    for item in str(spec).split(","):
        n, _, e = item.partition(":")
        pairs.append((int(n), float(e)))
    return pairs


# -- config handling ---------------------------------------------------------


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_dotted(cfg: dict, key: str, value) -> None:
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def load_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file (or manifest), then flags."""
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
        if "command" in data and "config" in data:
            if data["command"] != command:
                raise ValidationError(f"manifest is for {data['command']!r}, not {command!r}")
            data = data["config"]
        for key, value in data.items():
            if key.split(".")[0] not in cfg:
                raise ValidationError(f"unknown config key {key!r} for {command}")
            _set_dotted(cfg, key, value)
    for key, value in vars(args).items():
        if key in cfg and value is not None:
            cfg[key] = value
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep or key.split(".")[0] not in cfg:
            raise ValidationError(f"bad override {item!r}")
        _set_dotted(cfg, key, _coerce(value))
    return cfg


def _check_seed(seed) -> int:
    if int(seed) != seed or not 0 <= int(seed) < 2**64:
        raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return int(seed)


def _prepare_out(path: str | None, command: str, force: bool) -> Path:
    out = Path(path or f"{command}-run")
    if out.exists() and any(out.iterdir()) and not force:
        raise ValidationError(f"output directory {out} is not empty (use --force to overwrite)")
    return out


def _write_outputs(out: Path, command: str, cfg: dict, files: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config": cfg, "version": __version__}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for name, writer in files.items():
        writer(out / name)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json_writer(payload: dict):
    def write(dest):
        Path(dest).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")

    return write


# -- subcommands -------------------------------------------------------------
#
# Each ``prepare_*`` validates the config (raising -> exit 2) and returns a
# zero-argument runner. The runner computes everything and returns the files
# to write plus the exit status; files are written only after it returns.


def prepare_fbm(cfg: dict):
    H = validate_hurst(cfg["H"])
    seed = _check_seed(cfg["seed"])
    n = cfg["n"]
    if int(n) != n or n < 1 or not cfg["T"] > 0:
        raise DomainError("n must be a positive integer and T positive")
    if cfg["method"] not in ("circulant", "cholesky"):
        raise DomainError(f"unknown method {cfg['method']!r}")
    if cfg["method"] == "cholesky" and n > CHOLESKY_MAX_STEPS:
        raise DomainError(f"Cholesky generator is capped at {CHOLESKY_MAX_STEPS} steps")

    def run():
        path = sample_fbm(int(n), H, float(cfg["T"]), seed, cfg["method"])
        return {"fbm.csv": lambda d: write_path_csv(path, d)}, EXIT_OK

    return run


def _solver_inputs(cfg: dict):
    H = validate_hurst(cfg["H"])
    if H <= 0.5:
        raise DomainError(f"the solver needs H > 1/2, got {H}")
    spec = build_grid(float(cfg["tau"]), cfg["n"], float(cfg["T"]))
    coeff = parse_coefficient(cfg["coefficient"], spec.tau)
    xi = parse_xi(cfg["xi"], spec.tau)
    lam = default_lambda(H) if cfg["lam"] is None else float(cfg["lam"])
    if not 0.5 < lam < H:
        raise DomainError(f"lambda must lie in (1/2, H={H}), got {lam}")
    coeff.bind(spec.n, spec.tau)
    xi.sample(spec)
    cfg["coefficient"] = coeff.to_dict()
    cfg["xi"] = xi.to_dict()
    cfg["lam"] = lam
    return H, spec, coeff, xi, lam


def prepare_simulate(cfg: dict):
    H, spec, coeff, xi, lam = _solver_inputs(cfg)
    seed = _check_seed(cfg["seed"])

    def run():
        driver = sample_fbm(spec.n_forward, H, spec.T, seed)
        result = euler_solve(coeff, xi, driver, spec, lam)
        return {"solution.csv": lambda d: write_solution_csv(result, d)}, EXIT_OK

    return run


def prepare_convergence(cfg: dict):
    seed = _check_seed(cfg["seed"])
    check = bool(cfg["check"])
    if cfg["inject"] is not None:
        pairs = parse_inject(cfg["inject"])
        if any(n < 1 or e < 0 for n, e in pairs):
            raise DomainError("injected pairs need n >= 1 and error >= 0")
        cfg["inject"] = [[n, e] for n, e in pairs]

        def make_report():
            return report_from_pairs(pairs)

    else:
        tau = float(cfg["tau"])
        coeff = parse_coefficient(cfg["coefficient"], tau)
        xi = parse_xi(cfg["xi"], tau)
        if isinstance(cfg["resolutions"], str):
            cfg["resolutions"] = [int(v) for v in cfg["resolutions"].split(",")]
        config = RateExperimentConfig(
            H=float(cfg["H"]),
            tau=tau,
            T=float(cfg["T"]),
            lam=cfg["lam"],
            eps_margin=float(cfg["eps_margin"]),
            resolutions=tuple(cfg["resolutions"]),
            refine=int(cfg["refine"]),
            refine_alt=None if cfg["refine_alt"] is None else int(cfg["refine_alt"]),
            replications=int(cfg["replications"]),
            base_seed=seed,
            coefficient=coeff,
            xi=xi,
        )
        config.validate()
        workers = int(cfg["workers"])
        if workers < 1:
            raise DomainError("workers must be >= 1")
        cfg["coefficient"] = coeff.to_dict()
        cfg["xi"] = xi.to_dict()
        cfg["lam"] = config.lam

        def make_report():
            return run_ladder(config, workers=workers)

    def run():
        report = make_report()
        summary = report.summary()
        files = {
            "errors.csv": report.write_errors_csv,
            "summary.json": _json_writer(summary),
            "plot.csv": report.write_plot_csv,
        }
        status = EXIT_OK
        if check:
            checks = summary.get("checks")
            if not checks or not all(checks.values()):
                log.error("convergence checks failed: %s", checks)
                status = EXIT_FAIL
        return files, status

    return run


def prepare_diagnose(cfg: dict):
    H, spec, coeff, xi, lam = _solver_inputs(cfg)
    seed = _check_seed(cfg["seed"])
    mu = 2.0 * lam if cfg["mu"] is None else float(cfg["mu"])
    if mu <= 1:
        raise DomainError(f"sewing inequality requires mu > 1, got {mu}")
    m = cfg["refine"]
    if int(m) != m or m < 1:
        raise DomainError("refine must be a positive integer")
    triples = None if cfg["triples"] is None else int(cfg["triples"])
    if triples is not None and triples < 1:
        raise DomainError("triples must be positive")
    cfg["mu"] = mu

    def run():
        fine = sample_fbm(spec.n_forward * int(m), H, spec.T, seed)
        rec = run_diagnostics(coeff, xi, fine, spec, int(m), lam, mu, triples, seed)
        status = EXIT_OK
        if not rec["passed"]:
            failed = [k for k, v in rec["checks"].items() if not v]
            log.error("diagnostic checks failed: %s", ", ".join(failed))
            status = EXIT_FAIL
        return {"diagnostics.json": _json_writer(rec)}, status

    return run


def run_diagnostics(coeff, xi, fine, spec, m, lam, mu, triples=None, seed=0) -> dict:
    """Remainder norms, sewing, chaining and Young checks on one seeded solve.

    ``fine`` is a driver on the m-times refined grid; the coarse solve uses
    its subsample and the reference solve uses it directly.
    """
    result = euler_solve(coeff, xi, subsample(fine, m), spec, lam)
    ref = reference_solve(coeff, xi, fine, spec, m, lam)
    N = spec.n_forward
    checks: dict[str, bool] = {}
    rec: dict = {"lam": lam, "mu": mu}

    rec["scheme_remainder_norm"] = remainder_norm(result, mu)
    rec["solution_remainder_norm"] = remainder_norm(ref, mu, stride=ref.stride)
    if N + 1 <= MATERIALIZE_LIMIT:
        sew = sewing_check(scheme_remainder(result), mu)
        rec["sewing"] = {
            "lhs": sew.lhs, "bound": sew.bound, "diag": sew.diag, "delta": sew.delta, "C_mu": sew.constant,
        }
        checks["sewing"] = bool(sew.passed)
    else:
        rec["sewing"] = None

    scale = chaining_scale(result)
    defect = chaining_identity_check(result, n_triples=triples, seed=seed)
    rec["chaining"] = {"defect": defect, "scale": scale, "tolerance": CHAIN_TOL * scale}
    checks["chaining"] = bool(defect <= CHAIN_TOL * scale)

    B = result.B
    sq = math.fsum(np.diff(B) ** 2)
    lhs = young_riemann(B, B, 0, N)
    rhs = 0.5 * B[N] ** 2 - 0.5 * sq
    denom = 0.5 * B[N] ** 2 + 0.5 * sq
    rel = abs(lhs - rhs) / denom if denom > 0 else abs(lhs - rhs)
    rec["young_bdb"] = {"riemann": lhs, "closed_form": rhs, "relative_error": rel}
    checks["young_bdb"] = bool(rel <= 1e-12)

    times = spec.forward_times
    p_lhs, p_rhs = young_bound_probe(result.trace, B, lam, lam, 0, N, times=times)
    c_young = young_constant(lam, lam)
    rec["young_bound"] = {"lhs": p_lhs, "rhs": p_rhs, "constant": c_young}
    checks["young_bound"] = bool(p_lhs <= c_young * p_rhs)

    rec["holder_seminorm_X"] = holder_seminorm(result.X, lam, times)
    consts = coeff.constants(spec.n)
    rec["declared_constants"] = {"M1": consts.M1, "M2": consts.M2, "C": consts.C}
    seg_sup = np.array([np.max(np.abs(segment_at(result.path, k).values)) for k in range(N + 1)])
    if consts.M2 > 0:
        growth = float(np.max(np.abs(result.trace) / (consts.M2 * (1.0 + seg_sup))))
        checks["linear_growth"] = bool(growth <= 1.0 + 1e-12)
    else:
        growth = 0.0
        checks["linear_growth"] = bool(np.all(result.trace == 0))
    rec["linear_growth_ratio"] = growth
    if result.inner_range is not None:
        lo, hi = result.inner_range
        rec["inner_range"] = [lo, hi]
        rec["lipschitz_on_range"] = coeff.outer.lipschitz_on(lo, hi) * coeff.measure.total_variation(spec.n)
    rec["checks"] = checks
    rec["passed"] = all(checks.values())
    return rec


COMMANDS = {
    "fbm": prepare_fbm,
    "simulate": prepare_simulate,
    "convergence": prepare_convergence,
    "diagnose": prepare_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfde-euler", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file or a manifest.json from an earlier run")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-key override (repeatable)")

    p = sub.add_parser("fbm", parents=[common], help="sample one fBm path")
    p.add_argument("--H", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--method", choices=["circulant", "cholesky"])

    for name, text in (("simulate", "solve the SFDE once"), ("diagnose", "remainder and identity diagnostics")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--H", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--n", type=int, help="steps per delay interval")
        p.add_argument("--T", type=float)
        p.add_argument("--coefficient", help="paper | constant:C | integral:OUTER | point_delay:OUTER")
        p.add_argument("--xi", help="paper | constant:C | poly:c0,c1,...")
        p.add_argument("--lam", type=float)
        if name == "diagnose":
            p.add_argument("--mu", type=float)
            p.add_argument("--refine", type=int)
            p.add_argument("--triples", type=int)

    p = sub.add_parser("convergence", parents=[common], help="strong-error ladder and rate fit")
    p.add_argument("--H", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--eps-margin", dest="eps_margin", type=float)
    p.add_argument("--resolutions", help="comma-separated values of n")
    p.add_argument("--refine", type=int)
    p.add_argument("--refine-alt", dest="refine_alt", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--coefficient")
    p.add_argument("--xi")
    p.add_argument("--inject", help='synthetic errors "n:e,n:e,..."')
    p.add_argument("--workers", type=int)
    p.add_argument("--check", action="store_true", default=None, help="exit 1 if rate checks fail")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.command, args)
        out = _prepare_out(args.out, args.command, args.force)
        runner = COMMANDS[args.command](cfg)
    except (ValidationError, ValueError, TypeError, KeyError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_INVALID
    try:
        files, status = runner()
        _write_outputs(out, args.command, cfg, files)
    except Exception as exc:  # noqa: BLE001 -- any runtime failure maps to exit status 1
        log.error("run failed: %s", exc)
        return EXIT_FAIL
    return status


if __name__ == "__main__":
    sys.exit(main())
