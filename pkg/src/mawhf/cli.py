"""Command-line front end: ``mawhf <subcommand> MODEL [options]``.

Exit codes: 0 success, 1 a comparison or self-test failed (or an unexpected
error), 2 the input was rejected, 3 a numerical procedure did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import AsymptoticsError, limit_R_check, ruin_curve, zero_drift_atoms
from .factorize import (FactorizationError, default_probes, identity_residuals, phi_plus_general,
                        solve_inf, solve_sup)
from .inversion import GridError, invert_xi_distribution
from .model import ModelError, ModelSpec, load_model, stationary_distribution, validate_model
from .spectral import CumulantEvaluator

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3
SCHEMA = 1


class InputError(ValueError):
    """Rejected command-line input; maps to exit code 2."""


@dataclass
class RunConfig:
    subcommand: str
    model: Path | None
    s: float | None
    out: Path | None
    seed: int
    workers: int | None
    deterministic: bool
    args: argparse.Namespace


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="directory for output files (default: stdout)")
    common.add_argument("--deterministic", action="store_true",
                        help="omit timestamps and timings so identical runs give identical bytes")

    parser = argparse.ArgumentParser(prog="mawhf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mawhf {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a model file")
    p.add_argument("model", type=Path)

    p = sub.add_parser("transform", parents=[common], help="cumulant or resolvent transform on an alpha grid")
    p.add_argument("model", type=Path)
    p.add_argument("--what", choices=("psi", "phi"), default="phi")
    p.add_argument("--s", type=_positive, default=1.0)
    p.add_argument("--alpha-min", type=float, default=-10.0)
    p.add_argument("--alpha-max", type=float, default=10.0)
    p.add_argument("--n-alpha", type=_positive_int, default=41)
    p.add_argument("--im-alpha", type=float, default=0.0, help="imaginary part of every alpha")

    p = sub.add_parser("factorize", parents=[common], help="solve both factorizations at one s")
    p.add_argument("model", type=Path)
    p.add_argument("--s", type=_positive, default=1.0)
    p.add_argument("--probes", type=_positive_int, default=32, help="alpha probes for the identity check")
    p.add_argument("--theorem-check", action="store_true",
                   help="also compare with the convolution route for the supremum transform")

    p = sub.add_parser("extrema", parents=[common], help="laws of the extrema and their complements")
    p.add_argument("model", type=Path)
    p.add_argument("--s", type=_positive, default=1.0)
    p.add_argument("--x", type=_floats, default=None, help="points; default 0.25..4 on the law's side")
    p.add_argument("--law", choices=("sup", "xi_bar", "inf", "xi_check", "xi"), default="sup")

    p = sub.add_parser("ruin", parents=[common], help="law of the all-time infimum")
    p.add_argument("model", type=Path)
    p.add_argument("--x", type=_floats, default=None, help="negative levels; default -0.25..-8")
    p.add_argument("--no-laplace-check", action="store_true")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo paths killed at Exp(s)")
    p.add_argument("model", type=Path)
    p.add_argument("--s", type=_positive, default=1.0)
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--levels", type=_floats, default=[])
    p.add_argument("--workers", type=_positive_int, default=None, help="default: $MAWHF_WORKERS")
    p.add_argument("--horizon", type=_positive, default=None, help="fixed horizon instead of Exp(s) killing")
    p.add_argument("--csv", action="store_true", help="also write empirical laws on a grid")

    p = sub.add_parser("compare", parents=[common], help="simulate and test against the analytic law")
    p.add_argument("model", type=Path)
    p.add_argument("--s", type=_positive, default=1.0)
    p.add_argument("--n", type=_positive_int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=None)
    p.add_argument("--law", choices=("sup", "xi_bar", "inf", "xi_check", "xi", "ruin"), default="sup")
    p.add_argument("--x", type=_floats, default=None)
    p.add_argument("--level", type=_positive, default=0.01, help="family-wise significance level")

    p = sub.add_parser("selftest", parents=[common], help="end-to-end checks on the scalar benchmarks")
    p.add_argument("--n", type=_positive_int, default=200_000, help="paths for the simulation check")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    model = getattr(args, "model", None)
    if model is not None and not model.is_file():
        raise InputError(f"model file not found: {model}")
    out = args.out
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    workers = getattr(args, "workers", None)
    if workers is None and os.environ.get("MAWHF_WORKERS"):
        try:
            workers = int(os.environ["MAWHF_WORKERS"])
        except ValueError as exc:
            raise InputError("MAWHF_WORKERS must be an integer") from exc
    return RunConfig(args.subcommand, model, getattr(args, "s", None), out, getattr(args, "seed", 0),
                     workers, args.deterministic, args)


def _load(cfg: RunConfig) -> ModelSpec:
    try:
        spec = load_model(cfg.model)
    except json.JSONDecodeError as exc:
        raise InputError(f"{cfg.model}: not valid JSON ({exc})") from exc
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise InputError(f"{cfg.model}: malformed model ({exc!r})") from exc
    bad = validate_model(spec)
    if bad:
        raise ModelError(bad)
    return spec


def _envelope(cfg: RunConfig, body: dict, started: float) -> dict:
    out = {"mawhf_schema": SCHEMA, "command": cfg.subcommand, **body}
    if not cfg.deterministic:
        out["created"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        out["elapsed_s"] = round(time.perf_counter() - started, 3)
    return out


def _emit(cfg: RunConfig, name: str, text: str) -> None:
    if cfg.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        (cfg.out / name).write_text(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _matrix_csv(x, values, header: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# mawhf_csv_schema={SCHEMA}\n")
    if header:
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "k", "r", "value"])
    m = values.shape[-1]
    for i, xv in enumerate(x):
        for k in range(m):
            for r in range(m):
                w.writerow([f"{xv:.10g}", k, r, f"{values[i, k, r]:.12g}"])
    return buf.getvalue()


# -- subcommands ------------------------------------------------------------

def cmd_validate(cfg: RunConfig, started: float) -> int:
    spec = _load(cfg)
    stats = stationary_distribution(spec)
    body = {"valid": True, "m": spec.m, "lower": spec.lower, "zero_drift": spec.zero_drift,
            "stationary": stats.pi.tolist(), "mean_drift": stats.m1}
    _emit(cfg, "validate.json", _json_text(_envelope(cfg, body, started)))
    return EXIT_OK


def cmd_transform(cfg: RunConfig, started: float) -> int:
    spec = _load(cfg)
    a = cfg.args
    ev = CumulantEvaluator(spec)
    alphas = np.linspace(a.alpha_min, a.alpha_max, a.n_alpha) + 1j * a.im_alpha
    values = ev.psi(alphas) if a.what == "psi" else ev.phi(cfg.s, alphas)
    buf = io.StringIO()
    buf.write(f"# mawhf_csv_schema={SCHEMA}\n")
    buf.write("# " + json.dumps({"what": a.what, "s": cfg.s if a.what == "phi" else None}) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re_alpha", "im_alpha", "k", "r", "re_value", "im_value"])
    for al, mat in zip(alphas, values):
        for k in range(spec.m):
            for r in range(spec.m):
                w.writerow([f"{al.real:.10g}", f"{al.imag:.10g}", k, r,
                            f"{mat[k, r].real:.15g}", f"{mat[k, r].imag:.15g}"])
    _emit(cfg, f"transform_{a.what}.csv", buf.getvalue())
    return EXIT_OK


def cmd_factorize(cfg: RunConfig, started: float) -> int:
    spec = _load(cfg)
    sup = solve_sup(spec, cfg.s)
    inf = solve_inf(spec, cfg.s)
    res1, res2 = identity_residuals(sup, inf, default_probes(cfg.args.probes))
    body = {"s": cfg.s, "sup": sup.to_json(), "inf": inf.to_json(),
            "p_plus": sup.p_plus.tolist(), "q_plus": sup.q_plus.tolist(), "M": sup.M.tolist(),
            "D_sup": sup.D_sup.tolist(), "p_check_plus": inf.p_check_plus.tolist(),
            "q_check_plus": inf.q_check_plus.tolist(), "m_check": inf.m_check.tolist(),
            "D_inf": inf.D_inf.tolist(),
            "identity_residuals": {"sup_form": res1, "inf_form": res2}}
    if cfg.args.theorem_check:
        if spec.sign < 0:
            raise InputError("the convolution check is available for upper models only")
        body["convolution_check"] = {"max_deviation": phi_plus_general(spec, cfg.s, sup=sup)["max_deviation"]}
    _emit(cfg, "factorize.json", _json_text(_envelope(cfg, body, started)))
    return EXIT_OK


def _default_points(law: str) -> np.ndarray:
    grid = np.array([0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0])
    if law in ("sup", "xi_check"):
        return grid
    if law == "xi":
        return np.concatenate([-grid[::-1], grid])
    return -grid[::-1]


def cmd_extrema(cfg: RunConfig, started: float) -> int:
    from .montecarlo import analytic_curve

    spec = _load(cfg)
    law = cfg.args.law
    x = np.asarray(cfg.args.x if cfg.args.x is not None else _default_points(law), dtype=float)
    if law in ("sup", "xi_check") and np.any(x <= 0):
        raise InputError(f"{law} tails need positive x")
    if law in ("xi_bar", "inf") and np.any(x >= 0):
        raise InputError(f"{law} laws need negative x")
    curve = analytic_curve(spec, law, x, cfg.s)
    header = {"law": law, "relation": curve.relation, "s": cfg.s}
    _emit(cfg, f"extrema_{law}.csv", _matrix_csv(curve.x, curve.values, header))
    return EXIT_OK


def cmd_ruin(cfg: RunConfig, started: float) -> int:
    spec = _load(cfg)
    x = np.asarray(cfg.args.x if cfg.args.x is not None else
                   [-0.25, -0.5, -1.0, -2.0, -3.0, -4.0, -6.0, -8.0], dtype=float)
    if np.any(x >= 0):
        raise InputError("ruin levels must be negative")
    curve = ruin_curve(spec, np.sort(x), cross_check=not cfg.args.no_laplace_check)
    _emit(cfg, "ruin.csv", curve.to_csv())
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, started: float) -> int:
    from .montecarlo import simulate_paths

    spec = _load(cfg)
    a = cfg.args
    batch = simulate_paths(spec, cfg.s, a.n, a.seed, levels=a.levels, horizon=a.horizon, workers=cfg.workers)
    _emit(cfg, "simulate.json", _json_text(_envelope(cfg, batch.summary(), started)))
    if a.csv:
        lo = float(np.quantile(batch.xi, 0.001))
        hi = float(np.quantile(batch.xi, 0.999))
        x = np.linspace(lo, hi, 201)
        chunks = []
        for name in ("xi", "sup", "inf"):
            p, _ = batch.empirical(name, x, "<")
            chunks.append(_matrix_csv(x, p, {"functional": name, "relation": "<", "n": a.n, "seed": a.seed}))
        if cfg.out is None:
            sys.stdout.write("".join(chunks))
        else:
            for name, text in zip(("xi", "sup", "inf"), chunks):
                (cfg.out / f"empirical_{name}.csv").write_text(text)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, started: float) -> int:
    from .montecarlo import analytic_curve, compare_report, long_horizon_infimum, simulate_paths

    spec = _load(cfg)
    a = cfg.args
    law = a.law
    functional = "inf" if law == "ruin" else law
    x = np.asarray(a.x if a.x is not None else _default_points(functional), dtype=float)
    if law == "ruin":
        curve = analytic_curve(spec, "inf", x, None)
        batch = long_horizon_infimum(spec, a.n, a.seed, workers=cfg.workers)
    else:
        curve = analytic_curve(spec, functional, x, cfg.s)
        batch = simulate_paths(spec, cfg.s, a.n, a.seed, workers=cfg.workers)
    report = compare_report(batch, curve, a.level)
    body = {"law": law, "s": None if law == "ruin" else cfg.s, "n": a.n, "seed": a.seed, **report}
    if "truncation_bias_bound" in batch.meta:
        body["truncation_bias_bound"] = batch.meta["truncation_bias_bound"]
    _emit(cfg, f"compare_{law}.json", _json_text(_envelope(cfg, body, started)))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def selftest_checks(n_paths: int = 200_000) -> list[tuple[str, bool, str]]:
    """Scalar benchmark checks with closed-form answers; returns ``(name, passed, detail)``."""
    from .benchmarks import scalar_inf, scalar_monotone, scalar_sup
    from .montecarlo import analytic_curve, compare_report, simulate_paths

    checks = []

    def record(name, value, target, tol):
        err = float(np.max(np.abs(np.asarray(value) - target)))
        checks.append((name, err <= tol, f"error {err:.2e} (tol {tol:g})"))

    sup = solve_sup(scalar_sup(), 1.0)
    record("supremum atom", sup.p_plus[0, 0], np.sqrt(0.5), 1e-8)
    record("supremum tail exponent", sup.D_sup[0, 0], np.sqrt(2.0), 1e-8)
    inf = solve_inf(scalar_inf(), 1.0)
    record("infimum complement atom", inf.p_check_plus[0, 0], 1 / (1 + np.sqrt(3.0)), 1e-8)
    record("infimum complement exponent", inf.D_inf[0, 0], np.sqrt(3.0) - 1, 1e-8)
    record("infimum moment", inf.m_check[0, 0], 1 / np.sqrt(3.0), 1e-6)
    res = identity_residuals(sup, solve_inf(scalar_sup(), 1.0), default_probes())
    record("factorization identity", max(res), 0.0, 1e-6)
    record("limit atom", limit_R_check(scalar_inf()).R[0, 0], 1.0, 1e-4)
    x = np.array([-0.5, -1.0, -2.0, -5.0])
    record("ruin curve", ruin_curve(scalar_inf(), x).values[:, 0, 0], np.exp(x), 1e-4)
    atoms = zero_drift_atoms(scalar_monotone(), 1.0)
    record("zero-drift infimum atom", atoms["p_minus"][0, 0], 1.0, 1e-8)
    record("zero-drift resolvent atom", atoms["P0"][0, 0], 0.25, 1e-10)
    dist = invert_xi_distribution(scalar_sup(), 1.0)
    checks.append(("grid inversion", True, f"round-trip residual {dist.error_estimate:.2e}"))
    batch = simulate_paths(scalar_sup(), 1.0, n_paths, seed=2024)
    report = compare_report(batch, analytic_curve(scalar_sup(), "sup", [0.5, 1.0, 2.0], 1.0, sup=sup))
    checks.append(("simulated supremum law", report["passed"], f"max |z| {report['max_abs_z']:.2f}"
                   f" (critical {report['critical_z']:.2f})"))
    return checks


def cmd_selftest(cfg: RunConfig, started: float) -> int:
    checks = selftest_checks(cfg.args.n)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}", file=sys.stderr)
    body = {"checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in checks],
            "passed": all(ok for _, ok, _ in checks)}
    _emit(cfg, "selftest.json", _json_text(_envelope(cfg, body, started)))
    return EXIT_OK if body["passed"] else EXIT_FAIL


COMMANDS = {"validate": cmd_validate, "transform": cmd_transform, "factorize": cmd_factorize,
            "extrema": cmd_extrema, "ruin": cmd_ruin, "simulate": cmd_simulate, "compare": cmd_compare,
            "selftest": cmd_selftest}


def run(cfg: RunConfig) -> int:
    started = time.perf_counter()
    try:
        return COMMANDS[cfg.subcommand](cfg, started)
    except ModelError as exc:
        for v in exc.violations:
            print(f"invalid model: {v.field}: {v.rule}", file=sys.stderr)
        return EXIT_INVALID
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FactorizationError, AsymptoticsError, GridError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return run(cfg)
    except Exception as exc:  # last line of defence: report, never dump a traceback
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
