"""Small-``s`` limits: the all-time infimum, its transform and the ruin curve.

All limits are taken numerically along ``s = 10^-1, ..., 10^-5`` with
polynomial (Richardson) extrapolation to ``s = 0``; the factor quantities
depend smoothly on ``s`` there when the mean drift is positive.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .factorize import solve_inf
from .model import ModelSpec, require_valid, stationary_distribution
from .spectral import CumulantEvaluator

S_SEQUENCE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
ROUTE_TOL = 1e-4


class AsymptoticsError(ArithmeticError):
    """A limit does not exist for this model or could not be extrapolated."""


def richardson(s_values, values) -> tuple[np.ndarray, float]:
    """Extrapolate ``values(s)`` to ``s = 0`` by Neville's polynomial scheme.

    Returns the extrapolated value and the change caused by the last point,
    which serves as an error estimate.
    """
    s_values = np.asarray(s_values, dtype=float)
    table = [np.asarray(v, dtype=float) for v in values]
    n = len(table)
    if n == 1:
        return table[0], float("nan")
    previous = table[-1]
    for j in range(1, n):
        table = [(s_values[i + j] * table[i] - s_values[i] * table[i + 1]) / (s_values[i + j] - s_values[i])
                 for i in range(n - j)]
        if j == n - 2:
            previous = table[-1]
    return table[0], float(np.max(np.abs(table[0] - previous)))


def _require_positive_drift(spec: ModelSpec):
    require_valid(spec)
    if spec.sign < 0:
        raise AsymptoticsError("infimum limits are formulated for upper models")
    stats = stationary_distribution(spec)
    if not stats.m1 > 0:
        raise AsymptoticsError(
            f"infimum not proper: mean drift m1 = {stats.m1:.6g} must be positive")
    return stats


@dataclass
class LimitCheck:
    R: np.ndarray
    route_resolvent: np.ndarray
    route_moment: np.ndarray
    discrepancy: float
    extrapolation_error: float
    s_values: tuple


def limit_R_check(spec: ModelSpec, s_values=S_SEQUENCE, tol: float = ROUTE_TOL) -> LimitCheck:
    """The limit ``R = lim s p^{-1}(s) P_s`` of the infimum-side atom, two ways.

    Route one extrapolates ``s p^{-1}(s) P_s`` itself; route two extrapolates
    ``Lp m(s)``, the jump intensity times the moment matrix ``E exp(C inf)``.
    """
    _require_positive_drift(spec)
    ev = CumulantEvaluator(spec)
    lp = np.diag(ev.lam_pos)
    direct, via_moment = [], []
    for s in s_values:
        fact = solve_inf(spec, s, method="affine")
        direct.append(s * np.linalg.solve(fact.p, fact.Ps))
        via_moment.append(lp @ fact.moment)
    r1, e1 = richardson(s_values, direct)
    r2, e2 = richardson(s_values, via_moment)
    gap = float(np.max(np.abs(r1 - r2)))
    if gap > tol:
        raise AsymptoticsError(f"the two limit routes disagree by {gap:.2e}")
    return LimitCheck(R=r2, route_resolvent=r1, route_moment=r2, discrepancy=gap,
                      extrapolation_error=max(e1, e2), s_values=tuple(s_values))


def zero_drift_atoms(spec: ModelSpec, s: float | None = None, R: np.ndarray | None = None) -> dict:
    """Mass at 0 of ``xi(theta_s)`` and of the all-time infimum in zero-drift mode.

    Returns ``{"P0": ..., "p_minus": ...}``; ``P0`` needs ``s`` and ``p_minus``
    needs a positive mean drift (otherwise it is ``None``).
    """
    require_valid(spec)
    if not spec.zero_drift or np.any(spec.a != 0):
        raise AsymptoticsError("atom formulas need zero_drift mode with a = 0 in every state")
    ev = CumulantEvaluator(spec)
    out: dict = {"P0": ev.zero_atom(s) if s is not None else None, "p_minus": None}
    stats = stationary_distribution(spec)
    if stats.m1 > 0:
        R = limit_R_check(spec).R if R is None else R
        N = np.diag(spec.nu)
        lhs = ev.atom_rates - N @ (ev.f0() - np.eye(spec.m))
        if abs(np.linalg.det(lhs)) < 1e-14:
            raise AsymptoticsError("jump-rate matrix minus switch term is singular")
        out["p_minus"] = np.linalg.solve(lhs, R)
    return out


def _infimum_atom(spec: ModelSpec, R: np.ndarray) -> np.ndarray:
    if spec.zero_drift:
        return zero_drift_atoms(spec, R=R)["p_minus"]
    return np.zeros((spec.m, spec.m))


def full_inf_transform(spec: ModelSpec, r, R: np.ndarray) -> np.ndarray:
    """``E exp(r inf)`` for complex ``r`` (``r != 0``, away from the roots of ``det K``)."""
    ev = CumulantEvaluator(spec)
    K = ev.K_continued(np.asarray(r, dtype=complex))
    r = complex(r)
    return r * np.linalg.solve(K, np.diag(1.0 / (spec.c - r))) @ R


def inf_transform_limit(spec: ModelSpec, r: float, R: np.ndarray | None = None) -> np.ndarray:
    """``E[exp(r inf); inf < 0]`` for the all-time infimum, ``r > 0``."""
    _require_positive_drift(spec)
    if not r > 0:
        raise ValueError("r must be positive")
    if np.any(np.isclose(spec.c, r)):
        raise ValueError("r coincides with an exponential jump rate")
    R = limit_R_check(spec).R if R is None else R
    ev = CumulantEvaluator(spec)
    K = ev.K_continued(r).real
    if abs(np.linalg.det(K)) < 1e-13:
        raise ValueError("r is a root of det K(r)")
    return full_inf_transform(spec, r, R).real - _infimum_atom(spec, R)


@dataclass
class RuinCurve:
    """``P{inf < x}`` on a grid of ``x < 0``, one matrix per point."""

    x: np.ndarray
    values: np.ndarray
    R_check: np.ndarray
    p_minus: np.ndarray
    s_values: tuple
    extrapolation_error: float
    meta: dict = field(default_factory=dict)

    def probability(self) -> np.ndarray:
        """Row sums: ``P_k{inf < x}``."""
        return self.values.sum(axis=-1)

    def header(self) -> dict:
        return {"mawhf_schema": 1, "R_check": self.R_check.tolist(), "p_minus": self.p_minus.tolist(),
                "s_values": list(self.s_values), "extrapolation_error": self.extrapolation_error,
                **self.meta}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# mawhf_csv_schema=1\n")
        buf.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "k", "r", "value"])
        m = self.values.shape[-1]
        for i, xv in enumerate(self.x):
            for k in range(m):
                for r in range(m):
                    w.writerow([f"{xv:.10g}", k, r, f"{self.values[i, k, r]:.12g}"])
        return buf.getvalue()


def ruin_curve(spec: ModelSpec, x, s_values=S_SEQUENCE, tol: float = 1e-6,
               cross_check: bool = True, cross_tol: float = 1e-3) -> RuinCurve:
    """Distribution of the all-time infimum as the small-``s`` limit of the killed one.

    With ``cross_check`` up to three of the levels are recomputed by Laplace
    inversion of the infimum transform.  Raises :class:`AsymptoticsError` when
    the extrapolation error exceeds ``tol`` or the two routes differ by more
    than ``cross_tol``.
    """
    _require_positive_drift(spec)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x >= 0):
        raise ValueError("ruin levels must be negative")
    check = limit_R_check(spec, s_values)
    seq = [solve_inf(spec, s, method="affine").general_law(x) for s in s_values]
    values, err = richardson(s_values, seq)
    if err > tol:
        raise AsymptoticsError(f"extrapolation did not settle (change {err:.2e})")
    meta = {"route_discrepancy": check.discrepancy}
    if cross_check:
        idx = np.unique(np.linspace(0, len(x) - 1, min(3, len(x))).round().astype(int))
        talbot = ruin_by_laplace_inversion(spec, x[idx], check.R)
        gap = float(np.max(np.abs(talbot - values[idx])))
        meta["laplace_check"] = {"x": x[idx].tolist(), "max_deviation": gap}
        if gap > cross_tol:
            raise AsymptoticsError(f"Laplace inversion disagrees by {gap:.2e}")
    return RuinCurve(x=x, values=values, R_check=check.R, p_minus=_infimum_atom(spec, check.R),
                     s_values=tuple(s_values), extrapolation_error=err, meta=meta)


def ruin_by_laplace_inversion(spec: ModelSpec, x, R: np.ndarray | None = None) -> np.ndarray:
    """``P{inf < x}`` for ``x < 0`` by numerical inversion (Talbot) of the infimum transform."""
    stats = _require_positive_drift(spec)
    R = limit_R_check(spec).R if R is None else R
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = spec.m
    out = np.empty((len(x), m, m))
    cache: dict = {}

    def cdf_transform(r, k, j):
        # Laplace transform in y of P{-inf <= y}
        key = complex(r)
        if key not in cache:
            cache[key] = full_inf_transform(spec, key, R) / key
        return mpmath.mpc(cache[key][k, j])

    for i, xv in enumerate(x):
        for k in range(m):
            for j in range(m):
                val = mpmath.invertlaplace(lambda r: cdf_transform(r, k, j), -xv, method="talbot")
                out[i, k, j] = stats.P0[k, j] - float(mpmath.re(val))
    return out
