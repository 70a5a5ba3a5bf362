"""Wiener-Hopf factors of the killed process: fixed points, extrema laws, checks.

One factor of each pair is matrix-exponential and fixed by an atom matrix
``p`` together with a tail exponent ``D``.  Two shapes occur:

* ``"left"`` form: ``p = s (sI + M Lp)^{-1} P_s``, ``D = P_s^{-1} C p`` and the
  tail is ``q exp(-D x)``.  ``M`` collects column-rate moments of the other
  factor.  This is the supremum of an upper model (the infimum of a lower one).
* ``"right"`` form: ``p = s P_s (sI + Lp M)^{-1}``, ``D = p C P_s^{-1}`` and the
  tail is ``exp(-D x) q`` with row-rate moments.  This is the complement of the
  infimum of an upper model (the complement of the supremum of a lower one).

Here ``Lp`` is the diagonal intensity of upward exponential jumps.  The moment
matrix solves an affine fixed point whose coefficients are half-line
projections of ``Phi(s, .)`` at ``alpha = -i sgn c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm

from .inversion import (GriddedDistribution, _kernel_at_zero, cdf_at, exp_smooth_convolution,
                        invert_xi_distribution, minus_projection_moment, project)
from .model import ModelSpec
from .spectral import CumulantEvaluator

FIXED_POINT_TOL = 1e-12
MAX_ITER = 500
UNIQUENESS_TOL = 1e-10


class FactorizationError(ArithmeticError):
    """The solved factor violates a structural requirement."""


class NonConvergenceError(FactorizationError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass
class FixedPointReport:
    iterations: int
    residual: float
    history: list[float]
    method: str
    init: str
    init_spread: float | None = None
    damped: bool = False

    def to_json(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual, "method": self.method,
                "init": self.init, "init_spread": self.init_spread, "damped": self.damped}


def _coefficients(ev: CumulantEvaluator, s: float, form: str):
    """Projections entering the fixed point, evaluated at ``alpha = i side c``.

    Returns ``(A1, A2)`` where ``A1`` is the transform of ``xi(theta_s)``
    restricted to the general factor's half-line (atom at 0 included) and
    ``A2`` the same for the exponentially smoothed law.
    """
    side = -ev.sign
    kernel = "left" if form == "left" else "right"
    c = ev.spec.c
    rates = np.unique(c)
    proj = project(ev, s, 1j * side * rates, side, kernels=("none", kernel))
    atom = ev.zero_atom(s)
    m = ev.m
    A1, A2 = np.empty((m, m)), np.empty((m, m))
    for i, rate in enumerate(rates):
        idx = np.flatnonzero(c == rate)
        n1, n2 = proj["none"][i].real + atom, proj[kernel][i].real
        if form == "left":
            A1[:, idx], A2[:, idx] = n1[:, idx], n2[:, idx]
        else:
            A1[idx, :], A2[idx, :] = n1[idx, :], n2[idx, :]
    return A1, A2


def _solve_moment(ev, s, form, init, max_iter, tol, method):
    """Fixed point ``M = A1 + M B`` (left form) or ``M = A1 + B M`` (right form)."""
    m = ev.m
    A1, A2 = _coefficients(ev, s, form)
    lp = np.diag(ev.lam_pos)
    C, Ps = ev.C, ev.Ps(s)
    eye = np.eye(m)

    if method == "affine":
        if form == "left":
            B = lp @ (A1 - C @ A2) / s
            M = np.linalg.solve((eye - B).T, A1.T).T
        else:
            B = (A1 - A2 @ C) @ lp / s
            M = np.linalg.solve(eye - B, A1)
        return M, FixedPointReport(0, 0.0, [], "affine", init)

    def step(M):
        # one pass: atom matrix from the current moment, then the moment of the other factor
        if form == "left":
            p = s * np.linalg.solve(s * eye + M @ lp, Ps)
            pinv = np.linalg.inv(p)
            return Ps @ pinv @ A1 - (Ps - p) @ pinv @ C @ A2
        p = s * Ps @ np.linalg.inv(s * eye + lp @ M)
        pinv = np.linalg.inv(p)
        return A1 @ pinv @ Ps - A2 @ C @ pinv @ (Ps - p)

    M = eye.copy() if init == "identity" else np.zeros((m, m))
    history: list[float] = []
    damping, damped = 1.0, False
    for it in range(1, max_iter + 1):
        new = step(M)
        res = float(np.max(np.abs(new - M)))
        if history and res > history[-1] and damping == 1.0:
            damping, damped = 0.5, True
        M = M + damping * (new - M)
        history.append(res)
        if res < tol:
            return M, FixedPointReport(it, res, history, "iterate", init, damped=damped)
    raise NonConvergenceError(
        f"fixed point not reached in {max_iter} iterations (residual {history[-1]:.2e})", history)


class _Factorization:
    """Shared machinery; use :class:`SupFactorization` / :class:`InfFactorization`."""

    extreme: str = ""

    def __init__(self, spec: ModelSpec, s: float, form: str, moment: np.ndarray,
                 report: FixedPointReport, evaluator: CumulantEvaluator | None = None):
        self.spec = spec
        self.s = float(s)
        self.form = form
        self.ev = evaluator or CumulantEvaluator(spec)
        self.sign = self.ev.sign
        self.report = report
        self.moment = moment
        m = spec.m
        ev = self.ev
        self.Ps = ev.Ps(s)
        self.Ps_inv = np.eye(m) - ev.Q / s
        lp = np.diag(ev.lam_pos)
        self._lp = lp
        if form == "left":
            self.p = s * np.linalg.solve(s * np.eye(m) + moment @ lp, self.Ps)
            self.D = self.Ps_inv @ ev.C @ self.p
        else:
            self.p = s * self.Ps @ np.linalg.inv(s * np.eye(m) + lp @ moment)
            self.D = self.p @ ev.C @ self.Ps_inv
        self.q = self.Ps - self.p
        self._check()

    def _check(self):
        eig = np.linalg.eigvals(self.D)
        if np.any(eig.real <= 0):
            raise FactorizationError("tail exponent has an eigenvalue with non-positive real part")
        if np.any(self.moment < -1e-9) or np.any(self.moment > 1 + 1e-9):
            raise FactorizationError("moment matrix leaves [0, 1]")
        if np.any(self.q < -1e-9):
            raise FactorizationError("complement of the atom has negative entries")

    # -- the matrix-exponential factor -----------------------------------

    @property
    def exponential_is_extreme(self) -> bool:
        return self.form == "left"

    def exponential_transform(self, alpha) -> np.ndarray:
        """Characteristic function of the matrix-exponential factor."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
        z = -1j * self.sign * alpha
        C, p, D = self.ev.C, self.p, self.D
        eye = np.eye(self.spec.m)
        out = np.empty(alpha.shape + D.shape, dtype=complex)
        for i, zi in enumerate(z):
            if self.form == "left":
                out[i] = (C + zi * eye) @ p @ np.linalg.inv(D + zi * eye)
            else:
                out[i] = np.linalg.inv(D + zi * eye) @ p @ (C + zi * eye)
        return out

    def exponential_tail(self, x) -> np.ndarray:
        """Probability that the matrix-exponential factor exceeds ``x > 0`` in absolute value."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0):
            raise ValueError("distance from 0 must be non-negative")
        out = np.empty(x.shape + self.D.shape)
        for i, xv in enumerate(x):
            e = expm(-self.D * xv)
            out[i] = self.q @ e if self.form == "left" else e @ self.q
        return out

    def exponential_rate(self) -> float:
        """Smallest real part of the spectrum of ``D``: the decay rate of the tail."""
        return float(np.min(np.linalg.eigvals(self.D).real))

    # -- the general factor ----------------------------------------------

    def _combine(self, P, G):
        """Apply the factor formula to a law ``P`` and its smoothing ``G``."""
        s, lp, C, M = self.s, self._lp, self.ev.C, self.moment
        eye = np.eye(self.spec.m)
        if self.form == "left":
            L = eye + M @ lp / s
            return L @ P - (M @ lp / s) @ C @ G
        R = eye + lp @ M / s
        return P @ R - G @ C @ (lp @ M / s)

    def general_transform(self, alpha) -> np.ndarray:
        """Characteristic function of the general factor (any ``alpha`` in its half-plane)."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
        side = -self.sign
        kernel = "left" if self.form == "left" else "right"
        proj = project(self.ev, self.s, alpha, side, kernels=("none", kernel))
        atom = self.ev.zero_atom(self.s)
        return np.stack([self._combine(proj["none"][i] + atom, proj[kernel][i])
                         for i in range(len(alpha))])

    def general_law(self, y) -> np.ndarray:
        """Distribution of the general factor by distance from 0.

        For an upper model the factor is ``<= 0`` and the result at ``y < 0``
        is ``P{W < y}``.  For a lower model the factor is ``>= 0`` and the
        result at ``y > 0`` is ``P{W > y}``.
        """
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any(self.sign * y >= 0):
            raise ValueError("points must lie strictly on the general factor's side of 0")
        kernel = "left" if self.form == "left" else "right"
        P = cdf_at(self.ev, self.s, y)
        G = cdf_at(self.ev, self.s, y, kernel=kernel)
        if self.sign < 0:
            P = self.Ps[None] - P
            G = _kernel_at_zero(self.ev, self.Ps, kernel)[None] - G
        return np.stack([self._combine(P[i], G[i]) for i in range(len(y))])

    @cached_property
    def xi_dist(self) -> GriddedDistribution:
        return invert_xi_distribution(self.spec, self.s)

    @cached_property
    def general_dist(self) -> GriddedDistribution:
        """The general factor's law on the inversion grid (upper models).

        Values are ``P{W < x}`` on the non-positive part of the grid; ``atom0``
        is the mass of ``W`` at 0.
        """
        if self.sign < 0:
            raise NotImplementedError("gridded general factor is provided for upper models")
        dist = self.xi_dist.restrict(0.0)
        kernel = "left" if self.form == "left" else "right"
        G = exp_smooth_convolution(dist, self.spec.c, side=kernel)
        vals = np.stack([self._combine(P, g) for P, g in zip(dist.values, G)])
        atom = self.Ps - vals[-1]
        return GriddedDistribution(self.s, dist.x, vals, atom, dist.error_estimate,
                                   {"source": "factor formula on inversion grid"})

    # -- reporting --------------------------------------------------------

    def _json_common(self) -> dict:
        return {"s": self.s, "form": self.form, "lower": bool(self.spec.lower),
                "exponent_eigenvalues": [[float(v.real), float(v.imag)] for v in np.linalg.eigvals(self.D)],
                **self.report.to_json()}


class SupFactorization(_Factorization):
    """Supremum side: ``Phi = Phi_sup P_s^{-1} Phi_comp`` with ``comp = xi - sup``.

    For an upper model the supremum is matrix-exponential: ``p_plus`` is its
    atom at 0, ``D_sup`` its tail exponent and ``M = E exp(comp * C)``.  For a
    lower model the complement is the matrix-exponential factor and the same
    fields describe it (``M`` is then ``E exp(-C sup)``).
    """

    extreme = "sup"

    @property
    def p_plus(self):
        return self.p

    @property
    def q_plus(self):
        return self.q

    @property
    def M(self):
        return self.moment

    @property
    def D_sup(self):
        return self.D

    @property
    def iterations(self):
        return self.report.iterations

    @property
    def residual(self):
        return self.report.residual

    @property
    def minus_dist(self) -> GriddedDistribution:
        return self.general_dist

    def sup_transform(self, alpha) -> np.ndarray:
        return self.exponential_transform(alpha) if self.sign > 0 else self.general_transform(alpha)

    def complement_transform(self, alpha) -> np.ndarray:
        return self.general_transform(alpha) if self.sign > 0 else self.exponential_transform(alpha)

    def sup_tail(self, x) -> np.ndarray:
        """``P{sup > x}`` for ``x > 0``."""
        return self.exponential_tail(x) if self.sign > 0 else self.general_law(x)

    def first_passage(self, x) -> np.ndarray:
        """``E[exp(-s tau+(x)); tau+(x) < inf]`` for ``x > 0``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x <= 0):
            raise ValueError("upward passage needs x > 0")
        if self.sign > 0:
            E = self.ev.C @ self.p @ self.Ps_inv
            T0 = self.q @ self.Ps_inv
            return np.stack([T0 @ expm(-E * xv) for xv in x])
        return self.sup_tail(x) @ self.Ps_inv

    def to_json(self) -> dict:
        return {"p_plus": self.p.tolist(), "q_plus": self.q.tolist(), "M": self.moment.tolist(),
                "D_sup": self.D.tolist(), **self._json_common()}


class InfFactorization(_Factorization):
    """Infimum side: ``Phi = Phi_inf P_s^{-1} Phi_comp`` with ``comp = xi - inf``.

    For an upper model the complement is matrix-exponential: ``p_check_plus``
    is its atom at 0, ``D_inf`` its tail exponent and ``m_check = E exp(C inf)``.
    For a lower model the infimum is the matrix-exponential factor.
    """

    extreme = "inf"

    @property
    def p_check_plus(self):
        return self.p

    @property
    def q_check_plus(self):
        return self.q

    @property
    def m_check(self):
        return self.moment

    @property
    def D_inf(self):
        return self.D

    @property
    def iterations(self):
        return self.report.iterations

    @property
    def residual(self):
        return self.report.residual

    @property
    def min_dist(self) -> GriddedDistribution:
        return self.general_dist

    def inf_transform(self, alpha) -> np.ndarray:
        return self.general_transform(alpha) if self.sign > 0 else self.exponential_transform(alpha)

    def complement_transform(self, alpha) -> np.ndarray:
        return self.exponential_transform(alpha) if self.sign > 0 else self.general_transform(alpha)

    def inf_cdf(self, x) -> np.ndarray:
        """``P{inf < x}`` for ``x < 0``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x >= 0):
            raise ValueError("x must be negative")
        return self.general_law(x) if self.sign > 0 else self.exponential_tail(-x)

    def first_passage(self, x) -> np.ndarray:
        """``E[exp(-s tau-(x)); tau-(x) < inf]`` for ``x < 0``."""
        return self.inf_cdf(x) @ self.Ps_inv

    def to_json(self) -> dict:
        return {"p_check_plus": self.p.tolist(), "q_check_plus": self.q.tolist(),
                "m_check": self.moment.tolist(), "D_inf": self.D.tolist(), **self._json_common()}


def _solve(cls, spec, s, form, init, max_iter, tol, method, check_uniqueness):
    if not s > 0:
        raise ValueError("s must be positive")
    ev = CumulantEvaluator(spec)
    if init not in ("identity", "zero"):
        raise ValueError("init must be 'identity' or 'zero'")
    moment, report = _solve_moment(ev, s, form, init, max_iter, tol, method)
    if check_uniqueness and method == "iterate":
        other = "zero" if init == "identity" else "identity"
        alt, _ = _solve_moment(ev, s, form, other, max_iter, tol, method)
        spread = float(np.max(np.abs(alt - moment)))
        report.init_spread = spread
        if spread > UNIQUENESS_TOL:
            raise FactorizationError(f"fixed point depends on the starting point (spread {spread:.2e})")
    return cls(spec, s, form, moment, report, ev)


def solve_sup(spec: ModelSpec, s: float, *, init: str = "identity", max_iter: int = MAX_ITER,
              tol: float = FIXED_POINT_TOL, method: str = "iterate",
              check_uniqueness: bool = True) -> SupFactorization:
    """Solve the supremum-side factor at killing rate ``s``.

    ``method="iterate"`` runs the fixed-point iteration from ``init``
    (``"identity"`` or ``"zero"``) and, with ``check_uniqueness``, confirms
    that the other start reaches the same point.  ``method="affine"`` solves
    the (affine) fixed-point equation directly, which is preferable for very
    small ``s`` where the iteration contracts slowly.
    """
    form = "left" if spec.sign > 0 else "right"
    return _solve(SupFactorization, spec, s, form, init, max_iter, tol, method, check_uniqueness)


def solve_inf(spec: ModelSpec, s: float, *, init: str = "identity", max_iter: int = MAX_ITER,
              tol: float = FIXED_POINT_TOL, method: str = "iterate",
              check_uniqueness: bool = True) -> InfFactorization:
    """Solve the infimum-side factor at killing rate ``s``; options as :func:`solve_sup`."""
    form = "right" if spec.sign > 0 else "left"
    return _solve(InfFactorization, spec, s, form, init, max_iter, tol, method, check_uniqueness)


def first_passage_transforms(fact, x) -> np.ndarray:
    """Upward (``SupFactorization``, ``x > 0``) or downward (``InfFactorization``, ``x < 0``)
    first-passage transforms ``E[exp(-s tau); tau < inf]``."""
    return fact.first_passage(x)


def identity_residuals(sup: SupFactorization, inf: InfFactorization, alphas) -> tuple[float, float]:
    """Max-norm residuals of both product forms of ``Phi(s, alpha)`` over real ``alphas``."""
    if sup.s != inf.s:
        raise ValueError("factorizations at different s")
    alphas = np.asarray(alphas, dtype=float)
    phi = sup.ev.phi(sup.s, alphas)
    Pinv = sup.Ps_inv
    first = np.einsum("aij,jk,akl->ail", sup.sup_transform(alphas), Pinv, sup.complement_transform(alphas))
    second = np.einsum("aij,jk,akl->ail", inf.inf_transform(alphas), Pinv, inf.complement_transform(alphas))
    return float(np.max(np.abs(phi - first))), float(np.max(np.abs(phi - second)))


def default_probes(n: int = 32, span: float = 8.0) -> np.ndarray:
    """Symmetric real probe points, denser near 0."""
    return span * np.sinh(np.linspace(-2.5, 2.5, n)) / math.sinh(2.5)


def phi_plus_general(spec: ModelSpec, s: float, alphas=None, sup: SupFactorization | None = None,
                     n_x: int = 4001) -> dict:
    """Supremum transform rebuilt from the gridded complement law and the jump tail.

    The convolution of the complement's law with the upward jump tail is
    computed on the inversion grid, integrated against ``e^{i alpha x}`` by
    Simpson's rule, and assembled into the transform; the result is compared
    with the closed form of the solved factorization.
    """
    if spec.sign < 0:
        raise NotImplementedError("the cross-check is formulated for upper models")
    sup = sup or solve_sup(spec, s)
    alphas = default_probes() if alphas is None else np.asarray(alphas, dtype=float)
    ev, m = sup.ev, spec.m
    lp = np.diag(ev.lam_pos)
    c = spec.c
    if not np.any(ev.lam_pos):
        kvals = np.zeros((len(alphas), m, m), dtype=complex)
    else:
        comp = sup.general_dist
        # int dP(y) e^{c_r y} over y <= 0, including the mass at 0
        moment = minus_projection_moment(comp, c, axis="col") + comp.atom0
        x = np.linspace(0.0, 40.0 / c.min(), n_x)
        tail = np.exp(-np.outer(x, c))
        # K(s, x) = int dP(y) Kbar(x - y), tabulated on x >= 0
        Kx = (moment @ lp)[None] * tail[:, None, :]
        kvals = np.stack([simpson(np.exp(1j * a * x)[:, None, None] * Kx, x=x, axis=0) for a in alphas])
    eye = np.eye(m)
    rebuilt = np.stack([np.linalg.solve(eye - 1j * a * kv / s, sup.Ps) for a, kv in zip(alphas, kvals)])
    closed = sup.sup_transform(alphas)
    return {"alphas": alphas, "rebuilt": rebuilt, "closed_form": closed,
            "max_deviation": float(np.max(np.abs(rebuilt - closed)))}
