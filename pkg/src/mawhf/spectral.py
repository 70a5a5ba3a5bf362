"""Matrix cumulant, resolvent transform and real-argument cumulant of a model.

All transforms are evaluated in closed form from the mixture parameters.  The
characteristic argument ``alpha`` may be complex inside the admissible strip
``strip_lo < Im(alpha) < strip_hi``; arrays of arguments are broadcast and
return stacks of ``m x m`` matrices.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .model import ModelSpec, build_generator, require_valid, resolvent_Ps

COND_LIMIT = 1e12


class StripError(ValueError):
    """Argument outside the admissible strip or at a pole."""


class SingularResolventError(ArithmeticError):
    def __init__(self, alpha):
        self.alpha = alpha
        super().__init__(f"sI - Psi(alpha) is singular at alpha={alpha!r}")


class CumulantEvaluator:
    """Closed-form evaluator of ``Psi(alpha)``, ``Phi(s, alpha)`` and ``K(r)``.

    Parameters
    ----------
    spec : ModelSpec
        A valid model.  For a lower model the stored jump laws are read with
        flipped sign, so the evaluator returns the cumulant of the mirrored
        process.
    """

    def __init__(self, spec: ModelSpec):
        require_valid(spec)
        self.spec = spec
        self.m = spec.m
        self.sign = spec.sign
        self.Q = build_generator(spec)
        self.C = np.diag(spec.c)
        self.lam_pos = spec.pos_intensity()
        lam_neg = spec.lam * (1.0 - spec.pos_weight)
        self._neg = [(lam_neg[k], spec.neg_jump[k]) for k in range(self.m)]
        self._switch = [[(spec.nu[k] * spec.embedded[k, r], spec.switch_law(k, r))
                         for r in range(self.m)] for k in range(self.m)]

        # rates bounding the strip on each side of the real line (in r = Im-like units)
        exp_rates = [spec.c[k] for k in range(self.m) if self.lam_pos[k] > 0]
        mix_rates = [mix.min_rate for w, mix in self._neg if w > 0 and mix is not None]
        mix_rates += [law.neg.min_rate for row in self._switch for w, law in row
                      if w > 0 and law.atom0 < 1 and law.neg is not None]
        exp_bound = min(exp_rates, default=math.inf)
        mix_bound = min(mix_rates, default=math.inf)
        # K(r) = Psi(-i r) is finite for r_lo < r < r_hi
        if self.sign > 0:
            self.r_lo, self.r_hi = -mix_bound, exp_bound
        else:
            self.r_lo, self.r_hi = -exp_bound, mix_bound
        # equivalent strip for complex alpha: Im(alpha) = -r
        self.strip = (-self.r_hi, -self.r_lo)

    # -- cumulant ---------------------------------------------------------

    def _check_strip(self, alpha):
        im = np.imag(alpha)
        if np.any(im <= self.strip[0]) or np.any(im >= self.strip[1]):
            raise StripError(f"alpha outside admissible strip {self.strip}")

    def psi(self, alpha, check: bool = True) -> np.ndarray:
        """Return ``Psi(alpha)``; for array input the result has shape ``alpha.shape + (m, m)``."""
        alpha = np.asarray(alpha, dtype=complex)
        if check:
            self._check_strip(alpha)
        return self._assemble(1j * alpha)

    def _assemble(self, z) -> np.ndarray:
        """Cumulant as a function of ``z = i alpha`` (``z = r`` on the real line)."""
        spec, m, sgn = self.spec, self.m, self.sign
        out = np.zeros(z.shape + (m, m), dtype=complex)
        zs = sgn * z
        for k in range(m):
            val = spec.a[k] * z - spec.lam[k] - spec.nu[k]
            if self.lam_pos[k] > 0:
                with np.errstate(divide="raise", invalid="raise"):
                    try:
                        val = val + self.lam_pos[k] * spec.c[k] / (spec.c[k] - zs)
                    except FloatingPointError:
                        raise StripError("argument at a pole of (C - i alpha I)^{-1}") from None
            w, mix = self._neg[k]
            if w > 0:
                val = val + w * mix.transform(zs)
            out[..., k, k] += val
            for r in range(m):
                w, law = self._switch[k][r]
                if w > 0:
                    out[..., k, r] += w * law.transform(zs)
        return out

    def psi_at_infinity(self) -> np.ndarray:
        """Limit of ``Psi(alpha) - i alpha A`` as ``|alpha| -> inf`` along the real line.

        Atom contributions are only included at 0; models with atoms off 0 have
        no limit but this constant is still the non-oscillating part.
        """
        spec, m = self.spec, self.m
        out = -np.diag(spec.lam + spec.nu).astype(complex)
        for k in range(m):
            w, mix = self._neg[k]
            if w > 0:
                out[k, k] += w * mix.mass_at_zero()
            for r in range(m):
                w, law = self._switch[k][r]
                if w > 0:
                    out[k, r] += w * law.mass_at_zero()
        return out

    def phi(self, s: float, alpha, check: bool = True) -> np.ndarray:
        """Resolvent transform ``Phi(s, alpha) = s (sI - Psi(alpha))^{-1}``."""
        if not s > 0:
            raise ValueError("s must be positive")
        alpha = np.asarray(alpha, dtype=complex)
        psi = self.psi(alpha, check=check)
        lhs = s * np.eye(self.m) - psi
        if check:
            cond = np.linalg.cond(lhs.reshape(-1, self.m, self.m))
            bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
            if np.any(bad):
                raise SingularResolventError(alpha.reshape(-1)[np.argmax(bad)])
        return s * np.linalg.inv(lhs)

    def K(self, r) -> np.ndarray:
        """Real-argument cumulant ``K(r) = Psi(-i r)``."""
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr <= self.r_lo) or np.any(r_arr >= self.r_hi):
            raise StripError(f"r outside ({self.r_lo}, {self.r_hi})")
        return self._assemble(r_arr.astype(complex)).real

    def K_continued(self, r) -> np.ndarray:
        """Closed-form ``K`` continued beyond the strip (poles excluded)."""
        return self._assemble(np.asarray(r, dtype=complex))

    def k0_tail(self, x) -> np.ndarray:
        """``Kbar_0(x) = Lambda Fbar_0(0) exp(-C x)`` for ``x > 0`` (diagonal)."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("x must be positive")
        diag = self.lam_pos * np.exp(-np.multiply.outer(x, self.spec.c))
        out = np.zeros(x.shape + (self.m, self.m))
        idx = np.arange(self.m)
        out[..., idx, idx] = diag
        return out

    # -- derived quantities -----------------------------------------------

    def Ps(self, s: float) -> np.ndarray:
        return resolvent_Ps(self.spec, s)

    def abscissa(self, r: float) -> float:
        """Largest real part of the spectrum of ``K(r)`` (the Perron root: K is Metzler)."""
        return float(np.max(np.linalg.eigvals(self.K(r)).real))

    def moment_interval(self, s: float, cap: float = 1e3) -> tuple[float, float]:
        """Open interval of ``r`` on which ``E exp(r xi(theta_s))`` is finite.

        Each end is either a root of ``abscissa(r) = s`` or the strip boundary,
        capped at ``cap`` in absolute value.
        """
        def end(direction: int) -> float:
            bound = self.r_hi if direction > 0 else self.r_lo
            lim = min(abs(bound), cap)
            f = lambda y: self.abscissa(direction * y) - s
            lo = 0.0
            hi = lim * (1 - 1e-9) if math.isfinite(bound) else lim
            if f(hi) < 0:
                return direction * hi
            # bracket refinement keeps brentq away from the pole
            return direction * brentq(f, lo, hi, xtol=1e-14, rtol=1e-12)

        return end(-1), end(1)

    @cached_property
    def atom_extent(self) -> float:
        """Largest distance from 0 of an atom in any jump law (0 if there is none)."""
        mixes = [mix for w, mix in self._neg if w > 0]
        mixes += [law.neg for row in self._switch for w, law in row if w > 0 and law.neg is not None]
        return max([abs(a.x) for mix in mixes for a in mix.atoms], default=0.0)

    @property
    def has_offzero_atoms(self) -> bool:
        """True if some jump law has an atom away from 0 (the transform then oscillates)."""
        return self.atom_extent > 0.0

    @cached_property
    def atom_rates(self) -> np.ndarray:
        """Diagonal ``Lambda_0``: per-state rate of jumps with nonzero size."""
        rates = self.spec.lam.copy()
        for k, (w, mix) in enumerate(self._neg):
            if w > 0:
                rates[k] -= w * mix.mass_at_zero()
        return np.diag(rates)

    def f0(self) -> np.ndarray:
        """``f(0) = ||P{chi_kr = 0, y_1 = r | y_0 = k}||``."""
        spec = self.spec
        return np.array([[spec.embedded[k, r] * spec.switch_law(k, r).mass_at_zero()
                          for r in range(self.m)] for k in range(self.m)])

    def zero_atom(self, s: float) -> np.ndarray:
        """Mass of ``xi(theta_s)`` at 0; nonzero only for a model without drift."""
        m = self.m
        if not self.spec.zero_drift:
            return np.zeros((m, m))
        N = np.diag(self.spec.nu)
        lhs = s * np.eye(m) + self.atom_rates - N @ (self.f0() - np.eye(m))
        return s * np.linalg.inv(lhs)

    def leading_jump(self, s: float) -> np.ndarray:
        """Coefficient ``J`` in ``Phi(s, t) - atom ~ J / (i t)`` as ``|t| -> inf``.

        With nonzero drifts ``J = s (-A)^{-1}``, the jump of the density of
        ``xi(theta_s)`` across 0.  In zero-drift mode it comes from the
        first-order decay of the jump transforms.
        """
        spec, m = self.spec, self.m
        if not spec.zero_drift:
            return np.diag(-s / spec.a)
        sgn = self.sign
        # Psi(t) = Psi_inf + E1 / (i t) + O(t^-2)
        E1 = np.zeros((m, m))
        for k in range(m):
            E1[k, k] -= sgn * self.lam_pos[k] * spec.c[k]
            w, mix = self._neg[k]
            if w > 0:
                E1[k, k] += sgn * w * sum(c.w * c.rate for c in mix.erlangs if c.shape == 1)
            for r in range(m):
                w, law = self._switch[k][r]
                if w > 0 and law.neg is not None:
                    E1[k, r] += sgn * w * (1 - law.atom0) * sum(
                        c.w * c.rate for c in law.neg.erlangs if c.shape == 1)
        atom = self.zero_atom(s)
        return atom @ E1 @ atom / s
