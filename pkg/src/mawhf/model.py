"""Parameterization of the Markov-modulated process and its static quantities.

A model is a finite Markov chain ``x(t)`` with sojourn rates ``nu`` and embedded
transition matrix ``P``; while in state ``k`` the additive component drifts at
rate ``a[k]`` and jumps at rate ``lambda[k]``.  A jump is ``Exp(c[k])`` distributed
and points in the "exponential direction" with probability ``pos_weight[k]``;
otherwise it is drawn from a :class:`NegativeMixture` on the opposite side.
Chain switches ``k -> r`` carry an extra jump drawn from a :class:`SwitchJumpLaw`.

For an ordinary (upper) model the exponential jumps are positive and everything
else is non-positive.  A model flagged ``lower=True`` describes the mirror image
``-xi``: every stored spatial quantity is read with its sign flipped, except the
drift which is stored with its actual sign.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

SCHEMA_VERSION = 1
_TOL = 1e-12


class ModelError(ValueError):
    """Raised when an operation receives a model that fails validation."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        lines = "; ".join(f"{v.field}: {v.rule}" for v in self.violations)
        super().__init__(f"invalid model ({lines})")


@dataclass(frozen=True)
class Atom:
    """Point mass at ``x <= 0``."""

    w: float
    x: float


@dataclass(frozen=True)
class Erlang:
    """Negative of an Erlang(rate, shape) variable."""

    w: float
    rate: float
    shape: int = 1


@dataclass(frozen=True)
class NegativeMixture:
    """Mixture of atoms and negated Erlang laws supported on ``(-inf, 0]``."""

    components: tuple = ()

    @property
    def total_mass(self) -> float:
        return float(sum(c.w for c in self.components))

    @property
    def atoms(self) -> list[Atom]:
        return [c for c in self.components if isinstance(c, Atom)]

    @property
    def erlangs(self) -> list[Erlang]:
        return [c for c in self.components if isinstance(c, Erlang)]

    @property
    def min_rate(self) -> float:
        rates = [c.rate for c in self.erlangs if c.w > 0]
        return min(rates) if rates else math.inf

    def mean(self) -> float:
        return float(sum(c.w * c.x for c in self.atoms)
                     - sum(c.w * c.shape / c.rate for c in self.erlangs))

    def mass_at_zero(self) -> float:
        return float(sum(c.w for c in self.atoms if c.x == 0.0))

    def transform(self, z):
        """Return ``E exp(z Y)`` for complex ``z`` with ``Re z > -min_rate``."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for c in self.components:
            if isinstance(c, Atom):
                out = out + c.w * np.exp(z * c.x)
            else:
                out = out + c.w * (c.rate / (c.rate + z)) ** c.shape
        return out

    def to_json(self) -> list[dict]:
        out = []
        for c in self.components:
            if isinstance(c, Atom):
                out.append({"w": c.w, "kind": "atom", "x": c.x})
            else:
                out.append({"w": c.w, "kind": "erlang", "rate": c.rate, "shape": c.shape})
        return out

    @classmethod
    def from_json(cls, data: Sequence[dict]) -> "NegativeMixture":
        comps = []
        for item in data:
            kind = item.get("kind")
            if kind == "atom":
                comps.append(Atom(float(item["w"]), float(item["x"])))
            elif kind == "erlang":
                comps.append(Erlang(float(item["w"]), float(item["rate"]), int(item.get("shape", 1))))
            else:
                raise ValueError(f"unknown mixture component kind {kind!r}")
        return cls(tuple(comps))


def exponential(rate: float) -> NegativeMixture:
    """Negated ``Exp(rate)`` law, the most common negative jump."""
    return NegativeMixture((Erlang(1.0, rate, 1),))


@dataclass(frozen=True)
class SwitchJumpLaw:
    """Law of the jump made when the chain switches: atom at 0 plus a scaled mixture."""

    atom0: float = 1.0
    neg: NegativeMixture | None = None

    @property
    def total_mass(self) -> float:
        return self.atom0 + (1.0 - self.atom0) * (self.neg.total_mass if self.neg else 1.0)

    def mean(self) -> float:
        return (1.0 - self.atom0) * self.neg.mean() if self.neg is not None else 0.0

    def mass_at_zero(self) -> float:
        extra = self.neg.mass_at_zero() if self.neg is not None else 0.0
        return self.atom0 + (1.0 - self.atom0) * extra

    def transform(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.full_like(z, self.atom0)
        if self.neg is not None and self.atom0 < 1.0:
            out = out + (1.0 - self.atom0) * self.neg.transform(z)
        return out

    def to_json(self) -> dict:
        return {"atom0": self.atom0, "neg": self.neg.to_json() if self.neg is not None else None}

    @classmethod
    def from_json(cls, data: dict) -> "SwitchJumpLaw":
        neg = data.get("neg")
        return cls(float(data.get("atom0", 1.0)),
                   NegativeMixture.from_json(neg) if neg is not None else None)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


@dataclass(frozen=True)
class ModelSpec:
    m: int
    nu: np.ndarray
    embedded: np.ndarray
    a: np.ndarray
    lam: np.ndarray
    c: np.ndarray
    pos_weight: np.ndarray
    neg_jump: tuple = ()
    switch_jump: tuple = ()
    b2: np.ndarray | None = None
    zero_drift: bool = False
    lower: bool = False

    def __post_init__(self):
        for name in ("nu", "a", "lam", "c", "pos_weight"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        emb = np.array(self.embedded, dtype=float)
        if emb.size == self.m ** 2:
            emb = emb.reshape(self.m, self.m)
        emb.setflags(write=False)
        object.__setattr__(self, "embedded", emb)
        b2 = np.zeros(self.m) if self.b2 is None else np.array(self.b2, dtype=float).reshape(-1)
        b2.setflags(write=False)
        object.__setattr__(self, "b2", b2)
        neg = tuple(self.neg_jump) if len(self.neg_jump) else (None,) * self.m
        object.__setattr__(self, "neg_jump", neg)
        if len(self.switch_jump):
            sw = tuple(tuple(row) for row in self.switch_jump)
        else:
            sw = tuple((None,) * self.m for _ in range(self.m))
        object.__setattr__(self, "switch_jump", sw)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __hash__(self) -> int:
        return hash(json.dumps(self.to_json(), sort_keys=True))

    @property
    def sign(self) -> int:
        """+1 for an upper model, -1 for a mirrored (lower) one."""
        return -1 if self.lower else 1

    def switch_law(self, k: int, r: int) -> SwitchJumpLaw:
        law = self.switch_jump[k][r]
        return law if law is not None else SwitchJumpLaw()

    def pos_intensity(self) -> np.ndarray:
        """Diagonal of ``Lambda Fbar_0(0)``: rate of exponential-direction jumps."""
        return self.lam * self.pos_weight

    def neg_weight(self, k: int) -> float:
        return float(self.lam[k] * (1.0 - self.pos_weight[k]))

    def to_json(self) -> dict:
        return {
            "mawhf_schema": SCHEMA_VERSION,
            "m": self.m,
            "nu": self.nu.tolist(),
            "embedded": self.embedded.tolist(),
            "a": self.a.tolist(),
            "b2": self.b2.tolist(),
            "lambda": self.lam.tolist(),
            "c": self.c.tolist(),
            "pos_weight": self.pos_weight.tolist(),
            "neg_jump": [n.to_json() if n is not None else None for n in self.neg_jump],
            "switch_jump": [[law.to_json() if law is not None else None for law in row]
                            for row in self.switch_jump],
            "zero_drift": self.zero_drift,
            "lower": self.lower,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ModelSpec":
        version = data.get("mawhf_schema", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported mawhf_schema {version}")
        m = int(data["m"])
        neg = data.get("neg_jump") or [None] * m
        sw = data.get("switch_jump") or [[None] * m for _ in range(m)]
        return cls(
            m=m,
            nu=data["nu"],
            embedded=data["embedded"],
            a=data["a"],
            lam=data["lambda"],
            c=data["c"],
            pos_weight=data.get("pos_weight", [1.0] * m),
            neg_jump=tuple(NegativeMixture.from_json(n) if n is not None else None for n in neg),
            switch_jump=tuple(tuple(SwitchJumpLaw.from_json(x) if x is not None else None for x in row)
                              for row in sw),
            b2=data.get("b2"),
            zero_drift=bool(data.get("zero_drift", False)),
            lower=bool(data.get("lower", False)),
        )


def load_model(path: str | Path) -> ModelSpec:
    with open(path) as fh:
        return ModelSpec.from_json(json.load(fh))


def dump_model(spec: ModelSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_json(), fh, indent=2)


def scalar_model(a: float, lam: float, c: float, pos_weight: float = 1.0,
                 neg_jump: NegativeMixture | None = None, zero_drift: bool = False) -> ModelSpec:
    """One-state model; convenient for closed-form checks."""
    return ModelSpec(m=1, nu=[1.0], embedded=[[1.0]], a=[a], lam=[lam], c=[c],
                     pos_weight=[pos_weight], neg_jump=(neg_jump,), zero_drift=zero_drift)


def _mixture_violations(mix: NegativeMixture, where: str, zero_drift: bool) -> list[Violation]:
    out = []
    if not mix.components:
        out.append(Violation(where, "mixture has no components"))
        return out
    for c in mix.components:
        if not c.w > 0:
            out.append(Violation(where, "mixture weights must be positive"))
        if isinstance(c, Atom):
            if not c.x <= 0:
                out.append(Violation(where, "atoms must sit on (-inf, 0]"))
            elif zero_drift and c.x < 0:
                out.append(Violation(where, "atoms off 0 are not supported in zero_drift mode"))
        else:
            if not c.rate > 0:
                out.append(Violation(where, "Erlang rate must be positive"))
            if int(c.shape) != c.shape or c.shape < 1:
                out.append(Violation(where, "Erlang shape must be an integer >= 1"))
    if abs(mix.total_mass - 1.0) > _TOL:
        out.append(Violation(where, "mixture total mass must be 1"))
    return out


def validate_model(spec: ModelSpec) -> list[Violation]:
    """Return every broken invariant of ``spec``; an empty list means valid."""
    out: list[Violation] = []
    m = spec.m
    if m < 1:
        return [Violation("m", "number of states must be >= 1")]
    for name in ("nu", "a", "lam", "c", "pos_weight", "b2"):
        arr = getattr(spec, name)
        if arr.shape != (m,):
            out.append(Violation(name, f"must have length m={m}"))
        elif not np.all(np.isfinite(arr)):
            out.append(Violation(name, "entries must be finite"))
    if spec.embedded.shape != (m, m):
        out.append(Violation("embedded", f"must be an {m}x{m} matrix"))
    if out:
        return out

    if np.any(spec.nu <= 0):
        out.append(Violation("nu", "sojourn rates must be positive"))
    if np.any(spec.embedded < 0):
        out.append(Violation("embedded", "entries must be non-negative"))
    if np.any(np.abs(spec.embedded.sum(axis=1) - 1.0) > _TOL):
        out.append(Violation("embedded", "row stochasticity: each row must sum to 1"))
    if m > 1 and not np.any(spec.embedded < 0):
        q = build_generator(spec, check=False)
        adj = (q - np.diag(np.diag(q))) > 0
        ncomp, _ = connected_components(adj, directed=True, connection="strong")
        if ncomp != 1:
            out.append(Violation("embedded", "chain must be irreducible"))
    if np.any(spec.b2 != 0):
        out.append(Violation("b2", "Brownian variances must be 0"))

    sgn = spec.sign
    if spec.zero_drift:
        if np.any(spec.a != 0):
            out.append(Violation("a", "zero_drift mode requires a_k = 0 in every state"))
        # with no drift the additive part must move somehow
        moves = spec.lam.sum() > 0 or any(
            spec.switch_law(k, r).atom0 < 1 and spec.embedded[k, r] > 0
            for k in range(m) for r in range(m))
        if not moves:
            out.append(Violation("lam", "all dynamics are degenerate (no drift and no jumps)"))
    elif np.any(sgn * spec.a >= 0):
        rule = "drift must be negative" if sgn > 0 else "drift must be positive (lower model)"
        out.append(Violation("a", rule))

    if np.any(spec.lam < 0):
        out.append(Violation("lambda", "jump intensities must be >= 0"))
    if np.any(spec.c <= 0):
        out.append(Violation("c", "exponential jump rates must be positive"))
    if np.any((spec.pos_weight < 0) | (spec.pos_weight > 1)):
        out.append(Violation("pos_weight", "must lie in [0, 1]"))

    if len(spec.neg_jump) != m:
        out.append(Violation("neg_jump", f"must have one entry per state (m={m})"))
    else:
        for k, mix in enumerate(spec.neg_jump):
            needed = spec.lam[k] > 0 and spec.pos_weight[k] < 1
            if mix is None:
                if needed:
                    out.append(Violation(f"neg_jump[{k}]", "required when pos_weight < 1"))
                continue
            out.extend(_mixture_violations(mix, f"neg_jump[{k}]", spec.zero_drift))

    if len(spec.switch_jump) != m or any(len(row) != m for row in spec.switch_jump):
        out.append(Violation("switch_jump", f"must be an {m}x{m} table"))
    else:
        for k in range(m):
            for r in range(m):
                law = spec.switch_jump[k][r]
                if law is None:
                    continue
                where = f"switch_jump[{k}][{r}]"
                if not 0 <= law.atom0 <= 1:
                    out.append(Violation(where, "atom0 must lie in [0, 1]"))
                if law.atom0 < 1:
                    if law.neg is None:
                        out.append(Violation(where, "neg part required when atom0 < 1"))
                    else:
                        out.extend(_mixture_violations(law.neg, where, spec.zero_drift))
                if abs(law.total_mass - 1.0) > _TOL:
                    out.append(Violation(where, "switch jump law must have total mass 1"))
    return out


def require_valid(spec: ModelSpec) -> None:
    bad = validate_model(spec)
    if bad:
        raise ModelError(bad)


def build_generator(spec: ModelSpec, check: bool = True) -> np.ndarray:
    """Generator ``Q = diag(nu) (P - I)`` of the modulating chain."""
    if check:
        require_valid(spec)
    return spec.nu[:, None] * (spec.embedded - np.eye(spec.m))


def resolvent_Ps(spec: ModelSpec, s: float) -> np.ndarray:
    """Killed transition matrix ``P_s = s (sI - Q)^{-1}``."""
    if not s > 0:
        raise ValueError("s must be positive")
    q = build_generator(spec)
    return s * np.linalg.solve(s * np.eye(spec.m) - q, np.eye(spec.m))


def resolvent_inverse(spec: ModelSpec, s: float) -> np.ndarray:
    """``P_s^{-1} = I - Q/s``; exact, avoids inverting an ill-conditioned matrix for small s."""
    return np.eye(spec.m) - build_generator(spec, check=False) / s


@dataclass(frozen=True)
class DriftStats:
    pi: np.ndarray
    m_kr: np.ndarray
    m1: float
    M1: np.ndarray
    P0: np.ndarray


def jump_means(spec: ModelSpec) -> np.ndarray:
    """Per-state mean of one jump of the additive part, with actual sign."""
    out = np.zeros(spec.m)
    for k in range(spec.m):
        mean = spec.pos_weight[k] / spec.c[k]
        mix = spec.neg_jump[k]
        if mix is not None and spec.pos_weight[k] < 1:
            mean += (1.0 - spec.pos_weight[k]) * mix.mean()
        out[k] = spec.sign * mean
    return out


def stationary_distribution(spec: ModelSpec) -> DriftStats:
    """Stationary law of the chain together with the mean-drift quantities."""
    q = build_generator(spec)
    m = spec.m
    # solve pi Q = 0, sum pi = 1 as an overdetermined but consistent system
    lhs = np.vstack([q.T, np.ones((1, m))])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if np.any(pi <= 0) or np.max(np.abs(pi @ q)) > 1e-10:
        raise ModelError([Violation("embedded", "chain must be irreducible")])

    chi_mean = np.array([[spec.switch_law(k, r).mean() for r in range(m)] for k in range(m)])
    M1 = np.diag(spec.a + spec.lam * jump_means(spec)) \
        + spec.nu[:, None] * spec.embedded * (spec.sign * chi_mean)
    m1 = float(pi @ M1 @ np.ones(m))
    P0 = np.tile(pi, (m, 1))
    return DriftStats(pi=pi, m_kr=M1.copy(), m1=m1, M1=M1, P0=P0)


def mirror_model(spec: ModelSpec) -> ModelSpec:
    """Model of ``-xi``: drift negated, every jump read on the other side."""
    return replace(spec, a=-spec.a, lower=not spec.lower)


def scale_model(spec: ModelSpec, factor: float) -> ModelSpec:
    """Model of ``factor * xi`` for ``factor > 0``."""
    def scale_mix(mix):
        if mix is None:
            return None
        comps = tuple(Atom(c.w, c.x * factor) if isinstance(c, Atom)
                      else Erlang(c.w, c.rate / factor, c.shape) for c in mix.components)
        return NegativeMixture(comps)

    sw = tuple(tuple(None if law is None else SwitchJumpLaw(law.atom0, scale_mix(law.neg)) for law in row)
               for row in spec.switch_jump)
    return replace(spec, a=spec.a * factor, c=spec.c / factor,
                   neg_jump=tuple(scale_mix(mx) for mx in spec.neg_jump), switch_jump=sw)


__all__ = [
    "Atom", "Erlang", "NegativeMixture", "SwitchJumpLaw", "ModelSpec", "DriftStats", "Violation",
    "ModelError", "exponential", "scalar_model", "validate_model", "require_valid", "build_generator",
    "resolvent_Ps", "resolvent_inverse", "stationary_distribution", "mirror_model", "scale_model",
    "jump_means", "load_model", "dump_model", "SCHEMA_VERSION",
]
