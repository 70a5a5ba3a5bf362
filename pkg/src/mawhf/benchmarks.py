"""Reference models used by the self-test, the acceptance suite and the docs."""

from __future__ import annotations

import numpy as np

from .model import Atom, Erlang, ModelSpec, NegativeMixture, SwitchJumpLaw, scalar_model


def pure_drift(a: float = -1.0) -> ModelSpec:
    """Linear drift, no jumps: ``xi(t) = a t``."""
    return scalar_model(a, 0.0, 1.0)


def scalar_sup() -> ModelSpec:
    """Drift -1 with rate-1 upward Exp(2) jumps (negative mean drift)."""
    return scalar_model(-1.0, 1.0, 2.0)


def scalar_inf() -> ModelSpec:
    """Drift -1 with rate-3 upward Exp(2) jumps (mean drift +1/2)."""
    return scalar_model(-1.0, 3.0, 2.0)


def scalar_monotone() -> ModelSpec:
    """No drift, rate-3 upward Exp(2) jumps: a nondecreasing path."""
    return scalar_model(0.0, 3.0, 2.0, zero_drift=True)


def two_state() -> ModelSpec:
    """Two symmetric states with different drifts and jump laws (mean drift -1/6)."""
    return ModelSpec(m=2, nu=[1.0, 1.0], embedded=[[0.0, 1.0], [1.0, 0.0]], a=[-1.0, -0.5],
                     lam=[1.0, 2.0], c=[2.0, 3.0], pos_weight=[1.0, 1.0])


def two_state_ruin() -> ModelSpec:
    """Two-state model with positive mean drift (1/2), so the all-time infimum is finite."""
    return ModelSpec(m=2, nu=[1.0, 1.0], embedded=[[0.0, 1.0], [1.0, 0.0]], a=[-1.0, -0.5],
                     lam=[3.0, 2.0], c=[2.0, 2.0], pos_weight=[1.0, 1.0])


def rich_two_state() -> ModelSpec:
    """Two states with negative jumps, a negative atom and switch jumps."""
    neg0 = NegativeMixture((Erlang(0.6, 1.5, 1), Erlang(0.4, 4.0, 2)))
    neg1 = NegativeMixture((Atom(0.3, -0.5), Erlang(0.7, 2.5, 1)))
    sw = ((None, SwitchJumpLaw(0.5, NegativeMixture((Erlang(1.0, 3.0, 1),)))),
          (SwitchJumpLaw(0.8, NegativeMixture((Erlang(1.0, 2.0, 2),))), None))
    return ModelSpec(m=2, nu=[0.7, 1.3], embedded=[[0.0, 1.0], [1.0, 0.0]], a=[-0.8, -1.2],
                     lam=[2.0, 1.5], c=[1.5, 2.5], pos_weight=[0.7, 0.6],
                     neg_jump=(neg0, neg1), switch_jump=sw)


def random_model(rng: np.random.Generator, m: int | None = None) -> ModelSpec:
    """A random valid upper model with up to four states and mixed jump laws."""
    m = int(rng.integers(1, 5)) if m is None else m
    emb = rng.uniform(0.2, 1.0, (m, m))
    np.fill_diagonal(emb, 0.0)
    if m == 1:
        emb = np.ones((1, 1))
    emb /= emb.sum(axis=1, keepdims=True)

    def mixture():
        comps = []
        n = int(rng.integers(1, 3))
        w = rng.dirichlet(np.ones(n + 1))
        for i in range(n):
            comps.append(Erlang(float(w[i]), float(rng.uniform(1.0, 4.0)), int(rng.integers(1, 3))))
        comps.append(Atom(float(w[-1]), float(-rng.uniform(0.0, 1.0))))
        return NegativeMixture(tuple(comps))

    pos_weight = rng.uniform(0.3, 1.0, m)
    sw = tuple(tuple(SwitchJumpLaw(float(rng.uniform(0.3, 1.0)), mixture()) if k != r else None
                     for r in range(m)) for k in range(m))
    return ModelSpec(m=m, nu=rng.uniform(0.5, 2.0, m), embedded=emb, a=-rng.uniform(0.5, 2.0, m),
                     lam=rng.uniform(0.5, 3.0, m), c=rng.uniform(1.0, 4.0, m), pos_weight=pos_weight,
                     neg_jump=tuple(mixture() for _ in range(m)), switch_jump=sw)


STANDARD = {
    "pure_drift": pure_drift,
    "scalar_sup": scalar_sup,
    "scalar_inf": scalar_inf,
    "two_state": two_state,
    "two_state_ruin": two_state_ruin,
    "rich_two_state": rich_two_state,
}
