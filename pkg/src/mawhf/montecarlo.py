"""Event-driven simulation of the modulated process, killed at an exponential time.

Each path owns a splitmix64 stream seeded from ``(seed, path index)``, so the
output does not depend on how paths are spread over threads.  Between events
the process moves linearly, hence running extrema and drift crossings are
exact.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import expm
from scipy.stats import norm

from .model import Atom, ModelSpec, require_valid, stationary_distribution

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # prefer OpenMP: an outdated TBB only produces a warning before being skipped
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

FUNCTIONALS = ("xi", "sup", "inf", "xi_bar", "xi_check")


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(inline="always")
def _uniform(state):
    state[0] += _GOLDEN
    return ((_mix(state[0]) >> _S11) + 0.5) * _INV53


@numba.njit(inline="always")
def _expo(state, rate):
    return -math.log(_uniform(state)) / rate


@numba.njit(inline="always")
def _pick(state, cum):
    u = _uniform(state) * cum[-1]
    for j in range(cum.shape[0] - 1):
        if u < cum[j]:
            return j
    return cum.shape[0] - 1


@numba.njit(inline="always")
def _mixture_draw(state, cum, kind, par, shape):
    """Draw from a stored non-positive mixture (``kind`` 0 atom, 1 Erlang)."""
    j = _pick(state, cum)
    if kind[j] == 0:
        return par[j]
    y = 0.0
    for _ in range(shape[j]):
        y -= _expo(state, par[j])
    return y


@numba.njit(parallel=True, cache=True)
def _simulate(seed, n, m, s, horizon, sign, nu, emb_cum, a, lam, c, pos_w,
              neg_present, neg_cum, neg_kind, neg_par, neg_shape,
              sw_atom0, sw_present, sw_cum, sw_kind, sw_par, sw_shape,
              up_levels, down_levels,
              xi_out, sup_out, inf_out, k0_out, kf_out,
              up_tau, up_over, up_under, up_state, down_tau, down_state):
    n_up = up_levels.shape[0]
    n_down = down_levels.shape[0]
    for i in numba.prange(n):
        state = np.empty(1, dtype=np.uint64)
        state[0] = _mix(np.uint64(seed) * _GOLDEN + np.uint64(i)) ^ np.uint64(i)
        k = i % m
        k0_out[i] = k
        end = _expo(state, s) if horizon <= 0.0 else horizon
        t = 0.0
        x = 0.0
        hi = 0.0
        lo = 0.0
        for j in range(n_up):
            up_tau[i, j] = np.inf
            up_over[i, j] = np.nan
            up_under[i, j] = np.nan
            up_state[i, j] = -1
        for j in range(n_down):
            down_tau[i, j] = np.inf
            down_state[i, j] = -1
        while True:
            total = nu[k] + lam[k]
            dt = _expo(state, total) if total > 0 else np.inf
            last = t + dt >= end
            if last:
                dt = end - t
            x_end = x + a[k] * dt
            # drift crossings: upward only when a > 0, downward only when a < 0
            if a[k] > 0:
                for j in range(n_up):
                    lev = up_levels[j]
                    if up_tau[i, j] == np.inf and x <= lev < x_end:
                        up_tau[i, j] = t + (lev - x) / a[k]
                        up_over[i, j] = 0.0
                        up_under[i, j] = 0.0
                        up_state[i, j] = k
            elif a[k] < 0:
                for j in range(n_down):
                    lev = down_levels[j]
                    if down_tau[i, j] == np.inf and x_end < lev <= x:
                        down_tau[i, j] = t + (lev - x) / a[k]
                        down_state[i, j] = k
            x = x_end
            hi = max(hi, x)
            lo = min(lo, x)
            t += dt
            if last:
                break
            before = x
            nxt = k
            if _uniform(state) * total < nu[k]:
                nxt = _pick(state, emb_cum[k])
                jump = 0.0
                if sw_present[k, nxt] and _uniform(state) >= sw_atom0[k, nxt]:
                    jump = sign * _mixture_draw(state, sw_cum[k, nxt], sw_kind[k, nxt],
                                                sw_par[k, nxt], sw_shape[k, nxt])
            elif _uniform(state) < pos_w[k]:
                jump = sign * _expo(state, c[k])
            elif neg_present[k]:
                jump = sign * _mixture_draw(state, neg_cum[k], neg_kind[k], neg_par[k], neg_shape[k])
            else:
                jump = 0.0
            x = before + jump
            k = nxt
            for j in range(n_up):
                lev = up_levels[j]
                if up_tau[i, j] == np.inf and before <= lev < x:
                    up_tau[i, j] = t
                    up_over[i, j] = x - lev
                    up_under[i, j] = lev - before
                    up_state[i, j] = k
            for j in range(n_down):
                lev = down_levels[j]
                if down_tau[i, j] == np.inf and x < lev <= before:
                    down_tau[i, j] = t
                    down_state[i, j] = k
            hi = max(hi, x)
            lo = min(lo, x)
        xi_out[i] = x
        sup_out[i] = hi
        inf_out[i] = lo
        kf_out[i] = k


def _pack_mixtures(mixes, shape_prefix):
    width = max([len(mx.components) for mx in mixes if mx is not None] + [1])
    cum = np.ones(shape_prefix + (width,))
    kind = np.zeros(shape_prefix + (width,), dtype=np.int64)
    par = np.zeros(shape_prefix + (width,))
    shp = np.ones(shape_prefix + (width,), dtype=np.int64)
    present = np.zeros(shape_prefix, dtype=np.bool_)
    for idx, mix in zip(np.ndindex(shape_prefix), mixes):
        if mix is None or not mix.components:
            continue
        present[idx] = True
        w = np.array([comp.w for comp in mix.components])
        cum[idx][: len(w)] = np.cumsum(w)
        cum[idx][len(w):] = cum[idx][len(w) - 1]
        for j, comp in enumerate(mix.components):
            if isinstance(comp, Atom):
                par[idx][j] = comp.x
            else:
                kind[idx][j], par[idx][j], shp[idx][j] = 1, comp.rate, comp.shape
    return present, cum, kind, par, shp


def _encode(spec: ModelSpec) -> dict:
    m = spec.m
    neg = _pack_mixtures(list(spec.neg_jump), (m,))
    sw_laws = [spec.switch_law(k, r) for k in range(m) for r in range(m)]
    sw = _pack_mixtures([law.neg for law in sw_laws], (m, m))
    return dict(sign=float(spec.sign), nu=spec.nu.astype(float), emb_cum=np.cumsum(spec.embedded, axis=1),
                a=spec.a.astype(float), lam=spec.lam.astype(float), c=spec.c.astype(float),
                pos_w=spec.pos_weight.astype(float),
                neg_present=neg[0], neg_cum=neg[1], neg_kind=neg[2], neg_par=neg[3], neg_shape=neg[4],
                sw_atom0=np.array([law.atom0 for law in sw_laws]).reshape(m, m),
                sw_present=sw[0], sw_cum=sw[1], sw_kind=sw[2], sw_par=sw[3], sw_shape=sw[4])


def default_workers() -> int:
    env = os.environ.get("MAWHF_WORKERS")
    return max(1, int(env)) if env else numba.config.NUMBA_NUM_THREADS


@dataclass
class SimBatch:
    """Per-path records of one simulation run.

    ``up_*`` arrays are indexed by the positive levels and describe the first
    upward passage (time, overshoot, undershoot, state after the crossing);
    ``down_*`` arrays do the same for negative levels.  A passage that did not
    happen before the end of the path has time ``inf``.
    """

    spec: ModelSpec
    s: float
    n: int
    seed: int
    horizon: float | None
    xi: np.ndarray
    sup: np.ndarray
    inf: np.ndarray
    state_initial: np.ndarray
    state_final: np.ndarray
    up_levels: np.ndarray
    up_tau: np.ndarray
    up_over: np.ndarray
    up_under: np.ndarray
    up_state: np.ndarray
    down_levels: np.ndarray
    down_tau: np.ndarray
    down_state: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.spec.m

    def values(self, functional: str) -> np.ndarray:
        if functional == "xi":
            return self.xi
        if functional == "sup":
            return self.sup
        if functional == "inf":
            return self.inf
        if functional == "xi_bar":
            return self.xi - self.sup
        if functional == "xi_check":
            return self.xi - self.inf
        raise ValueError(f"unknown functional {functional!r}; expected one of {FUNCTIONALS}")

    def paths_per_state(self) -> np.ndarray:
        return np.bincount(self.state_initial, minlength=self.m)

    def empirical(self, functional: str, x, relation: str = "<") -> tuple[np.ndarray, np.ndarray]:
        """``P_k{F rel x; final state r}`` and its standard error, shape ``(len(x), m, m)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = self.values(functional)
        counts = np.zeros((len(x), self.m, self.m))
        for k in range(self.m):
            for r in range(self.m):
                sel = np.sort(vals[(self.state_initial == k) & (self.state_final == r)])
                if relation == "<":
                    counts[:, k, r] = np.searchsorted(sel, x, side="left")
                elif relation == ">":
                    counts[:, k, r] = len(sel) - np.searchsorted(sel, x, side="right")
                else:
                    raise ValueError("relation must be '<' or '>'")
        nk = self.paths_per_state()[None, :, None]
        p = counts / nk
        return p, np.sqrt(p * (1 - p) / nk)

    def occupation(self) -> np.ndarray:
        """Empirical ``P_k{x(theta_s) = r}``; estimates ``P_s``."""
        out = np.zeros((self.m, self.m))
        np.add.at(out, (self.state_initial, self.state_final), 1.0)
        return out / self.paths_per_state()[:, None]

    def passage_transform(self, level: float) -> np.ndarray:
        """Empirical ``E_k[exp(-s tau(x)); state at passage r]`` for a simulated level.

        With exponential killing this is the frequency of passages before the
        killing time.
        """
        m = self.m
        if level > 0:
            j = int(np.flatnonzero(self.up_levels == level)[0])
            tau, st = self.up_tau[:, j], self.up_state[:, j]
        else:
            j = int(np.flatnonzero(self.down_levels == level)[0])
            tau, st = self.down_tau[:, j], self.down_state[:, j]
        hit = np.isfinite(tau)
        out = np.zeros((m, m))
        np.add.at(out, (self.state_initial[hit], st[hit]), 1.0)
        return out / self.paths_per_state()[:, None]

    def summary(self) -> dict:
        out = {"mawhf_schema": 1, "n": self.n, "seed": self.seed, "s": self.s, "horizon": self.horizon,
               "paths_per_state": self.paths_per_state().tolist(),
               "occupation": self.occupation().tolist()}
        for name in FUNCTIONALS:
            v = self.values(name)
            out[name] = {"mean": float(v.mean()), "ci99": float(2.5758293035489 * v.std(ddof=1) / math.sqrt(self.n))
                         if self.n > 1 else None}
        levels = []
        for j, lev in enumerate(self.up_levels):
            hit = np.isfinite(self.up_tau[:, j])
            levels.append({"level": float(lev), "passage_fraction": float(hit.mean()),
                           "mean_overshoot": float(self.up_over[hit, j].mean()) if hit.any() else None,
                           "mean_undershoot": float(self.up_under[hit, j].mean()) if hit.any() else None})
        for j, lev in enumerate(self.down_levels):
            hit = np.isfinite(self.down_tau[:, j])
            levels.append({"level": float(lev), "passage_fraction": float(hit.mean())})
        out["levels"] = levels
        out.update(self.meta)
        return out


def simulate_paths(spec: ModelSpec, s: float, n: int, seed: int = 0, levels=(),
                   horizon: float | None = None, workers: int | None = None) -> SimBatch:
    """Simulate ``n`` paths; path ``i`` starts in state ``i mod m``.

    Paths are killed at an independent ``Exp(s)`` time, or at the fixed time
    ``horizon`` when one is given (then ``s`` is only recorded).
    """
    require_valid(spec)
    if n < 1:
        raise ValueError("n must be at least 1")
    if horizon is None and not s > 0:
        raise ValueError("s must be positive unless a horizon is given")
    if horizon is not None and not horizon > 0:
        raise ValueError("horizon must be positive")
    levels = np.asarray(sorted(set(float(v) for v in levels)), dtype=float)
    if np.any(levels == 0):
        raise ValueError("passage levels must be nonzero")
    up = levels[levels > 0]
    down = levels[levels < 0]
    enc = _encode(spec)
    workers = default_workers() if workers is None else int(workers)
    previous = numba.get_num_threads()
    numba.set_num_threads(max(1, min(workers, numba.config.NUMBA_NUM_THREADS)))
    xi, sup, inf = np.empty(n), np.empty(n), np.empty(n)
    k0, kf = np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64)
    up_tau, up_over, up_under = np.empty((n, len(up))), np.empty((n, len(up))), np.empty((n, len(up)))
    up_state = np.empty((n, len(up)), dtype=np.int64)
    down_tau, down_state = np.empty((n, len(down))), np.empty((n, len(down)), dtype=np.int64)
    try:
        _simulate(np.uint64(seed), n, spec.m, float(s) if s else 1.0, float(horizon or 0.0),
                  enc["sign"], enc["nu"], enc["emb_cum"], enc["a"], enc["lam"], enc["c"], enc["pos_w"],
                  enc["neg_present"], enc["neg_cum"], enc["neg_kind"], enc["neg_par"], enc["neg_shape"],
                  enc["sw_atom0"], enc["sw_present"], enc["sw_cum"], enc["sw_kind"], enc["sw_par"],
                  enc["sw_shape"], up, down, xi, sup, inf, k0, kf,
                  up_tau, up_over, up_under, up_state, down_tau, down_state)
    finally:
        numba.set_num_threads(previous)
    return SimBatch(spec=spec, s=float(s), n=n, seed=seed, horizon=horizon, xi=xi, sup=sup, inf=inf,
                    state_initial=k0, state_final=kf, up_levels=up, up_tau=up_tau, up_over=up_over,
                    up_under=up_under, up_state=up_state, down_levels=down, down_tau=down_tau,
                    down_state=down_state, meta={"workers": workers})


def truncation_bias_bound(spec: ModelSpec, horizon: float, n_r: int = 200) -> float:
    """Chernoff bound on ``P{xi(T) <= 0}`` at ``T = horizon`` for a process with positive drift.

    Paths that are still at or below the origin at the horizon are the ones
    whose later excursions could lower the simulated infimum, so this decays
    like ``exp(-Theta(T))`` and bounds the order of the truncation error.
    """
    from .spectral import CumulantEvaluator

    ev = CumulantEvaluator(spec)
    r_max = min(-ev.r_lo, 50.0)
    best = 1.0
    for r in np.linspace(0.0, r_max, n_r + 2)[1:-1]:
        # E exp(-r xi(T)) is governed by the cumulant at -r
        gen = ev.K_continued(-r).real
        with np.errstate(all="ignore"):
            bound = float(np.max(expm(horizon * gen).sum(axis=1)))
        if np.isfinite(bound):
            best = min(best, bound)
    return best


def long_horizon_infimum(spec: ModelSpec, n: int, seed: int = 0, horizon_factor: float = 50.0,
                         levels=(), workers: int | None = None) -> SimBatch:
    """Paths run to ``T = horizon_factor / m1`` as a stand-in for the all-time infimum."""
    stats = stationary_distribution(spec)
    if not stats.m1 > 0:
        raise ValueError("the all-time infimum needs a positive mean drift")
    horizon = horizon_factor / stats.m1
    batch = simulate_paths(spec, 0.0, n, seed, levels=levels, horizon=horizon, workers=workers)
    batch.meta["truncation_bias_bound"] = truncation_bias_bound(spec, horizon)
    return batch


@dataclass
class AnalyticCurve:
    """Matrix law ``P_k{F rel x; final state r}`` at points ``x``, tagged for matching."""

    functional: str
    s: float | None
    x: np.ndarray
    values: np.ndarray
    relation: str = "<"
    spec: ModelSpec | None = None


def compare_report(batch: SimBatch, curve: AnalyticCurve, level: float = 0.01) -> dict:
    """Pointwise z-scores and Kolmogorov distances of a simulated law against an analytic one.

    The test at each probe and entry is two-sided at ``level`` with a
    Bonferroni correction over all probes and entries.
    """
    if curve.spec is not None and curve.spec != batch.spec:
        raise ValueError("curve and batch come from different models")
    if curve.s is not None and batch.horizon is None and not math.isclose(curve.s, batch.s):
        raise ValueError(f"curve is for s={curve.s}, batch for s={batch.s}")
    if curve.s is None and batch.horizon is None:
        raise ValueError("an s-free curve must be compared with a long-horizon batch")
    x = np.atleast_1d(np.asarray(curve.x, dtype=float))
    values = np.asarray(curve.values, dtype=float).reshape(len(x), batch.m, batch.m)
    emp, _ = batch.empirical(curve.functional, x, curve.relation)
    nk = batch.paths_per_state()[None, :, None]
    se = np.sqrt(np.clip(values * (1 - values), 0.0, None) / nk)
    se = np.maximum(se, 1.0 / nk)
    z = (emp - values) / se
    n_tests = z.size
    crit = float(norm.ppf(1 - level / (2 * n_tests)))
    kolmogorov = np.max(np.abs(emp - values), axis=0)
    return {"functional": curve.functional, "relation": curve.relation, "x": x.tolist(),
            "n_tests": n_tests, "critical_z": crit, "max_abs_z": float(np.max(np.abs(z))),
            "z": z.tolist(), "kolmogorov": kolmogorov.tolist(),
            "max_kolmogorov": float(np.max(kolmogorov)),
            "passed": bool(np.all(np.abs(z) <= crit))}


def analytic_curve(spec: ModelSpec, functional: str, x, s: float | None = None,
                   sup=None, inf=None) -> AnalyticCurve:
    """Analytic counterpart of an empirical law, in the orientation the simulator reports.

    ``sup`` and ``xi_check`` are tails ``P{F > x}`` at ``x > 0``; ``xi_bar`` and
    ``inf`` are ``P{F < x}`` at ``x < 0``; ``xi`` is ``P{F < x}`` at any ``x``.
    With ``s=None`` the ``inf`` curve is the all-time infimum.
    """
    from .asymptotics import ruin_curve
    from .factorize import solve_inf, solve_sup
    from .inversion import cdf_at
    from .spectral import CumulantEvaluator

    x = np.atleast_1d(np.asarray(x, dtype=float))
    if s is None:
        if functional != "inf":
            raise ValueError("only the infimum has an s-free (all-time) law")
        return AnalyticCurve("inf", None, x, ruin_curve(spec, x).values, "<", spec)
    if functional == "sup":
        sup = sup or solve_sup(spec, s)
        return AnalyticCurve("sup", s, x, sup.sup_tail(x), ">", spec)
    if functional == "xi_bar":
        sup = sup or solve_sup(spec, s)
        vals = sup.general_law(x) if spec.sign > 0 else sup.exponential_tail(-x)
        return AnalyticCurve("xi_bar", s, x, vals, "<", spec)
    if functional == "xi_check":
        inf = inf or solve_inf(spec, s)
        vals = inf.exponential_tail(x) if spec.sign > 0 else inf.general_law(x)
        return AnalyticCurve("xi_check", s, x, vals, ">", spec)
    if functional == "inf":
        inf = inf or solve_inf(spec, s)
        return AnalyticCurve("inf", s, x, inf.inf_cdf(x), "<", spec)
    if functional == "xi":
        return AnalyticCurve("xi", s, x, cdf_at(CumulantEvaluator(spec), s, x), "<", spec)
    raise ValueError(f"unknown functional {functional!r}; expected one of {FUNCTIONALS}")
