"""Monte Carlo estimators: survival, strong survival, critical values,
complete-convergence conditions, hit probabilities.

Replica discipline: replica i of an estimate derives its simulation seed
(and, in the annealed regime, its environment seed) from the master seed
and i alone, and results are aggregated in replica-index order.  Worker
count therefore cannot change any reported number.

Regimes: "quenched" runs every replica in the one environment fixed by
env_seed; "annealed" redraws the environment per replica, which averages the
estimate over environments (the process is then no longer Markov in the
configuration alone, but each replica still is, conditionally).

A replica that exceeds its site-update budget is never counted as survival;
it is reported separately in the diagnostics so truncation by budget is
visible rather than silent.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .dynamics import DEFAULT_UPDATE_BUDGET
from .environment import DistributionSpec, Environment, ModelParams, rates_table
from .lattice import Box, Point, Region, ball, site_index
from .rng import derive_seed

DEFAULT_HALF_WIDTH = 200
DEFAULT_HORIZON = 500.0
DEFAULT_THRESHOLD = 0.05
DEFAULT_REPLICAS = 1000


def default_region(d: int = 1, mode: str = "half-space", half_width: int = DEFAULT_HALF_WIDTH) -> Region:
    """Simulation window of half-width L per axis (height L above the wall)."""
    if mode == "half-space":
        lo = (-half_width,) * d + (0,)
        hi = (half_width,) * (d + 1)
    elif mode == "full-space":
        lo = (-half_width,) * d
        hi = (half_width,) * d
    else:
        lo = (-half_width,) * (d + 1)
        hi = (half_width,) * (d + 1)
    return Region(mode=mode, d=d, box=Box(lo, hi))


@dataclass(frozen=True)
class InitialSpec:
    """Initial infected set: the origin, an explicit list, or a ball."""

    kind: str = "origin"
    sites: Optional[tuple] = None
    center: Optional[Point] = None
    radius: float = 0.0

    def resolve(self, region: Region) -> list[Point]:
        if self.kind == "origin":
            return [region.origin]
        if self.kind == "sites":
            return [tuple(p) for p in self.sites]
        if self.kind == "ball":
            center = self.center if self.center is not None else region.origin
            return ball(center, self.radius, region)
        raise ValueError(f"unknown initial kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "origin":
            return {"kind": "origin"}
        if self.kind == "sites":
            return {"kind": "sites", "sites": [list(p) for p in self.sites]}
        return {
            "kind": "ball",
            "center": list(self.center) if self.center is not None else None,
            "radius": self.radius,
        }

    @staticmethod
    def from_dict(obj: dict) -> "InitialSpec":
        kind = obj.get("kind", "origin")
        if kind == "sites":
            return InitialSpec(kind="sites", sites=tuple(tuple(p) for p in obj["sites"]))
        if kind == "ball":
            center = tuple(obj["center"]) if obj.get("center") is not None else None
            return InitialSpec(kind="ball", center=center, radius=float(obj["radius"]))
        return InitialSpec(kind="origin")


@dataclass(frozen=True)
class SurvivalQuery:
    region: Region
    horizon: float = DEFAULT_HORIZON
    initial: InitialSpec = field(default_factory=InitialSpec)
    regime: str = "quenched"
    env_seed: int = 0
    replicas: int = DEFAULT_REPLICAS
    master_seed: int = 0

    def __post_init__(self):
        if self.regime not in ("quenched", "annealed"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")

    def to_dict(self) -> dict:
        return {
            "region": self.region.to_dict(),
            "horizon": self.horizon,
            "initial": self.initial.to_dict(),
            "regime": self.regime,
            "env_seed": self.env_seed,
            "replicas": self.replicas,
            "master_seed": self.master_seed,
        }


@dataclass
class Estimate:
    value: float
    replicas: int
    std_error: float
    config_echo: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "replicas": self.replicas,
            "std_error": self.std_error,
            "config_echo": self.config_echo,
            "diagnostics": self.diagnostics,
        }


def bernoulli_se(v: float, n: int) -> float:
    return math.sqrt(max(v * (1.0 - v), 0.0) / n)


def _chunked(n: int, workers: int) -> list[range]:
    if workers <= 1:
        return [range(n)]
    step = max(1, math.ceil(n / (workers * 4)))
    return [range(i, min(i + step, n)) for i in range(0, n, step)]


def _margin_ok(region: Region, pts: Sequence[Point]) -> None:
    """Initial sites must sit at distance >= 1 from every truncation face
    (faces that cut the infinite lattice; the half-space wall is real)."""
    if region.is_finite:
        return
    box = region.window()
    for p in pts:
        for axis in range(region.n):
            lo_real = region.mode == "half-space" and axis == region.n - 1 and box.lo[axis] == 0
            if p[axis] <= box.lo[axis] and not lo_real:
                raise ValueError(
                    f"initial site {p} touches the truncation face at axis {axis} low end; "
                    "grow the box or move the initial set"
                )
            if p[axis] >= box.hi[axis]:
                raise ValueError(
                    f"initial site {p} touches the truncation face at axis {axis} high end; "
                    "grow the box or move the initial set"
                )


def _rows_of(points: Sequence[Point], sites, what: str) -> np.ndarray:
    rows = []
    for p in points:
        p = tuple(p)
        sites.region.require_member(p)
        if p not in sites.index:
            raise ValueError(f"{what} site {p} lies outside the simulation window")
        rows.append(sites.index[p])
    return np.array(sorted(rows), dtype=np.int64)


@dataclass
class ReplicaOutcomes:
    alive: np.ndarray
    watch_hit: np.ndarray
    target_hit: np.ndarray
    suppressions: np.ndarray
    exceeded: np.ndarray
    extinction_time: np.ndarray


def _mc_outcomes(
    mu: DistributionSpec,
    lam: float,
    query: SurvivalQuery,
    horizon: Optional[float] = None,
    watch: Optional[Point] = None,
    window: Optional[tuple[float, float]] = None,
    target: Optional[Sequence[Point]] = None,
    budget: int = DEFAULT_UPDATE_BUDGET,
    workers: int = 1,
    eval_tag: str = "",
) -> ReplicaOutcomes:
    region = query.region
    sites = site_index(region)
    init_pts = query.initial.resolve(region)
    horizon = query.horizon if horizon is None else horizon
    params = ModelParams(lam=lam, horizon=horizon)
    n = query.replicas
    init_rows = _rows_of(init_pts, sites, "initial")
    if len(init_rows) == 0:
        # the empty configuration is absorbing: every outcome is certain
        return ReplicaOutcomes(
            alive=np.zeros(n, dtype=bool), watch_hit=np.zeros(n, dtype=bool),
            target_hit=np.zeros(n, dtype=bool),
            suppressions=np.zeros(n, dtype=np.int64),
            exceeded=np.zeros(n, dtype=bool), extinction_time=np.zeros(n),
        )

    watch_row = sites.index.get(tuple(watch), -1) if watch is not None else -1
    win_lo, win_hi = window if window is not None else (0.0, horizon)

    target_rows = None
    if target is not None:
        target_rows = _rows_of(target, sites, "target")

    shared = None
    if query.regime == "quenched":
        env = Environment(spec=mu, env_seed=query.env_seed)
        table = rates_table(env, params, sites)
        totals = kernels.row_totals(table.rate)
        a_max = float(totals.max()) if len(totals) else 0.0
        shared = (table, totals, a_max)

    master = query.master_seed
    alive = np.zeros(n, dtype=bool)
    watch_hit = np.zeros(n, dtype=bool)
    target_hit = np.zeros(n, dtype=bool)
    suppressions = np.zeros(n, dtype=np.int64)
    exceeded = np.zeros(n, dtype=bool)
    ext = np.full(n, -1.0)

    def run_range(rng: range) -> None:
        for i in rng:
            if shared is not None:
                table, totals, a_max = shared
            else:
                env = Environment(spec=mu, env_seed=derive_seed(master, "env", eval_tag, i))
                table = rates_table(env, params, sites)
                totals = kernels.row_totals(table.rate)
                a_max = float(totals.max()) if len(totals) else 0.0
            sim_seed = derive_seed(master, "sim", eval_tag, i)
            state = np.zeros(sites.n_sites, dtype=np.uint8)
            ever = np.zeros(sites.n_sites, dtype=np.uint8)
            out = kernels.run_contact(
                table.neigh, table.rate, init_rows, horizon, sim_seed,
                watch_row, win_lo, win_hi, budget, state, ever,
                totals=totals, a_max=a_max,
            )
            ext_time, _max_pop, supp, _applied, whit, _wfirst, exc = out
            exceeded[i] = bool(exc)
            if exc:
                continue
            ext[i] = ext_time
            alive[i] = ext_time < 0
            watch_hit[i] = bool(whit)
            suppressions[i] = int(supp)
            if target_rows is not None:
                target_hit[i] = bool(state[target_rows].any())

    chunks = _chunked(n, workers)
    if len(chunks) == 1:
        run_range(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_range, chunks))

    return ReplicaOutcomes(
        alive=alive, watch_hit=watch_hit, target_hit=target_hit,
        suppressions=suppressions, exceeded=exceeded, extinction_time=ext,
    )


def _diagnostics(out: ReplicaOutcomes) -> dict:
    ok = ~out.exceeded
    qs = [0.0, 0.25, 0.5, 0.75, 1.0]
    if ok.any():
        quant = {str(q): float(v) for q, v in zip(qs, np.quantile(out.suppressions[ok], qs))}
    else:
        quant = {str(q): 0.0 for q in qs}
    return {
        "budget_exceeded": int(out.exceeded.sum()),
        "boundary_suppression_quantiles": quant,
    }


def survival_probability(
    mu: DistributionSpec, lam: float, query: SurvivalQuery,
    workers: int = 1, budget: int = DEFAULT_UPDATE_BUDGET, eval_tag: str = "",
) -> Estimate:
    """Fraction of replicas still alive on the window at the horizon."""
    _margin_ok(query.region, query.initial.resolve(query.region))
    out = _mc_outcomes(mu, lam, query, budget=budget, workers=workers, eval_tag=eval_tag)
    v = float(out.alive.mean())
    return Estimate(
        value=v,
        replicas=query.replicas,
        std_error=bernoulli_se(v, query.replicas),
        config_echo={"mu": mu.to_dict(), "lambda": lam, "query": query.to_dict()},
        diagnostics=_diagnostics(out),
    )


def strong_survival_probability(
    mu: DistributionSpec, lam: float, query: SurvivalQuery,
    window: tuple[float, float],
    workers: int = 1, budget: int = DEFAULT_UPDATE_BUDGET, eval_tag: str = "",
) -> Estimate:
    """Fraction of replicas with the origin infected at some instant of the
    window [T1, T2]; the run horizon is T2."""
    t1, t2 = window
    if not 0 <= t1 <= t2:
        raise ValueError("window must satisfy 0 <= T1 <= T2")
    _margin_ok(query.region, query.initial.resolve(query.region))
    out = _mc_outcomes(
        mu, lam, query, horizon=t2, watch=query.region.origin, window=(t1, t2),
        budget=budget, workers=workers, eval_tag=eval_tag,
    )
    v = float(out.watch_hit.mean())
    return Estimate(
        value=v,
        replicas=query.replicas,
        std_error=bernoulli_se(v, query.replicas),
        config_echo={
            "mu": mu.to_dict(), "lambda": lam, "query": query.to_dict(),
            "window": [t1, t2],
        },
        diagnostics=_diagnostics(out),
    )


def survival_sweep(
    mu: DistributionSpec, lambdas: Sequence[float], query: SurvivalQuery,
    coupled: bool = True, workers: int = 1, budget: int = DEFAULT_UPDATE_BUDGET,
) -> list[Estimate]:
    """Survival estimates over a lambda grid, ascending.

    Coupled (default): all levels share one driving realization per replica
    through nested thinning, so the per-replica alive indicators are
    monotone in lambda by construction.  Independent: separate replicas per
    level.
    """
    lams = sorted(float(x) for x in lambdas)
    if not lams or lams[0] < 0:
        raise ValueError("lambda grid must be nonempty and nonnegative")
    _margin_ok(query.region, query.initial.resolve(query.region))
    if not coupled:
        return [
            survival_probability(mu, lam, query, workers=workers, budget=budget,
                                 eval_tag=f"grid-{i}")
            for i, lam in enumerate(lams)
        ]

    lam_max = lams[-1]
    if lam_max == 0.0:
        raise ValueError("coupled sweep needs a positive top lambda")
    fracs = np.array([x / lam_max for x in lams])
    region = query.region
    sites = site_index(region)
    params = ModelParams(lam=lam_max, horizon=query.horizon)
    init_rows = _rows_of(query.initial.resolve(region), sites, "initial")

    shared = None
    if query.regime == "quenched":
        env = Environment(spec=mu, env_seed=query.env_seed)
        table = rates_table(env, params, sites)
        totals = kernels.row_totals(table.rate)
        shared = (table, totals, float(totals.max()) if len(totals) else 0.0)

    n = query.replicas
    g = len(lams)
    alive = np.zeros((n, g), dtype=bool)
    exceeded = np.zeros(n, dtype=bool)

    def run_range(rng: range) -> None:
        for i in rng:
            if shared is not None:
                table, totals, a_max = shared
            else:
                env = Environment(spec=mu, env_seed=derive_seed(query.master_seed, "env", i))
                table = rates_table(env, params, sites)
                totals = kernels.row_totals(table.rate)
                a_max = float(totals.max()) if len(totals) else 0.0
            seed = derive_seed(query.master_seed, "sim", i)
            ext, _mp, _supp, _applied, exc, _state = kernels.run_sweep(
                table.neigh, table.rate, init_rows, query.horizon, seed, budget,
                fracs, totals=totals, a_max=a_max,
            )
            exceeded[i] = exc
            if not exc:
                alive[i] = ext < 0

    chunks = _chunked(n, workers)
    if len(chunks) == 1:
        run_range(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_range, chunks))

    out = []
    for j, lam in enumerate(lams):
        v = float(alive[:, j].mean())
        out.append(Estimate(
            value=v, replicas=n, std_error=bernoulli_se(v, n),
            config_echo={"mu": mu.to_dict(), "lambda": lam, "query": query.to_dict(),
                         "coupled": True},
            diagnostics={"budget_exceeded": int(exceeded.sum())},
        ))
    return out


class BracketError(ValueError):
    """The proxy is already above threshold at the lower bracket end."""

    def __init__(self, message: str, lo_estimate: Estimate, hi_estimate: Estimate):
        super().__init__(message)
        self.lo_estimate = lo_estimate
        self.hi_estimate = hi_estimate


@dataclass
class CriticalEstimate:
    value: Optional[float]
    outcome: str  # "ok" | "no-transition-in-bracket"
    bracket: tuple[float, float]
    final_bracket: tuple[float, float]
    threshold: float
    history: list
    mode: str

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "outcome": self.outcome,
            "bracket": list(self.bracket),
            "final_bracket": list(self.final_bracket),
            "threshold": self.threshold,
            "mode": self.mode,
            "history": [
                {"lambda": l, "value": v, "std_error": se} for l, v, se in self.history
            ],
        }


def critical_value(
    mu: DistributionSpec,
    query: SurvivalQuery,
    bracket: tuple[float, float],
    threshold: float = DEFAULT_THRESHOLD,
    depth: int = 8,
    mode: str = "survival",
    window: Optional[tuple[float, float]] = None,
    workers: int = 1,
    budget: int = DEFAULT_UPDATE_BUDGET,
) -> CriticalEstimate:
    """Bisection on lambda against a fixed survival-proxy threshold.

    The proxy must be below threshold at the low end (else BracketError with
    both endpoint estimates attached) and above it at the high end; if it
    stays below at the high end the bracket contains no visible transition
    and that is returned as an outcome, not an error.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 <= lo < hi:
        raise ValueError("bracket must satisfy 0 <= lo < hi")
    if depth < 1:
        raise ValueError("depth must be >= 1")

    def proxy(lam: float, tag: str) -> Estimate:
        if mode == "survival":
            return survival_probability(mu, lam, query, workers=workers, budget=budget, eval_tag=tag)
        if mode == "strong":
            win = window if window is not None else (query.horizon / 2.0, query.horizon)
            return strong_survival_probability(
                mu, lam, query, win, workers=workers, budget=budget, eval_tag=tag)
        raise ValueError(f"unknown proxy mode {mode!r}")

    history = []
    e_lo = proxy(lo, "lo")
    history.append((lo, e_lo.value, e_lo.std_error))
    e_hi = proxy(hi, "hi")
    history.append((hi, e_hi.value, e_hi.std_error))

    if e_lo.value >= threshold:
        raise BracketError(
            f"proxy at lambda={lo} is {e_lo.value:.4f} >= threshold {threshold}; "
            f"(high end: {e_hi.value:.4f}); the transition lies below the bracket",
            e_lo, e_hi,
        )
    if e_hi.value < threshold:
        return CriticalEstimate(
            value=None, outcome="no-transition-in-bracket", bracket=(lo, hi),
            final_bracket=(lo, hi), threshold=threshold, history=history, mode=mode,
        )

    for step in range(depth):
        mid = 0.5 * (lo + hi)
        e_mid = proxy(mid, f"mid-{step}")
        history.append((mid, e_mid.value, e_mid.std_error))
        if e_mid.value >= threshold:
            hi = mid
        else:
            lo = mid

    return CriticalEstimate(
        value=0.5 * (lo + hi), outcome="ok", bracket=(float(bracket[0]), float(bracket[1])),
        final_bracket=(lo, hi), threshold=threshold, history=history, mode=mode,
    )


def c1_check(
    mu: DistributionSpec, lam: float, query: SurvivalQuery, x: Point,
    t: float, w: Optional[float] = None,
    workers: int = 1, budget: int = DEFAULT_UPDATE_BUDGET,
) -> tuple[Estimate, Estimate]:
    """Estimate both sides of the pointwise-recurrence comparison on the
    same replicas: lhs = P(x infected at some s in [t, t+w]); rhs =
    P(process alive throughout [0, t+w]).  w defaults to t."""
    if w is None:
        w = t
    if t < 0 or w < 0:
        raise ValueError("t and w must be >= 0")
    horizon = t + w
    if horizon == 0.0:
        # both events are functions of the initial configuration alone
        init = set(query.initial.resolve(query.region))
        echo = {"mu": mu.to_dict(), "lambda": lam, "query": query.to_dict(),
                "x": list(x), "t": t, "w": w}
        n = query.replicas
        v_l = 1.0 if tuple(x) in init else 0.0
        v_r = 1.0 if init else 0.0
        return (
            Estimate(value=v_l, replicas=n, std_error=0.0,
                     config_echo={**echo, "side": "lhs"}),
            Estimate(value=v_r, replicas=n, std_error=0.0,
                     config_echo={**echo, "side": "rhs"}),
        )
    out = _mc_outcomes(
        mu, lam, query, horizon=horizon, watch=tuple(x), window=(t, horizon),
        budget=budget, workers=workers,
    )
    echo = {"mu": mu.to_dict(), "lambda": lam, "query": query.to_dict(),
            "x": list(x), "t": t, "w": w}
    n = query.replicas
    v_l = float(out.watch_hit.mean())
    v_r = float(out.alive.mean())
    lhs = Estimate(value=v_l, replicas=n, std_error=bernoulli_se(v_l, n),
                   config_echo={**echo, "side": "lhs"}, diagnostics=_diagnostics(out))
    rhs = Estimate(value=v_r, replicas=n, std_error=bernoulli_se(v_r, n),
                   config_echo={**echo, "side": "rhs"}, diagnostics=_diagnostics(out))
    return lhs, rhs


def c2_check(
    mu: DistributionSpec, lam: float, query: SurvivalQuery, x: Point,
    m: float, t: float,
    workers: int = 1, budget: int = DEFAULT_UPDATE_BUDGET,
) -> Estimate:
    """P(process started from the ball B_x(M) meets B_x(M) at time t)."""
    region = query.region
    b = ball(x, m, region)
    if not b:
        raise ValueError(f"ball of radius {m} around {x} contains no region sites")
    q = replace(query, initial=InitialSpec(kind="ball", center=tuple(x), radius=m))
    if t == 0.0:
        # the initial ball meets itself surely
        return Estimate(
            value=1.0, replicas=query.replicas, std_error=0.0,
            config_echo={"mu": mu.to_dict(), "lambda": lam, "query": q.to_dict(),
                         "x": list(x), "M": m, "t": t},
        )
    out = _mc_outcomes(mu, lam, q, horizon=t, target=b, budget=budget, workers=workers)
    v = float(out.target_hit.mean())
    return Estimate(
        value=v, replicas=query.replicas, std_error=bernoulli_se(v, query.replicas),
        config_echo={"mu": mu.to_dict(), "lambda": lam, "query": q.to_dict(),
                     "x": list(x), "M": m, "t": t},
        diagnostics=_diagnostics(out),
    )


def hit_probability(
    mu: DistributionSpec, lam: float, query: SurvivalQuery,
    a: Sequence[Point], b: Sequence[Point], t: float,
    workers: int = 1, budget: int = DEFAULT_UPDATE_BUDGET,
) -> Estimate:
    """P(process started from A occupies some site of B at time t), in the
    quenched environment fixed by the query."""
    if query.regime != "quenched":
        raise ValueError("hit_probability is defined for the quenched regime")
    q = replace(query, initial=InitialSpec(kind="sites", sites=tuple(tuple(p) for p in a)))
    if t == 0.0:
        v = 1.0 if set(map(tuple, a)) & set(map(tuple, b)) else 0.0
        return Estimate(
            value=v, replicas=query.replicas, std_error=0.0,
            config_echo={"mu": mu.to_dict(), "lambda": lam, "query": q.to_dict(),
                         "A": [list(p) for p in a], "B": [list(p) for p in b], "t": t},
        )
    out = _mc_outcomes(mu, lam, q, horizon=t, target=[tuple(p) for p in b],
                       budget=budget, workers=workers)
    v = float(out.target_hit.mean())
    return Estimate(
        value=v, replicas=query.replicas, std_error=bernoulli_se(v, query.replicas),
        config_echo={"mu": mu.to_dict(), "lambda": lam, "query": q.to_dict(),
                     "A": [list(p) for p in a], "B": [list(p) for p in b], "t": t},
        diagnostics=_diagnostics(out),
    )
