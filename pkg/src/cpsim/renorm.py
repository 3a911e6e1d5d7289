"""Block-condition experiments and the dynamic-renormalization macro-grid.

A block is a rectangle of a columns by b rows placed in the upper half
plane.  The block event asks whether a fully infected seed run of 2r+1
consecutive sites entering on one face gives birth, within time tau and
with every arrow leaving the rectangle suppressed, to a fully infected run
of the same length on the target face.  Two canonical variants are exposed:

* orientation ``east``: the seed is horizontal, centered on the bottom row;
  success is a vertical run anywhere on the right column;
* orientation ``north``: the seed is vertical, centered on the left column;
  success is a horizontal run anywhere on the top row.

The exit run's position is free (only its length is pinned), and it seeds
the next block when blocks are chained.  Chaining needs two further entry
variants (a vertical seed attempting east, a horizontal seed attempting
north); they use the same rectangle with entry on the left column or bottom
row respectively, and only the target face changes.  The exit orientation
therefore depends on the direction alone: east exits vertical, north exits
horizontal.

The macro-grid run composes n east moves and n-1 north moves (2n-1 block
events; n=1 is a single east block) on a greedy route: attempt the
preferred direction (east while east moves remain), fall back to the other
direction, then retry the preferred once.  A failed attempt costs its full
tau; a success costs its hit time.  T is the accumulated clock when the
final seed is produced, and is unset when some cell exhausts its attempts.

Everything here is implemented for the half plane (d=1).  For d >= 2 the
blocks run on a planar slab (transverse coordinates pinned to 0), which
exercises the machinery but is a genuinely thinner medium; treat those
numbers as experimental.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .dynamics import DEFAULT_UPDATE_BUDGET
from .environment import DistributionSpec, Environment, ModelParams, rates_table
from .estimators import Estimate, bernoulli_se, _chunked
from .graphical import EXIT, RECOVERY, generate_stream
from .lattice import Box, Point, Region, site_index
from .rng import derive_seed

KINDS = ("S", "L")
ORIENTATIONS = ("east", "north")

DEFAULT_REPLICAS = 400
WILSON_Z = 2.326  # one-sided 0.99
SEARCH_BATCH = 50
SEARCH_CANDIDATE_CAP = 1000
SEARCH_TIER_CAP = 8


@dataclass(frozen=True)
class BoxSpec:
    """Block geometry: a columns by b rows, seed half-length r, span tau."""

    kind: str
    a: int
    b: int
    r: int
    tau: float
    orientation: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(
                f"orientation must be one of {ORIENTATIONS}, got {self.orientation!r}")
        if int(self.a) != self.a or int(self.b) != self.b or self.a < 1 or self.b < 1:
            raise ValueError("a and b must be positive integers")
        if int(self.r) != self.r or self.r < 0:
            raise ValueError("r must be a nonnegative integer")
        object.__setattr__(self, "a", int(self.a))
        object.__setattr__(self, "b", int(self.b))
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "tau", float(self.tau))
        if 2 * self.r + 1 > min(self.a, self.b):
            raise ValueError("seed length 2r+1 must fit both box sides")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")

    @property
    def run_len(self) -> int:
        return 2 * self.r + 1

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "r": self.r,
                "tau": self.tau, "orientation": self.orientation}

    @staticmethod
    def from_dict(obj: dict) -> "BoxSpec":
        return BoxSpec(kind=obj["kind"], a=int(obj["a"]), b=int(obj["b"]),
                       r=int(obj["r"]), tau=float(obj["tau"]),
                       orientation=obj["orientation"])


@dataclass
class BlockOutcome:
    """One block attempt.  success implies hit_time <= tau."""

    success: bool
    hit_time: Optional[float]
    boundary_suppressions: int
    applied_events: int = 0
    exceeded: bool = False

    def to_dict(self) -> dict:
        return {"success": self.success, "hit_time": self.hit_time,
                "boundary_suppressions": self.boundary_suppressions,
                "applied_events": self.applied_events, "exceeded": self.exceeded}


@dataclass
class CellRecord:
    """One route step: the attempts made and the direction realized."""

    step: int
    moved: Optional[str]
    attempts: list = field(default_factory=list)  # (direction, BlockOutcome)
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return {"step": self.step, "moved": self.moved, "elapsed": self.elapsed,
                "attempts": [{"direction": d, **o.to_dict()} for d, o in self.attempts]}


@dataclass
class RenormResult:
    n: int
    epsilon: float
    cells: list
    T: Optional[float]

    def __post_init__(self):
        complete = len(self.cells) == 2 * self.n - 1 and all(
            c.moved is not None for c in self.cells)
        if (self.T is not None) != complete:
            raise ValueError("T must be set exactly when every cell on the route succeeded")

    @property
    def success(self) -> bool:
        return self.T is not None

    def to_dict(self) -> dict:
        return {"n": self.n, "epsilon": self.epsilon, "T": self.T,
                "success": self.success, "cells": [c.to_dict() for c in self.cells]}


# ---------------------------------------------------------------------------
# placement

def _slab_point(d: int, x: int, y: int) -> Point:
    return (x,) + (0,) * (d - 1) + (y,)


def _place(box: BoxSpec, entry: str, held_start: Point, held_len: int, d: int):
    """Corner (x0, y0) of the rectangle for a held entry run.

    entry 'h': the run sits on the bottom row, centered horizontally.
    entry 'v': the run sits on the left column, centered vertically with the
    corner clamped at the half-space wall (the clamp keeps the run inside
    because 2r+1 <= b).
    """
    hx, hy = held_start[0], held_start[-1]
    if entry == "h":
        cx = hx + (held_len - 1) // 2
        x0 = cx - (box.a - 1) // 2
        y0 = hy
    else:
        x0 = hx
        cy = hy + (held_len - 1) // 2
        y0 = max(0, cy - (box.b - 1) // 2)
    return x0, y0


def _block_geometry(box: BoxSpec, entry: str, direction: str,
                    held_start: Point, held_len: int, d: int):
    """Region, init points, face points, run length for one attempt.

    The init is the held run intersected with the rectangle, so chained
    seeds of a different length than the box's canonical 2r+1 stay honest
    (a shorter intersection only makes the attempt harder).
    """
    x0, y0 = _place(box, entry, held_start, held_len, d)
    lo = _slab_point(d, x0, y0)
    hi = _slab_point(d, x0 + box.a - 1, y0 + box.b - 1)
    region = Region(mode="half-space", d=d, box=Box(lo=lo, hi=hi))
    window = region.window()

    hx, hy = held_start[0], held_start[-1]
    if entry == "h":
        init = [_slab_point(d, hx + i, hy) for i in range(held_len)]
    else:
        init = [_slab_point(d, hx, hy + i) for i in range(held_len)]
    init = [p for p in init if window.contains(p)]

    if direction == "e":
        face = [_slab_point(d, x0 + box.a - 1, y0 + j) for j in range(box.b)]
    else:
        face = [_slab_point(d, x0 + i, y0 + box.b - 1) for i in range(box.a)]
    return region, init, face, box.run_len, (x0, y0)


def _canonical_entry(box: BoxSpec):
    """Entry flag, seed start and direction for the two exposed variants."""
    if box.orientation == "east":
        entry, direction = "h", "e"
        cx = (box.a - 1) // 2
        start_x, start_y = cx - box.r, 0
    else:
        entry, direction = "v", "n"
        cy = (box.b - 1) // 2
        start_x, start_y = 0, max(0, cy - box.r)
    return entry, direction, start_x, start_y


def _canonical_geometry(box: BoxSpec, d: int):
    entry, direction, sx, sy = _canonical_entry(box)
    held = _slab_point(d, sx, sy)
    return _block_geometry(box, entry, direction, held, box.run_len, d)


# ---------------------------------------------------------------------------
# single block estimation

def _stream_block_hit(s, init_points, face_points, run_len: int):
    """Walk a materialized stream and report the first completed face run.

    Returns (hit, hit_time, boundary_suppressions).  Arrows across the
    window boundary are suppressed (counted when the source is infected).
    Reference implementation for the block event; the kernel path is the
    fast twin.
    """
    infected = set()
    for p in init_points:
        infected.add(s.sites.index[tuple(p)])
    face_pos = {}
    for pos, p in enumerate(face_points):
        face_pos[s.sites.index[tuple(p)]] = pos
    face_state = np.zeros(len(face_points), dtype=np.uint8)
    for r in infected:
        fp = face_pos.get(r)
        if fp is not None:
            face_state[fp] = 1

    def run_through(pos: int) -> bool:
        lo = pos
        while lo > 0 and face_state[lo - 1]:
            lo -= 1
        hi = pos
        while hi < len(face_state) - 1 and face_state[hi + 1]:
            hi += 1
        return hi - lo + 1 >= run_len

    run = 0
    for i in range(len(face_state)):
        if face_state[i]:
            run += 1
            if run >= run_len:
                return True, 0.0, 0
        else:
            run = 0

    supp = 0
    time, kind, src, dst = s.time, s.kind, s.src, s.dst
    for i in range(s.n_events):
        if not infected:
            break
        a = int(src[i])
        if kind[i] == RECOVERY:
            if a in infected:
                infected.discard(a)
                fp = face_pos.get(a)
                if fp is not None:
                    face_state[fp] = 0
        else:
            if a < 0 or a not in infected:
                continue
            b = int(dst[i])
            if b == EXIT:
                supp += 1
                continue
            if b not in infected:
                infected.add(b)
                fp = face_pos.get(b)
                if fp is not None:
                    face_state[fp] = 1
                    if run_through(fp):
                        return True, float(time[i]), supp
    return False, None, supp


def _env_for(env_spec, seed: int) -> Environment:
    if isinstance(env_spec, Environment):
        return env_spec
    return Environment(spec=env_spec, env_seed=seed)


def block_probability(
    box: BoxSpec,
    env_spec,
    params: ModelParams,
    replicas: int = DEFAULT_REPLICAS,
    regime: str = "annealed",
    *,
    d: int = 1,
    master_seed: int = 0,
    workers: int = 1,
    budget: int = DEFAULT_UPDATE_BUDGET,
    method: str = "kernel",
) -> Estimate:
    """Monte Carlo probability of the canonical block event.

    regime 'annealed' redraws the edge environment each replica; 'quenched'
    fixes it once (seeded from master_seed).  method 'stream' materializes
    the event stream and walks it in Python -- the reference path, desk
    scale only.
    """
    if regime not in ("annealed", "quenched"):
        raise ValueError(f"regime must be 'annealed' or 'quenched', got {regime!r}")
    if method not in ("kernel", "stream"):
        raise ValueError(f"method must be 'kernel' or 'stream', got {method!r}")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")

    region, init, face, run_len, _ = _canonical_geometry(box, d)
    sites = site_index(region)
    init_rows = [sites.index[p] for p in init]
    face_rows = [sites.index[p] for p in face]

    shared = None
    if regime == "quenched":
        env = _env_for(env_spec, derive_seed(master_seed, "block-env"))
        table = rates_table(env, params, sites)
        shared = (env, table, kernels.row_totals(table.rate))

    hits = np.zeros(replicas, dtype=bool)
    supp = np.zeros(replicas, dtype=np.int64)
    exceeded = np.zeros(replicas, dtype=bool)

    def run_range(rng: range) -> None:
        for i in rng:
            sim_seed = derive_seed(master_seed, "block-sim", i)
            if shared is not None:
                env, table, totals = shared
            else:
                env = _env_for(env_spec, derive_seed(master_seed, "block-env", i))
                table = rates_table(env, params, sites)
                totals = kernels.row_totals(table.rate)
            if method == "kernel":
                # single-level coupled run: shares the event path with
                # block_sensitivity's delta=0 level for equal seeds
                s_arr, _, sp_arr, _, exc = kernels.run_block_sweep(
                    table.neigh, table.rate, init_rows, box.tau, sim_seed,
                    budget, [1.0], face_rows, run_len,
                    totals=totals, a_max=float(totals.max()) if len(totals) else 0.0)
                hits[i], supp[i], exceeded[i] = s_arr[0], sp_arr[0], exc
            else:
                stream = generate_stream(
                    env, ModelParams(lam=params.lam, horizon=box.tau),
                    region, sim_seed, table=table)
                hit, _, sp = _stream_block_hit(stream, init, face, run_len)
                hits[i], supp[i] = hit, sp

    chunks = _chunked(replicas, workers)
    if len(chunks) == 1:
        run_range(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_range, chunks))

    value = float(hits.mean())
    return Estimate(
        value=value,
        replicas=replicas,
        std_error=bernoulli_se(value, replicas),
        config_echo={"box": box.to_dict(), "lambda": params.lam,
                     "regime": regime, "d": d, "method": method},
        diagnostics={
            "budget_exceeded": int(exceeded.sum()),
            "boundary_suppressions_mean": float(supp.mean()),
        },
    )


# ---------------------------------------------------------------------------
# parameter search

def wilson_bounds(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Score-interval bounds for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class BlockSearch:
    ok: bool
    S: Optional[BoxSpec]
    L: Optional[BoxSpec]
    epsilon: float
    trace: list = field(default_factory=list)
    replicas_used: int = 0

    def to_dict(self) -> dict:
        return {"ok": self.ok,
                "S": self.S.to_dict() if self.S else None,
                "L": self.L.to_dict() if self.L else None,
                "epsilon": self.epsilon, "replicas_used": self.replicas_used,
                "trace": self.trace}


def _schedule(kind: str):
    """Candidate boxes, cheapest first, expanding geometrically by tier.

    S boxes are square and aimed east; L boxes are elongated (aspect 2 then
    4) and aimed north.  The base side is 2(2r+1) scaled by the tier, and
    tau runs over {b, 2b, 4b}.
    """
    orientation = "east" if kind == "S" else "north"
    aspects = (1,) if kind == "S" else (2, 4)
    for tier in range(SEARCH_TIER_CAP):
        for r in (1, 2, 4):
            base = 2 * (2 * r + 1) * (1 << tier)
            for aspect in aspects:
                for tm in (1, 2, 4):
                    yield BoxSpec(kind=kind, a=aspect * base, b=base, r=r,
                                  tau=float(tm * base), orientation=orientation)


def find_block_params(
    epsilon: float,
    env_spec,
    params: ModelParams,
    search_budget: int,
    *,
    d: int = 1,
    master_seed: int = 0,
    workers: int = 1,
    budget: int = DEFAULT_UPDATE_BUDGET,
) -> BlockSearch:
    """Grid search for an S/L box pair whose block probability clears 1-eps.

    Candidates are tested sequentially in batches; a candidate is accepted
    when the Wilson lower bound (z=2.326) exceeds 1-eps and rejected when
    the upper bound falls below it or its replica cap is hit.  The budget
    counts replicas across all candidates; exhausting it yields a failure
    carrying the best pair seen.
    """
    if not (0 < epsilon < 0.5):
        raise ValueError("epsilon must lie in (0, 0.5)")
    if search_budget < 1:
        raise ValueError("search_budget must be >= 1")

    target = 1.0 - epsilon
    trace: list[dict] = []
    used = 0
    found: dict[str, Optional[BoxSpec]] = {"S": None, "L": None}
    best: dict[str, tuple[float, Optional[BoxSpec]]] = {"S": (-1.0, None), "L": (-1.0, None)}

    for kind in KINDS:
        for cand_idx, box in enumerate(_schedule(kind)):
            if used >= search_budget or found[kind] is not None:
                break
            successes = 0
            n = 0
            decision = "budget"
            while used < search_budget:
                batch = min(SEARCH_BATCH, search_budget - used,
                            SEARCH_CANDIDATE_CAP - n)
                if batch <= 0:
                    decision = "cap"
                    break
                est = block_probability(
                    box, env_spec, params, replicas=batch, regime="annealed",
                    d=d, workers=workers, budget=budget,
                    master_seed=derive_seed(master_seed, "search", kind, cand_idx, n))
                successes += round(est.value * batch)
                n += batch
                used += batch
                lcb, ucb = wilson_bounds(successes, n)
                if lcb > target:
                    decision = "accept"
                    break
                if ucb < target:
                    decision = "reject"
                    break
            lcb, ucb = wilson_bounds(successes, n)
            trace.append({"kind": kind, "box": box.to_dict(), "replicas": n,
                          "successes": successes, "p_hat": successes / n if n else 0.0,
                          "lcb": lcb, "ucb": ucb, "decision": decision})
            if lcb > best[kind][0]:
                best[kind] = (lcb, box)
            if decision == "accept":
                found[kind] = box

    ok = found["S"] is not None and found["L"] is not None
    return BlockSearch(
        ok=ok,
        S=found["S"] or best["S"][1],
        L=found["L"] or best["L"][1],
        epsilon=epsilon,
        trace=trace,
        replicas_used=used,
    )


# ---------------------------------------------------------------------------
# macro-grid runs

def renorm_run(
    n: int,
    epsilon: float,
    boxes: tuple[BoxSpec, BoxSpec],
    env_spec,
    params: ModelParams,
    seed: int,
    *,
    d: int = 1,
    budget: int = DEFAULT_UPDATE_BUDGET,
) -> RenormResult:
    """Compose block events along the greedy east/north macro route.

    One environment per run (drawn from the run seed); each attempt gets a
    fresh simulation substream.  The clock T accumulates hit times on
    success and the full tau on failure; the run fails when a cell
    exhausts its attempts.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    S, L = boxes
    env = _env_for(env_spec, derive_seed(seed, "env"))

    east_left = n
    north_left = n - 1
    held_orient = "h"
    held_start = _slab_point(d, -S.r, 0)
    held_len = S.run_len

    cells: list[CellRecord] = []
    T = 0.0
    attempt_counter = 0
    step = 0
    failed = False

    while east_left + north_left > 0:
        preferred = "e" if east_left > 0 else "n"
        other = "n" if preferred == "e" else "e"
        plan = [preferred]
        if (other == "e" and east_left > 0) or (other == "n" and north_left > 0):
            plan.append(other)
        plan.append(preferred)  # one retry per cell

        cell = CellRecord(step=step, moved=None)
        for direction in plan:
            box = S if direction == "e" else L
            entry = held_orient
            region, init, face, run_len, (x0, y0) = _block_geometry(
                box, entry, direction, held_start, held_len, d)
            sites = site_index(region)
            table = rates_table(env, params, sites)
            sim_seed = derive_seed(seed, "block", attempt_counter)
            attempt_counter += 1
            hit, hit_time, supp, applied, exceeded, pos = kernels.run_block(
                table.neigh, table.rate, [sites.index[p] for p in init],
                box.tau, sim_seed, budget,
                face_rows=[sites.index[p] for p in face], run_len=run_len)
            outcome = BlockOutcome(success=hit, hit_time=hit_time,
                                   boundary_suppressions=supp,
                                   applied_events=applied, exceeded=exceeded)
            cell.attempts.append((("east" if direction == "e" else "north"), outcome))
            if hit:
                T += hit_time
                cell.elapsed += hit_time
                cell.moved = "east" if direction == "e" else "north"
                if direction == "e":
                    east_left -= 1
                    held_orient = "v"
                    held_start = _slab_point(d, x0 + box.a - 1, y0 + pos)
                else:
                    north_left -= 1
                    held_orient = "h"
                    held_start = _slab_point(d, x0 + pos, y0 + box.b - 1)
                held_len = run_len
                break
            T += box.tau
            cell.elapsed += box.tau
        cells.append(cell)
        step += 1
        if cell.moved is None:
            failed = True
            break

    return RenormResult(n=n, epsilon=epsilon, cells=cells,
                        T=None if failed else T)


def renorm_samples(
    ns: Sequence[int],
    epsilon: float,
    boxes: tuple[BoxSpec, BoxSpec],
    env_spec,
    params: ModelParams,
    samples: int,
    *,
    d: int = 1,
    master_seed: int = 0,
    workers: int = 1,
    budget: int = DEFAULT_UPDATE_BUDGET,
) -> dict[int, list[RenormResult]]:
    """Independent macro runs per scale, one fresh environment each."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    out: dict[int, list[RenormResult]] = {int(n): [None] * samples for n in ns}

    tasks = [(int(n), i) for n in ns for i in range(samples)]

    def run_one(task):
        n, i = task
        res = renorm_run(n, epsilon, boxes, env_spec, params,
                         derive_seed(master_seed, "renorm", n, i),
                         d=d, budget=budget)
        out[n][i] = res

    if workers <= 1:
        for task in tasks:
            run_one(task)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_one, tasks))
    return out


def successful_times(results: Mapping[int, Sequence[RenormResult]]) -> dict[int, list[float]]:
    return {n: [r.T for r in rs if r.T is not None] for n, rs in results.items()}


@dataclass
class ScaleStats:
    n: int
    count: int
    median: float
    ratio: float
    inside_fraction: float

    def to_dict(self) -> dict:
        return {"n": self.n, "count": self.count, "median": self.median,
                "ratio": self.ratio, "inside_fraction": self.inside_fraction}


@dataclass
class GrowthFit:
    """Through-origin fit of median T against the scale, with the per-scale
    fraction of samples inside the open band (7w/6 n, 11w/6 n).  The band
    uses the fitted slope, so it is a spread diagnostic: exactly linear
    samples sit below the band and score 0."""

    w_hat: float
    r_squared: float
    scales: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"w_hat": self.w_hat, "r_squared": self.r_squared,
                "scales": [s.to_dict() for s in self.scales]}


def linear_growth_fit(samples: Mapping[int, Sequence[float]]) -> GrowthFit:
    """Fit median T(n) = w n and report band membership per scale.

    Requires at least 3 distinct scales with at least 30 samples each.
    """
    scales = sorted(int(n) for n in samples)
    if len(scales) < 3:
        raise ValueError("need at least 3 distinct scales")
    for n in scales:
        if len(samples[n]) < 30:
            raise ValueError(f"need at least 30 samples per scale, scale {n} has {len(samples[n])}")

    medians = {n: float(np.median(np.asarray(samples[n], dtype=float))) for n in scales}
    num = sum(n * medians[n] for n in scales)
    den = sum(n * n for n in scales)
    w_hat = num / den

    ss_res = sum((medians[n] - w_hat * n) ** 2 for n in scales)
    ss_tot = sum(medians[n] ** 2 for n in scales)
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0

    rows = []
    for n in scales:
        vals = np.asarray(samples[n], dtype=float)
        lo = 7.0 * w_hat / 6.0 * n
        hi = 11.0 * w_hat / 6.0 * n
        inside = float(np.mean((vals > lo) & (vals < hi)))
        rows.append(ScaleStats(n=n, count=len(vals), median=medians[n],
                               ratio=medians[n] / n, inside_fraction=inside))
    return GrowthFit(w_hat=w_hat, r_squared=r_squared, scales=rows)


# ---------------------------------------------------------------------------
# sensitivity in lambda

def block_sensitivity(
    box: BoxSpec,
    env_spec,
    params: ModelParams,
    deltas: Sequence[float],
    replicas: int = DEFAULT_REPLICAS,
    *,
    d: int = 1,
    master_seed: int = 0,
    workers: int = 1,
    budget: int = DEFAULT_UPDATE_BUDGET,
) -> list[tuple[float, Estimate]]:
    """Block probabilities at lambda - delta on coupled (thinned) runs.

    Every replica drives one process at the full rate and applies each
    arrow at level delta iff its thinning mark falls below
    (lambda-delta)/lambda, so the success sets are nested across deltas
    pathwise (a delta=0 entry reproduces block_probability exactly for the
    same seeds).  Coupling violations, which should be impossible, are
    counted in the diagnostics.
    """
    lam = params.lam
    for delta in deltas:
        if delta < 0 or delta > lam:
            raise ValueError(f"each delta must satisfy 0 <= delta <= lambda, got {delta}")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")

    # ascending fracs; always drive at the full rate
    fracs = sorted({(lam - delta) / lam if lam > 0 else 1.0 for delta in deltas} | {1.0})
    level_of = {f: g for g, f in enumerate(fracs)}

    region, init, face, run_len, _ = _canonical_geometry(box, d)
    sites = site_index(region)
    init_rows = [sites.index[p] for p in init]
    face_rows = [sites.index[p] for p in face]

    succ = np.zeros((replicas, len(fracs)), dtype=bool)
    supp = np.zeros((replicas, len(fracs)), dtype=np.int64)
    exceeded = np.zeros(replicas, dtype=bool)

    def run_range(rng: range) -> None:
        for i in rng:
            env = _env_for(env_spec, derive_seed(master_seed, "block-env", i))
            table = rates_table(env, params, sites)
            s, _, sp, _, exc = kernels.run_block_sweep(
                table.neigh, table.rate, init_rows, box.tau,
                derive_seed(master_seed, "block-sim", i), budget,
                fracs, face_rows, run_len)
            succ[i], supp[i], exceeded[i] = s, sp, exc

    chunks = _chunked(replicas, workers)
    if len(chunks) == 1:
        run_range(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_range, chunks))

    violations = int(np.sum(succ[:, :-1] & ~succ[:, 1:]))

    out = []
    for delta in deltas:
        frac = (lam - delta) / lam if lam > 0 else 1.0
        g = level_of[frac]
        value = float(succ[:, g].mean())
        out.append((float(delta), Estimate(
            value=value,
            replicas=replicas,
            std_error=bernoulli_se(value, replicas),
            config_echo={"box": box.to_dict(), "lambda": lam, "delta": float(delta),
                         "d": d, "regime": "annealed"},
            diagnostics={
                "budget_exceeded": int(exceeded.sum()),
                "boundary_suppressions_mean": float(supp[:, g].mean()),
                "coupling_violations": violations,
            },
        )))
    return out
