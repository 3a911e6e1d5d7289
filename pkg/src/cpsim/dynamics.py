"""Evolution of infected configurations through event streams.

The contact process semantics, applied event by event:

* recovery mark at x: x becomes healthy (no-op if already healthy);
* arrow y -> x: if y is infected and x is healthy and x lies inside the
  allowed region, x becomes infected.  If the arrow fires from an infected
  source across the window (or interior) boundary it is suppressed and
  counted, never applied.

``evolve`` walks a materialized stream and is the reference implementation:
simple, pathwise, and the basis of the coupling / duality / thinning
invariants.  ``evolve_online`` draws exponential clocks on the fly (see
kernels.py) and agrees with evolve-of-a-generated-stream in law; use it when
the event count is large.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .environment import Environment, ModelParams, rates_table
from .graphical import ARROW, EXIT, EventStream, RECOVERY
from .lattice import Box, Point, Region, site_index
from . import kernels

DEFAULT_UPDATE_BUDGET = 10_000_000


class BudgetExceeded(RuntimeError):
    """A run used more site-updates than its budget allows."""

    def __init__(self, applied: int, budget: int):
        super().__init__(f"run exceeded its update budget: {applied} site-updates > {budget}")
        self.applied = applied
        self.budget = budget


@dataclass
class TrajectoryStats:
    extinction_time: Optional[float]
    max_population: int
    ever_infected: Optional[frozenset]
    origin_infection_times: list = field(default_factory=list)
    boundary_suppressions: int = 0
    applied_events: int = 0
    # whether the watch site was infected at some instant of the watch
    # window; only the online path computes this (None elsewhere)
    watch_hit: Optional[bool] = None


def _init_rows(init: Iterable[Point], s: EventStream) -> set[int]:
    rows = set()
    for p in init:
        p = tuple(p)
        s.region.require_member(p)
        if p not in s.sites.index:
            raise ValueError(f"initial site {p} lies outside the stream window")
        rows.add(s.sites.index[p])
    return rows


def iter_evolve(init: Iterable[Point], s: EventStream) -> Iterator[tuple[float, set]]:
    """Yield (time, infected row set) after every event record, applied or
    not, so parallel walks of related streams stay index-aligned.  The set
    is live; copy it if you keep references."""
    infected = _init_rows(init, s)
    time, kind, src, dst = s.time, s.kind, s.src, s.dst
    for i in range(s.n_events):
        a = int(src[i])
        if kind[i] == RECOVERY:
            infected.discard(a)
        else:
            b = int(dst[i])
            if a >= 0 and a in infected and b >= 0:
                infected.add(b)
        yield float(time[i]), infected


def evolve(
    init: Iterable[Point],
    s: EventStream,
    watch: Optional[Point] = None,
) -> tuple[frozenset, TrajectoryStats]:
    """Apply a stream to an initial configuration.

    Returns the final configuration (as points) and trajectory statistics.
    ``watch`` (default: the region origin, when it lies in the window) is
    the site whose infection onset times are recorded.
    """
    rows = _init_rows(init, s)
    if watch is None:
        watch = s.region.origin
    watch_row = s.sites.index.get(tuple(watch), -1)

    stats = TrajectoryStats(
        extinction_time=0.0 if not rows else None,
        max_population=len(rows),
        ever_infected=None,
        origin_infection_times=[0.0] if watch_row in rows else [],
    )
    ever = set(rows)
    infected = rows
    time, kind, src, dst = s.time, s.kind, s.src, s.dst
    for i in range(s.n_events):
        if not infected:
            break
        t = float(time[i])
        a = int(src[i])
        if kind[i] == RECOVERY:
            if a in infected:
                infected.discard(a)
                stats.applied_events += 1
                if not infected:
                    stats.extinction_time = t
        else:
            if a < 0 or a not in infected:
                continue
            b = int(dst[i])
            if b == EXIT:
                stats.boundary_suppressions += 1
            elif b not in infected:
                infected.add(b)
                ever.add(b)
                stats.applied_events += 1
                if len(infected) > stats.max_population:
                    stats.max_population = len(infected)
                if b == watch_row:
                    stats.origin_infection_times.append(t)

    stats.ever_infected = frozenset(s.sites.point(r) for r in ever)
    final = frozenset(s.sites.point(r) for r in infected)
    return final, stats


def coupled_evolve(
    inits: Sequence[Iterable[Point]], s: EventStream
) -> list[tuple[frozenset, TrajectoryStats]]:
    """Evolve several initial sets through the *same* stream in one pass.

    Output i equals evolve(inits[i], s); the shared pass is what realizes
    the pathwise coupling (attractiveness, additivity) exactly.
    """
    walkers = [_init_rows(init, s) for init in inits]
    stats = [
        TrajectoryStats(
            extinction_time=0.0 if not rows else None,
            max_population=len(rows),
            ever_infected=None,
        )
        for rows in walkers
    ]
    watch_row = s.sites.index.get(s.region.origin, -1)
    for st, rows in zip(stats, walkers):
        if watch_row in rows:
            st.origin_infection_times.append(0.0)
    evers = [set(rows) for rows in walkers]

    time, kind, src, dst = s.time, s.kind, s.src, s.dst
    for i in range(s.n_events):
        t = float(time[i])
        a = int(src[i])
        if kind[i] == RECOVERY:
            for rows, st in zip(walkers, stats):
                if a in rows:
                    rows.discard(a)
                    st.applied_events += 1
                    if not rows:
                        st.extinction_time = t
        else:
            b = int(dst[i])
            for rows, st, ever in zip(walkers, stats, evers):
                if a < 0 or a not in rows:
                    continue
                if b == EXIT:
                    st.boundary_suppressions += 1
                elif b not in rows:
                    rows.add(b)
                    ever.add(b)
                    st.applied_events += 1
                    if len(rows) > st.max_population:
                        st.max_population = len(rows)
                    if b == watch_row:
                        st.origin_infection_times.append(t)

    out = []
    for rows, st, ever in zip(walkers, stats, evers):
        st.ever_infected = frozenset(s.sites.point(r) for r in ever)
        out.append((frozenset(s.sites.point(r) for r in rows), st))
    return out


def seed_hit(
    init: Iterable[Point],
    s: EventStream,
    target: Iterable[Point],
    interior: Optional[Box] = None,
) -> tuple[bool, Optional[float]]:
    """First time every point of ``target`` is simultaneously infected.

    Arrows leaving ``interior`` (default: the whole stream window) are
    suppressed, confining the infection path.  The check runs at time 0 and
    after each applied event; returns (hit, hit_time) with hit_time None on
    miss.
    """
    infected = _init_rows(init, s)
    target_rows = set()
    for p in target:
        p = tuple(p)
        if p not in s.sites.index:
            raise ValueError(f"target site {p} lies outside the stream window")
        if interior is not None and not interior.contains(p):
            raise ValueError(f"target site {p} lies outside the interior box")
        target_rows.add(s.sites.index[p])

    inside = None
    if interior is not None:
        coords = s.sites.coords
        lo = np.array(interior.lo)
        hi = np.array(interior.hi)
        inside = np.all((coords >= lo) & (coords <= hi), axis=1)
        infected = {r for r in infected if inside[r]}

    need = len(target_rows)
    have = len(infected & target_rows)
    if have == need:
        return True, 0.0

    time, kind, src, dst = s.time, s.kind, s.src, s.dst
    for i in range(s.n_events):
        if not infected:
            break
        a = int(src[i])
        if kind[i] == RECOVERY:
            if a in infected:
                infected.discard(a)
                if a in target_rows:
                    have -= 1
        else:
            if a < 0 or a not in infected:
                continue
            b = int(dst[i])
            if b == EXIT or (inside is not None and b >= 0 and not inside[b]):
                continue
            if b not in infected:
                infected.add(b)
                if b in target_rows:
                    have += 1
                    if have == need:
                        return True, float(time[i])
    return False, None


def evolve_online(
    init: Iterable[Point],
    env: Environment,
    params: ModelParams,
    region: Region,
    seed: int,
    watch: Optional[Point] = None,
    watch_window: Optional[tuple[float, float]] = None,
    budget: int = DEFAULT_UPDATE_BUDGET,
    collect_ever: bool = True,
    table=None,
    sites=None,
) -> tuple[frozenset, TrajectoryStats]:
    """Exponential-clock execution without materializing a stream.

    Same law as evolve(init, generate_stream(env, params, region, seed')).
    Raises BudgetExceeded when the run uses more than ``budget``
    site-updates; estimators catch this and report it as its own outcome.
    """
    if sites is None:
        sites = site_index(region)
    if table is None:
        table = rates_table(env, params, sites)
    if watch is None:
        watch = region.origin
    watch_row = sites.index.get(tuple(watch), -1)
    lo, hi = watch_window if watch_window is not None else (0.0, params.horizon)

    init_rows = np.array(
        sorted(_require_rows(init, region, sites)), dtype=np.int64
    )
    state = np.zeros(sites.n_sites, dtype=np.uint8)
    ever = np.zeros(sites.n_sites, dtype=np.uint8)
    out = kernels.run_contact(
        table.neigh, table.rate, init_rows, params.horizon, seed,
        watch_row, lo, hi, budget, state, ever,
    )
    (ext_time, max_pop, supp, applied, watch_hit, watch_first, exceeded) = out
    if exceeded:
        raise BudgetExceeded(int(applied), budget)

    final = frozenset(sites.point(r) for r in np.nonzero(state)[0])
    stats = TrajectoryStats(
        extinction_time=None if ext_time < 0 else float(ext_time),
        max_population=int(max_pop),
        ever_infected=(
            frozenset(sites.point(r) for r in np.nonzero(ever)[0]) if collect_ever else None
        ),
        origin_infection_times=[float(watch_first)] if watch_first >= 0 else [],
        boundary_suppressions=int(supp),
        applied_events=int(applied),
        watch_hit=bool(watch_hit),
    )
    return final, stats


def _require_rows(init: Iterable[Point], region: Region, sites) -> set[int]:
    rows = set()
    for p in init:
        p = tuple(p)
        region.require_member(p)
        if p not in sites.index:
            raise ValueError(f"initial site {p} lies outside the simulation window")
        rows.add(sites.index[p])
    return rows
