"""Graphical representation: materialized Poisson event streams.

A stream realizes, on a finite window and a time horizon, one recovery mark
process per site (rate 1) and one arrow process per directed adjacent pair
(rate lambda * lambda_e).  All later constructions (pathwise coupling,
duality by time reversal, thinning to a smaller lambda) are deterministic
transformations of one stream.

Determinism: every site and every directed pair owns a private substream
keyed by (stream seed, packed location), so the realized stream is a pure
function of (env, params, region, seed) and does not depend on enumeration
or worker order.  Zero-rate channels produce no events at all.

Event order is total: ascending time, recoveries before arrows at equal
times, then lexicographic location (site row, then directed slot).  Ties
have probability zero; the order exists so replays are bit-stable.

In half-space / full-space modes the window is a truncation of an infinite
lattice: directed pairs whose source lies in the window but whose target
falls outside are realized too (target row EXIT).  They can never add a
site; the evolution layer counts their firings as boundary suppressions.
Pairs with an outside *source* are omitted: an outside source is never
infected in a truncated run, so omitting its arrows does not change the law.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .environment import EXIT_EDGE, Environment, ModelParams, RateTable, rates_table
from .lattice import Region, SiteIndex, site_index
from .rng import derive_seed, generator, uniform01_array

RECOVERY = 0
ARROW = 1
EXIT = -1  # row code for "outside the window" in src/dst columns


class Event(NamedTuple):
    time: float
    kind: int           # RECOVERY or ARROW
    site: tuple         # recovery site, or arrow source point
    target: Optional[tuple]  # arrow target point; None for recoveries and exits


@dataclass(frozen=True)
class EventStream:
    region: Region
    horizon: float
    seed: int
    sites: SiteIndex
    time: np.ndarray   # float64, sorted ascending
    kind: np.ndarray   # int8
    src: np.ndarray    # int32 site row; EXIT only for reversed boundary arrows
    dst: np.ndarray    # int32 site row or EXIT; EXIT also for recoveries

    @property
    def n_events(self) -> int:
        return len(self.time)

    def event(self, i: int) -> Event:
        k = int(self.kind[i])
        s = int(self.src[i])
        d = int(self.dst[i])
        site = self.sites.point(s) if s >= 0 else None
        target = self.sites.point(d) if (k == ARROW and d >= 0) else None
        return Event(float(self.time[i]), k, site, target)

    def events(self) -> Iterator[Event]:
        for i in range(self.n_events):
            yield self.event(i)

    def arrow_indices(self) -> np.ndarray:
        return np.nonzero(self.kind == ARROW)[0]

    def to_csv(self, path: str) -> None:
        """Debugging dump; column layout is not a stable interface."""
        with open(path, "w") as f:
            f.write("time,kind,src_row,dst_row\n")
            for i in range(self.n_events):
                f.write(f"{self.time[i]!r},{int(self.kind[i])},{int(self.src[i])},{int(self.dst[i])}\n")


def _open_uniform(gen: np.random.Generator, count: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1): redraw exact zeros so reversal
    never produces a time-0 event."""
    u = gen.random(count)
    while np.any(u == 0.0):
        z = u == 0.0
        u[z] = gen.random(int(z.sum()))
    return u


def _event_times(gen: np.random.Generator, count: int, horizon: float) -> np.ndarray:
    """``count`` sorted event times in (0, horizon].

    Times are normalized onto the image of t -> horizon - t, where that map
    is an exact involution (fl(T-fl(T-fl(T-t))) == fl(T-fl(T-t)) under round
    to nearest), so reversing a stream twice restores it bit-for-bit.  The
    1-ulp nudge is statistically invisible.
    """
    t = _open_uniform(gen, count) * horizon
    t = horizon - (horizon - t)
    while np.any(t <= 0.0):  # measure-zero corner of the normalization
        z = t <= 0.0
        t[z] = horizon - (horizon - _open_uniform(gen, int(z.sum())) * horizon)
    return np.sort(t)


def generate_stream(
    env: Environment,
    params: ModelParams,
    region: Region,
    seed: int,
    table: Optional[RateTable] = None,
) -> EventStream:
    """Realize one graphical representation on the region's window."""
    sites = table.sites if table is not None else site_index(region)
    if table is None:
        table = rates_table(env, params, sites)
    horizon = params.horizon
    if not horizon <= 1e6:
        raise ValueError("horizon above 1e6 is not supported for materialized streams")

    times, kinds, srcs, dsts = [], [], [], []

    rec_seed = derive_seed(seed, "rec")
    arrow_seed = derive_seed(seed, "arrow")
    coords = sites.coords
    n_slots = table.neigh.shape[1]

    for i in range(sites.n_sites):
        gen = generator(derive_seed(rec_seed, _site_key(coords[i])))
        count = gen.poisson(horizon)
        if count:
            t = _event_times(gen, count, horizon)
            times.append(t)
            kinds.append(np.full(count, RECOVERY, dtype=np.int8))
            srcs.append(np.full(count, i, dtype=np.int32))
            dsts.append(np.full(count, EXIT, dtype=np.int32))
        for k in range(n_slots):
            tgt = int(table.neigh[i, k])
            rate = float(table.rate[i, k])
            if tgt < EXIT_EDGE or rate == 0.0:
                continue
            # tgt is a window row, or EXIT_EDGE (== EXIT) for a suppressed
            # boundary channel that still fires and gets counted downstream
            gen = generator(derive_seed(arrow_seed, _site_key(coords[i]), k))
            count = gen.poisson(rate * horizon)
            if count:
                t = _event_times(gen, count, horizon)
                times.append(t)
                kinds.append(np.full(count, ARROW, dtype=np.int8))
                srcs.append(np.full(count, i, dtype=np.int32))
                dsts.append(np.full(count, tgt, dtype=np.int32))

    if times:
        time = np.concatenate(times)
        kind = np.concatenate(kinds)
        src = np.concatenate(srcs)
        dst = np.concatenate(dsts)
    else:
        time = np.empty(0)
        kind = np.empty(0, dtype=np.int8)
        src = np.empty(0, dtype=np.int32)
        dst = np.empty(0, dtype=np.int32)

    order = _event_order(time, kind, src, dst)
    return EventStream(
        region=region, horizon=horizon, seed=seed, sites=sites,
        time=time[order], kind=kind[order], src=src[order], dst=dst[order],
    )


def _site_key(coord_row: np.ndarray) -> int:
    # stable per-point key independent of window layout
    from .lattice import pack_point

    return pack_point(tuple(int(c) for c in coord_row))


def _event_order(time, kind, src, dst) -> np.ndarray:
    # lexsort uses the last key as primary
    return np.lexsort((dst, src, kind, time))


def reverse_stream(s: EventStream) -> EventStream:
    """Time reversal t -> horizon - t with arrows flipped.  An involution.

    Flipped boundary arrows point from outside the window into it; their
    source can never be infected, matching the omitted outside-source arrows
    of a forward stream.
    """
    time = s.horizon - s.time
    src = np.where(s.kind == ARROW, s.dst, s.src).astype(np.int32)
    dst = np.where(s.kind == ARROW, s.src, s.dst).astype(np.int32)
    order = _event_order(time, s.kind, src, dst)
    return replace(s, time=time[order], kind=s.kind[order], src=src[order], dst=dst[order])


def thin_stream(s: EventStream, keep_prob: float, seed: int) -> EventStream:
    """Keep each arrow independently with probability keep_prob; recoveries
    are untouched.

    The keep mark of an arrow is a uniform keyed by (seed, arrow ordinal),
    compared against keep_prob.  Thinnings of the same stream under the same
    seed are therefore nested across keep probabilities: the survivors at a
    smaller keep_prob are a subset of the survivors at a larger one, which is
    what couples a whole lambda grid to one driving stream.
    """
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError("keep_prob must lie in [0, 1]")
    keep = np.ones(s.n_events, dtype=bool)
    arrows = s.arrow_indices()
    marks = uniform01_array(derive_seed(seed, "thin"), np.arange(len(arrows), dtype=np.uint64))
    keep[arrows] = marks < keep_prob
    return replace(
        s,
        time=s.time[keep],
        kind=s.kind[keep],
        src=s.src[keep],
        dst=s.dst[keep],
    )
