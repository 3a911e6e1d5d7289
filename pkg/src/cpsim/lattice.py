"""Lattice geometry: half-space / full-space / finite-box regions.

In half-space mode sites are integer vectors of length d+1 and the lattice
is Z^d x Z^+ (last coordinate >= 0).  Full-space mode drops the wall
coordinate entirely: the lattice is Z^d and sites have length d (it exists
for validation against known wall-free behavior).  Finite-box mode is the
standalone graph induced on an integer box in d+1 coordinates.  Edges join
points at
Euclidean distance exactly 1, i.e. unit steps along one axis, and are
unoriented; the canonical form puts the lexicographically smaller endpoint
first, which forces the step to be +e_axis from the first endpoint.

Half-space and full-space regions may carry a box: a finite simulation
window cut out of the infinite lattice.  The window is where dynamics are
realized; membership queries still answer for the infinite lattice, so a
window site can have lattice neighbors outside the window (these give rise
to suppressed boundary arrows downstream).  In finite-box mode the box *is*
the whole lattice and there is no exterior.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

Point = tuple[int, ...]
Edge = tuple[Point, Point]

MODES = ("half-space", "full-space", "finite-box")


@dataclass(frozen=True)
class Box:
    """Inclusive integer bounds, one (lo, hi) pair per coordinate."""

    lo: Point
    hi: Point

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("box lo/hi dimension mismatch")
        for i, (a, b) in enumerate(zip(self.lo, self.hi)):
            if a > b:
                raise ValueError(f"box is empty along axis {i}: lo={a} > hi={b}")

    @property
    def ndim(self) -> int:
        return len(self.lo)

    def side(self, axis: int) -> int:
        return self.hi[axis] - self.lo[axis] + 1

    def n_sites(self) -> int:
        return math.prod(self.side(i) for i in range(self.ndim))

    def contains(self, p: Sequence[int]) -> bool:
        return all(a <= c <= b for c, a, b in zip(p, self.lo, self.hi))

    def points(self) -> Iterator[Point]:
        """All box points in lexicographic order."""
        return itertools.product(*(range(a, b + 1) for a, b in zip(self.lo, self.hi)))


@dataclass(frozen=True)
class Region:
    mode: str
    d: int
    box: Optional[Box] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown region mode {self.mode!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.mode == "finite-box" and self.box is None:
            raise ValueError("finite-box region requires a box")
        if self.box is not None:
            if self.box.ndim != self.n:
                raise ValueError(
                    f"box has {self.box.ndim} coordinates, region needs {self.n}"
                )
            if self.mode == "half-space" and self.box.lo[-1] < 0:
                raise ValueError("half-space box extends below the wall (last coordinate < 0)")

    @property
    def n(self) -> int:
        """Number of coordinates per site (d in full-space mode, else d+1)."""
        return self.d if self.mode == "full-space" else self.d + 1

    @property
    def origin(self) -> Point:
        return (0,) * self.n

    def contains(self, p: Sequence[int]) -> bool:
        """Lattice membership (infinite lattice for half/full-space modes)."""
        if len(p) != self.n:
            return False
        if self.mode == "half-space":
            return p[-1] >= 0
        if self.mode == "full-space":
            return True
        return self.box.contains(p)

    @property
    def is_finite(self) -> bool:
        return self.mode == "finite-box"

    def window(self) -> Box:
        """The finite box dynamics run on; errors if none was given."""
        if self.box is None:
            raise ValueError(f"{self.mode} region has no box window")
        return self.box

    def require_member(self, p: Sequence[int]) -> None:
        if len(p) != self.n:
            raise ValueError(f"point {tuple(p)} has {len(p)} coordinates, region needs {self.n}")
        if self.mode == "half-space" and p[-1] < 0:
            raise ValueError(f"point {tuple(p)} outside region: coordinate {self.n - 1} is negative")
        if self.mode == "finite-box":
            for i, (c, a, b) in enumerate(zip(p, self.box.lo, self.box.hi)):
                if not a <= c <= b:
                    raise ValueError(f"point {tuple(p)} outside region: coordinate {i} not in [{a}, {b}]")

    def to_dict(self) -> dict:
        out = {"mode": self.mode, "d": self.d}
        if self.box is not None:
            out["box"] = {"lo": list(self.box.lo), "hi": list(self.box.hi)}
        return out

    @staticmethod
    def from_dict(obj: dict) -> "Region":
        box = None
        if "box" in obj and obj["box"] is not None:
            box = Box(tuple(obj["box"]["lo"]), tuple(obj["box"]["hi"]))
        return Region(mode=obj["mode"], d=obj["d"], box=box)


def neighbors(p: Sequence[int], region: Region) -> list[Point]:
    """Lattice neighbors of p inside the region, in lexicographic order.

    Unit steps along each axis, filtered by region membership.  Degree is at
    most twice the coordinate count.
    """
    p = tuple(p)
    region.require_member(p)
    out = []
    for axis in range(region.n):
        for step in (-1, 1):
            q = p[:axis] + (p[axis] + step,) + p[axis + 1:]
            if region.contains(q):
                out.append(q)
    out.sort()
    return out


def ball(center: Sequence[int], radius: float, region: Region) -> list[Point]:
    """Lattice points within Euclidean distance ``radius`` of ``center``,
    restricted to the region, in lexicographic order."""
    center = tuple(center)
    region.require_member(center)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    m = int(math.floor(radius))
    r2 = radius * radius
    out = []
    for offs in itertools.product(range(-m, m + 1), repeat=region.n):
        if sum(o * o for o in offs) <= r2:
            q = tuple(c + o for c, o in zip(center, offs))
            if region.contains(q):
                out.append(q)
    out.sort()
    return out


def canonical_edge(p: Sequence[int], q: Sequence[int]) -> Edge:
    """Order an unoriented unit edge canonically (lex-smaller endpoint first)."""
    p, q = tuple(p), tuple(q)
    diff2 = sum((a - b) ** 2 for a, b in zip(p, q))
    if len(p) != len(q) or diff2 != 1:
        raise ValueError(f"{p} and {q} are not at Euclidean distance 1")
    return (p, q) if p < q else (q, p)


def edge_axis(e: Edge) -> int:
    """Axis along which a canonical edge steps (always +1 from e[0])."""
    for i, (a, b) in enumerate(zip(e[0], e[1])):
        if a != b:
            return i
    raise ValueError("degenerate edge")


def edges_in(region: Region) -> list[Edge]:
    """All lattice edges of a finite-box region, canonical, lex-sorted.

    Unsupported for half-space / full-space modes: those regions are
    infinite, the box is only a simulation window.
    """
    if not region.is_finite:
        raise ValueError(f"edges_in is only defined for finite-box regions, not {region.mode}")
    out = []
    for p in region.box.points():
        for axis in range(region.n):
            q = p[:axis] + (p[axis] + 1,) + p[axis + 1:]
            if region.box.contains(q):
                out.append((p, q))
    out.sort()
    return out


# --- point packing -----------------------------------------------------------
#
# Each coordinate is offset-encoded into 60 // n bits (n coordinates), giving a
# collision-free key below 2^60 for any box with every coordinate in
# [-2^(bits-1), 2^(bits-1)).  Side limits: d=1 -> 2^30, d=2 -> 2^20,
# d=3 -> 2^15.  Keys feed the per-edge keyed generator, so collision-freedom
# on the working window is what guarantees i.i.d. edge rates.

def pack_bits(n: int) -> int:
    return 60 // n


def pack_point(p: Sequence[int]) -> int:
    n = len(p)
    bits = pack_bits(n)
    half = 1 << (bits - 1)
    key = 0
    for c in p:
        if not -half <= c < half:
            raise ValueError(f"coordinate {c} outside packable range [{-half}, {half}) for {n} coordinates")
        key = (key << bits) | (c + half)
    return key


def unpack_point(key: int, n: int) -> Point:
    bits = pack_bits(n)
    half = 1 << (bits - 1)
    mask = (1 << bits) - 1
    coords = []
    for _ in range(n):
        coords.append((key & mask) - half)
        key >>= bits
    return tuple(reversed(coords))


def edge_key(e: Edge) -> int:
    """Collision-free 64-bit key of a canonical edge: packed smaller endpoint
    plus the step axis in the low 3 bits."""
    return (pack_point(e[0]) << 3) | edge_axis(e)


# --- window site enumeration (internal, used by streams and kernels) ---------

@dataclass(frozen=True)
class SiteIndex:
    """Lex-ordered enumeration of the sites of a region's window.

    ``coords`` is an (N, n) int64 array; ``index`` maps point -> row.  The
    per-site slot tables built on top of this (see environment.rates_table)
    use slot order (-e0, +e0, -e1, +e1, ...).
    """

    region: Region
    coords: np.ndarray
    index: dict

    @property
    def n_sites(self) -> int:
        return len(self.coords)

    def point(self, i: int) -> Point:
        return tuple(int(c) for c in self.coords[i])


def site_index(region: Region) -> SiteIndex:
    box = region.window()
    pts = [p for p in box.points() if region.contains(p)]
    coords = np.array(pts, dtype=np.int64).reshape(len(pts), region.n)
    return SiteIndex(region=region, coords=coords, index={p: i for i, p in enumerate(pts)})


def slot_offsets(n: int) -> list[Point]:
    """Directed neighbor slots in fixed order: (-e0, +e0, -e1, +e1, ...)."""
    out = []
    for axis in range(n):
        for step in (-1, 1):
            out.append(tuple(step if i == axis else 0 for i in range(n)))
    return out
