"""Random edge environments and model parameters.

Every lattice edge e carries a nonnegative rate multiplier lambda_e drawn
i.i.d. from a distribution mu supported on [0, inf).  The draw is quenched:
``rate(e)`` is a pure function of (mu, env_seed, canonical edge), realized by
evaluating the keyed counter-based generator at the packed edge key and
pushing the resulting uniform through the inverse CDF of mu.  Querying an
edge twice, in any order, from any process, yields the identical value.

Recovery rates are fixed at 1 per site; the only free dynamic parameters are
the global infection multiplier lambda (an edge infects at lambda *
lambda_e per direction) and the time horizon.  lambda = 0 is accepted as the
degenerate pure-death case used for calibration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lattice import Edge, Region, SiteIndex, canonical_edge, edge_key, pack_bits, slot_offsets
from .rng import derive_seed, uniform01, uniform01_array

KINDS = ("point-mass", "bernoulli", "uniform", "discrete-table", "exponential")


@dataclass(frozen=True)
class DistributionSpec:
    """Edge rate distribution mu.  Parameters by kind:

    point-mass(c); bernoulli(p, scale) giving ``scale`` w.p. p else 0;
    uniform(a, b); discrete-table({value: prob}); exponential(mean).
    """

    kind: str
    c: float = 1.0
    p: float = 0.5
    scale: float = 1.0
    a: float = 0.0
    b: float = 1.0
    table: Optional[dict] = None
    mean: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "point-mass" and self.c < 0:
            raise ValueError("point-mass value must be >= 0")
        if self.kind == "bernoulli":
            if not 0 <= self.p <= 1:
                raise ValueError("bernoulli p must lie in [0, 1]")
            if self.scale < 0:
                raise ValueError("bernoulli scale must be >= 0")
        if self.kind == "uniform" and not 0 <= self.a <= self.b:
            raise ValueError("uniform needs 0 <= a <= b")
        if self.kind == "discrete-table":
            if not self.table:
                raise ValueError("discrete-table needs a nonempty {value: prob} table")
            vals = [float(v) for v in self.table.keys()]
            probs = [float(w) for w in self.table.values()]
            if any(v < 0 for v in vals):
                raise ValueError("discrete-table values must be >= 0")
            if any(w < 0 for w in probs):
                raise ValueError("discrete-table probabilities must be >= 0")
            if abs(sum(probs) - 1.0) > 1e-9:
                raise ValueError(f"discrete-table probabilities sum to {sum(probs)}, expected 1")
            # normalize keys so JSON round trips (string keys) compare equal
            object.__setattr__(self, "table", dict(zip(vals, probs)))
        if self.kind == "exponential" and self.mean <= 0:
            raise ValueError("exponential mean must be > 0")

    def is_discrete(self) -> bool:
        return self.kind in ("point-mass", "bernoulli", "discrete-table")

    def _sorted_table(self) -> tuple[np.ndarray, np.ndarray]:
        items = sorted((float(v), float(w)) for v, w in self.table.items())
        vals = np.array([v for v, _ in items])
        cum = np.cumsum([w for _, w in items])
        cum[-1] = 1.0  # absorb rounding so the last atom always catches u ~ 1
        return vals, cum

    def icdf(self, u: float) -> float:
        """Inverse CDF at u in [0, 1); the single-uniform sampler for mu.

        Routed through the vectorized sampler so scalar and bulk paths are
        bit-identical (libm scalar log1p can differ from numpy's by an ulp).
        """
        return float(self.icdf_array(np.array([u], dtype=np.float64))[0])

    def icdf_array(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "point-mass":
            return np.full_like(u, self.c)
        if self.kind == "bernoulli":
            return np.where(u < self.p, self.scale, 0.0)
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * u
        if self.kind == "exponential":
            return -self.mean * np.log1p(-u)
        vals, cum = self._sorted_table()
        return vals[np.minimum(np.searchsorted(cum, u, side="right"), len(vals) - 1)]

    def upper_bound(self) -> float:
        """Smallest known essential upper bound of mu (inf for exponential)."""
        if self.kind == "point-mass":
            return self.c
        if self.kind == "bernoulli":
            return self.scale
        if self.kind == "uniform":
            return self.b
        if self.kind == "discrete-table":
            return max(float(v) for v in self.table.keys())
        return math.inf

    def to_dict(self) -> dict:
        if self.kind == "point-mass":
            return {"kind": self.kind, "c": self.c}
        if self.kind == "bernoulli":
            return {"kind": self.kind, "p": self.p, "scale": self.scale}
        if self.kind == "uniform":
            return {"kind": self.kind, "a": self.a, "b": self.b}
        if self.kind == "discrete-table":
            return {"kind": self.kind, "table": {str(k): float(v) for k, v in self.table.items()}}
        return {"kind": self.kind, "mean": self.mean}

    @staticmethod
    def from_dict(obj: dict) -> "DistributionSpec":
        kind = obj.get("kind")
        if kind not in KINDS:
            raise ValueError(f"unknown distribution kind {kind!r}")
        fields = {k: v for k, v in obj.items() if k != "kind"}
        return DistributionSpec(kind=kind, **fields)


@dataclass(frozen=True)
class ModelParams:
    """Global dynamics parameters; recovery rate is pinned to 1 per site."""

    lam: float
    horizon: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "horizon": self.horizon}

    @staticmethod
    def from_dict(obj: dict) -> "ModelParams":
        return ModelParams(lam=float(obj["lambda"]), horizon=float(obj["horizon"]))


_RATE_TAG = "edge-rate"


@dataclass(frozen=True)
class Environment:
    """One quenched realization of the edge rates.

    With ``table`` set, rates come from the explicit {edge: rate} map and
    missing edges are an error.  Otherwise rates are generated lazily from
    (spec, env_seed) and never stored: regeneration is exact.
    """

    spec: Optional[DistributionSpec]
    env_seed: int = 0
    table: Optional[dict] = None

    def __post_init__(self):
        if self.spec is None and self.table is None:
            raise ValueError("environment needs a distribution spec or an explicit table")
        if self.table is not None:
            for e, r in self.table.items():
                if r < 0:
                    raise ValueError(f"explicit table has negative rate {r} on edge {e}")

    def rate(self, e: Edge) -> float:
        e = canonical_edge(*e)
        if self.table is not None:
            if e not in self.table:
                raise KeyError(f"edge {e} not present in explicit rate table")
            return self.table[e]
        u = uniform01(derive_seed(self.env_seed, _RATE_TAG), edge_key(e))
        return self.spec.icdf(u)

    def effective_rate(self, params: ModelParams, e: Edge) -> float:
        return params.lam * self.rate(e)

    def to_dict(self) -> dict:
        out = {}
        if self.spec is not None:
            out["mu"] = self.spec.to_dict()
        out["env_seed"] = self.env_seed
        if self.table is not None:
            out["table"] = [[list(p), list(q), r] for (p, q), r in sorted(self.table.items())]
        return out

    @staticmethod
    def from_dict(obj: dict) -> "Environment":
        spec = DistributionSpec.from_dict(obj["mu"]) if "mu" in obj else None
        table = None
        if "table" in obj and obj["table"] is not None:
            table = {
                canonical_edge(tuple(p), tuple(q)): float(r) for p, q, r in obj["table"]
            }
        return Environment(spec=spec, env_seed=int(obj.get("env_seed", 0)), table=table)


def save_env(env: Environment, path: str) -> None:
    """JSON round trip; a spec-only environment stays lazy (no rates stored)."""
    with open(path, "w") as f:
        json.dump(env.to_dict(), f, indent=1, sort_keys=True)
        f.write("\n")


def load_env(path: str) -> Environment:
    if str(path).endswith(".csv"):
        return Environment(spec=None, table=load_rate_table_csv(path))
    with open(path) as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as err:
            raise ValueError(f"malformed environment file {path}: line {err.lineno}: {err.msg}") from None
    return Environment.from_dict(obj)


def _parse_coords(cell: str) -> tuple[int, ...]:
    return tuple(int(c) for c in cell.strip().split(";"))


def save_rate_table_csv(table: dict, path: str) -> None:
    """Interchange format: one edge per row, coordinates ';'-joined."""
    with open(path, "w") as f:
        f.write("p_coords,q_coords,rate\n")
        for (p, q), r in sorted(table.items()):
            f.write("%s,%s,%r\n" % (";".join(map(str, p)), ";".join(map(str, q)), r))


def load_rate_table_csv(path: str) -> dict:
    table = {}
    with open(path) as f:
        header = f.readline().strip()
        if header.split(",") != ["p_coords", "q_coords", "rate"]:
            raise ValueError(f"malformed table file {path}: line 1: expected header p_coords,q_coords,rate")
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            try:
                if len(parts) != 3:
                    raise ValueError("expected 3 columns")
                p, q = _parse_coords(parts[0]), _parse_coords(parts[1])
                r = float(parts[2])
                if r < 0:
                    raise ValueError(f"negative rate {r}")
                table[canonical_edge(p, q)] = r
            except ValueError as err:
                raise ValueError(f"malformed table file {path}: line {lineno}: {err}") from None
    return table


# --- vectorized window tables (shared by streams and the event kernel) -------

NO_EDGE = -2      # no lattice edge in this slot
EXIT_EDGE = -1    # edge exists but its far endpoint lies outside the window


@dataclass(frozen=True)
class RateTable:
    """Per-site directed-slot geometry of a window under one environment.

    neigh[i, k]: row of the slot-k neighbor of site i, or EXIT_EDGE for a
    suppressed boundary edge (truncation modes only), or NO_EDGE.
    rate[i, k]: lambda * lambda_e for that directed arrow channel (0 where
    NO_EDGE).  Both directions of an edge see the same lambda_e.
    """

    sites: SiteIndex
    neigh: np.ndarray
    rate: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.sites.n_sites


def rates_table(env: Environment, params: ModelParams, sites: SiteIndex) -> RateTable:
    region = sites.region
    coords = sites.coords
    n_sites, n = coords.shape
    box = region.window()
    lo = np.array(box.lo, dtype=np.int64)
    hi = np.array(box.hi, dtype=np.int64)
    strides = np.ones(n, dtype=np.int64)
    for axis in range(n - 2, -1, -1):
        strides[axis] = strides[axis + 1] * box.side(axis + 1)

    offsets = slot_offsets(n)
    neigh = np.full((n_sites, len(offsets)), NO_EDGE, dtype=np.int64)
    rate = np.zeros((n_sites, len(offsets)), dtype=np.float64)

    bits = pack_bits(n)
    half = 1 << (bits - 1)

    for k, off in enumerate(offsets):
        tgt = coords + np.array(off, dtype=np.int64)
        in_lattice = np.ones(n_sites, dtype=bool)
        if region.mode == "half-space":
            in_lattice = tgt[:, -1] >= 0
        elif region.mode == "finite-box":
            in_lattice = np.all((tgt >= lo) & (tgt <= hi), axis=1)
        in_window = in_lattice & np.all((tgt >= lo) & (tgt <= hi), axis=1)

        rows = ((tgt - lo) * strides).sum(axis=1)
        neigh[in_window, k] = rows[in_window]
        if not region.is_finite:
            neigh[in_lattice & ~in_window, k] = EXIT_EDGE

        exists = in_lattice
        if not np.any(exists):
            continue
        axis = k // 2
        positive = (k % 2) == 1
        # canonical edge: lex-smaller endpoint first = source for +e_axis slots
        src = coords if positive else tgt
        if env.table is not None:
            vals = np.zeros(n_sites)
            for i in np.nonzero(exists)[0]:
                p = tuple(int(c) for c in coords[i])
                q = tuple(int(c) for c in tgt[i])
                vals[i] = env.rate((p, q))
            rate[exists, k] = params.lam * vals[exists]
        else:
            packed = np.zeros(n_sites, dtype=np.int64)
            for j in range(n):
                packed = (packed << np.int64(bits)) | (src[:, j] + half)
            keys = ((packed.astype(np.uint64)) << np.uint64(3)) | np.uint64(axis)
            u = uniform01_array(derive_seed(env.env_seed, _RATE_TAG), keys[exists])
            rate[exists, k] = params.lam * env.spec.icdf_array(u)

    return RateTable(sites=sites, neigh=neigh, rate=rate)
