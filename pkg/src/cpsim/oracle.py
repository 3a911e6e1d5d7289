"""Exact transient analysis of the contact process on tiny graphs.

States are subsets of the vertex set encoded as bitmasks; the generator is
never materialized.  ``exact_distribution`` uses uniformization: with a
uniform bound Lambda on the total outflow rate, the distribution at time t
is a Poisson(Lambda*t) mixture of powers of the discrete kernel
P = I + Q/Lambda.  Truncating the mixture after K terms leaves exactly the
Poisson tail mass as L1 error, which is reported as a certified bound.

The recovery outflow of a state is at most n and each edge contributes
lambda*w_e to the infection outflow only while exactly one endpoint is
infected, so Lambda = n + lambda * sum(w_e) dominates every state.  When
Lambda*t is large the horizon is split into equal slices and the kernel is
applied slice by slice; errors add in L1.

Everything here is independent of the simulation stack on purpose: it is
the measuring stick the Monte Carlo side is held against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .environment import Environment
from .lattice import Region, edges_in

MAX_VERTICES = 12
TRUNCATION_TOL = 1e-10
_SLICE_MEAN = 256.0  # max Poisson mean handled in one uniformization pass


@dataclass(frozen=True)
class FiniteGraph:
    """Unoriented graph with per-edge rate multipliers w_e (lambda_e)."""

    n: int
    edges: tuple  # ((u, v, w), ...) with 0 <= u < v < n, w >= 0
    labels: Optional[tuple] = None  # original site labels, if any

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        if self.n > MAX_VERTICES:
            raise ValueError(
                f"{self.n} vertices gives 2^{self.n} states, above the exact-solver limit of {MAX_VERTICES}"
            )
        for u, v, w in self.edges:
            if not (0 <= u < v < self.n):
                raise ValueError(f"edge ({u}, {v}) is not in canonical vertex order")
            if w < 0:
                raise ValueError(f"edge ({u}, {v}) has negative rate {w}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "edges": [[u, v, w] for u, v, w in self.edges],
            "labels": [list(p) for p in self.labels] if self.labels else None,
        }


def graph_from_region(region: Region, env: Environment) -> FiniteGraph:
    """Collapse a finite-box region plus an environment to a FiniteGraph."""
    pts = sorted(region.box.points())
    index = {p: i for i, p in enumerate(pts)}
    edges = tuple(
        (index[p], index[q], env.rate((p, q))) for p, q in edges_in(region)
    )
    return FiniteGraph(n=len(pts), edges=edges, labels=tuple(pts))


def subset_mask(vertices: Iterable[int]) -> int:
    mask = 0
    for v in vertices:
        mask |= 1 << int(v)
    return mask


@dataclass(frozen=True)
class StateVector:
    """Distribution over subset states plus a certified L1 error bound."""

    probs: np.ndarray
    error_bound: float
    lam: float
    t: float

    def mass(self, predicate) -> float:
        idx = np.arange(len(self.probs))
        return float(self.probs[predicate(idx)].sum())


def _infection_rates(graph: FiniteGraph, lam: float) -> np.ndarray:
    """rx[x, S] = total infection rate into vertex x from state S."""
    size = 1 << graph.n
    idx = np.arange(size)
    rx = np.zeros((graph.n, size))
    for u, v, w in graph.edges:
        if w == 0.0:
            continue
        rx[v] += lam * w * ((idx >> u) & 1)
        rx[u] += lam * w * ((idx >> v) & 1)
    return rx


def exact_distribution(
    graph: FiniteGraph, lam: float, init: Iterable[int] | int, t: float
) -> StateVector:
    """Distribution of the infected set at time t, started from ``init``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    n = graph.n
    size = 1 << n
    mask = init if isinstance(init, int) else subset_mask(init)
    if not 0 <= mask < size:
        raise ValueError("initial set is not a subset of the vertex set")

    p = np.zeros(size)
    p[mask] = 1.0
    if t == 0.0 or mask == 0:
        # the empty set is absorbing: no numerics, no error
        return StateVector(probs=p, error_bound=0.0, lam=lam, t=t)

    rx = _infection_rates(graph, lam)
    total_w = sum(w for _, _, w in graph.edges)
    uni_rate = n + lam * total_w
    idx = np.arange(size)

    slices = max(1, int(math.ceil(uni_rate * t / _SLICE_MEAN)))
    dt = t / slices
    mean = uni_rate * dt
    tol = TRUNCATION_TOL / (2 * slices)

    heal_src = [idx[(idx >> x) & 1 == 1] for x in range(n)]
    inf_src = [idx[(idx >> x) & 1 == 0] for x in range(n)]

    def apply_kernel(vec: np.ndarray) -> np.ndarray:
        out = vec.copy()
        for x in range(n):
            bx = 1 << x
            src = heal_src[x]
            flow = vec[src] / uni_rate
            out[src] -= flow
            out[src ^ bx] += flow
            src = inf_src[x]
            flow = vec[src] * (rx[x, src] / uni_rate)
            out[src] -= flow
            out[src ^ bx] += flow
        return out

    err = 0.0
    for _ in range(slices):
        acc = np.zeros(size)
        term = math.exp(-mean)
        cum = term
        vec = p
        acc += term * vec
        k = 0
        while 1.0 - cum > tol:
            k += 1
            vec = apply_kernel(vec)
            term *= mean / k
            cum += term
            acc += term * vec
        # assign the Poisson tail to the last iterate: keeps the vector
        # normalized; the L1 error is at most twice the tail mass
        acc += (1.0 - cum) * vec
        err += 2.0 * (1.0 - cum)
        p = acc

    return StateVector(probs=p, error_bound=err, lam=lam, t=t)


def exact_survival(graph: FiniteGraph, lam: float, init, t: float) -> tuple[float, float]:
    """P(infected set nonempty at t); returns (value, error bound)."""
    dist = exact_distribution(graph, lam, init, t)
    return float(1.0 - dist.probs[0]), dist.error_bound


def exact_hit(graph: FiniteGraph, lam: float, a, b, t: float) -> tuple[float, float]:
    """P(infected set at t, started from A, meets B); returns (value, bound)."""
    dist = exact_distribution(graph, lam, a, t)
    bmask = b if isinstance(b, int) else subset_mask(b)
    idx = np.arange(len(dist.probs))
    val = float(dist.probs[(idx & bmask) != 0].sum())
    return val, dist.error_bound
