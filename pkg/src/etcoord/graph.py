"""Time-varying directed graphs, integrated Laplacians and the Q projection.

Edges are ordered pairs ``(i, j)`` with 1-based node labels, meaning node
``i`` receives information from node ``j``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

# Absolute tolerance used to snap query times onto segment boundaries, so
# that t = k*dt lands on the segment that starts at that instant.
BOUNDARY_TOL = 1e-9


class GraphError(ValueError):
    """Invalid graph, schedule or parameter."""


@dataclass(frozen=True)
class Digraph:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"agent count must be >= 1, got {self.n}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise GraphError(f"self-loop ({i}, {i}) not allowed")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise GraphError(f"edge ({i}, {j}) outside 1..{self.n}")
        object.__setattr__(self, "edges", edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i, j in self.edges:
            A[i - 1, j - 1] = 1.0
        return A

    def neighbors(self, i: int) -> list[int]:
        """In-neighborhood of node ``i`` (the nodes it receives from)."""
        return sorted(j for (k, j) in self.edges if k == i)


def complete_digraph(n: int) -> Digraph:
    return Digraph(n, frozenset((i, j) for i in range(1, n + 1)
                                for j in range(1, n + 1) if i != j))


def laplacian(g: Digraph) -> np.ndarray:
    A = g.adjacency()
    return np.diag(A.sum(axis=1)) - A


@dataclass(frozen=True)
class NetworkSchedule:
    """Piecewise-constant digraph sequence, right-continuous in time."""

    segments: tuple  # of (duration, Digraph)
    cyclic: bool = True

    def __post_init__(self):
        segs = tuple((float(d), g) for d, g in self.segments)
        if not segs:
            raise GraphError("schedule needs at least one segment")
        n = segs[0][1].n
        for d, g in segs:
            if not d > 0:
                raise GraphError(f"segment duration must be > 0, got {d}")
            if g.n != n:
                raise GraphError("all segments must have the same agent count")
        object.__setattr__(self, "segments", segs)

    @property
    def n(self) -> int:
        return self.segments[0][1].n

    @property
    def cycle_duration(self) -> float:
        return math.fsum(d for d, _ in self.segments)

    @property
    def boundaries(self) -> np.ndarray:
        """Segment start times within one cycle, plus the cycle end."""
        return np.concatenate([[0.0], np.cumsum([d for d, _ in self.segments])])

    def locate(self, t: float) -> tuple[int, bool]:
        """Index of the segment active at ``t`` and whether ``t`` overran a
        non-cyclic schedule (in which case the last segment is held)."""
        if t < 0:
            raise GraphError(f"time must be >= 0, got {t}")
        bounds = self.boundaries
        cycle = bounds[-1]
        if self.cyclic:
            m = math.floor(t / cycle + BOUNDARY_TOL / cycle)
            tau = t - m * cycle
        else:
            if t >= cycle - BOUNDARY_TOL:
                return len(self.segments) - 1, t > cycle + BOUNDARY_TOL
            tau = t
        k = int(np.searchsorted(bounds, tau + BOUNDARY_TOL, side="right")) - 1
        return min(max(k, 0), len(self.segments) - 1), False

    def graph_at(self, t: float) -> Digraph:
        return self.segments[self.locate(t)[0]][1]


def _overlap_weights(s: NetworkSchedule, t0: float, t1: float) -> np.ndarray:
    """Time each segment is active within [t0, t1]."""
    bounds = s.boundaries
    cycle = bounds[-1]
    w = np.zeros(len(s.segments))
    starts, ends = bounds[:-1], bounds[1:]

    def add(a, b, offset):
        lo = np.maximum(starts + offset, a)
        hi = np.minimum(ends + offset, b)
        w[:] += np.clip(hi - lo, 0.0, None)

    if not s.cyclic:
        add(t0, t1, 0.0)
        if t1 > cycle:
            # held last segment
            w[-1] += t1 - max(t0, cycle)
        return w
    m0 = math.floor(t0 / cycle)
    m1 = math.floor(t1 / cycle)
    if m1 - m0 >= 2:
        full = m1 - m0 - 1
        w += full * (ends - starts)
        add(t0, (m0 + 1) * cycle, m0 * cycle)
        add(m1 * cycle, t1, m1 * cycle)
    else:
        for m in range(m0, m1 + 1):
            add(t0, t1, m * cycle)
    return w


def integrated_laplacian(s: NetworkSchedule, t: float, T: float) -> np.ndarray:
    """Exact integral of L over [t, t+T] (duration-weighted sum)."""
    if not T > 0:
        raise GraphError(f"window length T must be > 0, got {T}")
    if t < 0:
        raise GraphError(f"window start must be >= 0, got {t}")
    w = _overlap_weights(s, t, t + T)
    L = np.zeros((s.n, s.n))
    for wk, (_, g) in zip(w, s.segments):
        if wk > 0:
            L += wk * laplacian(g)
    return L


class SpanningTreeResult(NamedTuple):
    holds: bool
    roots: frozenset


def has_delta_spanning_tree(L_int: np.ndarray, delta: float) -> SpanningTreeResult:
    """Does the delta-edge digraph of ``L_int`` contain a spanning tree?

    Returns the verdict and every (1-based) root that reaches all nodes.
    """
    if not delta > 0:
        raise GraphError(f"delta must be > 0, got {delta}")
    L_int = np.asarray(L_int, dtype=float)
    n = L_int.shape[0]
    # edge (i, j) carries information j -> i
    succ = [[] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and -L_int[i, j] >= delta:
                succ[j].append(i)
    roots = set()
    for r in range(n):
        seen = {r}
        queue = deque([r])
        while queue:
            u = queue.popleft()
            for v in succ[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        if len(seen) == n:
            roots.add(r + 1)
    return SpanningTreeResult(bool(roots), frozenset(roots))


class WindowCheck(NamedTuple):
    t_start: float
    holds: bool
    roots: frozenset


def scan_integral_connectivity(s: NetworkSchedule, T: float, delta: float) -> list[WindowCheck]:
    """Check the delta-spanning-tree property over windows [t, t+T].

    Window starts cover one schedule cycle: the aligned starts m*T and every
    segment boundary (where the integrated weights change slope).
    """
    if not T > 0:
        raise GraphError(f"T must be > 0, got {T}")
    if not 0 < delta <= T:
        raise GraphError(f"delta must lie in (0, T], got delta={delta}, T={T}")
    cycle = s.cycle_duration
    m_max = max(1, math.ceil(cycle / T - BOUNDARY_TOL))
    starts = {round(m * T, 12) for m in range(m_max)}
    starts.update(round(float(b), 12) for b in s.boundaries[:-1])
    # duration sums like 0.01 + 0.02 may round just below 0.03
    eff = delta * (1.0 - 1e-12)
    out = []
    for t0 in sorted(starts):
        res = has_delta_spanning_tree(integrated_laplacian(s, t0, T), eff)
        out.append(WindowCheck(t0, res.holds, res.roots))
    return out


def q_matrix(n: int) -> np.ndarray:
    """(n-1) x n matrix with orthonormal rows that annihilates the ones vector."""
    if n < 2:
        raise GraphError(f"Q needs n >= 2, got {n}")
    r = math.sqrt(0.5)  # correctly rounded 1/sqrt(2)
    Q = np.array([[r, -r]])
    for k in range(3, n + 1):
        top = np.concatenate([[math.sqrt((k - 1) / k)],
                              np.full(k - 1, -1.0 / math.sqrt(k * (k - 1)))])
        bottom = np.hstack([np.zeros((k - 2, 1)), Q])
        Q = np.vstack([top, bottom])
    return Q


def diameter(x: Iterable[float]) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise GraphError("diameter of an empty vector")
    return float(x.max() - x.min())


class ConsensusRate(NamedTuple):
    delta_prime: float
    k: float
    lam: float


def consensus_rate_constants(a: float, b: float, delta: float, T: float, n: int) -> ConsensusRate:
    """Overshoot ``k`` and rate ``lam`` of diam(x(t)) <= k diam(x0) exp(-lam t)
    for xdot = -(a/b) L(t) x under integral connectivity (T, delta)."""
    if not (a > 0 and b > 0 and delta > 0 and T > 0):
        raise GraphError("a, b, delta and T must all be > 0")
    if n < 2:
        raise GraphError(f"n must be >= 2, got {n}")
    if delta > T:
        raise GraphError(f"delta={delta} exceeds T={T}")
    r = a / b
    dp = min(1.0, r * delta) * math.exp(-(n - 1) * r * T)
    dpn = dp ** n
    if dpn >= 1.0:
        raise ArithmeticError(f"delta'^n = {dpn} >= 1")
    # log1p keeps precision when delta'^n is tiny
    k = 1.0 / (1.0 - dpn)
    lam = -math.log1p(-dpn) / (n * T)
    return ConsensusRate(dp, k, lam)
