"""Exact subgraph-indicator evaluation and voter-subgraph counting.

``count_pattern`` counts opinion-preserving inclusions of a pattern in a
graph snapshot by backtracking over injective embeddings and dividing by the
automorphism count.  ``count_bruteforce`` is the independent oracle: a
literal sum of indicators over every labeled copy.  ``counts_along_trajectory``
tracks counts through time, either by recounting at each checkpoint or by
applying per-event deltas (patterns with at most ``INCREMENTAL_MAX_VERTICES``
vertices).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .patterns import (
    LabeledVoterGraph,
    Opinion,
    VoterPattern,
    automorphism_count,
    enumerate_labeled_copies,
)

BRUTEFORCE_MAX_VERTICES = 12
INCREMENTAL_MAX_VERTICES = 4


class BudgetError(ValueError):
    """Graph too large for the brute-force enumeration budget."""


@dataclass(frozen=True)
class GraphState:
    """Immutable snapshot of the process: opinions plus the active edge set."""

    n: int
    opinions: tuple[Opinion, ...]
    active_edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if len(self.opinions) != self.n:
            raise ValueError("opinion vector length must equal n")
        for a, b in self.active_edges:
            if a == b:
                raise ValueError(f"self-loop ({a},{b}) in active edge set")
            if a > b:
                raise ValueError(f"edge ({a},{b}) must be stored with a < b")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge ({a},{b}) out of range for n={self.n}")

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.active_edges

    def adjacency(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for a, b in self.active_edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


@dataclass(frozen=True)
class CountVector:
    """Counts of several patterns evaluated at one time point."""

    patterns: tuple[VoterPattern, ...]
    values: tuple[int, ...]
    time: float


def indicator(h: LabeledVoterGraph, state: GraphState) -> int:
    """1 iff every edge of the placement is active and every opinion matches."""
    for label in h.labels:
        if not (0 <= label < state.n):
            raise ValueError(f"label {label} out of range for a graph on {state.n} vertices")
    for i, label in enumerate(h.labels):
        if state.opinions[label] is not h.pattern.opinions[i]:
            return 0
    for u, v in h.label_edges:
        if (u, v) not in state.active_edges:
            return 0
    return 1


def _count_embeddings(
    state_opinions: Sequence[Opinion],
    adjacency: Sequence[set[int]],
    pattern: VoterPattern,
    pins: dict[int, int] | None = None,
) -> int:
    """Number of injective opinion- and edge-preserving maps pattern -> state.

    ``pins`` fixes images for selected pattern vertices.  Pattern vertices
    are explored in descending-degree order; candidates are filtered by
    opinion first, then by adjacency to already-mapped neighbors.
    """
    v = pattern.vertex_count
    n = len(state_opinions)
    if v > n:
        return 0
    pins = pins or {}
    order = sorted(range(v), key=lambda p: (-pattern.degree(p), p))
    # pinned vertices first so contradictions prune immediately
    order.sort(key=lambda p: p not in pins)
    pat_neighbors = [pattern.neighbors(p) for p in range(v)]
    mapped: dict[int, int] = {}
    used: set[int] = set()

    def candidates(p: int) -> Iterable[int]:
        if p in pins:
            return (pins[p],)
        anchored = [mapped[q] for q in pat_neighbors[p] if q in mapped]
        if anchored:
            # intersect adjacency of mapped pattern-neighbors
            pool = set(adjacency[anchored[0]])
            for img in anchored[1:]:
                pool &= adjacency[img]
            return sorted(pool)
        return range(n)

    def extend(depth: int) -> int:
        if depth == v:
            return 1
        p = order[depth]
        total = 0
        want = pattern.opinions[p]
        for cand in candidates(p):
            if cand in used or state_opinions[cand] is not want:
                continue
            ok = True
            for q in pat_neighbors[p]:
                if q in mapped and cand not in adjacency[mapped[q]]:
                    ok = False
                    break
            if not ok:
                continue
            mapped[p] = cand
            used.add(cand)
            total += extend(depth + 1)
            used.discard(cand)
            del mapped[p]
        return total

    return extend(0)


def count_pattern(state: GraphState, pattern: VoterPattern) -> int:
    """Number of opinion-preserving inclusions of the pattern in the snapshot.

    The injective-embedding total is always divisible by the automorphism
    count; non-divisibility indicates an enumeration bug and raises.
    """
    embeddings = _count_embeddings(state.opinions, state.adjacency(), pattern)
    aut = automorphism_count(pattern)
    if embeddings % aut != 0:
        raise RuntimeError(
            f"embedding count {embeddings} not divisible by automorphism count {aut}"
        )
    return embeddings // aut


def count_bruteforce(state: GraphState, pattern: VoterPattern) -> int:
    """Oracle count: literal sum of indicators over every labeled copy."""
    if state.n > BRUTEFORCE_MAX_VERTICES:
        raise BudgetError(f"brute-force counting is capped at n={BRUTEFORCE_MAX_VERTICES}")
    return sum(indicator(h, state) for h in enumerate_labeled_copies(range(state.n), pattern))


class _RunningState:
    """Mutable working copy of a GraphState used by the incremental counter."""

    def __init__(self, state: GraphState):
        self.n = state.n
        self.opinions: list[Opinion] = list(state.opinions)
        self.adjacency: list[set[int]] = state.adjacency()
        self.active: set[tuple[int, int]] = set(state.active_edges)

    def set_edge(self, u: int, v: int, on: bool) -> None:
        key = (min(u, v), max(u, v))
        if on:
            self.active.add(key)
            self.adjacency[u].add(v)
            self.adjacency[v].add(u)
        else:
            self.active.discard(key)
            self.adjacency[u].discard(v)
            self.adjacency[v].discard(u)

    def flip(self, v: int) -> None:
        self.opinions[v] = self.opinions[v].flipped

    def snapshot(self) -> GraphState:
        return GraphState(self.n, tuple(self.opinions), frozenset(self.active))


def _embeddings_using_vertex(rs: _RunningState, pattern: VoterPattern, vertex: int) -> int:
    # each embedding whose image contains the vertex is counted once: the
    # pattern position hitting it is unique by injectivity
    total = 0
    for p in range(pattern.vertex_count):
        total += _count_embeddings(rs.opinions, rs.adjacency, pattern, pins={p: vertex})
    return total


def _embeddings_using_edge(rs: _RunningState, pattern: VoterPattern, u: int, v: int) -> int:
    # at most one pattern edge can map onto a given vertex pair
    total = 0
    for a, b in pattern.edges:
        total += _count_embeddings(rs.opinions, rs.adjacency, pattern, pins={a: u, b: v})
        total += _count_embeddings(rs.opinions, rs.adjacency, pattern, pins={a: v, b: u})
    return total


def counts_along_trajectory(
    traj,
    patterns: Sequence[VoterPattern],
    times: Sequence[float],
    mode: str = "incremental",
) -> list[CountVector]:
    """Counts of each pattern at each checkpoint time of a trajectory.

    ``mode="recount"`` recounts from the queried snapshot at every
    checkpoint.  ``mode="incremental"`` replays opinion flips and edge
    changes between checkpoints, adjusting only the embeddings that touch
    the changed vertex or edge; patterns with more than
    ``INCREMENTAL_MAX_VERTICES`` vertices are recounted either way.  Both
    modes agree exactly.
    """
    times = list(times)
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("checkpoint times must be sorted")
    if mode not in ("incremental", "recount"):
        raise ValueError(f"unknown mode {mode!r}")
    patterns = list(patterns)
    if not times:
        return []

    if mode == "recount":
        out = []
        for t in times:
            state = traj.query_state(t)
            out.append(CountVector(tuple(patterns), tuple(count_pattern(state, h) for h in patterns), t))
        return out

    auts = [automorphism_count(h) for h in patterns]
    incremental = [h.vertex_count <= INCREMENTAL_MAX_VERTICES for h in patterns]
    rs = _RunningState(traj.query_state(times[0]))
    embeddings = [
        _count_embeddings(rs.opinions, rs.adjacency, h) if inc else 0
        for h, inc in zip(patterns, incremental)
    ]

    def emit(t: float) -> CountVector:
        values = []
        for i, h in enumerate(patterns):
            if incremental[i]:
                if embeddings[i] % auts[i] != 0:
                    raise RuntimeError("incremental embedding count lost divisibility by |Aut|")
                values.append(embeddings[i] // auts[i])
            else:
                values.append(count_pattern(rs.snapshot(), h))
        return CountVector(tuple(patterns), tuple(values), t)

    out = [emit(times[0])]
    for t_prev, t_next in zip(times, times[1:]):
        for ev in traj.events_between(t_prev, t_next):
            if ev.kind == "opinion":
                vtx = ev.vertex
                for i, h in enumerate(patterns):
                    if incremental[i]:
                        embeddings[i] -= _embeddings_using_vertex(rs, h, vtx)
                rs.flip(vtx)
                for i, h in enumerate(patterns):
                    if incremental[i]:
                        embeddings[i] += _embeddings_using_vertex(rs, h, vtx)
            else:
                u, v = ev.edge
                was_active = rs.active.__contains__((min(u, v), max(u, v)))
                if ev.active == was_active:
                    continue  # resample landed on the same state
                if ev.active:
                    rs.set_edge(u, v, True)
                    for i, h in enumerate(patterns):
                        if incremental[i]:
                            embeddings[i] += _embeddings_using_edge(rs, h, u, v)
                else:
                    for i, h in enumerate(patterns):
                        if incremental[i]:
                            embeddings[i] -= _embeddings_using_edge(rs, h, u, v)
                    rs.set_edge(u, v, False)
        out.append(emit(t_next))
    return out
