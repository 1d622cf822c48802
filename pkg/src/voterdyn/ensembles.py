"""Vectorized replication engines.

These kernels produce the same laws as the object-level simulators in
``dynamics`` but batched with numpy, which is what makes 1e4-1e5 replication
estimates affordable.  Three facts of the model drive the design:

* an edge's state at a query time is decided entirely by its *last* clock
  ring before that time (or the initial coin if it never rang), so stepping
  an edge from one query time to the next needs one uniform: with
  probability ``1 - exp(-dt)`` the clock rang, and the last ring lags the
  query time by a truncated Exp(1);
* one-way opinions never read the edges, so a whole replication's opinion
  paths can be sampled first and edges resampled against them afterwards;
* in the two-way model an edge only has to be brought up to date when it is
  *observed* (its endpoint's vertex clock rings, or a checkpoint reads it);
  unobserved rings integrate out exactly, because the edge given the full
  opinion history is Markov and independent of every other edge.

Replication ``r`` draws from the substream ``SeedSequence(seed, (REP_TAG, r))``
(per-replication kernels) or chunk ``c`` from ``SeedSequence(seed,
(CHUNK_TAG, c))`` (fully vectorized kernels); either way results are
independent of the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .counting import GraphState
from .dynamics import CHUNK_TAG, REP_TAG, OneWayParams, TwoWayParams
from .patterns import LabeledVoterGraph, Opinion, VoterPattern
from . import counting, runner


def _rng_for(seed: int, spawn_key: tuple[int, ...]) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=spawn_key)))


# ---------------------------------------------------------------------------
# Opinion path batches


@dataclass(frozen=True)
class PathBatch:
    """Flip-time representation of a batch of two-state opinion paths.

    ``flips`` is padded with +inf; the opinion at time t is the initial one
    flipped once per finite flip time <= t.
    """

    initial: np.ndarray  # (P,) uint8, 1 = plus
    flips: np.ndarray    # (P, L) float64, padded with +inf
    horizon: float

    def opinions_at(self, t: float) -> np.ndarray:
        parity = (self.flips <= t).sum(axis=1) & 1
        return self.initial ^ parity.astype(np.uint8)

    def opinions_of(self, idx: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Opinions of selected paths at per-path times (both shape (M,))."""
        rows = self.flips[idx]
        parity = (rows <= times[:, None]).sum(axis=1) & 1
        return self.initial[idx] ^ parity.astype(np.uint8)

    def types_at(self, t: float, y0: float = 0.0) -> np.ndarray:
        """Discounted + occupation of every path at time t, exactly.

        Sums ``exp(b - t) - exp(a - t)`` over the + pieces (a, b) of each
        path, clipped to [0, t]; pieces beyond t collapse to zero width.
        """
        p, ell = self.flips.shape
        capped = np.minimum(self.flips, t)
        starts = np.concatenate([np.zeros((p, 1)), capped], axis=1)
        ends = np.concatenate([capped, np.full((p, 1), t)], axis=1)
        seg_parity = (np.arange(ell + 1) & 1).astype(np.uint8)
        plus = (self.initial[:, None] ^ seg_parity[None, :]) == 1
        contrib = np.where(plus, np.exp(ends - t) - np.exp(starts - t), 0.0)
        return y0 * np.exp(-t) + contrib.sum(axis=1)


def sample_path_batch(gamma_mp: float, gamma_pm: float, q0: float, horizon: float,
                      count: int, rng: np.random.Generator) -> PathBatch:
    """Exact batch of independent two-state chains on [0, horizon]."""
    state = (rng.random(count) < q0).astype(np.uint8)
    initial = state.copy()
    t = np.zeros(count)
    cols: list[np.ndarray] = []
    while True:
        rate = np.where(state == 1, gamma_pm, gamma_mp)
        movable = (t <= horizon) & (rate > 0)
        if not movable.any():
            break
        step = np.full(count, np.inf)
        step[movable] = rng.exponential(1.0, size=int(movable.sum())) / rate[movable]
        t = t + step
        col = np.where(t <= horizon, t, np.inf)
        flipped = np.isfinite(col)
        if not flipped.any():
            break
        cols.append(col)
        state[flipped] ^= 1
    flips = np.stack(cols, axis=1) if cols else np.empty((count, 0))
    return PathBatch(initial=initial, flips=flips, horizon=horizon)


# ---------------------------------------------------------------------------
# Edge stepping (one-way lane)

def initial_edge_states(p0: float, m: int, rng: np.random.Generator) -> np.ndarray:
    return rng.random(m) < p0


def advance_edges(active: np.ndarray, t_prev: float, t_next: float,
                  u_paths: np.ndarray, v_paths: np.ndarray, batch: PathBatch,
                  pi_plus: float, pi_minus: float, rng: np.random.Generator) -> np.ndarray:
    """Advance edge states from one query time to the next, in place.

    One uniform per edge decides whether the clock rang in the interval and,
    through the inverse-CDF reuse ``lag = -log1p(-U)``, where the last ring
    sat; ringing edges are redrawn against the opinions at that instant.
    """
    dt = t_next - t_prev
    if dt < 0:
        raise ValueError("query times must be nondecreasing")
    if dt == 0:
        return active
    u = rng.random(active.shape[0])
    ring = u < -np.expm1(-dt)
    m = int(ring.sum())
    if m:
        tau = t_next + np.log1p(-u[ring])  # t_next - truncated Exp(1) lag
        ou = batch.opinions_of(u_paths[ring], tau)
        ov = batch.opinions_of(v_paths[ring], tau)
        table = np.array([pi_minus, 0.5 * (pi_plus + pi_minus), pi_plus])
        active[ring] = rng.random(m) < table[ou + ov]
    return active


def _type_edge_prob(t: float, p0: float, pi_plus: float, pi_minus: float,
                    yu: np.ndarray, yv: np.ndarray) -> np.ndarray:
    decay = np.exp(-t)
    val = p0 * decay + 0.5 * (
        pi_plus * yu + pi_minus * (1.0 - decay - yu)
        + pi_plus * yv + pi_minus * (1.0 - decay - yv))
    return np.clip(val, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Full-graph one-way counting runs

@lru_cache(maxsize=32)
def _pair_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    iu, iv = np.triu_indices(n, k=1)
    return iu.astype(np.int64), iv.astype(np.int64)


def _count_edge_pattern(pattern: VoterPattern, ops: np.ndarray, active: np.ndarray,
                        iu: np.ndarray, iv: np.ndarray) -> int:
    o1, o2 = int(pattern.opinions[0]), int(pattern.opinions[1])
    a, b = ops[iu], ops[iv]
    if o1 == o2:
        mask = (a == o1) & (b == o1)
    else:
        mask = ((a == o1) & (b == o2)) | ((a == o2) & (b == o1))
    return int(np.count_nonzero(active & mask))


def _count_in_arrays(pattern: VoterPattern, ops: np.ndarray, active: np.ndarray,
                     iu: np.ndarray, iv: np.ndarray, n: int) -> int:
    if pattern.vertex_count == 1:
        return int(np.count_nonzero(ops == int(pattern.opinions[0])))
    if pattern.vertex_count == 2 and pattern.edge_count == 1:
        return _count_edge_pattern(pattern, ops, active, iu, iv)
    # general patterns drop to the exact backtracking counter
    edges = frozenset((int(u), int(v)) for u, v, on in zip(iu, iv, active) if on)
    state = GraphState(n, tuple(Opinion(int(o)) for o in ops), edges)
    return counting.count_pattern(state, pattern)


@dataclass(frozen=True)
class _CountJob:
    params: OneWayParams
    patterns: tuple[VoterPattern, ...]
    times: tuple[float, ...]


def _one_way_count_chunk(job: _CountJob, start: int, stop: int, seed: int) -> np.ndarray:
    p = job.params
    iu, iv = _pair_arrays(p.n)
    out = np.zeros((stop - start, len(job.patterns), len(job.times)), dtype=np.int64)
    for r in range(start, stop):
        rng = _rng_for(seed, (REP_TAG, r))
        batch = sample_path_batch(p.gamma_mp, p.gamma_pm, p.q0, p.horizon, p.n, rng)
        active = initial_edge_states(p.p0, iu.shape[0], rng)
        t_prev = 0.0
        for k, t in enumerate(job.times):
            advance_edges(active, t_prev, t, iu, iv, batch, p.pi_plus, p.pi_minus, rng)
            ops = batch.opinions_at(t)
            for i, pat in enumerate(job.patterns):
                out[r - start, i, k] = _count_in_arrays(pat, ops, active, iu, iv, p.n)
            t_prev = t
    return out


def one_way_count_runs(params: OneWayParams, patterns, times, replications: int,
                       seed: int, workers: int | None = None, chunk_size: int = 256) -> np.ndarray:
    """Per-replication pattern counts at the checkpoint times, shape (R, m, K)."""
    times = tuple(float(t) for t in times)
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("checkpoint times must be sorted")
    if times and not 0.0 <= times[0] <= times[-1] <= params.horizon:
        raise ValueError("checkpoint times must lie within [0, horizon]")
    job = _CountJob(params=params, patterns=tuple(patterns), times=times)
    return runner.run_chunked(_one_way_count_chunk, job, replications, seed,
                              workers=workers, chunk_size=chunk_size)


# ---------------------------------------------------------------------------
# Small placement systems (naive and Rao-Blackwell lanes)

@dataclass(frozen=True)
class _PlacementJob:
    params: OneWayParams
    k: int
    placements: tuple[LabeledVoterGraph, ...]
    times: tuple[float, ...]


def _placement_tables(job: _PlacementJob):
    """Shared edge list plus per-placement vertex/edge index tables."""
    edge_index: dict[tuple[int, int], int] = {}
    for g in job.placements:
        for e in g.label_edges:
            edge_index.setdefault(e, len(edge_index))
    edges = sorted(edge_index, key=edge_index.get)
    verts = [np.array(g.labels, dtype=np.int64) for g in job.placements]
    want = [np.array([int(o) for o in g.pattern.opinions], dtype=np.uint8) for g in job.placements]
    eids = [np.array([edge_index[e] for e in g.label_edges], dtype=np.int64) for g in job.placements]
    return edges, verts, want, eids


def _placement_indicator_chunk(job: _PlacementJob, start: int, stop: int, seed: int) -> np.ndarray:
    """Naive lane: simulate opinion paths and edge states, evaluate indicators."""
    p, k = job.params, job.k
    c = stop - start
    edges, verts, want, eids = _placement_tables(job)
    rng = _rng_for(seed, (CHUNK_TAG, start))
    batch = sample_path_batch(p.gamma_mp, p.gamma_pm, p.q0, p.horizon, c * k, rng)
    reps = np.arange(c, dtype=np.int64)[:, None]
    if edges:
        ea = np.array([e[0] for e in edges], dtype=np.int64)
        eb = np.array([e[1] for e in edges], dtype=np.int64)
        u_paths = (reps * k + ea[None, :]).ravel()
        v_paths = (reps * k + eb[None, :]).ravel()
        active = initial_edge_states(p.p0, c * len(edges), rng)
    else:
        u_paths = v_paths = np.empty(0, dtype=np.int64)
        active = np.empty(0, dtype=bool)
    out = np.zeros((c, len(job.placements), len(job.times)), dtype=np.uint8)
    t_prev = 0.0
    for kk, t in enumerate(job.times):
        if edges:
            advance_edges(active, t_prev, t, u_paths, v_paths, batch, p.pi_plus, p.pi_minus, rng)
            act = active.reshape(c, len(edges))
        ops = batch.opinions_at(t).reshape(c, k)
        for j in range(len(job.placements)):
            ok = (ops[:, verts[j]] == want[j][None, :]).all(axis=1)
            if eids[j].size:
                ok &= act[:, eids[j]].all(axis=1)
            out[:, j, kk] = ok
        t_prev = t
    return out


def _placement_conditional_chunk(job: _PlacementJob, start: int, stop: int, seed: int) -> np.ndarray:
    """Rao-Blackwell lane: edge indicators replaced by their conditional
    probabilities given the opinion paths (edges are conditionally
    independent, so a placement's conditional expectation is the product of
    its opinion matches and the per-edge probabilities)."""
    p, k = job.params, job.k
    c = stop - start
    edges, verts, want, eids = _placement_tables(job)
    rng = _rng_for(seed, (CHUNK_TAG, start))
    batch = sample_path_batch(p.gamma_mp, p.gamma_pm, p.q0, p.horizon, c * k, rng)
    out = np.zeros((c, len(job.placements), len(job.times)), dtype=np.float64)
    for kk, t in enumerate(job.times):
        ops = batch.opinions_at(t).reshape(c, k)
        ys = batch.types_at(t).reshape(c, k)
        if edges:
            ea = np.array([e[0] for e in edges], dtype=np.int64)
            eb = np.array([e[1] for e in edges], dtype=np.int64)
            probs = _type_edge_prob(t, p.p0, p.pi_plus, p.pi_minus, ys[:, ea], ys[:, eb])
        for j in range(len(job.placements)):
            val = (ops[:, verts[j]] == want[j][None, :]).all(axis=1).astype(np.float64)
            if eids[j].size:
                val *= probs[:, eids[j]].prod(axis=1)
            out[:, j, kk] = val
    return out


def _run_placements(chunk_fn, params: OneWayParams, k: int, placements, times,
                    replications: int, seed: int, workers=None, chunk_size=4096) -> np.ndarray:
    times = tuple(float(t) for t in times)
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("query times must be sorted")
    job = _PlacementJob(params=params, k=k, placements=tuple(placements), times=times)
    for g in job.placements:
        if any(not 0 <= lab < k for lab in g.labels):
            raise ValueError("placement labels must lie in range(k)")
    return runner.run_chunked(chunk_fn, job, replications, seed,
                              workers=workers, chunk_size=chunk_size)


def placement_indicator_runs(params, k, placements, times, replications, seed,
                             workers=None, chunk_size=4096) -> np.ndarray:
    """(R, placements, times) 0/1 indicator draws on a k-vertex system."""
    return _run_placements(_placement_indicator_chunk, params, k, placements, times,
                           replications, seed, workers, chunk_size)


def placement_conditional_runs(params, k, placements, times, replications, seed,
                               workers=None, chunk_size=4096) -> np.ndarray:
    """(R, placements, times) conditional expectations given opinion paths."""
    return _run_placements(_placement_conditional_chunk, params, k, placements, times,
                           replications, seed, workers, chunk_size)


# ---------------------------------------------------------------------------
# Vertex-pair samples for the type-grid comparison

@dataclass(frozen=True)
class _PairJob:
    params: OneWayParams
    t: float


def _pair_sample_chunk(job: _PairJob, start: int, stop: int, seed: int) -> np.ndarray:
    p = job.params
    c = stop - start
    rng = _rng_for(seed, (CHUNK_TAG, start))
    batch = sample_path_batch(p.gamma_mp, p.gamma_pm, p.q0, p.horizon, 2 * c, rng)
    u_paths = 2 * np.arange(c, dtype=np.int64)
    v_paths = u_paths + 1
    active = initial_edge_states(p.p0, c, rng)
    advance_edges(active, 0.0, job.t, u_paths, v_paths, batch, p.pi_plus, p.pi_minus, rng)
    ys = batch.types_at(job.t)
    ops = batch.opinions_at(job.t)
    out = np.empty((c, 5), dtype=np.float64)
    out[:, 0] = ys[u_paths]
    out[:, 1] = ys[v_paths]
    out[:, 2] = active
    out[:, 3] = ops[u_paths]
    out[:, 4] = ops[v_paths]
    return out


def vertex_pair_samples(params: OneWayParams, t: float, replications: int, seed: int,
                        workers=None, chunk_size=8192) -> np.ndarray:
    """(R, 5) rows of (type_u, type_v, edge_active, opinion_u, opinion_v) at t."""
    job = _PairJob(params=params, t=float(t))
    return runner.run_chunked(_pair_sample_chunk, job, replications, seed,
                              workers=workers, chunk_size=chunk_size)


# ---------------------------------------------------------------------------
# Two-way engine

@lru_cache(maxsize=16)
def _incidence_tables(n: int):
    """Edge ids and opposite endpoints for every vertex; triu indexing."""
    eid = np.zeros((n, n), dtype=np.int64)
    iu, iv = np.triu_indices(n, k=1)
    eid[iu, iv] = np.arange(iu.shape[0])
    eid[iv, iu] = eid[iu, iv]
    others = np.array([[w for w in range(n) if w != v] for v in range(n)], dtype=np.int64)
    incident = np.array([[eid[v, w] for w in range(n) if w != v] for v in range(n)], dtype=np.int64)
    return incident, others, eid


@dataclass(frozen=True)
class _TwoWayJob:
    params: TwoWayParams
    pattern: VoterPattern
    times: tuple[float, ...]
    n_placements: int


def _placement_blocks(job: _TwoWayJob):
    """Index tables for the pattern placed on consecutive vertex blocks."""
    _, _, eid = _incidence_tables(job.params.n)
    v_pat = job.pattern.vertex_count
    want = np.array([int(o) for o in job.pattern.opinions], dtype=np.uint8)
    verts, eids, eu, ev = [], [], [], []
    for b in range(job.n_placements):
        base = b * v_pat
        verts.append(np.arange(base, base + v_pat, dtype=np.int64))
        eids.append(np.array([eid[base + a, base + c] for a, c in job.pattern.edges],
                             dtype=np.int64))
        eu.append(np.array([base + a for a, _ in job.pattern.edges], dtype=np.int64))
        ev.append(np.array([base + c for _, c in job.pattern.edges], dtype=np.int64))
    return want, verts, eids, eu, ev


def _two_way_rep(job: _TwoWayJob, tables, rng: np.random.Generator) -> np.ndarray:
    p = job.params
    n = p.n
    incident, others, _ = _incidence_tables(n)
    want, pl_verts, pl_eids, pl_eu, pl_ev = tables
    pi_table = np.array([p.pi_minus, p.pi_mixed, p.pi_plus])

    opinions = (rng.random(n) < p.q0).astype(np.uint8)
    initial_ops = opinions.copy()
    n_edges = n * (n - 1) // 2
    state = rng.random(n_edges) < p.p0
    sync = np.zeros(n_edges)

    flip_times = np.full((n, 8), np.inf)
    flip_count = np.zeros(n, dtype=np.int64)

    def opinions_at_past(verts: np.ndarray, times: np.ndarray) -> np.ndarray:
        rows = flip_times[verts]
        parity = (rows <= times[:, None]).sum(axis=1) & 1
        return initial_ops[verts] ^ parity.astype(np.uint8)

    def sync_edges(eids: np.ndarray, ucol: np.ndarray, vcol: np.ndarray, now: float) -> None:
        gap = now - sync[eids]
        u = rng.random(eids.shape[0])
        ring = u < -np.expm1(-gap)
        m = int(ring.sum())
        if m:
            tau = now + np.log1p(-u[ring])
            ou = opinions_at_past(ucol[ring], tau)
            ov = opinions_at_past(vcol[ring], tau)
            sub = eids[ring]
            state[sub] = rng.random(m) < pi_table[ou + ov]
        sync[eids] = now

    out = np.zeros((len(job.times), job.n_placements), dtype=np.uint8)
    rate = n * p.beta
    t_ev = rng.exponential(1.0 / rate) if rate > 0 else np.inf
    for kk, tc in enumerate(job.times):
        while t_ev <= tc:
            v = int(rng.integers(n))
            sync_edges(incident[v], np.full(n - 1, v, dtype=np.int64), others[v], t_ev)
            act = others[v][state[incident[v]]]
            if act.shape[0]:
                w = int(act[int(rng.integers(act.shape[0]))])
                if opinions[w] != opinions[v]:
                    c = flip_count[v]
                    if c == flip_times.shape[1]:
                        flip_times = np.concatenate(
                            [flip_times, np.full((n, flip_times.shape[1]), np.inf)], axis=1)
                    flip_times[v, c] = t_ev
                    flip_count[v] = c + 1
                    opinions[v] = opinions[w]
            t_ev += rng.exponential(1.0 / rate)
        for j in range(job.n_placements):
            if pl_eids[j].size:
                sync_edges(pl_eids[j], pl_eu[j], pl_ev[j], tc)
            out[kk, j] = (state[pl_eids[j]].all() if pl_eids[j].size else True) and \
                (opinions[pl_verts[j]] == want).all()
    return out


def _two_way_chunk(job: _TwoWayJob, start: int, stop: int, seed: int) -> np.ndarray:
    tables = _placement_blocks(job)
    out = np.zeros((stop - start, len(job.times), job.n_placements), dtype=np.uint8)
    for r in range(start, stop):
        out[r - start] = _two_way_rep(job, tables, _rng_for(seed, (REP_TAG, r)))
    return out


def two_way_indicator_runs(params: TwoWayParams, pattern: VoterPattern, times,
                           replications: int, seed: int, workers=None,
                           chunk_size: int = 250, n_placements: int | None = None) -> np.ndarray:
    """Indicators of disjoint block placements at the checkpoint times.

    Returns shape (R, K, M) where placement ``j`` sits on vertices
    ``[j*V, (j+1)*V)``; by vertex exchangeability every block has the same
    marginal law and every tuple of distinct blocks the same joint law.
    """
    times = tuple(float(t) for t in times)
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("checkpoint times must be sorted")
    if times and times[-1] > params.horizon:
        raise ValueError("checkpoint times must lie within [0, horizon]")
    max_pl = params.n // pattern.vertex_count
    n_placements = max_pl if n_placements is None else min(n_placements, max_pl)
    if n_placements < 1:
        raise ValueError("n too small for a single placement")
    job = _TwoWayJob(params=params, pattern=pattern, times=times, n_placements=n_placements)
    return runner.run_chunked(_two_way_chunk, job, replications, seed,
                              workers=workers, chunk_size=chunk_size)
