"""Exact continuous-time simulation of the one-way and two-way models.

The one-way model is layered: the opinion of every vertex is an independent
two-state Markov chain, and edges are resampled at rate 1 with an outcome
probability read off the endpoint opinions at the ring time.  Because the
opinions never look at the edges, a trajectory simulates all opinion paths
up front and materializes each edge's ring history lazily, on first touch,
from a per-edge random substream; repeated queries of the same edge are
served from the cache, so one trajectory is one consistent realization.

The two-way model couples the two layers (a ringing vertex copies the
opinion of a uniformly chosen active neighbor), so it is simulated eagerly,
event by event.

Seed policy: all randomness is derived from a 64-bit master seed through
``numpy.random.SeedSequence(seed, spawn_key=...)`` with fixed namespace tags,
so runs are reproducible across machines and worker counts:

* vertex path:        ``(VERTEX_TAG, replication, v)``
* edge history:       ``(EDGE_TAG, replication, u, v)`` with ``u < v``
* two-way event feed: ``(EVENT_TAG, replication)``
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .counting import GraphState
from .patterns import Opinion

VERTEX_TAG = 0
EDGE_TAG = 1
EVENT_TAG = 2
CHUNK_TAG = 3
REP_TAG = 4


class TimeRangeError(ValueError):
    """Query time outside the simulated horizon."""


def _check_prob(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} must lie in [0,1], got {x}")


@dataclass(frozen=True)
class OneWayParams:
    """Parameters of the one-way feedback model.

    ``gamma_mp`` is the minus-to-plus switching rate, ``gamma_pm`` the
    plus-to-minus rate.  A resampled edge is active with probability
    ``pi_plus`` (both endpoints +), ``pi_minus`` (both -), and the average of
    the two for a mixed pair; the mixed probability is always derived, never
    stored.  Opinions start + with probability ``q0``; edges start active
    with probability ``p0``.
    """

    n: int
    p0: float
    gamma_mp: float
    gamma_pm: float
    pi_plus: float
    pi_minus: float
    q0: float = 0.5
    horizon: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        for name in ("p0", "pi_plus", "pi_minus", "q0"):
            _check_prob(name, getattr(self, name))
        if self.gamma_mp < 0 or self.gamma_pm < 0:
            raise ValueError("switching rates must be nonnegative")
        if not 0 < self.horizon <= 100.0:
            raise ValueError("horizon must lie in (0, 100]")

    @property
    def pi_mixed(self) -> float:
        return 0.5 * (self.pi_plus + self.pi_minus)

    def resample_prob(self, o1: Opinion, o2: Opinion) -> float:
        if o1 is Opinion.PLUS and o2 is Opinion.PLUS:
            return self.pi_plus
        if o1 is Opinion.MINUS and o2 is Opinion.MINUS:
            return self.pi_minus
        return self.pi_mixed


@dataclass(frozen=True)
class TwoWayParams:
    """Parameters of the two-way (co-evolutionary) model.

    Same edge dynamics as the one-way model; every vertex carries an
    independent rate-``beta`` clock and copies a uniformly chosen active
    neighbor's opinion when it rings (no-op if isolated).
    """

    n: int
    p0: float
    pi_plus: float
    pi_minus: float
    beta: float
    q0: float = 0.5
    horizon: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        for name in ("p0", "pi_plus", "pi_minus", "q0"):
            _check_prob(name, getattr(self, name))
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not 0 < self.horizon <= 100.0:
            raise ValueError("horizon must lie in (0, 100]")

    @property
    def pi_mixed(self) -> float:
        return 0.5 * (self.pi_plus + self.pi_minus)


@dataclass(frozen=True)
class OpinionPath:
    """Piecewise-constant opinion trajectory; queries are right-continuous."""

    initial: Opinion
    flip_times: tuple[float, ...]
    horizon: float

    def opinion_at(self, t: float) -> Opinion:
        if not 0.0 <= t <= self.horizon:
            raise TimeRangeError(f"t={t} outside [0, {self.horizon}]")
        flips = bisect_right(self.flip_times, t)
        return self.initial if flips % 2 == 0 else self.initial.flipped

    def segments(self, t: float):
        """Yield (start, end, opinion) pieces covering [0, t]."""
        bounds = [0.0, *(f for f in self.flip_times if f < t), t]
        op = self.initial
        for a, b in zip(bounds, bounds[1:]):
            yield a, b, op
            op = op.flipped


@dataclass(frozen=True)
class EdgeHistory:
    """Initial activity plus the (time, outcome) sequence of clock rings."""

    initial_active: bool
    rings: tuple[tuple[float, bool], ...]

    def active_at(self, t: float) -> bool:
        state = self.initial_active
        for ring_t, outcome in self.rings:
            if ring_t > t:
                break
            state = outcome
        return state


@dataclass
class _Event:
    kind: str  # "opinion" or "edge"
    time: float
    vertex: int | None = None
    edge: tuple[int, int] | None = None
    active: bool | None = None

    def sort_key(self):
        # ties (exact float equality) break by kind then smallest index
        idx = (self.vertex,) if self.kind == "opinion" else self.edge
        return (self.time, 0 if self.kind == "opinion" else 1, idx)


def simulate_opinion_path(params: OneWayParams | TwoWayParams, rng: np.random.Generator,
                          switch_rates: tuple[float, float] | None = None) -> OpinionPath:
    """Exact sample of one vertex's opinion chain on [0, horizon].

    Holding time in - is exponential with the minus-to-plus rate, and
    symmetrically for +; a zero rate freezes the chain in that state.
    """
    if switch_rates is None:
        if not isinstance(params, OneWayParams):
            raise ValueError("switch_rates are required for two-way parameters")
        gamma_mp, gamma_pm = params.gamma_mp, params.gamma_pm
    else:
        gamma_mp, gamma_pm = switch_rates
    op = Opinion.PLUS if rng.random() < params.q0 else Opinion.MINUS
    initial = op
    t = 0.0
    flips: list[float] = []
    while True:
        rate = gamma_pm if op is Opinion.PLUS else gamma_mp
        if rate == 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t > params.horizon:
            break
        flips.append(t)
        op = op.flipped
    return OpinionPath(initial=initial, flip_times=tuple(flips), horizon=params.horizon)


def analytic_p_plus(t: float, params: OneWayParams) -> float:
    """Closed-form marginal probability of opinion + at time t."""
    if t < 0:
        raise TimeRangeError("t must be nonnegative")
    lam = params.gamma_mp + params.gamma_pm
    if lam == 0.0:
        return params.q0
    q_inf = params.gamma_mp / lam
    return q_inf + (params.q0 - q_inf) * math.exp(-lam * t)


def opinion_marginal(t: float, o: Opinion, params: OneWayParams) -> float:
    p = analytic_p_plus(t, params)
    return p if o is Opinion.PLUS else 1.0 - p


def opinion_transition(a: Opinion, b: Opinion, tau: float, params: OneWayParams) -> float:
    """P(opinion at time s+tau is b | opinion at time s is a)."""
    if tau < 0:
        raise TimeRangeError("tau must be nonnegative")
    lam = params.gamma_mp + params.gamma_pm
    if lam == 0.0:
        return 1.0 if a is b else 0.0
    q_inf = params.gamma_mp / lam
    decay = math.exp(-lam * tau)
    p_plus = q_inf + ((1.0 - q_inf) if a is Opinion.PLUS else -q_inf) * decay
    return p_plus if b is Opinion.PLUS else 1.0 - p_plus


def opinion_joint(s: float, a: Opinion, t: float, b: Opinion, params: OneWayParams) -> float:
    """P(opinion(s) = a, opinion(t) = b) for s <= t."""
    if s > t:
        raise TimeRangeError("need s <= t")
    return opinion_marginal(s, a, params) * opinion_transition(a, b, t - s, params)


def vertex_type(path: OpinionPath, y0: float, t: float) -> float:
    """Exponentially discounted time the path has spent in + up to time t.

    Equals ``exp(-t) * y0`` plus the integral of ``exp(-(t-u))`` over the
    path's + pieces within [0, t]; each constant piece contributes a
    difference of exponentials, so the value is exact.
    """
    if not 0.0 <= t <= path.horizon:
        raise TimeRangeError(f"t={t} outside [0, {path.horizon}]")
    acc = y0 * math.exp(-t)
    for a, b, op in path.segments(t):
        if op is Opinion.PLUS:
            acc += math.exp(b - t) - math.exp(a - t)
    return acc


def conditional_edge_prob(path_u: OpinionPath, path_v: OpinionPath, t: float,
                          params: OneWayParams) -> float:
    """Exact probability the edge is active at t given both opinion paths.

    The per-ring activation probability is linear in each endpoint's opinion
    indicator, so conditioning on the full paths reduces to the discounted
    + occupation (``vertex_type`` with y0 = 0) of the two endpoints.
    """
    yu = vertex_type(path_u, 0.0, t)
    yv = vertex_type(path_v, 0.0, t)
    decay = math.exp(-t)
    val = params.p0 * decay + 0.5 * (
        params.pi_plus * yu + params.pi_minus * (1.0 - decay - yu)
        + params.pi_plus * yv + params.pi_minus * (1.0 - decay - yv)
    )
    return min(1.0, max(0.0, val))


def _pair_list(n: int) -> list[tuple[int, int]]:
    return [(u, v) for u in range(n) for v in range(u + 1, n)]


class Trajectory:
    """One realization of the graph process, queryable at any time in [0, T].

    Edge histories come from ``edge_store`` when the process was simulated
    eagerly (two-way model) or from ``edge_supplier`` on first touch
    (one-way lazy materialization).  A trajectory must not be queried from
    several threads at once: lazy materialization mutates the cache.
    """

    def __init__(self, params, paths: Sequence[OpinionPath], horizon: float,
                 edge_supplier: Callable[[int, int], EdgeHistory] | None = None,
                 edge_store: dict[tuple[int, int], EdgeHistory] | None = None):
        self.params = params
        self.paths = tuple(paths)
        self.horizon = horizon
        self._supplier = edge_supplier
        self._edges: dict[tuple[int, int], EdgeHistory] = dict(edge_store or {})

    @property
    def n(self) -> int:
        return len(self.paths)

    def edge_history(self, u: int, v: int) -> EdgeHistory:
        if u == v or not (0 <= u < self.n and 0 <= v < self.n):
            raise ValueError(f"invalid edge ({u},{v})")
        key = (min(u, v), max(u, v))
        hist = self._edges.get(key)
        if hist is None:
            if self._supplier is None:
                raise RuntimeError("edge history missing from an eagerly simulated trajectory")
            hist = self._supplier(*key)
            self._edges[key] = hist
        return hist

    def active_at(self, u: int, v: int, t: float) -> bool:
        if not 0.0 <= t <= self.horizon:
            raise TimeRangeError(f"t={t} outside [0, {self.horizon}]")
        return self.edge_history(u, v).active_at(t)

    def materialize_all(self) -> None:
        for u, v in _pair_list(self.n):
            self.edge_history(u, v)

    def query_state(self, t: float) -> GraphState:
        if not 0.0 <= t <= self.horizon:
            raise TimeRangeError(f"t={t} outside [0, {self.horizon}]")
        opinions = tuple(p.opinion_at(t) for p in self.paths)
        active = frozenset(
            (u, v) for u, v in _pair_list(self.n) if self.edge_history(u, v).active_at(t)
        )
        return GraphState(self.n, opinions, active)

    def events_between(self, a: float, b: float) -> list[_Event]:
        """All state-change events with a < time <= b, in time order."""
        if a > b:
            raise ValueError("need a <= b")
        self.materialize_all()
        events: list[_Event] = []
        for v, path in enumerate(self.paths):
            for ft in path.flip_times:
                if a < ft <= b:
                    events.append(_Event("opinion", ft, vertex=v))
        for (u, v), hist in self._edges.items():
            for ring_t, outcome in hist.rings:
                if a < ring_t <= b:
                    events.append(_Event("edge", ring_t, edge=(u, v), active=outcome))
        events.sort(key=_Event.sort_key)
        return events


def query_state(traj: Trajectory, t: float) -> GraphState:
    return traj.query_state(t)


def build_one_way_trajectory(params: OneWayParams, seed: int, replication: int = 0) -> Trajectory:
    """Simulate the one-way model: opinion paths now, edge histories lazily.

    Each edge's rings form a rate-1 Poisson process on [0, T]; the outcome of
    a ring is Bernoulli with the opinion-dependent probability evaluated at
    the ring time; activity before the first ring is Bernoulli(p0).
    """
    paths = []
    for v in range(params.n):
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(seed, spawn_key=(VERTEX_TAG, replication, v))))
        paths.append(simulate_opinion_path(params, rng))

    def supply(u: int, v: int) -> EdgeHistory:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(seed, spawn_key=(EDGE_TAG, replication, u, v))))
        initial = bool(rng.random() < params.p0)
        rings = []
        t = 0.0
        while True:
            t += rng.exponential(1.0)
            if t > params.horizon:
                break
            prob = params.resample_prob(paths[u].opinion_at(t), paths[v].opinion_at(t))
            rings.append((t, bool(rng.random() < prob)))
        return EdgeHistory(initial_active=initial, rings=tuple(rings))

    return Trajectory(params, paths, params.horizon, edge_supplier=supply)


def simulate_two_way(params: TwoWayParams, seed: int, replication: int = 0) -> Trajectory:
    """Exact event-driven simulation of the co-evolutionary model.

    n vertex clocks at rate beta and n(n-1)/2 edge clocks at rate 1 are
    superposed into one Poisson event feed; a vertex event copies a uniform
    active neighbor's opinion (no-op when isolated), an edge event resamples
    the edge using the opinions at that instant.
    """
    n = params.n
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(EVENT_TAG, replication))))
    opinions = [Opinion.PLUS if rng.random() < params.q0 else Opinion.MINUS for _ in range(n)]
    initial_ops = list(opinions)
    pairs = _pair_list(n)
    state = {pair: bool(rng.random() < params.p0) for pair in pairs}
    initial_state = dict(state)
    pi_table = {
        (Opinion.PLUS, Opinion.PLUS): params.pi_plus,
        (Opinion.MINUS, Opinion.MINUS): params.pi_minus,
        (Opinion.PLUS, Opinion.MINUS): params.pi_mixed,
        (Opinion.MINUS, Opinion.PLUS): params.pi_mixed,
    }
    flips: list[list[float]] = [[] for _ in range(n)]
    rings: dict[tuple[int, int], list[tuple[float, bool]]] = {pair: [] for pair in pairs}

    edge_rate = float(len(pairs))
    vertex_rate = n * params.beta
    total = edge_rate + vertex_rate
    t = 0.0
    while total > 0.0:
        t += rng.exponential(1.0 / total)
        if t > params.horizon:
            break
        if rng.random() < edge_rate / total:
            pair = pairs[int(rng.integers(len(pairs)))]
            u, v = pair
            outcome = bool(rng.random() < pi_table[(opinions[u], opinions[v])])
            state[pair] = outcome
            rings[pair].append((t, outcome))
        else:
            v = int(rng.integers(n))
            nb = [w for w in range(n) if w != v and state[(min(v, w), max(v, w))]]
            if nb:
                w = nb[int(rng.integers(len(nb)))]
                if opinions[w] is not opinions[v]:
                    opinions[v] = opinions[w]
                    flips[v].append(t)

    paths = [
        OpinionPath(initial=initial_ops[v], flip_times=tuple(flips[v]), horizon=params.horizon)
        for v in range(n)
    ]
    store = {
        pair: EdgeHistory(initial_active=initial_state[pair], rings=tuple(rings[pair]))
        for pair in pairs
    }
    return Trajectory(params, paths, params.horizon, edge_store=store)
