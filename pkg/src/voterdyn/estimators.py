"""Monte Carlo and semi-analytic estimators of the model's limit constants.

Covers the single-placement presence probability (naive and
Rao-Blackwellized), the shared-vertex covariance constant that governs the
count fluctuations, full-graph count covariances and their n-scaling,
standardized count samples, Wick moment checks, the fourth-moment increment
bound, the two-way model's disjoint-placement covariance and central
moments, type-density histograms, and the type-pair edge probability with
its binned empirical comparison.

Most estimators accept a ``workers`` argument and fan replications out
through ``runner.run_chunked``; given the same master seed the results are
bit-identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import ensembles, stats
from .dynamics import OneWayParams, TwoWayParams, opinion_joint, opinion_marginal
from .patterns import (
    LabeledVoterGraph,
    Opinion,
    VoterPattern,
    automorphism_count,
    enumerate_labeled_copies,
)
from .records import EstimateWithError

logger = logging.getLogger("voterdyn.estimators")

# estimator lane tags for sub-seed derivation
_LANE_MC = 10
_LANE_RB = 11
_LANE_C = 12
_LANE_FULL = 13
_LANE_PAIRS = 14
_LANE_TWOWAY = 15
_LANE_TIGHT = 16
_LANE_TARGET = 17


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 63-bit sub-seed for an estimator lane."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


def _adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 48) -> float:
    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, tol_here, depth):
        xm = 0.5 * (x0 + x2)
        xl, xr = 0.5 * (x0 + xm), 0.5 * (xm + x2)
        fl, fr = f(xl), f(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        err = left + right - whole
        if abs(err) <= 15.0 * tol_here:
            return left + right + err / 15.0
        if depth >= max_depth:
            raise QuadratureError(
                f"adaptive Simpson hit depth {max_depth}; achieved tolerance ~{abs(err):.3e}")
        return (recurse(x0, xm, f0, fl, f1, left, tol_here / 2.0, depth + 1)
                + recurse(xm, x2, f1, fr, f2, right, tol_here / 2.0, depth + 1))

    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)


# ---------------------------------------------------------------------------
# Closed forms

def graphon_edge_probability(t: float, u: float, v: float, params: OneWayParams) -> float:
    """Limiting probability of an active edge between vertices of types u, v.

    With types started at zero the feasible region is
    ``0 <= u, v <= 1 - exp(-t)``; arguments outside it by more than 1e-9
    raise, and the affine value is clamped to [0, 1] against float dust.
    """
    t = float(t)
    if t < 0:
        raise ValueError("t must be nonnegative")
    y_max = -math.expm1(-t)
    for name, x in (("u", u), ("v", v)):
        if x < -1e-9 or x > min(1.0, y_max) + 1e-9:
            raise ValueError(f"type {name}={x} outside the feasible region [0, {y_max}] at t={t}")
    decay = math.exp(-t)
    val = params.p0 * decay + 0.5 * (
        params.pi_plus * u + params.pi_minus * (1.0 - decay - u)
        + params.pi_plus * v + params.pi_minus * (1.0 - decay - v))
    return min(1.0, max(0.0, val))


def edge_pattern_probability(t: float, o1: Opinion, o2: Opinion, params: OneWayParams,
                             tol: float = 1e-8) -> float:
    """Presence probability of a single-edge placement with given opinions.

    Conditions on the edge's last ring time before t: no ring (weight
    ``exp(-t)``) leaves the initial coin, a last ring at time s contributes
    the opinion-dependent resample probability paired with the two-time
    opinion laws of both endpoints.  The smooth time integral is evaluated
    by adaptive Simpson with absolute tolerance ``tol``.
    """
    both = (Opinion.MINUS, Opinion.PLUS)

    def integrand(s: float) -> float:
        total = 0.0
        for a in both:
            ju = opinion_joint(s, a, t, o1, params)
            for b in both:
                jv = opinion_joint(s, b, t, o2, params)
                total += params.resample_prob(a, b) * ju * jv
        return math.exp(-(t - s)) * total

    no_ring = math.exp(-t) * params.p0 * opinion_marginal(t, o1, params) \
        * opinion_marginal(t, o2, params)
    return no_ring + _adaptive_simpson(integrand, 0.0, t, tol)


def analytic_pattern_mean(pattern: VoterPattern, t: float, params: OneWayParams) -> float | None:
    """Closed-form presence probability where one exists, else None.

    Available for edgeless patterns (product of opinion marginals) and the
    single-edge pattern (quadrature oracle).
    """
    if pattern.edge_count == 0:
        prob = 1.0
        for o in pattern.opinions:
            prob *= opinion_marginal(t, o, params)
        return prob
    if pattern.vertex_count == 2 and pattern.edge_count == 1:
        return edge_pattern_probability(t, pattern.opinions[0], pattern.opinions[1], params)
    return None


def expected_count(n: int, pattern: VoterPattern, t: float, params: OneWayParams) -> float | None:
    """Exact mean count: placements times the presence probability."""
    prob = analytic_pattern_mean(pattern, t, params)
    if prob is None:
        return None
    v = pattern.vertex_count
    return math.perm(n, v) / automorphism_count(pattern) * prob


# ---------------------------------------------------------------------------
# Presence-probability estimators

def _identity_placement(pattern: VoterPattern) -> LabeledVoterGraph:
    return LabeledVoterGraph(labels=tuple(range(pattern.vertex_count)), pattern=pattern)


def _with_horizon(params: OneWayParams, t: float) -> OneWayParams:
    return params if params.horizon == t else dataclasses.replace(params, horizon=float(t))


def pattern_probability_mc(pattern: VoterPattern, t: float, params: OneWayParams,
                           replications: int, seed: int, workers=None) -> EstimateWithError:
    """Naive Monte Carlo presence probability on a V(H)-vertex system.

    The placement law does not depend on which labels carry the pattern, so
    the system only needs the pattern's own vertices.
    """
    if replications < 2:
        raise ValueError("need at least 2 replications")
    p = _with_horizon(params, t)
    runs = ensembles.placement_indicator_runs(
        p, pattern.vertex_count, (_identity_placement(pattern),), (t,),
        replications, derive_seed(seed, _LANE_MC), workers=workers)
    est = stats.mean_and_se(runs[:, 0, 0].astype(np.float64))
    return dataclasses.replace(est, metadata={"method": "naive"})


def pattern_probability_rb(pattern: VoterPattern, t: float, params: OneWayParams,
                           replications: int, seed: int, workers=None) -> EstimateWithError:
    """Rao-Blackwellized presence probability: the edge indicators are
    integrated out against the opinion paths, which never increases the
    Monte Carlo variance."""
    if replications < 2:
        raise ValueError("need at least 2 replications")
    p = _with_horizon(params, t)
    runs = ensembles.placement_conditional_runs(
        p, pattern.vertex_count, (_identity_placement(pattern),), (t,),
        replications, derive_seed(seed, _LANE_RB), workers=workers)
    est = stats.mean_and_se(runs[:, 0, 0])
    return dataclasses.replace(est, metadata={"method": "rao_blackwell"})


# ---------------------------------------------------------------------------
# Shared-vertex covariance constant

def _covariance_system(h1: VoterPattern, h2: VoterPattern, disjoint: bool):
    v1, v2 = h1.vertex_count, h2.vertex_count
    if disjoint:
        k = v1 + v2
        second = range(v1, k)
    else:
        k = v1 + v2 - 1
        second = range(v1 - 1, k)
    first_placements = enumerate_labeled_copies(range(v1), h1)
    second_placements = enumerate_labeled_copies(second, h2)
    return k, tuple(first_placements), tuple(second_placements)


def _share_an_edge(a: LabeledVoterGraph, b: LabeledVoterGraph) -> bool:
    return bool(set(a.label_edges) & set(b.label_edges))


def shared_vertex_covariance(h1: VoterPattern, h2: VoterPattern, s: float, t: float,
                             params: OneWayParams, replications: int, seed: int,
                             method: str = "rao_blackwell", disjoint: bool = False,
                             workers=None) -> EstimateWithError:
    """The covariance constant of two patterns whose placements share one vertex.

    Simulates the minimal system of ``V(H) + V(H') - 1`` vertices, sums the
    placement indicators of each pattern over its label set (the covariance
    of the sums equals the placement-pair covariance sum by bilinearity) and
    normalizes by ``(V(H)-1)! (V(H')-1)!``.  ``disjoint=True`` is the
    diagnostic mode with non-overlapping label sets, whose true value under
    this one-way model is zero.

    With ``method="rao_blackwell"`` the indicators are replaced by their
    conditional expectations given the opinion paths; that is valid whenever
    the two placements of a pair share no edge position (always the case
    here, since the label sets overlap in at most one vertex).  If a shared
    edge position did occur at unequal query times, the estimator logs a
    notice and falls back to the naive method.
    """
    if s > t:
        raise ValueError("need s <= t")
    if replications < 2:
        raise ValueError("need at least 2 replications")
    if method not in ("naive", "rao_blackwell"):
        raise ValueError(f"unknown method {method!r}")
    k, first, second = _covariance_system(h1, h2, disjoint)
    used = method
    if method == "rao_blackwell" and s != t:
        if any(_share_an_edge(a, b) for a in first for b in second):
            logger.info("rao_blackwell with unequal times and a shared edge position: "
                        "falling back to the naive estimator")
            used = "naive"

    p = _with_horizon(params, t)
    times = (s,) if s == t else (s, t)
    runs_fn = (ensembles.placement_conditional_runs if used == "rao_blackwell"
               else ensembles.placement_indicator_runs)
    runs = runs_fn(p, k, first + second, times, replications,
                   derive_seed(seed, _LANE_C), workers=workers)
    runs = runs.astype(np.float64)
    i_s, i_t = (0, 0) if s == t else (0, 1)
    x = runs[:, :len(first), i_s].sum(axis=1)
    y = runs[:, len(first):, i_t].sum(axis=1)
    norm = math.factorial(h1.vertex_count - 1) * math.factorial(h2.vertex_count - 1)
    cov = stats.covariance_estimate(x, y)
    return EstimateWithError(
        value=cov.value / norm, std_error=cov.std_error / norm, replications=replications,
        metadata={"method": used, "disjoint": disjoint,
                  "fallback": used != method, "system_vertices": k})


# ---------------------------------------------------------------------------
# Full-graph covariance and expectation

@dataclass(frozen=True)
class CountCovariance:
    """Raw and n^(Vi+Vj-1)-scaled covariance of two full-graph counts."""

    n: int
    raw: EstimateWithError
    scaled: EstimateWithError
    mean_first: EstimateWithError   # count of the first pattern at time s
    mean_second: EstimateWithError  # count of the second pattern at time t


def count_covariance(n: int, h1: VoterPattern, h2: VoterPattern, s: float, t: float,
                     params: OneWayParams, replications: int, seed: int,
                     workers=None, chunk_size: int = 256) -> CountCovariance:
    if s > t:
        raise ValueError("need s <= t")
    if n < h1.vertex_count + h2.vertex_count:
        raise ValueError("n too small for the pattern pair")
    p = dataclasses.replace(params, n=n, horizon=float(t))
    times = (s,) if s == t else (s, t)
    runs = ensembles.one_way_count_runs(p, (h1, h2), times, replications,
                                        derive_seed(seed, _LANE_FULL), workers=workers,
                                        chunk_size=chunk_size)
    i_s, i_t = (0, 0) if s == t else (0, 1)
    x = runs[:, 0, i_s].astype(np.float64)
    y = runs[:, 1, i_t].astype(np.float64)
    raw = stats.covariance_estimate(x, y)
    scale = float(n) ** (h1.vertex_count + h2.vertex_count - 1)
    scaled = EstimateWithError(value=raw.value / scale, std_error=raw.std_error / scale,
                               replications=replications)
    return CountCovariance(n=n, raw=raw, scaled=scaled,
                           mean_first=stats.mean_and_se(x), mean_second=stats.mean_and_se(y))


# ---------------------------------------------------------------------------
# Standardized samples, Wick moments, tightness

@dataclass(frozen=True)
class StandardizedSample:
    """Centered, n^(V-1/2)-scaled count samples across patterns and times.

    ``data[r, i, u]`` is replication r of pattern i at checkpoint u.
    ``centering[i]`` records whether the mean was the analytic formula or
    the pooled empirical mean.
    """

    data: np.ndarray
    patterns: tuple[VoterPattern, ...]
    times: tuple[float, ...]
    n: int
    centering: tuple[str, ...]

    def flat(self) -> np.ndarray:
        """(R, m*K) view with joint index (i, u) -> i*K + u."""
        r = self.data.shape[0]
        return self.data.reshape(r, -1)


def standardize_counts(runs: np.ndarray, patterns, times, n: int,
                       params: OneWayParams | None = None) -> StandardizedSample:
    """Standardize raw count runs of shape (R, m, K).

    Centers at the analytic mean when one exists (requires ``params``),
    otherwise at the pooled empirical mean, and scales by ``n^(V-1/2)``.
    """
    runs = np.asarray(runs, dtype=np.float64)
    if runs.ndim != 3 or runs.shape[0] < 2:
        raise ValueError("need runs of shape (R, m, K) with R >= 2")
    patterns = tuple(patterns)
    times = tuple(float(t) for t in times)
    out = np.empty_like(runs)
    centering = []
    for i, pat in enumerate(patterns):
        scale = float(n) ** (pat.vertex_count - 0.5)
        means = None
        if params is not None:
            vals = [expected_count(n, pat, t, params) for t in times]
            if all(v is not None for v in vals):
                means = np.array(vals)
        if means is None:
            means = runs[:, i, :].mean(axis=0)
            centering.append("empirical")
        else:
            centering.append("analytic")
        out[:, i, :] = (runs[:, i, :] - means[None, :]) / scale
    return StandardizedSample(data=out, patterns=patterns, times=times, n=n,
                              centering=tuple(centering))


def covariance_targets(patterns, times, params: OneWayParams, replications: int, seed: int,
                       method: str = "rao_blackwell", workers=None):
    """Matrix of shared-vertex covariance constants over (pattern, time) pairs.

    Entry ((i,u),(j,v)) with flat index ``i*K + u`` is the constant for
    patterns (i, j) at times (t_u, t_v); each entry comes from an
    independent sub-seeded minimal-system run.  Returns (values, ses).
    """
    patterns = tuple(patterns)
    times = tuple(float(t) for t in times)
    m, k = len(patterns), len(times)
    dim = m * k
    values = np.zeros((dim, dim))
    ses = np.zeros((dim, dim))
    for i in range(m):
        for u in range(k):
            for j in range(m):
                for v in range(k):
                    a, b = i * k + u, j * k + v
                    if a > b:
                        continue
                    if times[u] <= times[v]:
                        h1, h2, ts, tt = patterns[i], patterns[j], times[u], times[v]
                    else:
                        h1, h2, ts, tt = patterns[j], patterns[i], times[v], times[u]
                    est = shared_vertex_covariance(
                        h1, h2, ts, tt, params, replications,
                        derive_seed(seed, _LANE_TARGET, a, b), method=method, workers=workers)
                    values[a, b] = values[b, a] = est.value
                    ses[a, b] = ses[b, a] = est.std_error
    return values, ses


def double_factorial(z: int) -> int:
    return math.prod(range(z, 0, -2)) if z > 0 else 1


@dataclass(frozen=True)
class WickMoment:
    z: int
    estimate: EstimateWithError
    target: float


def wick_moment_check(sample: StandardizedSample, weights, z_max: int,
                      target_cov, seed: int = 0, bootstrap: int = 200) -> list[WickMoment]:
    """Empirical moments of a weighted count contrast against Gaussian targets.

    ``weights[u, i]`` weighs pattern i at checkpoint u; the contrast is
    xi_r = sum weights * data[r].  Targets are ``sigma^z (z-1)!!`` for even
    z and 0 for odd z, with sigma^2 assembled from the supplied target
    covariance matrix (flat index ``i*K + u``), never fitted to the sample.
    Standard errors are bootstrap (seeded).
    """
    if z_max > 6:
        raise ValueError("moment estimation is capped at z_max = 6")
    w = np.asarray(weights, dtype=np.float64)
    k, m = len(sample.times), len(sample.patterns)
    if w.shape != (k, m):
        raise ValueError(f"weights must have shape (times, patterns) = ({k}, {m})")
    flat_w = np.transpose(w)  # (m, K) to match flat index i*K + u
    xi = sample.flat() @ flat_w.reshape(-1)
    target = np.asarray(target_cov, dtype=np.float64)
    sigma2 = float(flat_w.reshape(-1) @ target @ flat_w.reshape(-1))

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    r = xi.shape[0]
    out = []
    for z in range(1, z_max + 1):
        vals = xi ** z
        est = float(np.mean(vals))
        boots = np.empty(bootstrap)
        for b in range(bootstrap):
            boots[b] = np.mean(vals[rng.integers(0, r, size=r)])
        se = float(np.std(boots, ddof=1))
        tgt = sigma2 ** (z / 2) * double_factorial(z - 1) if z % 2 == 0 else 0.0
        out.append(WickMoment(z=z, estimate=EstimateWithError(est, se, r), target=tgt))
    return out


def tightness_bound_constant(h1: VoterPattern, h2: VoterPattern,
                             params: OneWayParams) -> float:
    """The Lipschitz constant of the increment bound for a pattern pair."""
    peak = max(params.gamma_mp, params.gamma_pm, params.pi_plus, params.pi_minus)
    return 4.0 * peak * (h1.vertex_count + h1.edge_count + h2.vertex_count + h2.edge_count)


@dataclass(frozen=True)
class TightnessResult:
    lhs: EstimateWithError
    bound: float
    constant: float


def tightness_check(n: int, h1: VoterPattern, h2: VoterPattern, r: float, s: float, t: float,
                    params: OneWayParams, replications: int, seed: int,
                    workers=None, chunk_size: int = 256) -> TightnessResult:
    """Monte Carlo estimate of the fourth-moment increment product vs its bound.

    The left side is E[|X*_1(t) - X*_1(s)|^2 |X*_2(s) - X*_2(r)|^2]; the
    right side is ``F^2 ((2(V1+V2-1))!)^3 (t-r)^2`` with F from
    :func:`tightness_bound_constant`.
    """
    if not r < s < t:
        raise ValueError("need r < s < t")
    p = dataclasses.replace(params, n=n, horizon=float(t))
    runs = ensembles.one_way_count_runs(p, (h1, h2), (r, s, t), replications,
                                        derive_seed(seed, _LANE_TIGHT), workers=workers,
                                        chunk_size=chunk_size)
    std = standardize_counts(runs, (h1, h2), (r, s, t), n, params=p)
    d_late = std.data[:, 0, 2] - std.data[:, 0, 1]
    d_early = std.data[:, 1, 1] - std.data[:, 1, 0]
    prod = d_late ** 2 * d_early ** 2
    f_const = tightness_bound_constant(h1, h2, params)
    v_joint = 2 * (h1.vertex_count + h2.vertex_count - 1)
    bound = f_const ** 2 * float(math.factorial(v_joint)) ** 3 * (t - r) ** 2
    return TightnessResult(lhs=stats.mean_and_se(prod), bound=bound, constant=f_const)


# ---------------------------------------------------------------------------
# Two-way model estimators

@dataclass(frozen=True)
class TwoWayRuns:
    """Shared simulation output: indicators of disjoint block placements."""

    params: TwoWayParams
    pattern: VoterPattern
    times: tuple[float, ...]
    indicators: np.ndarray  # (R, K, M) uint8

    def time_index(self, t: float) -> int:
        try:
            return self.times.index(float(t))
        except ValueError:
            raise ValueError(f"time {t} was not simulated; have {self.times}") from None


def two_way_study(params: TwoWayParams, pattern: VoterPattern, times, replications: int,
                  seed: int, workers=None, n_placements: int | None = None,
                  chunk_size: int = 250) -> TwoWayRuns:
    times = tuple(float(t) for t in times)
    p = dataclasses.replace(params, horizon=max(times))
    ind = ensembles.two_way_indicator_runs(p, pattern, times, replications,
                                           derive_seed(seed, _LANE_TWOWAY), workers=workers,
                                           chunk_size=chunk_size, n_placements=n_placements)
    return TwoWayRuns(params=p, pattern=pattern, times=times, indicators=ind)


@dataclass(frozen=True)
class DisjointCovariance:
    raw: EstimateWithError         # Cov(I, I') for one disjoint placement pair
    normalized: EstimateWithError  # raw / A(H)^2


def _centered_power_sums(ind: np.ndarray, z_max: int):
    """Power sums of plug-in-centered placement indicators, per replication."""
    p_hat = float(ind.mean())
    d = ind - p_hat
    return p_hat, [d.sum(axis=1) if z == 1 else (d ** z).sum(axis=1)
                   for z in range(1, z_max + 1)]


def disjoint_covariance(runs: TwoWayRuns, t: float) -> DisjointCovariance:
    """Covariance of two disjoint placements in the two-way model.

    All placements sit on pairwise disjoint vertex blocks and are
    exchangeable, so every unordered pair of them has the same covariance;
    the estimator therefore averages the centered product over *all*
    distinct pairs per replication (a U-statistic with plug-in centering,
    bias O(1/R)), which is far tighter than any single fixed pair.  The raw
    value is hard-bounded by 1/4 (covariance of indicators); exceeding the
    bound beyond float tolerance raises.
    """
    kk = runs.time_index(t)
    ind = runs.indicators[:, kk, :].astype(np.float64)
    r, m = ind.shape
    if m < 2:
        raise ValueError("need at least two disjoint placements")
    p_hat, (s1, s2) = _centered_power_sums(ind, 2)
    per_rep = (s1 ** 2 - s2) / (m * (m - 1))
    value = float(per_rep.mean())
    se = float(np.std(per_rep, ddof=1) / np.sqrt(r))
    if abs(value) > 0.25 + 1e-12:
        raise AssertionError(f"indicator covariance {value} violates the 1/4 bound")
    aut2 = automorphism_count(runs.pattern) ** 2
    meta = {"placements": m, "p_hat": p_hat, "plug_in_bias": "O(1/R)"}
    raw = EstimateWithError(value=value, std_error=se, replications=r,
                            metadata={**meta, "normalization": "raw"})
    norm = EstimateWithError(value=value / aut2, std_error=se / aut2, replications=r,
                             metadata={**meta, "normalization": "aut_squared"})
    return DisjointCovariance(raw=raw, normalized=norm)


def disjoint_central_moment(runs: TwoWayRuns, t: float, z: int) -> EstimateWithError:
    """z-th joint central moment of disjoint placements, normalized by A(H)^z.

    Averages the product of plug-in-centered indicators over all ordered
    z-tuples of distinct placements: per replication this is ``z! e_z``
    over the falling factorial of the placement count, with the elementary
    symmetric polynomial ``e_z`` built from the centered power sums via
    Newton's identity.  The O(1/R) plug-in bias and the unnormalized value
    are recorded in the metadata.
    """
    if not 2 <= z <= 6:
        raise ValueError("disjoint central moments support 2 <= z <= 6")
    kk = runs.time_index(t)
    ind = runs.indicators[:, kk, :].astype(np.float64)
    r, m = ind.shape
    if m < z:
        raise ValueError(f"need at least {z} disjoint placements, have {m}")
    p_hat, sums = _centered_power_sums(ind, z)
    elementary = [np.ones(r)]
    for k in range(1, z + 1):
        acc = np.zeros(r)
        for i in range(1, k + 1):
            acc += (-1.0) ** (i - 1) * elementary[k - i] * sums[i - 1]
        elementary.append(acc / k)
    tuples = math.perm(m, z)
    per_rep = math.factorial(z) * elementary[z] / tuples
    raw = float(per_rep.mean())
    se = float(np.std(per_rep, ddof=1) / np.sqrt(r))
    aut_z = automorphism_count(runs.pattern) ** z
    return EstimateWithError(
        value=raw / aut_z, std_error=se / aut_z, replications=r,
        metadata={"raw": raw, "raw_std_error": se, "plug_in_bias": "O(1/R)",
                  "p_hat": p_hat, "placements": m, "z": z})


# ---------------------------------------------------------------------------
# Type densities and the binned type-grid comparison

@dataclass(frozen=True)
class TypeDensity:
    bin_edges: np.ndarray
    f_plus: np.ndarray   # density of (opinion +, type in bin)
    f_minus: np.ndarray
    samples: int

    def integral_plus(self) -> float:
        width = np.diff(self.bin_edges)
        return float(np.sum(self.f_plus * width))

    def integral_minus(self) -> float:
        width = np.diff(self.bin_edges)
        return float(np.sum(self.f_minus * width))


def type_density_histograms(t: float, params: OneWayParams, replications: int,
                            bins: int, seed: int, workers=None) -> TypeDensity:
    """Empirical per-opinion histograms of the vertex type at time t.

    Normalized so the two integrals sum to one exactly.
    """
    if bins < 10:
        raise ValueError("need at least 10 bins")
    p = _with_horizon(params, t)
    rows = ensembles.vertex_pair_samples(p, t, (replications + 1) // 2,
                                         derive_seed(seed, _LANE_PAIRS), workers=workers)
    ys = np.concatenate([rows[:, 0], rows[:, 1]])[:replications]
    ops = np.concatenate([rows[:, 3], rows[:, 4]])[:replications]
    edges = np.linspace(0.0, 1.0, bins + 1)
    width = 1.0 / bins
    plus_counts, _ = np.histogram(ys[ops == 1], bins=edges)
    minus_counts, _ = np.histogram(ys[ops == 0], bins=edges)
    total = replications * width
    return TypeDensity(bin_edges=edges, f_plus=plus_counts / total,
                       f_minus=minus_counts / total, samples=replications)


@dataclass(frozen=True)
class GridCell:
    row: int
    col: int
    count: int
    empirical: float | None
    model: float | None
    std_error: float | None
    allowance: float
    status: str  # "pass", "fail" or "skipped"


def graphon_grid_check(t: float, params: OneWayParams, replications: int, seed: int,
                       grid: int = 10, min_cell: int = 100, se_multiplier: float = 3.0,
                       workers=None) -> list[GridCell]:
    """Binned empirical edge frequencies against the type-pair probability.

    Vertex pairs are binned by their two types on a grid x grid lattice over
    [0,1]^2; each cell with at least ``min_cell`` samples is compared with
    the closed form at the (feasibility-clipped) cell midpoint.  The
    tolerance is ``se_multiplier`` binomial SEs plus a one-cell Lipschitz
    allowance: the probability is affine in each type with slope
    ``|pi_plus - pi_minus| / 2``.
    """
    p = _with_horizon(params, t)
    rows = ensembles.vertex_pair_samples(p, t, replications,
                                         derive_seed(seed, _LANE_PAIRS, 1), workers=workers)
    edges = np.linspace(0.0, 1.0, grid + 1)
    iu = np.clip(np.digitize(rows[:, 0], edges) - 1, 0, grid - 1)
    iv = np.clip(np.digitize(rows[:, 1], edges) - 1, 0, grid - 1)
    width = 1.0 / grid
    allowance = 0.5 * abs(p.pi_plus - p.pi_minus) * width
    y_max = -math.expm1(-t)
    cells: list[GridCell] = []
    for a in range(grid):
        for b in range(grid):
            mask = (iu == a) & (iv == b)
            count = int(mask.sum())
            if count < min_cell:
                cells.append(GridCell(a, b, count, None, None, None, allowance, "skipped"))
                continue
            freq = float(rows[mask, 2].mean())
            mid_u = min(edges[a] + width / 2.0, y_max)
            mid_v = min(edges[b] + width / 2.0, y_max)
            model = graphon_edge_probability(t, mid_u, mid_v, p)
            se = math.sqrt(max(freq * (1.0 - freq), 0.0) / count)
            ok = abs(freq - model) <= se_multiplier * se + allowance
            cells.append(GridCell(a, b, count, freq, model, se, allowance,
                                  "pass" if ok else "fail"))
    return cells
