"""Voter-graph patterns: tiny opinion-labeled graphs and their labeled copies.

A pattern is a simple graph on vertices ``0..V-1`` with a binary opinion
attached to each vertex.  Placements of a pattern on named integer vertices
("labeled copies") are the objects counted inside a simulated graph.

Isomorphism, automorphisms and copy enumeration are decided by exhaustive
permutation search, which is exact and trustworthy at the sizes used here;
pattern sizes are therefore capped at ``MAX_PATTERN_VERTICES`` and copy
enumeration at ``MAX_ENUMERATION_LABELS`` labels.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

MAX_PATTERN_VERTICES = 8
MAX_ENUMERATION_LABELS = 12


class PatternError(ValueError):
    """Invalid pattern construction or malformed pattern literal."""


class SizeLimitError(PatternError):
    """Pattern or label set exceeds the exhaustive-search budget."""


class Opinion(IntEnum):
    """One of the two vertex opinions; negation is an involution."""

    MINUS = 0
    PLUS = 1

    @property
    def flipped(self) -> "Opinion":
        return Opinion(1 - self.value)

    @property
    def symbol(self) -> str:
        return "+" if self is Opinion.PLUS else "-"

    @classmethod
    def from_symbol(cls, s: str) -> "Opinion":
        if s == "+":
            return cls.PLUS
        if s == "-":
            return cls.MINUS
        raise PatternError(f"unknown opinion symbol {s!r}")


@dataclass(frozen=True)
class VoterPattern:
    """Simple graph with an opinion per vertex, edges stored sorted.

    Construct through :func:`build_pattern`, which validates the edge set.
    """

    opinions: tuple[Opinion, ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def vertex_count(self) -> int:
        return len(self.opinions)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degree(self, v: int) -> int:
        return sum(1 for a, b in self.edges if v in (a, b))

    def neighbors(self, v: int) -> tuple[int, ...]:
        return tuple(b if a == v else a for a, b in self.edges if v in (a, b))

    def __str__(self) -> str:
        return format_pattern(self)


def build_pattern(opinions: Sequence[Opinion | str], edges: Iterable[tuple[int, int]]) -> VoterPattern:
    """Validated pattern constructor.

    Accepts opinions as ``Opinion`` values or ``'+'``/``'-'`` symbols.  Edges
    are unordered index pairs; self-loops, duplicates and out-of-range
    endpoints are rejected with the offending edge named in the error.
    """
    ops = tuple(o if isinstance(o, Opinion) else Opinion.from_symbol(o) for o in opinions)
    if not ops:
        raise PatternError("a pattern needs at least one vertex")
    v = len(ops)
    seen: set[tuple[int, int]] = set()
    canon: list[tuple[int, int]] = []
    for edge in edges:
        a, b = edge
        if a == b:
            raise PatternError(f"self-loop edge ({a},{b}) is not allowed")
        if not (0 <= a < v and 0 <= b < v):
            raise PatternError(f"edge ({a},{b}) references a vertex outside 0..{v - 1}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise PatternError(f"duplicate edge ({a},{b})")
        seen.add(key)
        canon.append(key)
    return VoterPattern(opinions=ops, edges=tuple(sorted(canon)))


def edge_pattern(o1: Opinion | str, o2: Opinion | str) -> VoterPattern:
    """Two vertices joined by one edge."""
    return build_pattern([o1, o2], [(0, 1)])


def single_vertex_pattern(o: Opinion | str) -> VoterPattern:
    return build_pattern([o], [])


def _check_size(pattern: VoterPattern) -> None:
    if pattern.vertex_count > MAX_PATTERN_VERTICES:
        raise SizeLimitError(
            f"pattern has {pattern.vertex_count} vertices; exhaustive search is capped at {MAX_PATTERN_VERTICES}"
        )


def _permuted(pattern: VoterPattern, perm: Sequence[int]) -> tuple[tuple[int, ...], tuple[tuple[int, int], ...]]:
    # perm maps old vertex index -> new vertex index
    ops = [Opinion.MINUS] * pattern.vertex_count
    for i, o in enumerate(pattern.opinions):
        ops[perm[i]] = o
    edges = sorted((min(perm[a], perm[b]), max(perm[a], perm[b])) for a, b in pattern.edges)
    return tuple(int(o) for o in ops), tuple(edges)


def are_isomorphic(h1: VoterPattern, h2: VoterPattern) -> bool:
    """Opinion-preserving graph isomorphism, by exhaustive permutation search."""
    _check_size(h1)
    _check_size(h2)
    if h1.vertex_count != h2.vertex_count or h1.edge_count != h2.edge_count:
        return False
    if sorted(h1.opinions) != sorted(h2.opinions):
        return False
    target = (tuple(int(o) for o in h2.opinions), h2.edges)
    for perm in itertools.permutations(range(h1.vertex_count)):
        if _permuted(h1, perm) == target:
            return True
    return False


def automorphism_count(pattern: VoterPattern) -> int:
    """Number of opinion-preserving automorphisms; divides V!."""
    _check_size(pattern)
    own = (tuple(int(o) for o in pattern.opinions), pattern.edges)
    count = 0
    for perm in itertools.permutations(range(pattern.vertex_count)):
        if _permuted(pattern, perm) == own:
            count += 1
    return count


def canonical_form(pattern: VoterPattern) -> tuple[tuple[int, ...], tuple[tuple[int, int], ...]]:
    """Lexicographically minimal (opinions, edges) encoding over all relabelings.

    Two patterns are isomorphic iff their canonical forms agree; used for
    deduplication.
    """
    _check_size(pattern)
    return min(_permuted(pattern, perm) for perm in itertools.permutations(range(pattern.vertex_count)))


def labeled_copy_count(set_size: int, pattern: VoterPattern) -> int:
    """Number of distinct labeled copies of the pattern on a label set of the given size.

    Closed form ``s! / ((s - V)! * A)`` where ``A`` is the automorphism count;
    zero when the label set is too small.
    """
    if set_size < 0:
        raise PatternError("set_size must be nonnegative")
    v = pattern.vertex_count
    if set_size < v:
        return 0
    placements = math.perm(set_size, v)
    aut = automorphism_count(pattern)
    if placements % aut != 0:
        raise RuntimeError("injective placement count is not divisible by the automorphism count")
    return placements // aut


@dataclass(frozen=True)
class LabeledVoterGraph:
    """A placement of a pattern on strictly increasing integer labels.

    ``labels[i]`` carries ``pattern.opinions[i]``; pattern edges are index
    pairs into ``labels``.  Equality of the normalized representation is
    exactly agreement of label set, labeled edges and per-label opinions.
    """

    labels: tuple[int, ...]
    pattern: VoterPattern

    @property
    def label_edges(self) -> tuple[tuple[int, int], ...]:
        out = []
        for a, b in self.pattern.edges:
            u, v = self.labels[a], self.labels[b]
            out.append((min(u, v), max(u, v)))
        return tuple(sorted(out))

    def opinion_of(self, label: int) -> Opinion:
        return self.pattern.opinions[self.labels.index(label)]


def enumerate_labeled_copies(label_set: Iterable[int], pattern: VoterPattern) -> list[LabeledVoterGraph]:
    """All distinct labeled copies of the pattern with labels in the given set.

    Output is deterministic: sorted by label tuple, then opinion assignment,
    then edge list.  Length always equals :func:`labeled_copy_count`.
    """
    _check_size(pattern)
    labels = sorted(set(label_set))
    if len(labels) > MAX_ENUMERATION_LABELS:
        raise SizeLimitError(
            f"label set of size {len(labels)} exceeds the enumeration budget {MAX_ENUMERATION_LABELS}"
        )
    v = pattern.vertex_count
    out: list[LabeledVoterGraph] = []
    for subset in itertools.combinations(labels, v):
        seen: set[tuple[tuple[int, ...], tuple[tuple[int, int], ...]]] = set()
        for perm in itertools.permutations(range(v)):
            # perm maps pattern vertex i -> position perm[i] within the subset
            key = _permuted(pattern, perm)
            if key in seen:
                continue
            seen.add(key)
            ops, edges = key
            out.append(LabeledVoterGraph(labels=subset, pattern=VoterPattern(
                opinions=tuple(Opinion(o) for o in ops), edges=edges)))
    out.sort(key=lambda g: (g.labels, tuple(int(o) for o in g.pattern.opinions), g.pattern.edges))
    expect = labeled_copy_count(len(labels), pattern)
    if len(out) != expect:
        raise RuntimeError(f"enumerated {len(out)} labeled copies, expected {expect}")
    return out


_LITERAL_RE = re.compile(r"^V=(\d+);opinions=([+-]+);edges=(.*)$")


def parse_pattern(text: str) -> VoterPattern:
    """Parse the pattern literal format ``V=3; opinions=+-+; edges=0-1,1-2``.

    Whitespace-insensitive; ``edges=`` may be empty.
    """
    compact = re.sub(r"\s+", "", text)
    m = _LITERAL_RE.match(compact)
    if m is None:
        raise PatternError(f"malformed pattern literal {text!r}")
    v = int(m.group(1))
    opinions = m.group(2)
    if len(opinions) != v:
        raise PatternError(f"pattern literal declares V={v} but has {len(opinions)} opinions")
    edges = []
    if m.group(3):
        for part in m.group(3).split(","):
            try:
                a, b = part.split("-")
                edges.append((int(a), int(b)))
            except ValueError as exc:
                raise PatternError(f"malformed edge {part!r} in pattern literal") from exc
    return build_pattern(opinions, edges)


def format_pattern(pattern: VoterPattern) -> str:
    ops = "".join(o.symbol for o in pattern.opinions)
    edges = ",".join(f"{a}-{b}" for a, b in pattern.edges)
    return f"V={pattern.vertex_count}; opinions={ops}; edges={edges}"
