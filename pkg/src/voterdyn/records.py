"""Estimate records and their JSON-lines / CSV serialization.

Every estimator emits records of the fixed shape
``{estimator, parameters, value, std_error, replications, seed, wall_time}``.
``wall_time`` is the only volatile field; canonical serialization strips it
so that re-runs with the same seed hash identically regardless of machine
load or worker count.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class EstimateWithError:
    """Monte Carlo point estimate with its standard error."""

    value: float
    std_error: float
    replications: int
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.std_error > 0 and self.replications < 2:
            raise ValueError("a positive std_error needs at least 2 replications")

    def combined_se(self, other: "EstimateWithError | float") -> float:
        other_se = other.std_error if isinstance(other, EstimateWithError) else float(other)
        return float((self.std_error ** 2 + other_se ** 2) ** 0.5)

    def agrees_with(self, target: "EstimateWithError | float", se_multiplier: float = 3.0) -> bool:
        """|difference| within se_multiplier combined standard errors."""
        tv = target.value if isinstance(target, EstimateWithError) else float(target)
        return abs(self.value - tv) <= se_multiplier * self.combined_se(
            target if isinstance(target, EstimateWithError) else 0.0)


def make_record(estimator: str, parameters: dict[str, Any], estimate: EstimateWithError,
                seed: int, wall_time: float) -> dict[str, Any]:
    return {
        "estimator": estimator,
        "parameters": parameters,
        "value": estimate.value,
        "std_error": estimate.std_error,
        "replications": estimate.replications,
        "seed": seed,
        "wall_time": wall_time,
    }


def canonical_record(record: dict[str, Any]) -> str:
    """Deterministic JSON encoding with volatile fields removed."""
    stripped = {k: v for k, v in record.items() if k != "wall_time"}
    return json.dumps(stripped, sort_keys=True, separators=(",", ":"))


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_estimates_csv(path, records) -> None:
    with open(path, "w") as fh:
        fh.write("# voterdyn estimates schema v1\n")
        fh.write("estimator,value,std_error,replications,seed\n")
        for rec in records:
            fh.write(f"{rec['estimator']},{rec['value']!r},{rec['std_error']!r},"
                     f"{rec['replications']},{rec['seed']}\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def canonical_records_digest(records) -> str:
    """SHA-256 over the canonical (wall-time-free) encoding of all records."""
    h = hashlib.sha256()
    for rec in records:
        h.update(canonical_record(rec).encode())
        h.update(b"\n")
    return h.hexdigest()
