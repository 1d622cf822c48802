"""INI experiment configuration: parsing, validation, round-trip serialization.

The file format is three flat sections read with the standard-library
parser, no extra dependencies:

    [model]
    kind = one_way          ; or two_way
    n = 100
    p0 = 0.3
    gamma_mp = 0.85         ; one-way switching rates
    gamma_pm = 0.15
    beta = 0.66             ; two-way vertex clock rate
    pi_plus = 0.9
    pi_minus = 0.1
    q0 = 0.85
    horizon = 2.0

    [patterns]
    p1 = V=2; opinions=++; edges=0-1

    [run]
    times = 1.0, 2.0
    replications = 2000
    seed = 1
    workers = 1
    out_dir = out
    se_multiplier = 3.0
    chunk_size = 256

Acceptance thresholds (the "k standard errors" rules) live here as
``se_multiplier`` so loosening or tightening is visible in the config, never
buried in test logic.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

from .dynamics import OneWayParams, TwoWayParams
from .patterns import (
    MAX_PATTERN_VERTICES,
    PatternError,
    VoterPattern,
    format_pattern,
    parse_pattern,
)


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n: int
    p0: float
    pi_plus: float
    pi_minus: float
    q0: float
    horizon: float
    gamma_mp: float = 0.0
    gamma_pm: float = 0.0
    beta: float = 0.0
    patterns: tuple[str, ...] = ()
    times: tuple[float, ...] = ()
    replications: int = 1000
    seed: int = 1
    workers: int = 1
    out_dir: str = "out"
    se_multiplier: float = 3.0
    chunk_size: int = 256

    def __post_init__(self):
        if self.kind not in ("one_way", "two_way"):
            raise ConfigError(f"model.kind: expected one_way or two_way, got {self.kind!r}")
        try:
            pats = self.pattern_objects()
        except PatternError as exc:
            raise ConfigError(f"patterns: {exc}") from exc
        for pat in pats:
            if pat.vertex_count > MAX_PATTERN_VERTICES:
                raise ConfigError(f"patterns: {format_pattern(pat)} exceeds the size cap")
        if any(t2 < t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise ConfigError("run.times: must be sorted")
        if self.times and not (0.0 <= self.times[0] and self.times[-1] <= self.horizon):
            raise ConfigError("run.times: must lie within [0, horizon]")
        if self.replications < 1:
            raise ConfigError("run.replications: must be positive")
        if self.workers < 1:
            raise ConfigError("run.workers: must be positive")
        if self.chunk_size < 1:
            raise ConfigError("run.chunk_size: must be positive")
        if self.se_multiplier <= 0:
            raise ConfigError("run.se_multiplier: must be positive")
        try:
            self.model_params()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"model: {exc}") from exc

    def pattern_objects(self) -> tuple[VoterPattern, ...]:
        return tuple(parse_pattern(s) for s in self.patterns)

    def model_params(self) -> OneWayParams | TwoWayParams:
        if self.kind == "one_way":
            return OneWayParams(n=self.n, p0=self.p0, gamma_mp=self.gamma_mp,
                                gamma_pm=self.gamma_pm, pi_plus=self.pi_plus,
                                pi_minus=self.pi_minus, q0=self.q0, horizon=self.horizon)
        return TwoWayParams(n=self.n, p0=self.p0, pi_plus=self.pi_plus,
                            pi_minus=self.pi_minus, beta=self.beta, q0=self.q0,
                            horizon=self.horizon)

    def with_overrides(self, seed=None, workers=None, out_dir=None,
                       replications=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if workers is not None:
            cfg = replace(cfg, workers=int(workers))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        if replications is not None:
            cfg = replace(cfg, replications=int(replications))
        return cfg

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["model"] = {
            "kind": self.kind,
            "n": str(self.n),
            "p0": repr(self.p0),
            "gamma_mp": repr(self.gamma_mp),
            "gamma_pm": repr(self.gamma_pm),
            "beta": repr(self.beta),
            "pi_plus": repr(self.pi_plus),
            "pi_minus": repr(self.pi_minus),
            "q0": repr(self.q0),
            "horizon": repr(self.horizon),
        }
        cp["patterns"] = {f"p{i + 1}": lit for i, lit in enumerate(self.patterns)}
        cp["run"] = {
            "times": ", ".join(repr(t) for t in self.times),
            "replications": str(self.replications),
            "seed": str(self.seed),
            "workers": str(self.workers),
            "out_dir": self.out_dir,
            "se_multiplier": repr(self.se_multiplier),
            "chunk_size": str(self.chunk_size),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _get(cp: configparser.ConfigParser, section: str, key: str, conv, default=None):
    if not cp.has_option(section, key):
        if default is not None:
            return default
        raise ConfigError(f"{section}.{key}: missing required field")
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not cp.has_section("model"):
        raise ConfigError("model: missing section")
    if not cp.has_section("run"):
        raise ConfigError("run: missing section")

    def floats(raw: str) -> tuple[float, ...]:
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(float(s) for s in items)

    patterns: list[str] = []
    if cp.has_section("patterns"):
        for key in cp["patterns"]:
            lit = cp.get("patterns", key)
            try:
                patterns.append(format_pattern(parse_pattern(lit)))
            except PatternError as exc:
                raise ConfigError(f"patterns.{key}: {exc}") from exc

    return ExperimentConfig(
        kind=_get(cp, "model", "kind", str),
        n=_get(cp, "model", "n", int),
        p0=_get(cp, "model", "p0", float),
        gamma_mp=_get(cp, "model", "gamma_mp", float, default=0.0),
        gamma_pm=_get(cp, "model", "gamma_pm", float, default=0.0),
        beta=_get(cp, "model", "beta", float, default=0.0),
        pi_plus=_get(cp, "model", "pi_plus", float),
        pi_minus=_get(cp, "model", "pi_minus", float),
        q0=_get(cp, "model", "q0", float, default=0.5),
        horizon=_get(cp, "model", "horizon", float),
        patterns=tuple(patterns),
        times=_get(cp, "run", "times", floats, default=()),
        replications=_get(cp, "run", "replications", int),
        seed=_get(cp, "run", "seed", int),
        workers=_get(cp, "run", "workers", int, default=1),
        out_dir=_get(cp, "run", "out_dir", str, default="out"),
        se_multiplier=_get(cp, "run", "se_multiplier", float, default=3.0),
        chunk_size=_get(cp, "run", "chunk_size", int, default=256),
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)
