"""Run configuration shared by every command-line subcommand.

A configuration is plain JSON; every field has a default except the process
specification.  Command-line flags are merged on top of a file before
validation, and the validated configuration is echoed next to every result.
The worker count is deliberately not part of it: outputs never depend on it.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

from .bridge import FORMS
from .core import MonteCarloConfig, ProcessSpec, SpacePoint, SpecError, TransitionQuery

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "query": None,
    "sweep": None,
    "mc": {"paths": 100_000, "steps": 512, "seed": 0, "antithetic": True},
    "thresholds": {"K_large": 5.0, "Cbar": 1.0, "K_small": 0.1},
    "bandwidth": None,
    "bridge_form": "endpoint",
    "output": {"dir": None, "prefix": "degendens"},
}


class ConfigError(SpecError):
    """A configuration field is missing or violates its constraints."""


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _number(value, path: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        _fail(path, f"must be finite, got {value!r}")
    if positive and value <= 0:
        _fail(path, f"must be > 0, got {value!r}")
    return value


def _point(value, path: str) -> SpacePoint:
    if not isinstance(value, (list, tuple)):
        _fail(path, f"expected a list of numbers, got {value!r}")
    coords = [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]
    try:
        return SpacePoint.from_flat(coords)
    except SpecError as exc:
        _fail(path, str(exc))


def _query(data, path: str) -> TransitionQuery:
    if not isinstance(data, dict):
        _fail(path, f"expected an object with t, x, xi, got {data!r}")
    for key in ("t", "x", "xi"):
        if key not in data:
            _fail(f"{path}.{key}", "missing")
    t = _number(data["t"], f"{path}.t", positive=True)
    start, end = _point(data["x"], f"{path}.x"), _point(data["xi"], f"{path}.xi")
    if start.n != end.n:
        _fail(path, "x and xi have different lengths")
    return TransitionQuery(t, start, end)


def _query_dict(q: TransitionQuery) -> dict:
    return {"t": q.t, "x": q.start.flat(), "xi": q.end.flat()}


@dataclass(frozen=True)
class RunConfig:
    spec: ProcessSpec
    query: TransitionQuery | None
    sweep: tuple | None
    mc: MonteCarloConfig
    thresholds: dict
    bandwidth: float | None
    bridge_form: str
    output: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "spec": self.spec.to_dict(),
            "query": None if self.query is None else _query_dict(self.query),
            "sweep": None if self.sweep is None else [_query_dict(q) for q in self.sweep],
            "mc": self.mc.to_dict(),
            "thresholds": dict(self.thresholds),
            "bandwidth": self.bandwidth,
            "bridge_form": self.bridge_form,
            "output": dict(self.output),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"configuration must be a JSON object, got {type(data).__name__}")
        merged = merge(copy.deepcopy(DEFAULTS), data)
        version = merged.get("schema_version")
        if version != SCHEMA_VERSION:
            _fail("schema_version", f"unsupported version {version!r}; expected {SCHEMA_VERSION}")
        unknown = set(merged) - set(DEFAULTS) - {"spec"}
        if unknown:
            _fail(sorted(unknown)[0], "unknown field")

        if "spec" not in merged or merged["spec"] is None:
            _fail("spec", "missing (needs family, n, k)")
        try:
            spec = ProcessSpec.from_dict(merged["spec"])
        except (SpecError, TypeError, AttributeError) as exc:
            _fail("spec", str(exc))

        query = None if merged["query"] is None else _query(merged["query"], "query")
        if query is not None and query.n != spec.n:
            _fail("query.x", f"has {query.n} Brownian coordinates but spec.n = {spec.n}")

        sweep = None
        if merged["sweep"] is not None:
            if not isinstance(merged["sweep"], list) or not merged["sweep"]:
                _fail("sweep", "expected a non-empty list of queries")
            sweep = tuple(_query(q, f"sweep[{i}]") for i, q in enumerate(merged["sweep"]))
            for i, q in enumerate(sweep):
                if q.n != spec.n:
                    _fail(f"sweep[{i}].x", f"has {q.n} Brownian coordinates but spec.n = {spec.n}")

        mc_data = merged["mc"]
        if not isinstance(mc_data, dict):
            _fail("mc", "expected an object")
        unknown = set(mc_data) - set(DEFAULTS["mc"])
        if unknown:
            _fail(f"mc.{sorted(unknown)[0]}", "unknown field")
        for key in ("paths", "steps", "seed"):
            if isinstance(mc_data[key], bool) or not isinstance(mc_data[key], int):
                _fail(f"mc.{key}", f"expected an integer, got {mc_data[key]!r}")
        if not isinstance(mc_data["antithetic"], bool):
            _fail("mc.antithetic", f"expected true/false, got {mc_data['antithetic']!r}")
        try:
            mc = MonteCarloConfig(**mc_data)
        except SpecError as exc:
            _fail("mc", str(exc))

        thresholds = merged["thresholds"]
        if not isinstance(thresholds, dict) or set(thresholds) != set(DEFAULTS["thresholds"]):
            _fail("thresholds", f"expected exactly the keys {sorted(DEFAULTS['thresholds'])}")
        thresholds = {key: _number(v, f"thresholds.{key}", positive=True) for key, v in thresholds.items()}

        bandwidth = merged["bandwidth"]
        if bandwidth is not None:
            bandwidth = _number(bandwidth, "bandwidth", positive=True)

        if merged["bridge_form"] not in FORMS:
            _fail("bridge_form", f"expected one of {list(FORMS)}, got {merged['bridge_form']!r}")

        output = merged["output"]
        if not isinstance(output, dict) or set(output) - set(DEFAULTS["output"]):
            _fail("output", f"expected an object with keys {sorted(DEFAULTS['output'])}")
        if output["dir"] is not None and not isinstance(output["dir"], str):
            _fail("output.dir", "expected a path string or null")
        if not isinstance(output["prefix"], str) or not output["prefix"]:
            _fail("output.prefix", "expected a non-empty string")

        return cls(spec, query, sweep, mc, thresholds, bandwidth, merged["bridge_form"], dict(output))

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None
        return cls.from_dict(data)


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``override`` wins, nested objects merge key by key."""
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a JSON file, apply ``overrides`` (from flags) and validate."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"configuration must be a JSON object, got {type(data).__name__}")
    return RunConfig.from_dict(merge(data, overrides or {}))
