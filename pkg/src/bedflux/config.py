"""Run configuration: defaults, JSON schema and canonical form."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema

from .errors import ConfigError, InputNotFound
from .flux import DEFAULT_POROSITY, RankOrder
from .spectrum import DEFAULT_PERSISTENCE_TOL, DEFAULT_REGION_EDGES

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "bedflux run configuration",
    "type": "object",
    "properties": {
        "input": {"type": ["string", "null"]},
        "model": {"type": ["string", "null"]},
        "output": {"type": ["string", "null"]},
        "output_dir": {"type": "string"},
        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "rank": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "full"}]},
        "remove_mean": {"type": "boolean"},
        "persistence_tol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "porosity": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "transect": {"type": "integer", "minimum": 0},
        "x_range": {
            "oneOf": [
                {"type": "null"},
                {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
            ]
        },
        "region_edges": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "order": {"enum": [o.value for o in RankOrder]},
        "seed": {"type": ["integer", "null"]},
        "snapshot": {"type": ["integer", "null"], "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

# output paths and the thread count do not affect results, so reports leave them out
_NON_RESULT_KEYS = ("output_dir", "output", "threads")


@dataclass
class RunConfig:
    input: str | None = None
    model: str | None = None
    output: str | None = None
    output_dir: str = "."
    train_fraction: float = 0.98
    rank: int | str = "full"
    remove_mean: bool = True
    persistence_tol: float = DEFAULT_PERSISTENCE_TOL
    porosity: float = DEFAULT_POROSITY
    transect: int = 0
    x_range: list[int] | None = None
    region_edges: list[float] = field(default_factory=lambda: list(DEFAULT_REGION_EDGES))
    order: str = RankOrder.BY_SPEED_ASCENDING.value
    seed: int | None = None
    snapshot: int | None = None
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        validate(data)
        cfg = cls(**data)
        cfg.check()
        return cfg

    def check(self) -> None:
        validate(asdict(self))
        edges = list(self.region_edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ConfigError("region_edges must be strictly ascending")
        if self.x_range is not None and self.x_range[1] <= self.x_range[0]:
            raise ConfigError("x_range must satisfy i_min < i_max")

    @property
    def rank_value(self) -> int | None:
        return None if self.rank == "full" else int(self.rank)

    def canonical(self) -> dict:
        d = asdict(self)
        for k in _NON_RESULT_KEYS:
            d.pop(k)
        return dict(sorted(d.items()))

    def canonical_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))


def validate(data: dict) -> None:
    try:
        jsonschema.validate(data, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from exc


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputNotFound(f"no such config file: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    validate(data)
    return data


def merge(flags: dict, file_values: dict | None = None) -> RunConfig:
    """Defaults, then explicitly given flags (non-None), then the config file."""
    names = {f.name for f in fields(RunConfig)}
    data = asdict(RunConfig())
    data.update({k: v for k, v in flags.items() if k in names and v is not None})
    if file_values:
        data.update(file_values)
    return RunConfig.from_dict(data)
