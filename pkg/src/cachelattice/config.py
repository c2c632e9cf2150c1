"""JSON run configuration: schema validation, defaults and a stable hash."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .core import CacheSpec, IndexMap, Table, make_index_map
from .domain import IterationDomain, builtin_domain
from .errors import CacheLatticeError, ConfigError

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["cache"],
    "properties": {
        "cache": {
            "type": "object", "additionalProperties": False,
            "required": ["capacity", "line", "assoc"],
            "properties": {"capacity": _POS, "line": _POS, "assoc": _POS,
                           "level": _POS, "element_bytes": _POS},
        },
        "tables": {
            "type": "array",
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["name", "dims"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "dims": {"type": "array", "items": _POS, "minItems": 1},
                    "offset": {"type": "integer", "minimum": 0},
                    "layout": {"oneOf": [
                        {"enum": ["col", "row"]},
                        {"type": "object", "additionalProperties": False, "required": ["weights"],
                         "properties": {"weights": {"type": "array", "items": _INT}}},
                    ]},
                },
            },
        },
        "op": {"enum": ["matmul", "dot", "conv", "kron"]},
        "sizes": {"type": "object", "additionalProperties": _POS},
        "layout": {"enum": ["col", "row"]},
        "order": {"type": "array", "items": {"type": "string"}},
        "tiling": {
            "type": "object", "additionalProperties": False,
            "properties": {"alpha": _INT, "beta": _INT, "target": _POS,
                           "search_box": {"type": "array", "items": _POS},
                           "reference_rect": {"type": "array", "items": _POS}},
        },
        "policy": {"enum": ["lru", "plru"]},
        "sets": {"oneOf": [{"enum": ["all"]}, {"type": "integer", "minimum": 0},
                           {"type": "array", "items": {"type": "integer", "minimum": 0}}]},
        "seed": _INT,
        "out": {"type": "string"},
    },
}


def config_hash(raw: dict) -> str:
    """sha256 of the canonical (sorted-key, compact) JSON text."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunConfig:
    spec: CacheSpec
    tables: list = field(default_factory=list)     # [(Table, layout)]
    op: Optional[str] = None
    sizes: dict = field(default_factory=dict)
    layout: str = "col"
    order: Optional[list] = None
    alpha: int = 1
    beta: int = 0
    target: Optional[int] = None
    search_box: Optional[tuple] = None
    reference_rect: Optional[tuple] = None
    policy: str = "lru"
    sets: Any = 0
    seed: int = 0
    out: Optional[str] = None
    raw: dict = field(default_factory=dict)
    hash: str = ""

    def maps(self) -> dict[str, IndexMap]:
        return {t.name: make_index_map(t, layout) for t, layout in self.tables}

    def domain(self) -> IterationDomain:
        if self.op is None:
            raise ConfigError("config has no 'op'; this command needs a kernel")
        return builtin_domain(self.op, self.sizes, maps=self.maps(), layout=self.layout)

    def iteration_order(self, domain: IterationDomain):
        return domain.order(self.order) if self.order else domain.default_order()


def load_config(source) -> RunConfig:
    """Load from a path, JSON text or an already parsed dict."""
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    c = raw["cache"]
    try:
        spec = CacheSpec.from_bytes(c["capacity"], c["line"], c["assoc"], c.get("level", 1),
                                    c.get("element_bytes", 1))
        tables = [(Table(t["name"], tuple(t["dims"]), t.get("offset", 0)), t.get("layout", "col"))
                  for t in raw.get("tables", [])]
    except CacheLatticeError as exc:
        raise ConfigError(str(exc)) from None
    tiling = raw.get("tiling", {})
    cfg = RunConfig(spec, tables, raw.get("op"), dict(raw.get("sizes", {})),
                    raw.get("layout", "col"), raw.get("order"), tiling.get("alpha", 1),
                    tiling.get("beta", 0), tiling.get("target"),
                    tuple(tiling["search_box"]) if "search_box" in tiling else None,
                    tuple(tiling["reference_rect"]) if "reference_rect" in tiling else None,
                    raw.get("policy", "lru"), raw.get("sets", 0), raw.get("seed", 0),
                    raw.get("out"), raw, config_hash(raw))
    if cfg.op is None and not cfg.tables:
        raise ConfigError("config needs an 'op' or at least one table")
    if cfg.op is not None:
        try:
            cfg.domain()
        except CacheLatticeError as exc:
            raise ConfigError(f"kernel {cfg.op}: {exc}") from None
    return cfg
