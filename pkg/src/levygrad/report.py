"""Result containers shared by the verification checks, and the JSON report format."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class RatioBand:
    """Min/median/max of a checked ratio over a published grid."""

    name: str
    min: float
    median: float
    max: float
    grid_id: str
    n: int
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, name: str, values, grid_id: str, **extra) -> "RatioBand":
        v = np.asarray(values, dtype=float).ravel()
        v = v[np.isfinite(v)] if np.any(np.isfinite(v)) else v
        return cls(name, float(np.min(v)), float(np.median(v)), float(np.max(v)), grid_id, int(v.size), dict(extra))

    @property
    def finite_positive(self) -> bool:
        return bool(np.isfinite(self.min) and np.isfinite(self.max) and self.min > 0)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    """Convert numpy scalars/arrays inside nested containers to JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


ENTRY_FIELDS = {"check_id", "anchor", "grid_id", "band", "ci", "passed", "seed", "runtime", "diagnostics", "values"}
REPORT_FIELDS = {"schema_version", "config", "entries"}


@dataclass
class CheckEntry:
    check_id: str
    anchor: str
    grid_id: str
    band: dict | None
    ci: list | None
    passed: bool
    seed: int | None
    runtime: float
    diagnostics: str = ""
    values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


@dataclass
class VerificationReport:
    config: dict
    entries: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def add(self, entry: CheckEntry):
        if any(e.check_id == entry.check_id for e in self.entries):
            raise ValueError(f"duplicate check id {entry.check_id}")
        self.entries.append(entry)

    def to_dict(self, include_runtime: bool = True) -> dict:
        entries = [e.to_dict() for e in self.entries]
        if not include_runtime:
            for e in entries:
                e.pop("runtime")
        return {"schema_version": self.schema_version, "config": _plain(self.config), "entries": entries}

    def dumps(self, include_runtime: bool = True) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "VerificationReport":
        data = json.loads(text)
        unknown = set(data) - REPORT_FIELDS
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {data.get('schema_version')}")
        entries = []
        for raw in data["entries"]:
            bad = set(raw) - ENTRY_FIELDS
            if bad:
                raise ValueError(f"unknown entry fields: {sorted(bad)}")
            raw = dict(raw)
            raw.setdefault("runtime", 0.0)
            entries.append(CheckEntry(**raw))
        return cls(config=data["config"], entries=entries, schema_version=data["schema_version"])


def write_csv(path, columns: dict):
    """Write equal-length columns with a header row."""
    names = list(columns)
    cols = [np.asarray(columns[n], dtype=float).ravel() for n in names]
    data = np.column_stack(cols)
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
