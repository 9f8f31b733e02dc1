"""Plain-JSON knowledge store persisted at the repository root.

The file lives at .knowledge/units.json, is written atomically, and has one
canonical byte form (sorted keys, two-space indent, id-sorted units) so that
repeated saves diff clean.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .extraction import KnowledgeUnit

SCHEMA_VERSION = 1
STORE_DIR = ".knowledge"
STORE_FILENAME = "units.json"


@dataclass
class KnowledgeStore:
    units: dict[str, KnowledgeUnit] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def sorted_units(self) -> list[KnowledgeUnit]:
        return [self.units[uid] for uid in sorted(self.units)]

    def counts_by_type(self) -> dict[str, int]:
        counts = {"fact": 0, "skill": 0, "pattern": 0}
        for unit in self.units.values():
            counts[unit.unit_type] = counts.get(unit.unit_type, 0) + 1
        return counts


def from_units(units) -> KnowledgeStore:
    store = KnowledgeStore()
    for unit in units:
        store.units.setdefault(unit.id, unit)
    return store


def store_path(root: Path | str) -> Path:
    return Path(root) / STORE_DIR / STORE_FILENAME


def canonical_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_canonical(path: Path, payload) -> Path:
    """Atomic canonical-JSON write (temp file in place, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(canonical_json(payload))
        os.replace(tmp_name, path)
    except OSError:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def save(store: KnowledgeStore, root: Path | str) -> Path:
    payload = {
        "schema_version": store.schema_version,
        "units": [unit.to_dict() for unit in store.sorted_units()],
    }
    return write_canonical(store_path(root), payload)


def load(root: Path | str) -> KnowledgeStore:
    path = store_path(root)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FileNotFoundError(
            f"no knowledge store at {path}; run the extract command first"
        ) from None
    store = KnowledgeStore(schema_version=payload["schema_version"])
    for entry in payload["units"]:
        unit = KnowledgeUnit.from_dict(entry)
        store.units[unit.id] = unit
    return store


def merge(existing: KnowledgeStore, incoming) -> KnowledgeStore:
    """Union by id; on collision the existing unit (and its meta) wins."""
    merged = KnowledgeStore(dict(existing.units), existing.schema_version)
    for unit in incoming:
        merged.units.setdefault(unit.id, unit)
    return merged


def strip_attribution(store: KnowledgeStore) -> KnowledgeStore:
    """Replace author fields with "redacted"; shas and ids stay put."""
    scrubbed = KnowledgeStore(schema_version=store.schema_version)
    for uid, unit in store.units.items():
        meta = dict(unit.meta)
        if "author" in meta:
            meta["author"] = "redacted"
        scrubbed.units[uid] = KnowledgeUnit(
            id=unit.id,
            unit_type=unit.unit_type,
            title=unit.title,
            content=unit.content,
            weight=unit.weight,
            context=unit.context,
            meta=meta,
        )
    return scrubbed
