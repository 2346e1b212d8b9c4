"""Raw file formats, schemas and the deterministic generator.

Every generated file gets a sidecar ``<file>.manifest.json`` holding the format,
schema, row count and value distributions; readers rely on it.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ..model import TokenizationMode

DTYPES = ("int32", "int64", "float32", "float64")


class RawKind(str, Enum):
    CSV = "csv"
    JSON = "json-lines"
    BINARY = "fixed-binary"


@dataclass(frozen=True)
class RawFormat:
    kind: RawKind
    delimiter: str = ","
    flatten_sep: str = "."
    # extra per-attribute startup cost (seconds) reported for fixed-binary files
    startup_sec_per_attr: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RawKind(self.kind))
        if len(self.delimiter) != 1 or self.delimiter in "\n\"":
            raise ValueError("delimiter must be a single plain character")

    @property
    def tokenization_mode(self) -> TokenizationMode:
        return {
            RawKind.CSV: TokenizationMode.PREFIX,
            RawKind.JSON: TokenizationMode.ATOMIC,
            RawKind.BINARY: TokenizationMode.NONE,
        }[self.kind]

    @classmethod
    def parse(cls, name: str) -> "RawFormat":
        aliases = {"csv": "csv", "json": "json-lines", "json-lines": "json-lines",
                   "binary": "fixed-binary", "fixed-binary": "fixed-binary"}
        if name not in aliases:
            raise ValueError(f"unknown raw format {name!r}")
        return cls(RawKind(aliases[name]))


@dataclass(frozen=True)
class Column:
    name: str  # dotted path for nested json keys
    dtype: str
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype).newbyteorder("<")

    @property
    def size(self) -> int:
        return np.dtype(self.dtype).itemsize


@dataclass
class Manifest:
    format: RawFormat
    schema: list[Column]
    row_count: int
    seed: int
    size_bytes: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": {**asdict(self.format), "kind": self.format.kind.value},
            "schema": [asdict(c) for c in self.schema],
            "row_count": self.row_count,
            "seed": self.seed,
            "size_bytes": self.size_bytes,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Manifest":
        return cls(
            RawFormat(**doc["format"]),
            [Column(**c) for c in doc["schema"]],
            int(doc["row_count"]),
            int(doc["seed"]),
            int(doc.get("size_bytes", 0)),
            dict(doc.get("extra", {})),
        )


def manifest_path(path) -> Path:
    return Path(str(path) + ".manifest.json")


def read_manifest(path) -> Manifest:
    try:
        with open(manifest_path(path), encoding="utf-8") as fh:
            return Manifest.from_dict(json.load(fh))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise OSError(f"cannot read the manifest of {path}: {exc}") from exc


def write_manifest(path, manifest: Manifest) -> None:
    with open(manifest_path(path), "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")


# -- schemas -------------------------------------------------------------------


def default_csv_schema(n: int = 24) -> list[Column]:
    """Mixed numeric columns named ``c00``, ``c01``, ... with varied text widths."""
    out = []
    for j in range(n):
        dtype = DTYPES[j % 4]
        if dtype.startswith("int"):
            hi = 10.0 ** (2 + j % 7) if dtype == "int64" else 10.0 ** (1 + j % 5)
            out.append(Column(f"c{j:02d}", dtype, -hi, hi))
        else:
            out.append(Column(f"c{j:02d}", dtype, -(10.0 ** (j % 5)), 10.0 ** (j % 5)))
    return out


def default_json_schema(levels: int = 3, fanout: int = 2, leaves: int = 4) -> list[Column]:
    """Nested keys ``g0.g1.f2``-style; ``fanout`` groups per level, ``leaves`` fields per group.

    Every interior level also carries ``leaves`` scalar fields, so the schema
    has leaves * (1 + fanout + ... + fanout^(levels-1)) columns.
    """
    names: list[str] = []

    def walk(prefix: str, depth: int):
        for k in range(leaves):
            names.append(f"{prefix}f{k}")
        if depth + 1 < levels:
            for g in range(fanout):
                walk(f"{prefix}g{g}.", depth + 1)

    walk("", 0)
    cols = []
    for j, name in enumerate(names):
        dtype = DTYPES[j % 4]
        hi = 10.0 ** (1 + j % 6)
        cols.append(Column(name, dtype, -hi, hi))
    return cols


def flatten(doc: dict, sep: str = ".", prefix: str = "") -> dict:
    out = {}
    for k, v in doc.items():
        key = prefix + k
        if isinstance(v, dict):
            out.update(flatten(v, sep, key + sep))
        else:
            out[key] = v
    return out


def _nest(flat: dict, sep: str) -> dict:
    root: dict = {}
    for key, value in flat.items():
        parts = key.split(sep)
        node = root
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return root


# -- generation ----------------------------------------------------------------


def _values(col: Column, rows: int, rng: np.random.Generator) -> np.ndarray:
    if col.dtype.startswith("int"):
        return rng.integers(int(col.low), int(col.high), size=rows, endpoint=True).astype(col.dtype)
    v = rng.uniform(col.low, col.high, size=rows)
    # limited precision keeps the text short and round-trips through float32
    return np.round(v, 3).astype(col.dtype)


def _text(col: Column, values: np.ndarray) -> list[str]:
    if col.dtype.startswith("int"):
        return values.astype(str).tolist()
    return [repr(float(x)) for x in values.astype(np.float64).round(3)]


def gen_raw(fmt: RawFormat, schema: list[Column], row_count: int, seed: int, path) -> Manifest:
    """Write ``row_count`` records to ``path`` deterministically and return the manifest."""
    if row_count < 0:
        raise ValueError("row_count must be nonnegative")
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise ValueError("duplicate column names")
    rng = np.random.default_rng(seed)
    path = Path(path)
    block = 50_000
    with open(path, "wb") as fh:
        for start in range(0, row_count, block):
            rows = min(block, row_count - start)
            cols = [_values(c, rows, rng) for c in schema]
            if fmt.kind is RawKind.BINARY:
                rec = np.zeros(rows, dtype=[(c.name, c.np_dtype) for c in schema])
                for c, v in zip(schema, cols):
                    rec[c.name] = v
                fh.write(rec.tobytes())
            elif fmt.kind is RawKind.CSV:
                text = [_text(c, v) for c, v in zip(schema, cols)]
                fh.write(("\n".join(map(fmt.delimiter.join, zip(*text))) + "\n").encode("ascii"))
            else:
                pys = [v.tolist() for v in cols]
                lines = []
                for r in range(rows):
                    flat = {c.name: (round(pys[k][r], 3) if c.dtype.startswith("float") else pys[k][r])
                            for k, c in enumerate(schema)}
                    lines.append(json.dumps(_nest(flat, fmt.flatten_sep), separators=(",", ":")))
                fh.write(("\n".join(lines) + "\n").encode("ascii"))
    size = os.path.getsize(path)
    dist = {c.name: {"kind": "uniform-int" if c.dtype.startswith("int") else "uniform-3dp",
                     "low": c.low, "high": c.high} for c in schema}
    manifest = Manifest(fmt, list(schema), row_count, seed, size, {"distributions": dist})
    write_manifest(path, manifest)
    return manifest


def rows_for_size(fmt: RawFormat, schema: list[Column], target_bytes: int, seed: int = 0) -> int:
    """Row count whose file is close to ``target_bytes``, estimated from a 2,000-row sample."""
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        probe = Path(tmp) / "probe"
        m = gen_raw(fmt, schema, 2000, seed, probe)
    return max(1, round(target_bytes * 2000 / m.size_bytes))
