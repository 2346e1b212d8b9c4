"""Record splitting, tokenizing and parsing for each raw format.

Calibration times exactly these functions, and the workload runner calls them,
so the measured per-attribute costs and the executed work are the same code.
"""

from __future__ import annotations

import json

import numpy as np

from .formats import Column, Manifest, RawKind


class Extractor:
    align: bytes | int = b"\n"

    def __init__(self, schema: list[Column]):
        self.schema = list(schema)
        self.dtypes = [c.np_dtype for c in self.schema]

    @property
    def n(self) -> int:
        return len(self.schema)

    def records(self, chunk: bytes):
        return chunk.decode("ascii").splitlines()

    def tokenize(self, records, end: int):
        raise NotImplementedError

    def parse(self, tokens, j: int) -> np.ndarray:
        raise NotImplementedError


class CsvExtractor(Extractor):
    """Tokenizing up to attribute ``end`` splits only the first ``end + 1`` fields."""

    def __init__(self, schema, delimiter: str = ","):
        super().__init__(schema)
        self.delimiter = delimiter

    def tokenize(self, records, end: int):
        if end < 0:
            return []
        d, k = self.delimiter, end + 1
        return [r.split(d, k) for r in records]

    def parse(self, tokens, j: int) -> np.ndarray:
        return np.array([t[j] for t in tokens], dtype=self.dtypes[j])


def _getter(path: list[str]):
    if len(path) == 1:
        (a,) = path
        return lambda ts: [t[a] for t in ts]
    if len(path) == 2:
        a, b = path
        return lambda ts: [t[a][b] for t in ts]
    if len(path) == 3:
        a, b, c = path
        return lambda ts: [t[a][b][c] for t in ts]

    def deep(ts):
        out = []
        for t in ts:
            for k in path:
                t = t[k]
            out.append(t)
        return out

    return deep


class JsonExtractor(Extractor):
    """Every record is decoded whole into its key map, whatever ``end`` asks for.

    Parsing an attribute walks its key path in each map.
    """

    def __init__(self, schema, sep: str = "."):
        super().__init__(schema)
        self.sep = sep
        self.getters = [_getter(c.name.split(sep)) for c in self.schema]

    def tokenize(self, records, end: int):
        if end < 0:
            return []
        loads = json.loads
        return [loads(r) for r in records]

    def parse(self, tokens, j: int) -> np.ndarray:
        return np.array(self.getters[j](tokens), dtype=self.dtypes[j])


class BinaryExtractor(Extractor):
    def __init__(self, schema):
        super().__init__(schema)
        self.record = np.dtype([(c.name, c.np_dtype) for c in self.schema])
        self.align = self.record.itemsize

    def records(self, chunk: bytes):
        return np.frombuffer(chunk, dtype=self.record)

    def tokenize(self, records, end: int):
        return records

    def parse(self, tokens, j: int) -> np.ndarray:
        return np.ascontiguousarray(tokens[self.schema[j].name])


def extractor_for(manifest: Manifest) -> Extractor:
    kind = manifest.format.kind
    if kind is RawKind.CSV:
        return CsvExtractor(manifest.schema, manifest.format.delimiter)
    if kind is RawKind.JSON:
        return JsonExtractor(manifest.schema, manifest.format.flatten_sep)
    return BinaryExtractor(manifest.schema)
