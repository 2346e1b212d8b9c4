"""Schema, workload and plan types shared by the optimizer, the evaluators and the runner.

Attributes are identified by their 0-based position in raw-file order; names are
labels.  Everything here is immutable once constructed.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class WorkloadError(ValueError):
    """Malformed or inconsistent workload document."""


class ModeError(ValueError):
    """Operation not defined for the tokenization mode of the instance."""


class BudgetError(ValueError):
    """A load set does not fit in the storage budget."""


class TokenizationMode(str, enum.Enum):
    PREFIX = "prefix"  # delimited text: attribute j needs attributes 0..j-1 tokenized
    ATOMIC = "atomic"  # whole record tokenized at once (json)
    NONE = "none"  # no tokenization (fixed-width binary)


class Classification(str, enum.Enum):
    COVERED = "covered"
    IO_BOUND = "io-bound"
    CPU_BOUND = "cpu-bound"


@dataclass(frozen=True)
class Attribute:
    index: int
    name: str
    spf: float  # bytes per value in the processing representation
    t_tok: float  # seconds to tokenize one value
    t_parse: float  # seconds to parse one value

    def __post_init__(self):
        if not self.spf > 0:
            raise WorkloadError(f"attribute {self.name!r}: spf must be positive")
        if self.t_tok < 0 or self.t_parse < 0:
            raise WorkloadError(f"attribute {self.name!r}: negative extraction time")


@dataclass(frozen=True)
class CostParams:
    attributes: tuple[Attribute, ...]
    row_count: int
    raw_size: float
    bandwidth: float
    tokenization_mode: TokenizationMode = TokenizationMode.PREFIX

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "tokenization_mode", TokenizationMode(self.tokenization_mode))
        if not self.row_count > 0:
            raise WorkloadError("row_count must be positive")
        if not self.raw_size > 0:
            raise WorkloadError("raw_size must be positive")
        if not self.bandwidth > 0:
            raise WorkloadError("bandwidth must be positive")
        for pos, attr in enumerate(self.attributes):
            if attr.index != pos:
                raise WorkloadError(f"attribute {attr.name!r} has index {attr.index}, expected {pos}")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise WorkloadError("duplicate attribute names")
        if self.tokenization_mode is TokenizationMode.NONE and any(a.t_tok for a in self.attributes):
            raise WorkloadError("tokenization mode 'none' requires every t_tok to be 0")

    @property
    def n(self) -> int:
        return len(self.attributes)

    @property
    def raw_read_time(self) -> float:
        return self.raw_size / self.bandwidth

    def index_of(self, name: str) -> int:
        for attr in self.attributes:
            if attr.name == name:
                return attr.index
        raise WorkloadError(f"unknown attribute {name!r}")

    def bytes_of(self, attrs: Iterable[int]) -> float:
        """Storage taken by loading ``attrs`` (row_count * sum of spf)."""
        return self.row_count * sum(self.attributes[j].spf for j in sorted(attrs))

    def uniform_bytes(self) -> float:
        """Size of one loaded column when all spf are equal; the mean otherwise."""
        return self.row_count * float(np.mean([a.spf for a in self.attributes]))


@dataclass(frozen=True)
class Query:
    id: str
    attrs: frozenset[int]
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "attrs", frozenset(self.attrs))
        if not self.attrs:
            raise WorkloadError(f"query {self.id!r} has no attributes")
        if not self.weight >= 0 or math.isinf(self.weight):
            raise WorkloadError(f"query {self.id!r}: weight must be a finite nonnegative number")


@dataclass(frozen=True)
class Workload:
    queries: tuple[Query, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(self.queries))
        seen: dict[frozenset[int], str] = {}
        ids = set()
        for q in self.queries:
            if q.attrs in seen:
                raise WorkloadError(f"queries {seen[q.attrs]!r} and {q.id!r} access the same attribute set")
            seen[q.attrs] = q.id
            if q.id in ids:
                raise WorkloadError(f"duplicate query id {q.id!r}")
            ids.add(q.id)

    @property
    def m(self) -> int:
        return len(self.queries)

    def referenced(self) -> frozenset[int]:
        out: set[int] = set()
        for q in self.queries:
            out |= q.attrs
        return frozenset(out)

    def check_against(self, params: CostParams) -> None:
        for q in self.queries:
            bad = [j for j in q.attrs if not 0 <= j < params.n]
            if bad:
                raise WorkloadError(f"query {q.id!r} references unknown attribute index {bad[0]}")


@dataclass(frozen=True)
class LoadPlan:
    loaded: frozenset[int]
    used_bytes: float
    budget: float

    @classmethod
    def of(cls, params: CostParams, loaded: Iterable[int], budget: float = math.inf) -> "LoadPlan":
        loaded = frozenset(loaded)
        used = params.bytes_of(loaded)
        if used > budget:
            raise BudgetError(f"load set needs {used:.0f} bytes, budget is {budget:.0f}")
        return cls(loaded, used, budget)


@dataclass(frozen=True)
class QueryPlan:
    query_id: str
    reads_raw: bool
    tokenized: frozenset[int]
    parsed: frozenset[int]
    read_loaded: frozenset[int]
    classification: Classification = Classification.COVERED


@dataclass(frozen=True)
class QueryCost:
    query_id: str
    weight: float
    raw_read: float
    tokenize: float
    parse: float
    loaded_read: float
    seconds: float
    classification: Classification


@dataclass(frozen=True)
class CostReport:
    mode: str  # "serial" | "pipelined"
    load_time: float
    per_query: tuple[QueryCost, ...]
    objective: float
    loaded: frozenset[int] = field(default_factory=frozenset)

    def recomputed_objective(self) -> float:
        return self.load_time + math.fsum(q.weight * q.seconds for q in self.per_query)

    def cumulative(self, weighted: bool = True) -> list[float]:
        """Cumulative predicted seconds: entry 0 is the load, entry i the first i queries."""
        out = [self.load_time]
        for q in self.per_query:
            out.append(out[-1] + (q.weight if weighted else 1.0) * q.seconds)
        return out

    def to_dict(self, params: CostParams | None = None) -> dict:
        def names(idx):
            return [params.attributes[j].name for j in sorted(idx)] if params else sorted(idx)

        return {
            "mode": self.mode,
            "objective_sec": self.objective,
            "load_time_sec": self.load_time,
            "loaded": names(self.loaded),
            "queries": [
                {
                    "id": q.query_id,
                    "weight": q.weight,
                    "seconds": q.seconds,
                    "classification": q.classification.value,
                    "terms": {
                        "raw_read": q.raw_read,
                        "tokenize": q.tokenize,
                        "parse": q.parse,
                        "loaded_read": q.loaded_read,
                    },
                }
                for q in self.per_query
            ],
        }

    def to_csv(self, weighted: bool = True) -> str:
        lines = ["query_index,cumulative_sec"]
        lines += [f"{i},{v!r}" for i, v in enumerate(self.cumulative(weighted))]
        return "\n".join(lines) + "\n"


# -- workload documents ------------------------------------------------------


def _number(obj: dict, key: str, where: str) -> float:
    try:
        value = obj[key]
    except KeyError:
        raise WorkloadError(f"{where}: missing {key!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise WorkloadError(f"{where}: {key!r} must be a number")
    return value


def params_from_dict(doc: dict) -> CostParams:
    if not isinstance(doc, dict):
        raise WorkloadError("'params' must be an object")
    attrs = []
    raw_attrs = doc.get("attributes")
    if not isinstance(raw_attrs, list):
        raise WorkloadError("params: 'attributes' must be a list")
    for pos, a in enumerate(raw_attrs):
        where = f"attribute #{pos}"
        if not isinstance(a, dict) or not isinstance(a.get("name"), str):
            raise WorkloadError(f"{where}: needs a string 'name'")
        attrs.append(
            Attribute(
                pos,
                a["name"],
                _number(a, "spf_bytes", where),
                _number(a, "t_tok_sec", where),
                _number(a, "t_parse_sec", where),
            )
        )
    try:
        mode = TokenizationMode(doc.get("tokenization_mode", "prefix"))
    except ValueError:
        raise WorkloadError(f"unknown tokenization_mode {doc.get('tokenization_mode')!r}") from None
    row_count = _number(doc, "row_count", "params")
    if int(row_count) != row_count:
        raise WorkloadError("params: row_count must be an integer")
    return CostParams(
        tuple(attrs),
        int(row_count),
        _number(doc, "raw_size_bytes", "params"),
        _number(doc, "bandwidth_bytes_per_sec", "params"),
        mode,
    )


def params_to_dict(params: CostParams) -> dict:
    return {
        "row_count": params.row_count,
        "raw_size_bytes": params.raw_size,
        "bandwidth_bytes_per_sec": params.bandwidth,
        "tokenization_mode": params.tokenization_mode.value,
        "attributes": [
            {"name": a.name, "spf_bytes": a.spf, "t_tok_sec": a.t_tok, "t_parse_sec": a.t_parse}
            for a in params.attributes
        ],
    }


def workload_from_dict(doc: dict, params: CostParams) -> Workload:
    queries = []
    for pos, q in enumerate(doc):
        where = f"query #{pos}"
        if not isinstance(q, dict) or not isinstance(q.get("attrs"), list):
            raise WorkloadError(f"{where}: needs an 'attrs' list")
        attrs = set()
        for name in q["attrs"]:
            if not isinstance(name, str):
                raise WorkloadError(f"{where}: attribute names must be strings")
            attrs.add(params.index_of(name))
        weight = _number(q, "weight", where) if "weight" in q else 1.0
        queries.append(Query(str(q.get("id", f"Q{pos + 1}")), frozenset(attrs), float(weight)))
    return Workload(tuple(queries))


def workload_to_dict(workload: Workload, params: CostParams) -> list[dict]:
    return [
        {"id": q.id, "attrs": [params.attributes[j].name for j in sorted(q.attrs)], "weight": q.weight}
        for q in workload.queries
    ]


def parse_workload(document: str | bytes) -> tuple[CostParams, Workload]:
    """Parse a workload JSON document into validated ``(CostParams, Workload)``."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise WorkloadError(f"not a JSON document: {exc}") from None
    if not isinstance(doc, dict) or "params" not in doc:
        raise WorkloadError("workload document needs a 'params' object")
    params = params_from_dict(doc["params"])
    queries = doc.get("queries", [])
    if not isinstance(queries, list):
        raise WorkloadError("'queries' must be a list")
    return params, workload_from_dict(queries, params)


def dump_workload(params: CostParams, workload: Workload) -> str:
    doc = {"params": params_to_dict(params), "queries": workload_to_dict(workload, params)}
    return json.dumps(doc, indent=2) + "\n"


def load_workload_file(path) -> tuple[CostParams, Workload]:
    with open(path, encoding="utf-8") as fh:
        return parse_workload(fh.read())


# -- synthetic workloads -----------------------------------------------------


def gen_synthetic_workload(
    n_attrs: int,
    m_queries: int,
    mean_width: float,
    stddev_width: float,
    active_subset: int,
    seed: int,
    max_retries: int = 1000,
) -> Workload:
    """Random distinct queries with normally distributed widths and equal weights.

    Widths are rounded and clamped to ``[1, active_subset]``; attributes are drawn
    without replacement from the first ``active_subset`` attribute indices.
    """
    if not 1 <= active_subset <= n_attrs:
        raise WorkloadError("need 1 <= active_subset <= n_attrs")
    if not mean_width > 0:
        raise WorkloadError("mean_width must be positive")
    if m_queries < 0:
        raise WorkloadError("m_queries must be nonnegative")
    rng = np.random.default_rng(seed)
    queries: list[Query] = []
    seen: set[frozenset[int]] = set()
    misses = 0
    while len(queries) < m_queries:
        width = int(round(rng.normal(mean_width, stddev_width)))
        width = min(max(width, 1), active_subset)
        attrs = frozenset(int(j) for j in rng.choice(active_subset, size=width, replace=False))
        if attrs in seen:
            misses += 1
            if misses > max_retries:
                raise WorkloadError(
                    f"could not draw {m_queries} distinct queries after {max_retries} retries"
                )
            continue
        seen.add(attrs)
        queries.append(Query(f"Q{len(queries) + 1}", attrs, 0.0))
    weight = 1.0 / m_queries if m_queries else 0.0
    return Workload(tuple(Query(q.id, q.attrs, weight) for q in queries))


def uniform_params(
    n: int,
    *,
    row_count: int = 1_000_000,
    spf: float | Sequence[float] = 8.0,
    raw_size: float = 1e9,
    bandwidth: float = 1e8,
    t_tok: float | Sequence[float] = 1e-7,
    t_parse: float | Sequence[float] = 1e-7,
    mode: TokenizationMode | str = TokenizationMode.PREFIX,
    names: Sequence[str] | None = None,
) -> CostParams:
    """Convenience constructor for instances with (mostly) uniform attributes."""
    names = names or [f"A{j + 1}" for j in range(n)]
    tt = list(t_tok) if isinstance(t_tok, Sequence) else [t_tok] * n
    tp = list(t_parse) if isinstance(t_parse, Sequence) else [t_parse] * n
    sz = list(spf) if isinstance(spf, Sequence) else [spf] * n
    attrs = tuple(Attribute(j, names[j], sz[j], tt[j], tp[j]) for j in range(n))
    return CostParams(attrs, row_count, raw_size, bandwidth, TokenizationMode(mode))
