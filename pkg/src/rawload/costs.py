"""Per-query execution plans and the serial / pipelined workload cost.

A query's cost depends only on which of *its* attributes are loaded, so every
evaluator in the package goes through :class:`CostModel`, which turns
``(query attributes, loaded set)`` into a plan decision and then sums the plan's
terms in one canonical order.  Two routes that pick the same plan therefore
produce bit-identical seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import accumulate
from typing import Iterable

from .model import (
    Classification,
    CostParams,
    CostReport,
    LoadPlan,
    ModeError,
    Query,
    QueryCost,
    QueryPlan,
    TokenizationMode,
    Workload,
)

SERIAL = "serial"
PIPELINED = "pipelined"


@dataclass(frozen=True)
class PipelineThreshold:
    """Number of attributes parseable in the time of one raw scan (``math.inf`` if unbounded)."""

    pt: float

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.pt)


@dataclass(frozen=True)
class _Decision:
    reads_raw: bool
    tok_end: int  # last tokenized position, -1 for none; n-1 when tokenization is atomic
    parsed: tuple[int, ...]  # sorted
    read: tuple[int, ...]  # sorted


def _as_set(loaded) -> frozenset[int]:
    if isinstance(loaded, LoadPlan):
        return loaded.loaded
    return frozenset(loaded)


def _require_pipelined(params: CostParams) -> None:
    if params.tokenization_mode is TokenizationMode.PREFIX:
        raise ModeError(
            "pipelined costs need atomic or no tokenization; prefix tokenization cannot be classified"
        )


class CostModel:
    """Precomputed per-attribute arrays for one ``CostParams``."""

    def __init__(self, params: CostParams):
        self.params = params
        self.n = params.n
        self.rows = params.row_count
        self.band = params.bandwidth
        self.raw = params.raw_size / params.bandwidth
        self.prefix = params.tokenization_mode is TokenizationMode.PREFIX
        self.tt = [a.t_tok for a in params.attributes]
        self.tp = [a.t_parse for a in params.attributes]
        self.spf = [a.spf for a in params.attributes]
        self.rd = [a.spf / params.bandwidth for a in params.attributes]
        self.tokcum = list(accumulate(self.tt))
        self.parse_cheaper = [tp < rd for tp, rd in zip(self.tp, self.rd)]
        self._pt: PipelineThreshold | None = None

    # -- plan decisions ------------------------------------------------------

    def decide(self, attrs: tuple[int, ...], loaded) -> _Decision:
        """Cheapest serial plan for a query with sorted ``attrs`` given ``loaded``.

        ``loaded`` is a set of indices or an int bitmask.
        """
        tp, rd, cheaper = self.tp, self.rd, self.parse_cheaper
        if isinstance(loaded, int):
            have = [j for j in attrs if loaded >> j & 1]
            unloaded = [j for j in attrs if not loaded >> j & 1]
        else:
            have = [j for j in attrs if j in loaded]
            unloaded = [j for j in attrs if j not in loaded]
        base = 0.0
        for j in unloaded:
            base += tp[j]
        covered_cost = None
        if not unloaded:
            covered_cost = 0.0
            for j in have:
                covered_cost += rd[j]

        if self.prefix:
            # candidate prefix ends: the last unloaded attribute, then every later
            # loaded attribute that is cheaper to parse than to read
            first = unloaded[-1] if unloaded else -1
            running = base
            for j in have:
                running += min(tp[j], rd[j]) if j <= first else rd[j]
            best = None
            best_end = -1
            if unloaded:
                best, best_end = self.tokcum[first] + running, first
            for j in have:
                if j > first and cheaper[j]:
                    running += tp[j] - rd[j]
                    c = self.tokcum[j] + running
                    if best is None or c < best:
                        best, best_end = c, j
            if best is None:
                return _Decision(False, -1, (), tuple(have))
            if covered_cost is not None and self.rows * covered_cost <= self.raw + self.rows * best:
                return _Decision(False, -1, (), tuple(have))
            parsed = sorted(unloaded + [j for j in have if j <= best_end and cheaper[j]])
            read = tuple(j for j in have if not (j <= best_end and cheaper[j]))
            return _Decision(True, best_end, tuple(parsed), read)

        extra = [j for j in have if cheaper[j]]
        if not unloaded and not extra:
            return _Decision(False, -1, (), tuple(have))
        if covered_cost is not None:
            c = self.tokcum[-1] + base
            for j in have:
                c += min(tp[j], rd[j])
            if self.rows * covered_cost <= self.raw + self.rows * c:
                return _Decision(False, -1, (), tuple(have))
        parsed = sorted(unloaded + extra)
        read = tuple(j for j in have if not cheaper[j])
        return _Decision(True, self.n - 1, tuple(parsed), read)

    # -- canonical term sums -------------------------------------------------

    def terms(self, d: _Decision) -> tuple[float, float, float, float]:
        """(raw_read, tokenize, parse, loaded_read) seconds of a decision."""
        rows = self.rows
        raw = self.raw if d.reads_raw else 0.0
        tok = rows * self.tokcum[d.tok_end] if d.reads_raw and d.tok_end >= 0 else 0.0
        ps = 0.0
        for j in d.parsed:
            ps += self.tp[j]
        rs = 0.0
        for j in d.read:
            rs += self.spf[j]
        return raw, tok, rows * ps, rows * rs / self.band

    def query_seconds(self, attrs: tuple[int, ...], loaded, pipelined: bool = False) -> float:
        raw, tok, parse, read = self.terms(self.decide(attrs, loaded))
        if pipelined:
            return read + max(raw, tok + parse)
        return raw + tok + parse + read

    def load_seconds(self, loaded) -> float:
        if not loaded:
            return 0.0
        order = sorted(loaded)
        rows = self.rows
        tok = rows * (self.tokcum[order[-1]] if self.prefix else self.tokcum[-1])
        ps = 0.0
        ss = 0.0
        for j in order:
            ps += self.tp[j]
            ss += self.spf[j]
        return self.raw + tok + rows * ps + rows * ss / self.band

    def objective(self, workload: Workload, loaded, pipelined: bool = False) -> float:
        total = self.load_seconds(loaded)
        for q in workload.queries:
            total += q.weight * self.query_seconds(tuple(sorted(q.attrs)), loaded, pipelined)
        return total

    # -- pipelined classification --------------------------------------------

    def threshold(self) -> PipelineThreshold:
        if self._pt is None:
            self._pt = parse_threshold(self.params)
        return self._pt

    def classify_decision(self, d: _Decision, pipelined: bool) -> Classification:
        if not d.reads_raw:
            return Classification.COVERED
        if pipelined or not self.prefix:
            return classify_count(len(d.parsed), self.threshold())
        raw, tok, parse, _ = self.terms(d)
        return Classification.CPU_BOUND if tok + parse >= raw else Classification.IO_BOUND


def classify_count(n_parsed: int, pt: PipelineThreshold) -> Classification:
    # C17 is strict: sum(p) - PT < cpu * n, so sum(p) == PT already forces cpu = 1
    return Classification.CPU_BOUND if n_parsed >= pt.pt else Classification.IO_BOUND


def _plan_from_decision(model: CostModel, query: Query, d: _Decision, pipelined: bool) -> QueryPlan:
    if d.reads_raw:
        tokenized = frozenset(range(d.tok_end + 1))
    else:
        tokenized = frozenset()
    return QueryPlan(
        query.id,
        d.reads_raw,
        tokenized,
        frozenset(d.parsed),
        frozenset(d.read),
        model.classify_decision(d, pipelined),
    )


def derive_query_plan(params: CostParams, loaded, query: Query, model: CostModel | None = None) -> QueryPlan:
    """Minimum serial-cost plan for ``query`` given the loaded attributes."""
    model = model or CostModel(params)
    d = model.decide(tuple(sorted(query.attrs)), _as_set(loaded))
    return _plan_from_decision(model, query, d, pipelined=False)


def load_time(params: CostParams, loaded, model: CostModel | None = None) -> float:
    if isinstance(loaded, LoadPlan):
        LoadPlan.of(params, loaded.loaded, loaded.budget)
    model = model or CostModel(params)
    return model.load_seconds(_as_set(loaded))


def _decision_of(plan: QueryPlan) -> _Decision:
    return _Decision(plan.reads_raw, -1, tuple(sorted(plan.parsed)), tuple(sorted(plan.read_loaded)))


def plan_terms(params: CostParams, plan: QueryPlan, model: CostModel | None = None):
    """(raw_read, tokenize, parse, loaded_read) seconds of an explicit plan."""
    model = model or CostModel(params)
    raw, _, parse, read = model.terms(_decision_of(plan))
    s = 0.0
    for j in sorted(plan.tokenized):
        s += model.tt[j]
    return raw, params.row_count * s, parse, read


def query_time_serial(params: CostParams, plan: QueryPlan, model: CostModel | None = None) -> float:
    raw, tok, parse, read = plan_terms(params, plan, model)
    return raw + tok + parse + read


def query_time_pipelined(
    params: CostParams, plan: QueryPlan, pt: PipelineThreshold | None = None, model: CostModel | None = None
) -> float:
    """Loaded reads plus the larger of raw access and extraction."""
    _require_pipelined(params)
    raw, tok, parse, read = plan_terms(params, plan, model)
    return read + max(raw, tok + parse)


def query_time_linearized(
    params: CostParams, plan: QueryPlan, classification: Classification, model: CostModel | None = None
) -> float:
    """Pipelined time with the max replaced by the branch the classification selects."""
    _require_pipelined(params)
    raw, tok, parse, read = plan_terms(params, plan, model)
    if classification is Classification.CPU_BOUND:
        return read + (tok + parse)
    if classification is Classification.IO_BOUND:
        return raw + read
    return read


def parse_threshold(params: CostParams) -> PipelineThreshold:
    _require_pipelined(params)
    rows = params.row_count
    numerator = params.raw_read_time - rows * sum(a.t_tok for a in params.attributes)
    parse_total = sum(a.t_parse for a in params.attributes)
    if parse_total == 0:
        return PipelineThreshold(math.inf)
    if numerator <= 0:
        return PipelineThreshold(0)
    return PipelineThreshold(math.ceil(numerator / (rows * parse_total / params.n)))


def classify_query(plan: QueryPlan, pt: PipelineThreshold) -> Classification:
    if not plan.reads_raw:
        return Classification.COVERED
    return classify_count(len(plan.parsed), pt)


def _report(params: CostParams, workload: Workload, loaded, pipelined: bool, model: CostModel | None) -> CostReport:
    model = model or CostModel(params)
    loaded = _as_set(loaded)
    t_load = model.load_seconds(loaded)
    total = t_load
    rows = []
    for q in workload.queries:
        d = model.decide(tuple(sorted(q.attrs)), loaded)
        raw, tok, parse, read = model.terms(d)
        secs = read + max(raw, tok + parse) if pipelined else raw + tok + parse + read
        total += q.weight * secs
        rows.append(
            QueryCost(q.id, q.weight, raw, tok, parse, read, secs, model.classify_decision(d, pipelined))
        )
    return CostReport(PIPELINED if pipelined else SERIAL, t_load, tuple(rows), total, loaded)


def report_for_plans(
    params: CostParams, workload: Workload, loaded, plans: list[QueryPlan], mode: str = SERIAL
) -> CostReport:
    """Predicted costs of explicit per-query plans, e.g. the ones a run executed."""
    if mode not in (SERIAL, PIPELINED):
        raise ValueError(f"unknown mode {mode!r}")
    pipelined = mode == PIPELINED
    if pipelined:
        _require_pipelined(params)
    model = CostModel(params)
    loaded = _as_set(loaded)
    t_load = model.load_seconds(loaded)
    total = t_load
    rows = []
    for q, plan in zip(workload.queries, plans, strict=True):
        raw, tok, parse, read = plan_terms(params, plan, model)
        secs = read + max(raw, tok + parse) if pipelined else raw + tok + parse + read
        total += q.weight * secs
        if not plan.reads_raw:
            cls = Classification.COVERED
        elif pipelined or not model.prefix:
            cls = classify_count(len(plan.parsed), model.threshold())
        else:
            cls = Classification.CPU_BOUND if tok + parse >= raw else Classification.IO_BOUND
        rows.append(QueryCost(q.id, q.weight, raw, tok, parse, read, secs, cls))
    return CostReport(mode, t_load, tuple(rows), total, loaded)


def objective_serial(params: CostParams, workload: Workload, loaded, model: CostModel | None = None) -> CostReport:
    if isinstance(loaded, LoadPlan):
        LoadPlan.of(params, loaded.loaded, loaded.budget)
    return _report(params, workload, loaded, False, model)


def objective_pipelined(params: CostParams, workload: Workload, loaded, model: CostModel | None = None) -> CostReport:
    _require_pipelined(params)
    if isinstance(loaded, LoadPlan):
        LoadPlan.of(params, loaded.loaded, loaded.budget)
    return _report(params, workload, loaded, True, model)


def evaluate(params: CostParams, workload: Workload, loaded: Iterable[int], mode: str = SERIAL) -> CostReport:
    if mode == PIPELINED:
        return objective_pipelined(params, workload, loaded)
    if mode != SERIAL:
        raise ValueError(f"unknown mode {mode!r}")
    return objective_serial(params, workload, loaded)


class WorkloadCost:
    """Objective of a fixed workload over bitmask load sets, memoized per query.

    A query's seconds depend only on ``loaded & mask(query)``, so after one
    attribute is added only the queries touching it are re-derived.  Totals are
    accumulated exactly like :meth:`CostModel.objective`.
    """

    def __init__(self, params: CostParams, workload: Workload, mode: str = SERIAL):
        if mode not in (SERIAL, PIPELINED):
            raise ValueError(f"unknown mode {mode!r}")
        self.pipelined = mode == PIPELINED
        if self.pipelined:
            _require_pipelined(params)
        self.mode = mode
        self.params = params
        self.workload = workload
        self.model = CostModel(params)
        self.attrs = [tuple(sorted(q.attrs)) for q in workload.queries]
        self.masks = [sum(1 << j for j in a) for a in self.attrs]
        self.weights = [q.weight for q in workload.queries]
        self.col_bytes = [params.row_count * a.spf for a in params.attributes]
        rows = params.row_count
        # parse -> read swap of a newly loaded attribute that is cheaper to read
        self.swap = [
            None if cheap else (rows * tp, rows * rd)
            for cheap, tp, rd in zip(self.model.parse_cheaper, self.model.tp, self.model.rd)
        ]
        self.touching: dict[int, list[int]] = {}
        for i, attrs in enumerate(self.attrs):
            for j in attrs:
                self.touching.setdefault(j, []).append(i)
        self.referenced = sorted(self.touching)
        self._q: dict[tuple[int, int], tuple] = {}
        self._load: dict[int, float] = {}
        self._total: dict[int, float] = {}
        self.evaluations = 0

    @staticmethod
    def bits(mask: int) -> list[int]:
        out = []
        while mask:
            low = mask & -mask
            out.append(low.bit_length() - 1)
            mask ^= low
        return out

    @staticmethod
    def mask_of(attrs: Iterable[int]) -> int:
        m = 0
        for j in attrs:
            m |= 1 << j
        return m

    def used_bytes(self, mask: int) -> float:
        s = 0.0
        for j in self.bits(mask):
            s += self.params.attributes[j].spf
        return self.params.row_count * s

    def _query(self, i: int, mask: int) -> tuple:
        """(seconds, n_parsed, reads_raw, raw, tok, parse, read, last_unloaded, n_unloaded)."""
        key = (i, mask & self.masks[i])
        hit = self._q.get(key)
        if hit is None:
            model = self.model
            attrs = self.attrs[i]
            d = model.decide(attrs, key[1])
            raw, tok, parse, read = model.terms(d)
            secs = read + max(raw, tok + parse) if self.pipelined else raw + tok + parse + read
            unloaded = [j for j in attrs if not key[1] >> j & 1]
            hit = (secs, len(d.parsed), d.reads_raw, raw, tok, parse, read,
                   unloaded[-1] if unloaded else -1, len(unloaded))
            self._q[key] = hit
        return hit

    def _after(self, i: int, mask: int, add: int) -> float:
        """Seconds of query ``i`` once ``add`` (unloaded attributes of it) is loaded too.

        While the last unloaded attribute stays unloaded the best prefix end does
        not move, so the new attributes only swap parse for read where reading
        is cheaper.  Otherwise the query is re-derived.
        """
        ent = self._query(i, mask)
        model = self.model
        if model.prefix:
            fast = not add >> ent[7] & 1
        else:
            fast = ent[8] > bin(add).count("1")
        if not fast:
            return self._query(i, mask | add)[0]
        raw, tok, parse, read = ent[3:7]
        swap = self.swap
        while add:
            low = add & -add
            add ^= low
            s = swap[low.bit_length() - 1]
            if s is not None:
                parse -= s[0]
                read += s[1]
        return read + max(raw, tok + parse) if self.pipelined else raw + tok + parse + read

    def query_seconds(self, i: int, mask: int) -> float:
        return self._query(i, mask)[0]

    def load_seconds(self, mask: int) -> float:
        v = self._load.get(mask)
        if v is None:
            v = self.model.load_seconds(self.bits(mask))
            self._load[mask] = v
        return v

    def load_increments(self, mask: int) -> list[float]:
        """Extra load seconds from adding each single attribute to ``mask``."""
        model = self.model
        if not mask:
            return [model.load_seconds((j,)) for j in range(self.model.n)]
        rows, band = model.rows, model.band
        base = [rows * (tp + s / band) for tp, s in zip(model.tp, model.spf)]
        if not model.prefix:
            return base
        end = mask.bit_length() - 1
        at_end = model.tokcum[end]
        return [b + rows * (model.tokcum[j] - at_end) if j > end else b for j, b in enumerate(base)]

    def total(self, mask: int) -> float:
        v = self._total.get(mask)
        if v is None:
            self.evaluations += 1
            v = self.load_seconds(mask)
            for i, w in enumerate(self.weights):
                v += w * self._query(i, mask)[0]
            self._total[mask] = v
        return v

    def delta(self, mask: int, add: int) -> float:
        """cost(mask | add) - cost(mask), touching only the affected queries."""
        new = add & ~mask
        if not new:
            return 0.0
        to = mask | new
        affected: set[int] = set()
        for j in self.bits(new):
            affected.update(self.touching.get(j, ()))
        d = self.load_seconds(to) - self.load_seconds(mask)
        for i in sorted(affected):
            w = self.weights[i]
            if w:
                d += w * (self._after(i, mask, new & self.masks[i]) - self._query(i, mask)[0])
        return d

    def cpu_bound(self, mask: int) -> list[int]:
        """Indices of queries that read raw data and classify as cpu-bound."""
        pt = self.model.threshold()
        out = []
        for i in range(len(self.attrs)):
            _, n_parsed, reads_raw = self._query(i, mask)[:3]
            if reads_raw and classify_count(n_parsed, pt) is Classification.CPU_BOUND:
                out.append(i)
        return out

    def report(self, loaded) -> CostReport:
        return _report(self.params, self.workload, loaded, self.pipelined, self.model)

    def after_single_additions(self, i: int, mask: int) -> dict[int, float]:
        """Seconds of query ``i`` after loading each one of its missing attributes."""
        key = mask & self.masks[i]
        return {j: self._after(i, key, 1 << j) for j in self.attrs[i] if not key >> j & 1}
