"""Two-stage greedy load selection: query coverage, then attribute usage frequency.

``combined`` sweeps the budget split between the stages in ``delta`` steps and
keeps the cheapest union.  In pipelined mode the frequency stage only considers
attributes of queries that are currently cpu-bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .costs import PIPELINED, SERIAL, WorkloadCost
from .model import CostParams, CostReport, Workload

MAX_SWEEP_STEPS = 10_000


@dataclass(frozen=True)
class HeuristicConfig:
    delta: float | None = None  # bytes; None means budget / 10
    mode: str = SERIAL

    def steps(self, budget: float) -> list[float]:
        """Coverage budgets 0, delta, 2*delta, ... up to and including ``budget``."""
        if budget <= 0:
            return [0.0]
        delta = budget / 10 if self.delta is None else self.delta
        if not 0 < delta <= budget:
            raise ValueError("delta must satisfy 0 < delta <= budget")
        count = math.floor(budget / delta)
        if count > MAX_SWEEP_STEPS:
            raise ValueError(f"budget/delta = {count} exceeds {MAX_SWEEP_STEPS} sweep steps")
        out = [min(k * delta, budget) for k in range(count + 1)]
        if budget - out[-1] <= 1e-9 * budget:
            out[-1] = float(budget)  # k * delta can land an ulp off the budget
        else:
            out.append(float(budget))
        return out


@dataclass
class SweepPoint:
    coverage_budget: float
    coverage: frozenset[int]
    loaded: frozenset[int]
    objective: float


@dataclass
class HeuristicResult:
    loaded: frozenset[int]
    report: CostReport
    sweep: list[SweepPoint] = field(default_factory=list)


class _Stages:
    """Greedy stages over one ``WorkloadCost``; caches survive across sweep points."""

    def __init__(self, wc: WorkloadCost):
        self.wc = wc
        self._tables: dict[int, list[list]] = {}
        self._rows: dict[tuple[int, int], dict[int, float]] = {}

    def _coverage_table(self, mask: int) -> list[list]:
        """Entries ``[query, extra bytes, gain or None]``; gains are filled on demand."""
        table = self._tables.get(mask)
        if table is None:
            wc = self.wc
            table = []
            for k, qmask in enumerate(wc.masks):
                new = qmask & ~mask
                if not new:
                    continue  # already covered
                extra = 0.0
                for j in wc.bits(new):
                    extra += wc.col_bytes[j]
                table.append([k, extra, None])
            self._tables[mask] = table
        return table

    def coverage(self, budget: float) -> int:
        wc = self.wc
        mask = 0
        used = 0.0
        while used < budget:
            best = -1
            best_score = 0.0
            best_gain = 0.0
            for entry in self._coverage_table(mask):
                k, extra, gain = entry
                if used + extra > budget:
                    continue
                if gain is None:
                    gain = entry[2] = -wc.delta(mask, wc.masks[k])
                score = gain / extra
                if best < 0 or score > best_score:
                    best, best_score, best_gain = k, score, gain
            if best < 0 or best_gain <= 0:
                break
            mask |= wc.masks[best]
            used = wc.used_bytes(mask)
        return mask

    def _row(self, i: int, mask: int) -> dict[int, float]:
        """Weighted saving on query ``i`` from loading each of its missing attributes."""
        wc = self.wc
        key = (i, mask & wc.masks[i])
        row = self._rows.get(key)
        if row is None:
            mask = key[1]
            w = wc.weights[i]
            now = wc.query_seconds(i, mask)
            row = {j: w * (now - after) for j, after in wc.after_single_additions(i, mask).items()}
            self._rows[key] = row
        return row

    def frequency(self, budget: float, seed: int) -> int:
        """Add the attribute with the largest saving until nothing more fits.

        A single attribute may not pay for the raw pass the load adds, while
        several together do, so steps continue through losses; the cheapest
        set seen on the way (possibly ``seed`` itself) is returned.
        """
        wc = self.wc
        mask = best_mask = seed
        best_total = wc.total(mask)
        used = wc.used_bytes(mask)
        col_bytes = wc.col_bytes
        rows = [self._row(i, mask) for i in range(len(wc.attrs))]
        while used < budget:
            if wc.pipelined:
                pool: set[int] = set()
                for i in wc.cpu_bound(mask):
                    pool.update(wc.attrs[i])
                candidates = sorted(j for j in pool if not mask >> j & 1)
            else:
                candidates = [j for j in wc.referenced if not mask >> j & 1]
            load_more = wc.load_increments(mask)
            best = -1
            best_gain = -math.inf
            for j in candidates:
                if used + col_bytes[j] > budget:
                    continue
                gain = -load_more[j]
                for i in wc.touching[j]:
                    gain += rows[i][j]
                if gain > best_gain:
                    best, best_gain = j, gain
            if best < 0:
                break
            mask |= 1 << best
            used = wc.used_bytes(mask)
            for i in wc.touching[best]:
                rows[i] = self._row(i, mask)
            total = wc.total(mask)
            if total < best_total:
                best_mask, best_total = mask, total
        return best_mask


def _cost(params, workload, mode, wc):
    if wc is None:
        return WorkloadCost(params, workload, mode)
    return wc


def query_coverage(
    params: CostParams, workload: Workload, budget: float, mode: str = SERIAL, *, cost: WorkloadCost | None = None
) -> frozenset[int]:
    """Greedily cover whole queries, best cost reduction per byte first."""
    wc = _cost(params, workload, mode, cost)
    return frozenset(wc.bits(_Stages(wc).coverage(budget)))


def attribute_frequency(
    params: CostParams,
    workload: Workload,
    budget: float,
    seeded=frozenset(),
    mode: str = SERIAL,
    *,
    cost: WorkloadCost | None = None,
) -> frozenset[int]:
    """Add single attributes by largest cost reduction until nothing fits or helps."""
    wc = _cost(params, workload, mode, cost)
    seed = wc.mask_of(seeded)
    if wc.used_bytes(seed) > budget:
        raise ValueError("seeded attributes exceed the budget")
    return frozenset(wc.bits(_Stages(wc).frequency(budget, seed)))


def combined_sweep(
    params: CostParams, workload: Workload, budget: float, config: HeuristicConfig | None = None
) -> HeuristicResult:
    config = config or HeuristicConfig()
    wc = WorkloadCost(params, workload, config.mode)
    stages = _Stages(wc)
    after_seed: dict[int, int] = {}
    sweep: list[SweepPoint] = []
    best_mask, best_obj = 0, math.inf
    for step in config.steps(budget):
        seed = stages.coverage(step)
        if seed not in after_seed:
            # frequency gets the whole budget; the seed already occupies part of it
            after_seed[seed] = stages.frequency(budget, seed)
        mask = after_seed[seed]
        obj = wc.total(mask)
        sweep.append(SweepPoint(step, frozenset(wc.bits(seed)), frozenset(wc.bits(mask)), obj))
        if obj < best_obj:
            best_mask, best_obj = mask, obj
    loaded = frozenset(wc.bits(best_mask))
    return HeuristicResult(loaded, wc.report(loaded), sweep)


def combined(
    params: CostParams, workload: Workload, budget: float, config: HeuristicConfig | None = None
) -> tuple[frozenset[int], CostReport]:
    res = combined_sweep(params, workload, budget, config)
    return res.loaded, res.report


def combined_pipelined(
    params: CostParams, workload: Workload, budget: float, config: HeuristicConfig | None = None
) -> tuple[frozenset[int], CostReport]:
    config = config or HeuristicConfig()
    if config.mode != PIPELINED:
        config = HeuristicConfig(config.delta, PIPELINED)
    return combined(params, workload, budget, config)
