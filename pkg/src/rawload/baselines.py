"""Vertical-partitioning baselines adapted to a single budget-bounded loaded partition."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .costs import SERIAL, WorkloadCost
from .model import CostParams, Workload


class TooManyGroups(ValueError):
    """Column-group generation exceeded its cap; raise the threshold."""


def affinity_matrix(params: CostParams, workload: Workload) -> np.ndarray:
    """Weighted co-occurrence counts; the diagonal holds each attribute's usage."""
    aff = np.zeros((params.n, params.n))
    for q in workload.queries:
        idx = np.fromiter(sorted(q.attrs), dtype=np.intp)
        aff[np.ix_(idx, idx)] += q.weight
    return aff


def bond_energy_order(aff: np.ndarray) -> list[int]:
    """Bond-energy ordering seeded with the highest-affinity pair.

    Each step inserts the remaining attribute and position with the largest
    contribution ``2 bond(left, a) + 2 bond(a, right) - 2 bond(left, right)``.
    """
    n = aff.shape[0]
    bond = aff @ aff  # bond(x, y) = sum_z aff[z, x] * aff[z, y]
    off = aff.copy()
    np.fill_diagonal(off, -np.inf)
    s1, s2 = divmod(int(np.argmax(off)), n)
    order = [min(s1, s2), max(s1, s2)]
    rest = [j for j in range(n) if j not in order]
    while rest:
        best = None
        for a in rest:
            for pos in range(len(order) + 1):
                left = order[pos - 1] if pos > 0 else None
                right = order[pos] if pos < len(order) else None
                c = 0.0
                if left is not None:
                    c += 2 * bond[left, a]
                if right is not None:
                    c += 2 * bond[a, right]
                if left is not None and right is not None:
                    c -= 2 * bond[left, right]
                if best is None or c > best[0]:
                    best = (c, a, pos)
        _, a, pos = best
        order.insert(pos, a)
        rest.remove(a)
    return order


def best_split(wc: WorkloadCost, order: list[int], budget: float) -> tuple[frozenset[int], float]:
    """Cheapest feasible prefix or suffix of ``order``."""
    best, best_obj = frozenset(), math.inf
    for s in range(len(order) + 1):
        for side in (order[:s], order[s:]):
            mask = wc.mask_of(side)
            if wc.used_bytes(mask) > budget:
                continue
            obj = wc.total(mask)
            if obj < best_obj:
                best, best_obj = frozenset(side), obj
    return best, best_obj


def navathe(params: CostParams, workload: Workload, budget: float, mode: str = SERIAL) -> frozenset[int]:
    if params.n < 2:
        raise ValueError("navathe needs at least two attributes")
    wc = WorkloadCost(params, workload, mode)
    order = bond_energy_order(affinity_matrix(params, workload))
    return best_split(wc, order, budget)[0]


@dataclass
class ChuResult:
    loaded: frozenset[int]
    objective: float
    evaluated: int
    capped: bool


def chu_search(
    params: CostParams,
    workload: Workload,
    budget: float,
    time_cap: float = 60.0,
    mode: str = SERIAL,
    workers: int = 1,
) -> ChuResult:
    """Best loaded set that fully serves at least one query, smallest sets first.

    Level 0 holds the queries' own attribute sets; each later level adds one
    more referenced attribute.  Sets over budget are dropped together with all
    their supersets.  Stops when exhausted or after ``time_cap`` seconds.
    ``workers`` is accepted for interface parity; the search runs in-process.
    """
    if not time_cap > 0:
        raise ValueError("time_cap must be positive")
    wc = WorkloadCost(params, workload, mode)
    deadline = time.monotonic() + time_cap
    col = wc.col_bytes
    best_mask, best_obj = 0, wc.total(0)
    evaluated = 1
    capped = False
    level = sorted({m for m in wc.masks if wc.used_bytes(m) <= budget})
    seen = set(level)
    while level and not capped:
        nxt = []
        for mask in level:
            obj = wc.total(mask)
            evaluated += 1
            if obj < best_obj:
                best_mask, best_obj = mask, obj
            if time.monotonic() > deadline:
                capped = True
                break
            used = wc.used_bytes(mask)
            for j in wc.referenced:
                if mask >> j & 1 or used + col[j] > budget:
                    continue
                u = mask | 1 << j
                if u not in seen:
                    seen.add(u)
                    nxt.append(u)
        level = sorted(nxt)
    return ChuResult(frozenset(wc.bits(best_mask)), best_obj, evaluated, capped)


def chu(
    params: CostParams,
    workload: Workload,
    budget: float,
    time_cap: float = 60.0,
    mode: str = SERIAL,
    workers: int = 1,
) -> frozenset[int]:
    return chu_search(params, workload, budget, time_cap, mode, workers).loaded


def _weight_where(workload: Workload, pred) -> float:
    return math.fsum(q.weight for q in workload.queries if pred(q.attrs))


def column_groups(
    workload: Workload, threshold: float, max_groups: int = 100_000
) -> list[tuple[frozenset[int], float, float]]:
    """Frequent co-occurring groups as ``(group, cg_cost, vp_confidence)``, best first.

    cg_cost is the weighted share of queries that reference the whole group;
    it shrinks as a group grows, so groups are grown level by level.
    vp_confidence is that weight over the weight of queries touching any
    member.  Ranking: vp_confidence, then size, then attribute order.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    total = math.fsum(q.weight for q in workload.queries)
    if total <= 0:
        return []
    # tiny slack so that threshold 1 admits groups whose fsum share rounds below 1
    floor = threshold * (1 - 1e-12)

    def cg(group):
        return _weight_where(workload, lambda a: group <= a) / total

    level = {}
    for j in sorted(workload.referenced()):
        g = frozenset([j])
        c = cg(g)
        if c > 0 and c >= floor:
            level[g] = c
    found = dict(level)
    while level:
        nxt = {}
        items = sorted(level, key=sorted)
        for x in range(len(items)):
            for y in range(x + 1, len(items)):
                g = items[x] | items[y]
                if len(g) != len(items[x]) + 1 or g in nxt:
                    continue
                if any(g - {j} not in level for j in g):
                    continue
                c = cg(g)
                if c > 0 and c >= floor:
                    nxt[g] = c
                    if len(found) + len(nxt) > max_groups:
                        raise TooManyGroups(f"more than {max_groups} column groups at threshold {threshold}")
        found.update(nxt)
        level = nxt
    out = []
    for g, c in found.items():
        touching = _weight_where(workload, lambda a, g=g: not g.isdisjoint(a))
        out.append((g, c, c * total / touching))
    out.sort(key=lambda t: (-t[2], -len(t[0]), sorted(t[0])))
    return out


def agrawal(
    params: CostParams,
    workload: Workload,
    budget: float,
    cg_cost_threshold: float = 0.2,
    mode: str = SERIAL,
    max_groups: int = 100_000,
) -> frozenset[int]:
    """Walk ranked column groups, loading their missing attributes one at a time.

    Within a group the attribute giving the lowest objective goes next while it
    fits.  Of those additions, the prefix with the lowest objective is kept
    (possibly none): loading part of a query rarely helps until all of it is in.
    """
    wc = WorkloadCost(params, workload, mode)
    mask = 0
    col = wc.col_bytes
    for group, _, _ in column_groups(workload, cg_cost_threshold, max_groups):
        pending = sorted(j for j in group if not mask >> j & 1)
        keep, keep_obj = mask, wc.total(mask)
        trial = mask
        while pending:
            used = wc.used_bytes(trial)
            best, best_obj = -1, math.inf
            for j in pending:
                if used + col[j] > budget:
                    continue
                obj = wc.total(trial | 1 << j)
                if obj < best_obj:
                    best, best_obj = j, obj
            if best < 0:
                break
            trial |= 1 << best
            pending.remove(best)
            if best_obj < keep_obj:
                keep, keep_obj = trial, best_obj
        mask = keep
    return frozenset(wc.bits(mask))
