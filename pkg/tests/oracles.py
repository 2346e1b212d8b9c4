"""Independent reference implementations used as test oracles.

Everything here is written from the cost definitions directly, in exact
rational arithmetic, without touching ``rawload.costs``.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from rawload.model import Query, TokenizationMode, Workload, uniform_params

REGIMES = ("raw", "cpu", "mixed", "slow-read")


def F(x) -> Fraction:
    return Fraction(x)


def random_params(rng: np.random.Generator, n: int, regime: str = "mixed", mode="prefix"):
    rows = int(rng.integers(10**4, 10**6))
    spf = [float(s) for s in rng.choice([1.0, 2.0, 4.0, 8.0], n)]
    if regime == "raw":
        band, raw_size = 1e8, rows * n * float(rng.uniform(20, 60))
        tt, tp = rng.uniform(1e-10, 5e-9, n), rng.uniform(1e-9, 2e-8, n)
    elif regime == "cpu":
        band, raw_size = 1e9, rows * n * float(rng.uniform(4, 10))
        tt, tp = rng.uniform(1e-9, 2e-8, n), rng.uniform(2e-8, 2e-7, n)
    elif regime == "slow-read":
        band, raw_size = 2e7, rows * n * float(rng.uniform(5, 20))
        tt, tp = rng.uniform(1e-10, 5e-9, n), rng.uniform(1e-8, 8e-7, n)
    else:
        band = float(10 ** rng.uniform(7, 9.5))
        raw_size = rows * n * float(10 ** rng.uniform(0.3, 2))
        tt = 10 ** rng.uniform(-10, -7, n)
        tp = 10 ** rng.uniform(-9, -6, n)
    mode = TokenizationMode(mode)
    if mode is TokenizationMode.NONE:
        tt = np.zeros(n)
    return uniform_params(
        n, row_count=rows, spf=spf, raw_size=raw_size, bandwidth=band,
        t_tok=[float(x) for x in tt], t_parse=[float(x) for x in tp], mode=mode,
    )


def random_workload(rng: np.random.Generator, n: int, m: int, weighted: bool = True) -> Workload:
    seen, queries = set(), []
    while len(queries) < m:
        width = int(rng.integers(1, n + 1))
        attrs = frozenset(int(j) for j in rng.choice(n, size=width, replace=False))
        if attrs in seen:
            continue
        seen.add(attrs)
        w = float(rng.uniform(0.1, 3.0)) if weighted else 1.0
        queries.append(Query(f"Q{len(queries) + 1}", attrs, w))
    return Workload(tuple(queries))


def random_instance(seed: int, n_max: int = 10, m_max: int = 8, mode="prefix", regime=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    m = min(m, 2**n - 1)
    regime = regime or REGIMES[seed % len(REGIMES)]
    return random_params(rng, n, regime, mode), random_workload(rng, n, m)


# -- exact costs ---------------------------------------------------------------


def exact_load(params, loaded) -> Fraction:
    if not loaded:
        return Fraction(0)
    rows, band = F(params.row_count), F(params.bandwidth)
    a = params.attributes
    end = max(loaded) if params.tokenization_mode is TokenizationMode.PREFIX else params.n - 1
    tok = sum((F(a[j].t_tok) for j in range(end + 1)), Fraction(0))
    parse = sum((F(a[j].t_parse) for j in loaded), Fraction(0))
    size = sum((F(a[j].spf) for j in loaded), Fraction(0))
    return F(params.raw_size) / band + rows * (tok + parse + size / band)


def exact_terms(params, reads_raw, tokenized, parsed, read):
    rows, band = F(params.row_count), F(params.bandwidth)
    a = params.attributes
    raw = F(params.raw_size) / band if reads_raw else Fraction(0)
    tok = rows * sum((F(a[j].t_tok) for j in tokenized), Fraction(0))
    parse = rows * sum((F(a[j].t_parse) for j in parsed), Fraction(0))
    rd = rows * sum((F(a[j].spf) for j in read), Fraction(0)) / band
    return raw, tok, parse, rd


def exact_serial(params, plan) -> Fraction:
    return sum(exact_terms(params, plan.reads_raw, plan.tokenized, plan.parsed, plan.read_loaded))


def exact_pipelined(params, plan) -> Fraction:
    raw, tok, parse, rd = exact_terms(params, plan.reads_raw, plan.tokenized, plan.parsed, plan.read_loaded)
    return rd + max(raw, tok + parse)


def feasible_plans(params, attrs, loaded):
    """Every (reads_raw, tokenized, parsed, read) assignment allowed by the constraints.

    Reads only come from loaded attributes; each query attribute is parsed
    or read, never both; parsing needs tokenizing, tokenizing needs the raw
    file; prefix tokenization is closed downward, atomic is all-or-nothing.
    """
    attrs = sorted(attrs)
    n = params.n
    prefix = params.tokenization_mode is TokenizationMode.PREFIX
    if set(attrs) <= set(loaded):
        yield False, frozenset(), frozenset(), frozenset(attrs)
    have = [j for j in attrs if j in loaded]
    must = [j for j in attrs if j not in loaded]
    for r in range(len(have) + 1):
        for extra in itertools.combinations(have, r):
            parsed = frozenset(must) | frozenset(extra)
            read = frozenset(have) - frozenset(extra)
            if prefix:
                lo = max(parsed) if parsed else -1
                ends = range(lo, n)
                toks = [frozenset(range(e + 1)) for e in ends]
            else:
                toks = [frozenset(range(n))] + ([frozenset()] if not parsed else [])
            for tokenized in toks:
                yield True, tokenized, parsed, read


def best_plan_cost(params, attrs, loaded) -> Fraction:
    return min(sum(exact_terms(params, *plan)) for plan in feasible_plans(params, attrs, loaded))


def exact_threshold(params):
    rows, n = F(params.row_count), params.n
    num = F(params.raw_size) / F(params.bandwidth) - rows * sum(F(a.t_tok) for a in params.attributes)
    ps = sum(F(a.t_parse) for a in params.attributes)
    if ps == 0:
        return math.inf
    if num <= 0:
        return 0
    return math.ceil(num / (rows * ps / n))


def all_subsets(items):
    items = list(items)
    return itertools.chain.from_iterable(itertools.combinations(items, r) for r in range(len(items) + 1))
