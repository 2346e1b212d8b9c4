import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import (
    best_plan_cost,
    exact_load,
    exact_pipelined,
    exact_serial,
    exact_threshold,
    random_instance,
)
from rawload.costs import (
    PipelineThreshold,
    WorkloadCost,
    classify_query,
    derive_query_plan,
    evaluate,
    load_time,
    objective_pipelined,
    objective_serial,
    parse_threshold,
    query_time_linearized,
    query_time_pipelined,
    query_time_serial,
    report_for_plans,
)
from rawload.model import (
    BudgetError,
    Classification,
    LoadPlan,
    ModeError,
    Query,
    QueryPlan,
    TokenizationMode,
    Workload,
    uniform_params,
)


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def check_plan_invariants(params, loaded, query, plan):
    assert plan.parsed <= plan.tokenized
    assert not plan.tokenized or plan.reads_raw
    assert plan.read_loaded <= set(loaded)
    assert plan.parsed | plan.read_loaded == query.attrs
    assert not plan.parsed & plan.read_loaded
    if plan.reads_raw and plan.parsed:
        if params.tokenization_mode is TokenizationMode.PREFIX:
            assert plan.tokenized == set(range(max(plan.tokenized) + 1))
            assert max(plan.tokenized) >= max(plan.parsed)
        else:
            assert plan.tokenized == set(range(params.n))
    if not plan.reads_raw:
        assert plan.classification is Classification.COVERED


# -- load time -----------------------------------------------------------------


def test_load_time_empty_is_zero():
    assert load_time(uniform_params(5), set()) == 0.0


def test_load_time_first_attribute():
    p = uniform_params(4, row_count=10**6, spf=8.0, bandwidth=1e8, raw_size=1e9, t_tok=1e-7, t_parse=1e-7)
    hand = 1e9 / 1e8 + 1e6 * (1e-7 + 1e-7) + 8 * 1e6 / 1e8
    assert math.isclose(load_time(p, {0}), hand, rel_tol=1e-12)
    assert math.isclose(hand, 10.28, rel_tol=1e-12)
    assert rel(load_time(p, {0}), float(exact_load(p, {0}))) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_load_time_all_attributes_against_term_sum(seed):
    p, _ = random_instance(seed, mode=("prefix", "atomic")[seed % 2])
    everything = set(range(p.n))
    assert rel(load_time(p, everything), float(exact_load(p, everything))) < 1e-12
    sub = set(range(0, p.n, 2))
    assert rel(load_time(p, sub), float(exact_load(p, sub))) < 1e-12


def test_load_time_checks_budget():
    p = uniform_params(3, row_count=10, spf=8.0)
    with pytest.raises(BudgetError):
        load_time(p, LoadPlan(frozenset({0, 1}), 160, 100))


# -- plans and serial times -----------------------------------------------------


def test_q1_is_covered_by_the_optimal_load(table1):
    params, w = table1
    plan = derive_query_plan(params, {0, 1, 3}, w.queries[0])
    assert not plan.reads_raw
    assert plan.read_loaded == {0, 1}
    assert plan.classification is Classification.COVERED


def test_nothing_loaded_parses_everything(table1):
    params, w = table1
    for q in w.queries:
        plan = derive_query_plan(params, set(), q)
        assert plan.reads_raw and plan.parsed == q.attrs
        assert plan.tokenized == set(range(max(q.attrs) + 1))


def test_q3_matches_exhaustive_enumeration():
    p = uniform_params(8, row_count=10**6, spf=8.0, bandwidth=1e8, raw_size=4e9, t_tok=1e-8, t_parse=5e-8)
    q3 = Query("Q3", frozenset({2, 3, 4}))
    plan = derive_query_plan(p, {0, 1, 3}, q3)
    assert plan.reads_raw and {2, 4} <= plan.parsed
    assert exact_serial(p, plan) == best_plan_cost(p, q3.attrs, {0, 1, 3})


def test_covered_query_time():
    p = uniform_params(5, row_count=1000, spf=[4.0, 8.0, 2.0, 1.0, 8.0], bandwidth=1e6)
    plan = QueryPlan("q", False, frozenset(), frozenset(), frozenset({0, 1}))
    assert math.isclose(query_time_serial(p, plan), 1000 * 12 / 1e6, rel_tol=1e-12)


def test_q6_unloaded_term_by_term(table1):
    params, w = table1
    q6 = w.queries[5]
    plan = derive_query_plan(params, set(), q6)
    rows = params.row_count
    hand = params.raw_size / params.bandwidth + rows * 7 * 1e-9 + rows * 7 * 1e-7
    assert math.isclose(query_time_serial(params, plan), hand, rel_tol=1e-12)
    assert rel(query_time_serial(params, plan), float(exact_serial(params, plan))) < 1e-12


def test_read_or_parse_depends_on_prefix():
    # A2 is loaded but slow to read; A3 must be parsed, so parsing A2 is nearly free
    p = uniform_params(3, row_count=1000, spf=8.0, bandwidth=1e3, raw_size=1e3, t_tok=1e-9, t_parse=1e-9)
    plan = derive_query_plan(p, {1}, Query("q", frozenset({1, 2})))
    assert plan.parsed == {1, 2} and not plan.read_loaded


@pytest.mark.parametrize("mode", ["prefix", "atomic", "none"])
def test_plans_feasible_and_optimal(mode):
    for seed in range(150):
        p, w = random_instance(seed, mode=mode)
        rng = np.random.default_rng(seed + 10_000)
        loaded = {j for j in range(p.n) if rng.random() < 0.5}
        for q in w.queries:
            plan = derive_query_plan(p, loaded, q)
            check_plan_invariants(p, loaded, q, plan)
            assert exact_serial(p, plan) == best_plan_cost(p, q.attrs, loaded)


# -- serial objective ------------------------------------------------------------


def test_table1_optimum_among_three_subsets(table1):
    params, w = table1
    scores = {s: objective_serial(params, w, set(s)).objective for s in itertools.combinations(range(8), 3)}
    assert len(scores) == 56
    best = scores.pop((0, 1, 3))
    assert all(best < v for v in scores.values())
    assert best == pytest.approx(602.072, rel=1e-12)


def test_zero_weights_give_zero():
    p = uniform_params(4)
    w = Workload((Query("a", frozenset({0, 1}), 0.0), Query("b", frozenset({3}), 0.0)))
    assert objective_serial(p, w, set()).objective == 0.0


def test_everything_loaded_reads_only(table1):
    params, w = table1
    r = objective_serial(params, w, set(range(8)))
    rows, band = params.row_count, params.bandwidth
    reads = sum(q.weight * rows * 4 * len(q.attrs) / band for q in w.queries)
    assert r.objective == pytest.approx(r.load_time + reads, rel=1e-12)
    assert all(q.raw_read == q.tokenize == q.parse == 0 for q in r.per_query)


def test_unloaded_objective_has_no_load_or_read_terms():
    p, w = random_instance(3)
    r = objective_serial(p, w, set())
    assert r.load_time == 0 and all(q.loaded_read == 0 for q in r.per_query)


def test_report_consistency():
    for seed in range(30):
        p, w = random_instance(seed)
        loaded = set(range(0, p.n, 3))
        r = evaluate(p, w, loaded)
        assert rel(r.recomputed_objective(), r.objective) < 1e-9
        for q, c in zip(w.queries, r.per_query):
            assert c.seconds == c.raw_read + c.tokenize + c.parse + c.loaded_read
        d = r.to_dict(p)
        assert d["objective_sec"] == r.objective and len(d["queries"]) == w.m


def test_adding_an_attribute_never_slows_a_covered_query():
    for seed in range(40):
        p, w = random_instance(seed)
        rng = np.random.default_rng(seed)
        for q in w.queries:
            loaded = set(q.attrs) | {j for j in range(p.n) if rng.random() < 0.3}
            before = query_time_serial(p, derive_query_plan(p, loaded, q))
            for extra in set(range(p.n)) - loaded:
                after = query_time_serial(p, derive_query_plan(p, loaded | {extra}, q))
                assert after <= before


def test_workload_cost_matches_evaluate():
    for seed in range(40):
        mode = ("serial", "pipelined")[seed % 2]
        p, w = random_instance(seed, mode="atomic" if mode == "pipelined" else "prefix")
        wc = WorkloadCost(p, w, mode)
        rng = np.random.default_rng(seed)
        for _ in range(10):
            mask = int(rng.integers(0, 1 << p.n))
            assert wc.total(mask) == evaluate(p, w, wc.bits(mask), mode).objective
            add = 1 << int(rng.integers(0, p.n))
            assert wc.delta(mask, add) == pytest.approx(wc.total(mask | add) - wc.total(mask), rel=1e-9, abs=1e-9)


def test_report_for_derived_plans_equals_evaluate():
    for seed in range(20):
        p, w = random_instance(seed, mode="atomic")
        loaded = set(range(1, p.n, 2))
        plans = [derive_query_plan(p, loaded, q) for q in w.queries]
        for mode in ("serial", "pipelined"):
            a = report_for_plans(p, w, loaded, plans, mode)
            b = evaluate(p, w, loaded, mode)
            assert a.objective == pytest.approx(b.objective, rel=1e-12)
            assert [c.classification for c in a.per_query] == [c.classification for c in b.per_query]


# -- pipelined -------------------------------------------------------------------


def atomic(**kw):
    return uniform_params(4, mode="atomic", **kw)


def test_threshold_example():
    p = uniform_params(4, row_count=1000, t_tok=0.0, t_parse=1e-3, raw_size=2.0, bandwidth=1.0, mode="none")
    assert parse_threshold(p).pt == 2 == exact_threshold(p)


def test_threshold_edges():
    p = atomic(row_count=1000, t_tok=0.5e-3, t_parse=1e-3, raw_size=2.0, bandwidth=1.0)
    assert parse_threshold(p).pt == 0
    p = uniform_params(4, t_tok=0.0, t_parse=0.0, mode="none")
    assert parse_threshold(p).unbounded
    with pytest.raises(ModeError):
        parse_threshold(uniform_params(4))


def test_threshold_against_exact_formula():
    for seed in range(200):
        p, _ = random_instance(seed, mode=("atomic", "none")[seed % 2])
        assert parse_threshold(p).pt == exact_threshold(p)


def plan_with(parsed, n=4, reads_raw=True):
    return QueryPlan("q", reads_raw, frozenset(range(n)) if reads_raw else frozenset(), frozenset(parsed), frozenset())


def test_classification_examples():
    assert classify_query(plan_with({0, 1}), PipelineThreshold(2)) is Classification.CPU_BOUND
    assert classify_query(plan_with(set()), PipelineThreshold(1)) is Classification.IO_BOUND
    assert classify_query(plan_with(range(4)), PipelineThreshold(0)) is Classification.CPU_BOUND
    assert classify_query(plan_with(set(), reads_raw=False), PipelineThreshold(0)) is Classification.COVERED


def test_pipelined_covered_and_io_bound():
    p = atomic(row_count=1000, raw_size=1e6, bandwidth=1e6, t_tok=1e-6, t_parse=1e-6)
    covered = QueryPlan("q", False, frozenset(), frozenset(), frozenset({0, 2}))
    assert query_time_pipelined(p, covered) == query_time_serial(p, covered) == 1000 * 16 / 1e6
    io = QueryPlan("q", True, frozenset(range(4)), frozenset({1}), frozenset({0}))
    assert query_time_pipelined(p, io) == pytest.approx(1000 * 8 / 1e6 + 1.0, rel=1e-12)
    with pytest.raises(ModeError):
        query_time_pipelined(uniform_params(4), io)


def random_plan(rng, n):
    parsed = {j for j in range(n) if rng.random() < 0.5}
    read = {j for j in range(n) if j not in parsed and rng.random() < 0.5}
    raw = bool(parsed) or rng.random() < 0.5
    return QueryPlan("q", raw, frozenset(range(n)) if raw else frozenset(), frozenset(parsed), frozenset(read))


@given(st.integers(0, 2**31 - 1), st.sampled_from(["atomic", "none"]))
def test_max_form_equals_linearized_with_uniform_parse(seed, mode):
    # the threshold counts attributes at the average parse cost, so the
    # linearized branch equals the max exactly when that average is exact
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    p = uniform_params(
        n, row_count=int(rng.integers(10**3, 10**6)), spf=list(rng.choice([1.0, 4.0, 8.0], n)),
        raw_size=float(10 ** rng.uniform(5, 9)), bandwidth=float(10 ** rng.uniform(6, 9)),
        t_tok=0.0 if mode == "none" else list(10 ** rng.uniform(-10, -7, n)),
        t_parse=float(10 ** rng.uniform(-9, -6)), mode=mode,
    )
    pt = parse_threshold(p)
    for _ in range(20):
        plan = random_plan(rng, n)
        a = query_time_pipelined(p, plan)
        b = query_time_linearized(p, plan, classify_query(plan, pt))
        assert rel(a, b) <= 1e-12
        assert rel(a, float(exact_pipelined(p, plan))) <= 1e-12


@given(st.integers(0, 2**31 - 1), st.sampled_from(["atomic", "none"]))
def test_linearized_never_exceeds_max_form(seed, mode):
    p, _ = random_instance(seed, n_max=6, mode=mode)
    rng = np.random.default_rng(seed)
    pt = parse_threshold(p)
    for _ in range(20):
        plan = random_plan(rng, p.n)
        assert query_time_linearized(p, plan, classify_query(plan, pt)) <= query_time_pipelined(p, plan)


def test_all_covered_pipelined_equals_serial():
    p, w = random_instance(5, mode="atomic")
    everything = set(range(p.n))
    assert objective_pipelined(p, w, everything).objective == objective_serial(p, w, everything).objective


def test_single_io_bound_query_costs_the_scan():
    p = atomic(row_count=1000, raw_size=4e6, bandwidth=1e6, t_tok=1e-7, t_parse=1e-7)
    w = Workload((Query("q", frozenset({1, 2})),))
    r = objective_pipelined(p, w, set())
    assert r.per_query[0].classification is Classification.IO_BOUND
    assert r.objective == pytest.approx(4.0, rel=1e-12)


def test_pipelined_never_exceeds_serial():
    for seed in range(100):
        p, w = random_instance(seed, mode=("atomic", "none")[seed % 2])
        loaded = {j for j in range(p.n) if (seed >> j) & 1}
        s = objective_serial(p, w, loaded)
        pl = objective_pipelined(p, w, loaded)
        assert pl.objective <= s.objective
        assert all(a.seconds <= b.seconds for a, b in zip(pl.per_query, s.per_query))


def test_pipelined_rejects_prefix_mode(table1):
    params, w = table1
    with pytest.raises(ModeError):
        objective_pipelined(params, w, set())
