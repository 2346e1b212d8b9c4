import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rawload.model import (
    Attribute,
    BudgetError,
    CostParams,
    CostReport,
    LoadPlan,
    Query,
    QueryCost,
    Classification,
    TokenizationMode,
    Workload,
    WorkloadError,
    dump_workload,
    gen_synthetic_workload,
    parse_workload,
    uniform_params,
)


def doc(queries, **params):
    base = {
        "row_count": 1000,
        "raw_size_bytes": 1e6,
        "bandwidth_bytes_per_sec": 1e8,
        "tokenization_mode": "prefix",
        "attributes": [
            {"name": f"A{j + 1}", "spf_bytes": 8, "t_tok_sec": 1e-8, "t_parse_sec": 1e-7} for j in range(8)
        ],
    }
    base.update(params)
    return json.dumps({"params": base, "queries": queries})


def test_table1_document_parses(table1):
    params, workload = table1
    assert (workload.m, params.n) == (6, 8)
    assert [a.name for a in params.attributes] == [f"A{j}" for j in range(1, 9)]
    assert workload.queries[0].attrs == {0, 1}
    assert workload.queries[5].attrs == set(range(7))


def test_empty_workload_is_valid():
    _, w = parse_workload(doc([]))
    assert w.m == 0


def test_unknown_attribute_is_rejected():
    with pytest.raises(WorkloadError, match="unknown attribute"):
        parse_workload(doc([{"id": "Q", "attrs": ["A1", "A9"], "weight": 1}]))


def test_duplicate_attribute_sets_are_rejected():
    qs = [{"id": "Q1", "attrs": ["A1", "A2"]}, {"id": "Q2", "attrs": ["A2", "A1"]}]
    with pytest.raises(WorkloadError, match="same attribute set"):
        parse_workload(doc(qs))


@pytest.mark.parametrize(
    "override",
    [
        {"row_count": 0},
        {"raw_size_bytes": -1},
        {"bandwidth_bytes_per_sec": 0},
        {"tokenization_mode": "fancy"},
        {"row_count": 1.5},
        {"attributes": [{"name": "A1", "spf_bytes": 0, "t_tok_sec": 0, "t_parse_sec": 0}]},
        {"attributes": [{"name": "A1", "spf_bytes": 4, "t_tok_sec": -1, "t_parse_sec": 0}]},
        {"attributes": [{"name": "A1", "spf_bytes": "4", "t_tok_sec": 0, "t_parse_sec": 0}]},
    ],
)
def test_bad_params_are_rejected(override):
    with pytest.raises(WorkloadError):
        parse_workload(doc([], **override))


@pytest.mark.parametrize("text", ["{", "[]", '{"queries": []}', '{"params": {}, "queries": 3}'])
def test_malformed_documents(text):
    with pytest.raises(WorkloadError):
        parse_workload(text)


def test_zero_and_fractional_weights_are_kept():
    _, w = parse_workload(doc([{"id": "a", "attrs": ["A1"], "weight": 0}, {"id": "b", "attrs": ["A2"], "weight": 2.5}]))
    assert [q.weight for q in w.queries] == [0.0, 2.5]


def test_negative_weight_and_empty_query():
    with pytest.raises(WorkloadError):
        Query("q", frozenset({0}), -1.0)
    with pytest.raises(WorkloadError):
        Query("q", frozenset())


def test_none_mode_needs_zero_tokenize():
    with pytest.raises(WorkloadError):
        uniform_params(3, mode="none", t_tok=1e-9)
    assert uniform_params(3, mode="none", t_tok=0.0).tokenization_mode is TokenizationMode.NONE


def test_attribute_index_must_match_position():
    a = Attribute(1, "x", 4, 0, 0)
    with pytest.raises(WorkloadError):
        CostParams((a,), 10, 10, 10)


def test_load_plan_budget():
    p = uniform_params(4, row_count=100, spf=8.0)
    plan = LoadPlan.of(p, {0, 2}, 1600)
    assert plan.used_bytes == 1600
    with pytest.raises(BudgetError):
        LoadPlan.of(p, {0, 1, 2}, 1600)
    assert LoadPlan.of(p, set(), 0).used_bytes == 0


def test_report_parts_sum_to_objective():
    qc = [QueryCost("a", 0.5, 1, 2, 3, 4, 10, Classification.IO_BOUND), QueryCost("b", 2, 0, 0, 0, 1, 1, Classification.COVERED)]
    r = CostReport("serial", 7.0, tuple(qc), 14.0)
    assert math.isclose(r.recomputed_objective(), r.objective, rel_tol=1e-9)
    assert r.cumulative() == [7.0, 12.0, 14.0]
    assert r.to_csv().splitlines() == ["query_index,cumulative_sec", "0,7.0", "1,12.0", "2,14.0"]


names = st.text("abcdefgh_.", min_size=1, max_size=6)


@st.composite
def instances(draw):
    n = draw(st.integers(1, 7))
    labels = draw(st.lists(names, min_size=n, max_size=n, unique=True))
    mode = draw(st.sampled_from(list(TokenizationMode)))
    pos = st.floats(1e-3, 1e12, allow_nan=False)
    small = st.floats(0, 1e-3, allow_nan=False)
    attrs = tuple(
        Attribute(j, labels[j], draw(pos), 0.0 if mode is TokenizationMode.NONE else draw(small), draw(small))
        for j in range(n)
    )
    params = CostParams(attrs, draw(st.integers(1, 10**9)), draw(pos), draw(pos), mode)
    sets = draw(st.lists(st.frozensets(st.integers(0, n - 1), min_size=1), unique=True, max_size=6))
    w = Workload(tuple(Query(f"q{i}", s, draw(st.floats(0, 1e6))) for i, s in enumerate(sets)))
    return params, w


@given(instances())
def test_round_trip(pair):
    params, w = pair
    assert parse_workload(dump_workload(params, w)) == (params, w)


def test_synthetic_sdss_shape():
    w = gen_synthetic_workload(155, 32, 20, 20, 155, seed=1)
    assert w.m == 32
    assert all(1 <= len(q.attrs) <= 155 and max(q.attrs) < 155 for q in w.queries)
    assert all(q.weight == 1 / 32 for q in w.queries)


def test_synthetic_zero_variance():
    (q,) = gen_synthetic_workload(8, 1, 3, 0, 8, seed=4).queries
    assert len(q.attrs) == 3


def test_synthetic_is_deterministic():
    assert gen_synthetic_workload(40, 12, 5, 3, 30, 9) == gen_synthetic_workload(40, 12, 5, 3, 30, 9)
    assert gen_synthetic_workload(40, 12, 5, 3, 30, 9) != gen_synthetic_workload(40, 12, 5, 3, 30, 10)


def test_synthetic_invariants_over_many_seeds():
    for seed in range(1000):
        w = gen_synthetic_workload(20, 6, 4, 3, 12, seed)
        sets = [q.attrs for q in w.queries]
        assert len(set(sets)) == 6
        assert all(s and max(s) < 12 for s in sets)
        assert math.isclose(sum(q.weight for q in w.queries), 1.0)


def test_synthetic_too_tight():
    with pytest.raises(WorkloadError, match="distinct"):
        gen_synthetic_workload(3, 10, 1, 0, 3, seed=0)
    with pytest.raises(WorkloadError):
        gen_synthetic_workload(3, 1, 1, 0, 4, seed=0)
    with pytest.raises(WorkloadError):
        gen_synthetic_workload(3, 1, 0, 0, 3, seed=0)
