import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cachelattice.cachesim import (COLD, CONFLICT, HIT, AccessTrace, gen_trace, read_trace,
                                   restrict_report, simulate, write_trace)
from cachelattice.core import CacheSpec
from cachelattice.domain import builtin_domain
from cachelattice.errors import InvalidArgument
from cachelattice.lattice import build_lattices
from oracles import stack_distance_lru

FIXTURES = Path(__file__).parent / "fixtures"


def trace_of(addresses):
    a = np.asarray(addresses, dtype=np.int64)
    return AccessTrace(np.zeros(len(a), np.int64), a, np.zeros((len(a), 0), np.int64))


def test_gen_trace_record_counts():
    assert len(gen_trace(builtin_domain("matmul", 1))) == 3
    tr = gen_trace(builtin_domain("dot", {"n": 2}))
    assert len(tr) == 4
    assert [tr.names[o] for o in tr.operand] == ["B", "C", "B", "C"]
    tr = gen_trace(builtin_domain("matmul", 2))
    assert len(tr) == 24
    # A, B, C column-major and packed: A at 0, B at 4, C at 8
    # points (i,j,k) = (0,0,0), (0,0,1), (0,1,0) ...
    assert tr.address[:9].tolist() == [0, 4, 8, 0, 6, 9, 2, 4, 10]


def test_no_eviction_means_cold_only():
    spec = CacheSpec.from_sets(2, 2, 8)
    rep = simulate(spec, "lru", trace_of([0, 1, 2, 3, 4, 0, 2, 4, 1]))
    assert rep.conflict == 0 and rep.cold == 3


def test_thrashing():
    spec = CacheSpec.from_sets(1, 1, 1)
    rep = simulate(spec, "lru", trace_of([0, 1] * 5))
    assert rep.hits == 0 and rep.cold == 2 and rep.conflict == 8


@pytest.mark.parametrize("policy", ["lru", "plru"])
def test_round_robin_all_miss(policy):
    spec = CacheSpec.from_sets(1, 1, 4)
    rep = simulate(spec, policy, trace_of(list(range(5)) * 4))
    assert rep.hits == 0


def test_plru_lru_divergence_fixture():
    fx = json.loads((FIXTURES / "plru_divergence.json").read_text())
    c = fx["cache"]
    spec = CacheSpec.from_sets(c["n_sets"], c["line"], c["assoc"])
    tr = trace_of(fx["addresses"])
    assert simulate(spec, "lru", tr).outcomes.tolist() == fx["lru"]
    assert simulate(spec, "plru", tr).outcomes.tolist() == fx["plru"]
    assert fx["lru"] != fx["plru"]


def test_plru_needs_power_of_two():
    with pytest.raises(InvalidArgument):
        simulate(CacheSpec.from_sets(1, 1, 3), "plru", trace_of([0]))
    with pytest.raises(InvalidArgument):
        simulate(CacheSpec.from_sets(1, 1, 2), "fifo", trace_of([0]))


def test_empty_trace():
    rep = simulate(CacheSpec.from_sets(2, 1, 1), "lru", trace_of([]))
    assert rep.total == 0 and rep.per_set == {}


traces = st.lists(st.integers(0, 40), min_size=0, max_size=300)
geom = st.tuples(st.sampled_from([1, 2, 4]), st.sampled_from([1, 2, 4]), st.sampled_from([1, 2, 4, 8]))


@given(traces, geom)
def test_lru_matches_stack_distance(addrs, g):
    N, l, K = g
    spec = CacheSpec.from_sets(N, l, K)
    rep = simulate(spec, "lru", trace_of(addrs))
    assert (rep.outcomes == HIT).tolist() == stack_distance_lru(addrs, l, N, K)
    assert rep.hits + rep.cold + rep.conflict == len(addrs)


@given(traces, geom)
def test_lru_inclusion(addrs, g):
    N, l, K = g
    small = simulate(CacheSpec.from_sets(N, l, K), "lru", trace_of(addrs)).outcomes == HIT
    big = simulate(CacheSpec.from_sets(N, l, K + 1), "lru", trace_of(addrs)).outcomes == HIT
    assert np.all(big[small])


def plru_resident_check(spec, addrs, rep):
    resident = [set() for _ in range(spec.n_sets)]
    seen = set()
    for a, out, ev in zip(addrs, rep.outcomes, rep.evictions):
        ln = a // spec.line
        s = resident[ln % spec.n_sets]
        assert (out == HIT) == (ln in s)
        if out != HIT:
            assert (out == COLD) == (ln not in seen)
            if ev >= 0:
                assert ev in s
                s.discard(int(ev))
            s.add(ln)
        seen.add(ln)
        assert len(s) <= spec.assoc


@given(traces, geom)
def test_plru_capacity_and_determinism(addrs, g):
    N, l, K = g
    spec = CacheSpec.from_sets(N, l, K)
    a = simulate(spec, "plru", trace_of(addrs))
    b = simulate(spec, "plru", trace_of(addrs))
    assert np.array_equal(a.outcomes, b.outcomes)
    plru_resident_check(spec, addrs, a)


def test_plru_k1_and_k2_equal_lru():
    rng = np.random.default_rng(7)
    addrs = rng.integers(0, 30, 2000).tolist()
    for K in (1, 2):
        spec = CacheSpec.from_sets(2, 1, K)
        assert np.array_equal(simulate(spec, "plru", trace_of(addrs)).outcomes,
                              simulate(spec, "lru", trace_of(addrs)).outcomes)


def test_restrict_report():
    spec1 = CacheSpec.from_sets(1, 1, 2)
    d = builtin_domain("matmul", 3)
    tr = gen_trace(d)
    full = simulate(spec1, "lru", tr)
    same = restrict_report(full, tr, d, build_lattices(spec1, d), spec1)
    assert (same.hits, same.cold, same.conflict) == (full.hits, full.cold, full.conflict)
    assert restrict_report(full, tr, d, None, spec1).total == 0
    spec = CacheSpec.from_sets(4, 1, 2)
    full = simulate(spec, "lru", tr)
    part = restrict_report(full, tr, d, build_lattices(spec, d), spec, "all")
    assert part.total == len(tr)
    only0 = restrict_report(full, tr, d, build_lattices(spec, d), spec, 0)
    assert only0.total == int((tr.address % 4 == 0).sum())


def test_trace_file_round_trip(tmp_path):
    d = builtin_domain("matmul", 2)
    tr = gen_trace(d)
    p = tmp_path / "t.trace"
    write_trace(p, tr)
    back = read_trace(p)
    assert np.array_equal(back.address, tr.address)
    assert np.array_equal(back.points, tr.points)
    assert [back.names[o] for o in back.operand] == [tr.names[o] for o in tr.operand]


def test_trace_file_errors(tmp_path):
    p = tmp_path / "bad.trace"
    p.write_text("# header\nA 12 0 0\nB x 1 1\n")
    with pytest.raises(InvalidArgument):
        read_trace(p)
    p.write_text("# only comments\n\n")
    assert len(read_trace(p)) == 0
