import numpy as np
import pytest
from hypothesis import given, strategies as st

from cachelattice.cachesim import gen_trace, restrict_report, simulate
from cachelattice.core import CacheSpec, make_column_major
from cachelattice.domain import IterationDomain, Operand, builtin_domain
from cachelattice.errors import DomainError
from cachelattice.lattice import build_lattices, enumerate_conflicts
from cachelattice.model import (classify, count_misses, count_misses_all_tiles,
                                count_misses_direct, count_misses_tiled, presence_bounds)
from cachelattice.tiling import (TileSystem, choose_plan, footpoints, tile_points,
                                 whole_domain_plan)


def aliased(kind, n, **extra):
    x = make_column_major((n,), 0)
    sizes = {"n": n, **extra}
    return builtin_domain(kind, sizes, maps={"B": x, "C": x})


def test_first_touch_is_cold_miss():
    spec = CacheSpec.from_sets(2, 1, 2)
    d = builtin_domain("matmul", 2)
    c = classify(d, build_lattices(spec, d), assoc=2)
    first = {}
    for k, a in enumerate(c.entry_addr):
        first.setdefault(int(a), k)
    for k in first.values():
        assert c.miss[k] and c.cold[k]


def test_dot_self_product_second_touch_reuses():
    spec = CacheSpec.from_sets(2, 1, 2)
    d = aliased("dot", 4)
    lats = build_lattices(spec, d)
    rep = count_misses(d, lats, assoc=2)
    # set 0 holds x0 and x2, each touched twice at the same point
    assert rep.total == rep.cold == 2
    c = classify(d, lats, assoc=2)
    assert c.sequence(2).miss.tolist() == [False, False]
    assert count_misses_direct(d, 2, 1, assoc=2) == 2


def test_interleaving_distance_two():
    # conv x*x with n = m = 4 visits (x1,x3), (x2,x2), (x3,x1): x1 and x3
    # come back two conflict points later
    spec = CacheSpec.from_sets(1, 1, 1)
    d = aliased("conv", 4, m=4)
    lats = build_lattices(spec, d)
    assert count_misses(d, lats, assoc=2).total == 3
    assert count_misses(d, lats, assoc=1).total == 5
    assert count_misses(d, lats, assoc=2, strict=True).total == 5
    for K in (1, 2):
        assert count_misses_direct(d, 1, 1, assoc=K) == count_misses(d, lats, assoc=K).total


def test_empty_scope_and_scope_errors():
    spec = CacheSpec.from_sets(2, 1, 2)
    d = builtin_domain("matmul", 3)
    lats = build_lattices(spec, d)
    assert count_misses(d, lats, assoc=2, scope=np.zeros((0, d.dim))).total == 0
    lam = enumerate_conflicts(d, lats).points
    part = count_misses(d, lats, assoc=2, scope=lam[:5])
    assert 0 < part.total <= count_misses(d, lats, assoc=2).total
    off = [p for p in d.points() if not any((p == q).all() for q in lam)]
    with pytest.raises(DomainError):
        count_misses(d, lats, assoc=2, scope=[off[0]])


def test_streaming_scan_all_cold():
    spec = CacheSpec.from_sets(4, 1, 2)
    op = Operand("X", make_column_major((64,)))
    d = IterationDomain([op], (), [("i", 0)])
    lats = build_lattices(spec, d)
    rep = count_misses(d, lats, assoc=2)
    assert rep.total == rep.cold == 16


def test_matmul4_fixture():
    spec = CacheSpec.from_sets(2, 1, 2)
    d = builtin_domain("matmul", 4)
    lats = build_lattices(spec, d)
    order = d.default_order()
    rep = count_misses(d, lats, order, 2)
    assert rep.total == count_misses_direct(d, 2, 1, order, 2) == 72
    full = count_misses(d, lats, order, 2, sets="all")
    assert full.total == count_misses_direct(d, 2, 1, order, 2, "all") == 144
    assert sum(full.per_operand.values()) == full.total
    assert sum(full.per_set.values()) == full.total
    # l = 1: the restricted simulator sees exactly the model's entries
    tr = gen_trace(d, order)
    sim = restrict_report(simulate(spec, "lru", tr), tr, d, lats, spec, "all")
    assert sim.total == full.upper_bound
    assert sim.cold == full.cold


configs = st.tuples(st.sampled_from(["dot", "conv", "matmul"]), st.integers(1, 5),
                    st.sampled_from([1, 2, 4]), st.sampled_from([1, 2]),
                    st.sampled_from([1, 2, 4]), st.sampled_from(["col", "row"]))


def _setup(cfg):
    kind, n, N, l, K, layout = cfg
    d = builtin_domain(kind, {"n": n}, layout=layout)
    spec = CacheSpec.from_sets(N, l, K)
    return d, spec, build_lattices(spec, d)


@given(configs)
def test_bounds(cfg):
    d, spec, lats = _setup(cfg)
    rep = count_misses(d, lats, assoc=spec.assoc, sets="all")
    assert rep.lower_bound <= rep.total <= rep.upper_bound
    assert (rep.lower_bound, rep.upper_bound) == presence_bounds(d, lats, "all")


@given(configs)
def test_monotone_in_assoc(cfg):
    d, spec, lats = _setup(cfg)
    counts = [count_misses(d, lats, assoc=K, sets="all").total for K in range(0, 6)]
    assert counts == sorted(counts, reverse=True)


@given(configs, st.permutations(["i", "j", "k"]))
def test_incremental_equals_direct(cfg, perm):
    d, spec, lats = _setup(cfg)
    order = d.order(perm) if d.n_free == 3 else d.default_order()
    fast = count_misses(d, lats, order, spec.assoc, sets="all").total
    slow = count_misses_direct(d, spec.set_stride, spec.line, order, spec.assoc, "all")
    assert fast == slow


def test_whole_domain_tile_equals_untiled():
    spec = CacheSpec.from_sets(2, 2, 2)
    d = builtin_domain("matmul", 5)
    lats = build_lattices(spec, d)
    plan = whole_domain_plan(d)
    t = footpoints(d, plan.tiles)
    assert len(t) == 1
    one = count_misses_tiled(d, plan.tiles, t[0], lats, assoc=2, sets="all")
    assert one.total == count_misses(d, lats, assoc=2, sets="all").total
    total, per_tile = count_misses_all_tiles(d, plan.tiles, lats, assoc=2, sets="all")
    assert total.total == one.total and len(per_tile) == 1


def test_tile_without_lattice_points():
    spec = CacheSpec.from_sets(4, 1, 2)
    d = builtin_domain("matmul", 4)
    lats = build_lattices(spec, d)
    tiles = TileSystem.rectangular((1, 1, 1))
    # (1,1,1): A(1,1)=5, B(1,1)=21, C(1,1)=37 are all off the set-0 coset
    assert count_misses_tiled(d, tiles, (1, 1, 1), lats, assoc=2).total == 0
    with pytest.raises(DomainError):
        count_misses_tiled(d, tiles, (1, 1), lats, assoc=2)


def test_tiled_sum_matches_per_tile():
    spec = CacheSpec.from_sets(2, 1, 2)
    d = builtin_domain("matmul", 6)
    lats = build_lattices(spec, d)
    tiles = TileSystem.from_vectors([[2, 1, 0], [0, 2, 0], [0, 0, 3]])
    total, per_tile = count_misses_all_tiles(d, tiles, lats, assoc=2)
    again = sum(count_misses_tiled(d, tiles, t, lats, assoc=2).total for t in per_tile)
    assert total.total == again
    for t in list(per_tile)[:10]:
        pts = tile_points(d, tiles, t)
        assert per_tile[t].total == count_misses_direct(d, 2, 1, assoc=2, points=pts)


@pytest.mark.parametrize("N,l,K", [(2, 1, 2), (4, 1, 4), (2, 2, 4), (4, 2, 2), (8, 1, 4)])
def test_interior_tiles_identical_for_tiled_operand(N, l, K):
    spec = CacheSpec.from_sets(N, l, K)
    d = builtin_domain("matmul", 8)
    lats = build_lattices(spec, d)
    plan = choose_plan(spec, d, lats)
    assert plan.points_per_tile == K - 1
    total, per_tile = count_misses_all_tiles(d, plan.tiles, lats, assoc=K)
    interior = [t for t in per_tile if len(tile_points(d, plan.tiles, t)) == plan.tiles.volume]
    assert interior
    counts = {per_tile[t].per_operand[plan.operand] for t in interior}
    assert len(counts) == 1
