import re
import shutil
import subprocess
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from cachelattice import intlinalg as il
from cachelattice.cachesim import gen_trace, simulate
from cachelattice.codegen import build_schedule, emit_c, interpret, naive_kernel, schedule_points
from cachelattice.core import CacheSpec
from cachelattice.domain import builtin_domain
from cachelattice.errors import InvalidArgument
from cachelattice.lattice import build_lattices
from cachelattice.tiling import TileSystem, choose_plan, rect_plan

FIXTURES = Path(__file__).parent / "fixtures"


def buffers(dom, rng, dtype=np.int64):
    return {op.name: (rng.integers(-9, 10, op.imap.dims).astype(dtype) if op.name != "A"
                      else np.zeros(op.imap.dims, dtype=dtype)) for op in dom.operands}


def reference_plan():
    spec = CacheSpec.from_sets(8, 2, 2)
    dom = builtin_domain("matmul", 8)
    return dom, choose_plan(spec, dom, build_lattices(spec, dom))


def count_for(src):
    return len(re.findall(r"\bfor \(", src))


def test_identity_plan_is_plain_triple_loop():
    dom = builtin_domain("matmul", 4)
    src = emit_c(build_schedule(dom)).source
    assert count_for(src) == 3
    assert "floord(" not in src.split("void cl_matmul")[1]


def test_rect_blocks_six_loops_eight_tiles():
    dom = builtin_domain("matmul", 4)
    s = build_schedule(dom, rect_plan(dom, (2, 2, 2)))
    assert count_for(emit_c(s).source) == 6
    assert len(list(s.footpoints())) == 8


def test_golden_lattice_matmul():
    dom, plan = reference_plan()
    assert plan.kind == "lattice"
    src = emit_c(build_schedule(dom, plan), config_hash="golden").source
    assert src == (FIXTURES / "golden_matmul_lattice.c").read_text()


def test_parallel_single_directive():
    dom, plan = reference_plan()
    src = emit_c(build_schedule(dom, plan), parallel=True).source
    assert src.count("omp parallel") == 1
    lines = src.splitlines()
    k = next(i for i, ln in enumerate(lines) if "omp parallel" in ln)
    # the directive sits directly on the first loop of the nest
    assert lines[k + 1].strip().startswith("for (long t")
    assert count_for("\n".join(lines[:k])) == 0


def test_parallel_reduction_loop_gets_atomic():
    dom = builtin_domain("matmul", 4)
    order = dom.order(["k", "i", "j"])
    src = emit_c(build_schedule(dom, order=order), parallel=True).source
    assert "omp atomic" in src
    src = emit_c(build_schedule(dom), parallel=True).source
    assert "omp atomic" not in src


def test_bad_dtype_and_mismatched_plan():
    dom = builtin_domain("matmul", 4)
    with pytest.raises(InvalidArgument):
        emit_c(build_schedule(dom), dtype="f32")
    with pytest.raises(InvalidArgument):
        build_schedule(dom, TileSystem.rectangular((2, 2)))


def test_identity_matrices():
    dom = builtin_domain("matmul", 5)
    eye = np.eye(5, dtype=np.int64)
    sheared = TileSystem.from_vectors([[3, 1, 0], [0, 2, 0], [0, 1, 2]])
    res = interpret(build_schedule(dom, sheared), {"A": np.zeros((5, 5), np.int64),
                                                   "B": eye, "C": eye})
    assert (res.outputs["A"] == eye).all()


def test_dot_of_basis_vectors():
    dom = builtin_domain("dot", 4)
    s = build_schedule(dom)
    for a in range(4):
        for b in range(4):
            bufs = {"A": np.zeros(1, np.int64), "B": np.eye(4, dtype=np.int64)[a],
                    "C": np.eye(4, dtype=np.int64)[b]}
            assert interpret(s, bufs).outputs["A"][0] == (a == b)


def test_buffer_shape_checked():
    dom = builtin_domain("matmul", 3)
    with pytest.raises(InvalidArgument):
        interpret(build_schedule(dom), {"A": np.zeros((3, 3)), "B": np.zeros((3, 2)),
                                        "C": np.zeros((3, 3))})


@pytest.mark.parametrize("kind,sizes", [("matmul", {"n": 3}), ("matmul", {"i": 3, "j": 4, "k": 2}),
                                        ("dot", {"n": 6}), ("conv", {"n": 5, "m": 4}),
                                        ("kron", {"i": 2, "j": 3, "k": 2, "l": 2})])
def test_matches_naive_kernel(kind, sizes):
    dom = builtin_domain(kind, sizes)
    rng = np.random.default_rng(7)
    bufs = buffers(dom, rng)
    ref = naive_kernel(dom, bufs)
    d = dom.n_free
    plans = [None, TileSystem.rectangular([2] * d)]
    if d >= 2:
        P = np.eye(d, dtype=np.int64) * 2
        P[0, 1] = 1
        plans.append(TileSystem(P.tolist()))
    for plan in plans:
        res = interpret(build_schedule(dom, plan), bufs)
        assert (res.visits == 1).all()
        for name in ref:
            assert np.array_equal(res.outputs[name], ref[name])


mat3 = st.lists(st.lists(st.integers(-3, 3), min_size=3, max_size=3), min_size=3, max_size=3)


@settings(max_examples=40, deadline=None)
@given(mat3, st.integers(2, 5), st.permutations(["i", "j", "k"]))
def test_random_plan_coverage(P, n, perm):
    assume(il.det(P) != 0)
    dom = builtin_domain("matmul", n)
    s = build_schedule(dom, TileSystem(P), dom.order(perm))
    rng = np.random.default_rng(n)
    bufs = buffers(dom, rng)
    res = interpret(s, bufs)
    assert (res.visits == 1).all()
    assert np.array_equal(res.outputs["A"], naive_kernel(dom, bufs)["A"])


def test_float_addend_multisets():
    dom, plan = reference_plan()
    s = build_schedule(dom, plan)
    rng = np.random.default_rng(3)
    bufs = {"A": np.zeros((8, 8)), "B": rng.standard_normal((8, 8)), "C": rng.standard_normal((8, 8))}

    def addends(points):
        groups = defaultdict(list)
        for i, j, k in points:
            groups[(i, j)].append(bufs["B"][i, k] * bufs["C"][k, j])
        return {key: sorted(v) for key, v in groups.items()}

    pts = schedule_points(s)
    assert addends(dom.free_values(pts).tolist()) == addends(dom.free_values(dom.points()).tolist())
    res = interpret(s, bufs)
    assert np.allclose(res.outputs["A"], bufs["B"] @ bufs["C"], rtol=0, atol=1e-12)


def test_trace_faithful_to_order():
    dom, plan = reference_plan()
    s = build_schedule(dom, plan)
    spec = CacheSpec.from_sets(8, 2, 2)
    bufs = buffers(dom, np.random.default_rng(0))
    t1 = interpret(s, bufs).trace
    t2 = gen_trace(dom, plan.order(dom.default_order()))
    assert np.array_equal(t1.address, t2.address)
    for policy in ("lru", "plru"):
        r1, r2 = simulate(spec, policy, t1), simulate(spec, policy, t2)
        assert r1.to_dict() == r2.to_dict()


DRIVER = """
#include <stdio.h>
{decl};
int main(void)
{{
    static long long A[{na}], B[{nb}], C[{nc}];
    for (int q = 0; q < {nb}; q++) B[q] = (q * 7) % 11 - 5;
    for (int q = 0; q < {nc}; q++) C[q] = (q * 5) % 13 - 6;
    {sym}(A, B, C);
    for (int q = 0; q < {na}; q++) printf("%lld\\n", A[q]);
    return 0;
}}
"""


@pytest.mark.skipif(shutil.which("gcc") is None, reason="no C compiler")
@pytest.mark.parametrize("parallel", [False, True])
def test_compile_and_run(tmp_path, parallel):
    dom, plan = reference_plan()
    prog = emit_c(build_schedule(dom, plan), parallel=parallel, dtype="i64")
    decl = next(ln for ln in prog.source.splitlines() if ln.startswith("void "))
    sizes = {op.name: int(np.prod(op.imap.dims)) for op in dom.operands}
    (tmp_path / "k.c").write_text(prog.source)
    (tmp_path / "main.c").write_text(DRIVER.format(decl=decl, na=sizes["A"], nb=sizes["B"],
                                                   nc=sizes["C"], sym=prog.symbol))
    flags = ["-fopenmp"] if parallel else []
    exe = tmp_path / "run"
    cc = subprocess.run(["gcc", "-std=c99", "-O1", *flags, "k.c", "main.c", "-o", str(exe)],
                        cwd=tmp_path, capture_output=True, text=True)
    if cc.returncode != 0 and parallel:
        pytest.skip("compiler lacks OpenMP support")
    assert cc.returncode == 0, cc.stderr
    out = subprocess.run([str(exe)], capture_output=True, text=True, check=True).stdout
    got = np.array([int(v) for v in out.split()])
    q = np.arange(64)
    B = ((q * 7) % 11 - 5).reshape(8, 8, order="F")
    C = ((q * 5) % 13 - 6).reshape(8, 8, order="F")
    assert np.array_equal(got, (B @ C).ravel(order="F"))
