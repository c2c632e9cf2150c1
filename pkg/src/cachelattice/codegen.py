"""Loop-nest schedules for tiled kernels, an in-process interpreter, and C emission.

A schedule scans footpoints lexicographically (outer loops) and, inside a
tile, the tile's bounding box in the inner iteration order, clipped to the
domain box. Non-rectangular tiles need a membership guard
``floord(adj_k . x, det) == t_k``; points whose dependent coordinates fall
outside their table are skipped by a range guard.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .domain import IterationDomain, IterationOrder
from .cachesim import AccessTrace, gen_trace
from .errors import InvalidArgument
from .tiling import TileSystem, TilingPlan, whole_domain_plan

DTYPES = {"f64": "double", "i64": "long long"}


@dataclass(frozen=True)
class Schedule:
    domain: IterationDomain
    tiles: TileSystem
    inner: IterationOrder
    t_lo: tuple[int, ...]
    t_hi: tuple[int, ...]
    box_lo: tuple[int, ...]
    box_hi: tuple[int, ...]
    guard: bool            # non-rectangular tiles need the floor-membership test
    range_guard: bool      # some free-box points lift outside the tables

    @property
    def tile_loops(self) -> list[int]:
        """Footpoint axes that actually vary (constant ones are folded)."""
        return [k for k in range(self.tiles.dim) if self.t_hi[k] > self.t_lo[k]]

    def footpoints(self):
        return itertools.product(*[range(lo, hi + 1) for lo, hi in zip(self.t_lo, self.t_hi)])


def build_schedule(domain: IterationDomain, plan=None, order: Optional[IterationOrder] = None) -> Schedule:
    if plan is None:
        plan = whole_domain_plan(domain)
    tiles = plan.tiles if isinstance(plan, TilingPlan) else plan
    if not isinstance(tiles, TileSystem) or tiles.dim != domain.n_free:
        raise InvalidArgument("plan does not tile this domain's free variables")
    if domain.den != 1:
        raise InvalidArgument("schedules need an integral parametrization")
    order = order or domain.default_order()
    if sorted(order.perm) != sorted(domain.free_names):
        raise InvalidArgument("order does not match the domain's free variables")
    ext = domain.free_extents
    corners = np.array(list(itertools.product(*[(0, m - 1) for m in ext])), dtype=np.int64)
    fp = tiles.footpoint(corners)
    lo, hi = tiles.bounding_box()
    full = len(domain.points()) == int(np.prod(ext))
    return Schedule(domain, tiles, order, tuple(int(v) for v in fp.min(0)),
                    tuple(int(v) for v in fp.max(0)), tuple(int(v) for v in lo),
                    tuple(int(v) for v in hi), not tiles.is_diagonal, not full)


# ---------------------------------------------------------------------------
# interpreter
# ---------------------------------------------------------------------------

def _tile_candidates(s: Schedule, t) -> np.ndarray:
    """Free-variable points of tile ``t`` in inner order, before the lift guard."""
    dom = s.domain
    origin = s.tiles.origin(t)[0]
    names = list(dom.free_names)
    axes = []
    for v, d in zip(s.inner.perm, s.inner.directions):
        f = names.index(v)
        a = max(0, origin[f] + s.box_lo[f])
        b = min(dom.free_extents[f] - 1, origin[f] + s.box_hi[f])
        if a > b:
            return np.zeros((0, dom.n_free), dtype=np.int64)
        r = np.arange(a, b + 1, dtype=np.int64)
        axes.append(r if d > 0 else r[::-1])
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.empty((grids[0].size, dom.n_free), dtype=np.int64)
    for v, g in zip(s.inner.perm, grids):
        pts[:, names.index(v)] = g.ravel()
    if s.guard:
        pts = pts[np.all(s.tiles.footpoint(pts) == np.asarray(t)[None, :], axis=1)]
    return pts


def schedule_points(s: Schedule) -> np.ndarray:
    """Joint points in the exact order the emitted loops visit them."""
    chunks = []
    for t in s.footpoints():
        f = _tile_candidates(s, t)
        if len(f) == 0:
            continue
        pts, ok = s.domain.lift(f)
        chunks.append(pts[ok])
    if not chunks:
        return np.zeros((0, s.domain.dim), dtype=np.int64)
    return np.concatenate(chunks)


@dataclass
class InterpretResult:
    outputs: dict
    trace: AccessTrace
    points: np.ndarray
    visits: np.ndarray     # visit count per point of ``domain.points()``


def _check_buffers(domain: IterationDomain, buffers: Mapping[str, np.ndarray]) -> dict:
    out = {}
    for op in domain.operands:
        if op.name not in buffers:
            raise InvalidArgument(f"missing buffer for operand {op.name}")
        b = np.array(buffers[op.name], copy=True)
        if b.shape != op.imap.dims:
            raise InvalidArgument(f"buffer {op.name} has shape {b.shape}, expected {op.imap.dims}")
        out[op.name] = b
    return out


def interpret(s: Schedule, buffers: Mapping[str, np.ndarray]) -> InterpretResult:
    """Run ``A += B * C`` over the schedule; returns the updated buffers and trace."""
    dom = s.domain
    bufs = _check_buffers(dom, buffers)
    pts = schedule_points(s)
    ia, ib, ic = (dom.operand_index(n) for n in ("A", "B", "C"))
    a_idx = tuple(dom.project(ia, pts).T)
    prod = bufs["B"][tuple(dom.project(ib, pts).T)] * bufs["C"][tuple(dom.project(ic, pts).T)]
    np.add.at(bufs["A"], a_idx, prod)  # unbuffered, applied in visit order
    ids = np.ravel_multi_index(dom.free_values(pts).T, dom.free_extents) if len(pts) else \
        np.zeros(0, np.int64)
    ref = np.ravel_multi_index(dom.free_values(dom.points()).T, dom.free_extents)
    counts = np.bincount(ids, minlength=int(np.prod(dom.free_extents)))
    return InterpretResult(bufs, gen_trace(dom, points=pts), pts, counts[ref])


def naive_kernel(domain: IterationDomain, buffers: Mapping[str, np.ndarray]) -> dict:
    """Reference evaluation with plain Python loops over the domain points."""
    bufs = _check_buffers(domain, buffers)
    ia, ib, ic = (domain.operand_index(n) for n in ("A", "B", "C"))
    for x in domain.points():
        a = tuple(domain.project(ia, x)[0])
        b = tuple(domain.project(ib, x)[0])
        c = tuple(domain.project(ic, x)[0])
        bufs["A"][a] += bufs["B"][b] * bufs["C"][c]
    return bufs


# ---------------------------------------------------------------------------
# C emission
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmittedProgram:
    source: str
    symbol: str
    parallel: bool
    dtype: str


def _lin(terms, const: int = 0) -> str:
    parts = []
    for name, c in terms:
        if c == 0:
            continue
        mag = "" if abs(c) == 1 else f"{abs(c)}*"
        parts.append(("-" if c < 0 else "+", f"{mag}{name}"))
    if const or not parts:
        parts.append(("-" if const < 0 else "+", str(abs(const))))
    text = "".join(f" {s} {p}" for s, p in parts).strip()
    return text[2:] if text.startswith("+ ") else "-" + text[2:]


def _operand_expr(s: Schedule, i: int) -> str:
    """Flat table index ``phi(x) - offset`` as a C expression in free variables."""
    dom = s.domain
    op = dom.operands[i]
    w = np.asarray(op.imap.weights, dtype=np.int64)
    sl = slice(dom.starts[i], dom.starts[i + 1])
    coef = w @ dom.F_num[sl]
    const = int(w @ dom.base_num[sl])
    if any(op.imap.reflected):
        raise InvalidArgument("emission of reflected maps is not supported")
    return _lin(list(zip(dom.free_names, (int(c) for c in coef))), const)


def _writes_across(s: Schedule, k: Optional[int], var: Optional[str]) -> bool:
    """True if some output element is updated under more than one value of the
    parallel loop (tile axis ``k`` or inner variable ``var``)."""
    dom = s.domain
    ia = dom.operand_index("A")
    fmap = dom.operand_free_map(ia)
    used = set() if fmap is None else {fv for fv, _ in fmap}
    if dom.operands[ia].virtual:
        used = set()
    reduction = [f for f in range(dom.n_free) if f not in used]
    if k is not None:
        return any(s.tiles.adj[k, f] != 0 for f in reduction)
    return dom.free_names.index(var) in reduction


def emit_c(s: Schedule, parallel: bool = False, dtype: str = "f64", config_hash: str = "",
           header: str = "", symbol: Optional[str] = None) -> EmittedProgram:
    if dtype not in DTYPES:
        raise InvalidArgument(f"dtype must be one of {sorted(DTYPES)}")
    ctype = DTYPES[dtype]
    dom = s.domain
    symbol = symbol or f"cl_{dom.kind}"
    names = list(dom.free_names)
    P = s.tiles.P
    tl = s.tile_loops
    tvar = {k: f"t{k}" for k in range(s.tiles.dim)}
    lines = ["/* generated by cachelattice"]
    lines += [f" * kernel: {dom.kind} sizes {dict(sorted(dom.sizes.items()))}",
              f" * tile vectors: {s.tiles.vectors}",
              f" * inner order: {list(s.inner.perm)}"]
    if header:
        lines += [f" * {ln}" for ln in header.splitlines()]
    if config_hash:
        lines.append(f" * config hash: {config_hash}")
    lines += [" */", "#include <stddef.h>", "",
              "static inline long floord(long a, long b)",
              "{",
              "    long q = a / b;",
              "    return (q * b != a && ((a < 0) != (b < 0))) ? q - 1 : q;",
              "}", "",
              "static inline long lmax(long a, long b) { return a > b ? a : b; }",
              "static inline long lmin(long a, long b) { return a < b ? a : b; }", ""]
    args = []
    for op in dom.operands:
        qual = "" if op.name == "A" else "const "
        args.append(f"{qual}{ctype} *restrict {op.name}")
    lines.append(f"void {symbol}({', '.join(args)})")
    lines.append("{")
    depth = 1
    pad = lambda: "    " * depth  # noqa: E731
    first_loop = True

    def pragma(k, var):
        nonlocal first_loop
        if parallel and first_loop:
            lines.append("#pragma omp parallel for schedule(static)")
        first_loop = False

    atomic = False
    if parallel:
        atomic = _writes_across(s, tl[0], None) if tl else _writes_across(s, None, s.inner.perm[0])

    for k in tl:
        pragma(k, None)
        lines.append(f"{pad()}for (long {tvar[k]} = {s.t_lo[k]}; {tvar[k]} <= {s.t_hi[k]}; {tvar[k]}++)")
        depth += 1
    const_t = {k: s.t_lo[k] for k in range(s.tiles.dim) if k not in tl}
    for v, d in zip(s.inner.perm, s.inner.directions):
        f = names.index(v)
        terms = [(tvar[k], int(P[f, k])) for k in tl]
        base = sum(int(P[f, k]) * c for k, c in const_t.items())
        lo_e = _lin(terms, base + s.box_lo[f])
        hi_e = _lin(terms, base + s.box_hi[f])
        m = dom.free_extents[f]
        if tl and any(c for _, c in terms):
            lo_s, hi_s = f"lmax(0, {lo_e})", f"lmin({m - 1}, {hi_e})"
        else:
            lo_s = str(max(0, base + s.box_lo[f]))
            hi_s = str(min(m - 1, base + s.box_hi[f]))
        pragma(None, v)
        if d > 0:
            lines.append(f"{pad()}for (long {v} = {lo_s}; {v} <= {hi_s}; {v}++)")
        else:
            lines.append(f"{pad()}for (long {v} = {hi_s}; {v} >= {lo_s}; {v}--)")
        depth += 1
    lines.append(f"{pad()[:-4]}{{")
    conds = []
    if s.guard:
        for k in range(s.tiles.dim):
            num = _lin(list(zip(names, (int(c) for c in s.tiles.adj[k]))))
            tv = tvar[k] if k in tl else str(const_t[k])
            conds.append(f"floord({num}, {s.tiles.den}) != {tv}")
    if s.range_guard:
        free = set(dom.free_coords)
        for c in range(dom.dim):
            if c in free:
                continue
            e = _lin(list(zip(names, (int(v) for v in dom.F_num[c]))), int(dom.base_num[c]))
            conds.append(f"({e}) < 0 || ({e}) >= {int(dom.extents[c])}")
    if conds:
        lines.append(f"{pad()}if ({' || '.join(conds)})")
        lines.append(f"{pad()}    continue;")
    ia, ib, ic = (dom.operand_index(n) for n in ("A", "B", "C"))
    if atomic:
        lines.append("#pragma omp atomic")
    lines.append(f"{pad()}A[{_operand_expr(s, ia)}] += "
                 f"B[{_operand_expr(s, ib)}] * C[{_operand_expr(s, ic)}];")
    lines.append(f"{pad()[:-4]}}}")
    lines.append("}")
    return EmittedProgram("\n".join(lines) + "\n", symbol, parallel, dtype)
