"""Parallelepiped tile systems, lattice tiles and the rectangular baseline.

A tile system is given by integer generating vectors, the columns of ``P``.
The footpoint of ``x`` is ``floor(P^-1 x)``, evaluated exactly as
``floor_divide(adj(P) x, det P)`` with a positive denominator; ``x`` lies in
the tile at footpoint ``t`` iff its footpoint equals ``t``. Tile systems act
on the free variables of an iteration domain.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _kernels
from . import intlinalg as il
from .core import CacheSpec, make_column_major
from .domain import IterationDomain, IterationOrder, Operand
from .errors import DomainError, InfeasibleAnalysis, InvalidArgument, SizeError
from .lattice import ConflictLattice

MAX_RECT_CANDIDATES = 10**6


@dataclass(frozen=True)
class TileAssignment:
    footpoint: np.ndarray
    remainder: np.ndarray


class TileSystem:
    """Tiles spanned by the columns of an integer matrix ``P``."""

    def __init__(self, P):
        P = il.as_matrix(P)
        d = len(P)
        if d == 0 or any(len(r) != d for r in P):
            raise InvalidArgument("generating matrix must be square")
        det = il.det(P)
        if det == 0:
            raise InvalidArgument("generating vectors are linearly dependent")
        adj = il.adjugate(P)
        if det < 0:
            adj = [[-v for v in row] for row in adj]
        self.P = np.asarray(P, dtype=np.int64)
        self.adj = np.asarray(adj, dtype=np.int64)
        self.den = abs(det)

    @classmethod
    def from_vectors(cls, vectors) -> "TileSystem":
        """Build from a list of generating vectors (the columns of ``P``)."""
        return cls(il.transpose(il.as_matrix(vectors)))

    @classmethod
    def rectangular(cls, extents) -> "TileSystem":
        ext = [int(e) for e in extents]
        if any(e < 1 for e in ext):
            raise InvalidArgument("tile extents must be positive")
        return cls([[ext[i] if i == j else 0 for j in range(len(ext))] for i in range(len(ext))])

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    @property
    def volume(self) -> int:
        return self.den

    @property
    def vectors(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in col) for col in self.P.T]

    @property
    def is_diagonal(self) -> bool:
        return not np.any(self.P - np.diag(np.diag(self.P)))

    def hmat(self):
        """``P^-1`` as exact fractions."""
        from fractions import Fraction
        return [[Fraction(int(v), self.den) for v in row] for row in self.adj]

    def footpoint(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64).reshape(-1, self.dim)
        return np.floor_divide(x @ self.adj.T, self.den)

    def assign(self, x) -> TileAssignment:
        x = np.asarray(x, dtype=np.int64).reshape(-1, self.dim)
        t = self.footpoint(x)
        return TileAssignment(t, x - t @ self.P.T)

    def origin(self, t) -> np.ndarray:
        return np.asarray(t, dtype=np.int64).reshape(-1, self.dim) @ self.P.T

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer offsets ``lo..hi`` (inclusive) covering a tile relative to its origin."""
        # x_k = sum_j P_kj u_j with u in [0,1)^d: the infimum neg is excluded when
        # some entry is negative, the supremum pos when some entry is positive
        neg = np.where(self.P < 0, self.P, 0).sum(axis=1)
        pos = np.where(self.P > 0, self.P, 0).sum(axis=1)
        lo = neg + (self.P < 0).any(axis=1)
        hi = pos - (self.P > 0).any(axis=1)
        return lo.astype(np.int64), hi.astype(np.int64)

    def to_dict(self) -> dict:
        return {"vectors": [list(v) for v in self.vectors], "volume": self.volume}

    def __repr__(self):
        return f"TileSystem(vectors={self.vectors})"


def _free(domain: IterationDomain, tiles: TileSystem, points) -> np.ndarray:
    if tiles.dim != domain.n_free:
        raise InvalidArgument(
            f"tile system has dimension {tiles.dim}, domain has {domain.n_free} free variables")
    return domain.free_values(points)


def tile_of(domain: IterationDomain, tiles: TileSystem, points) -> np.ndarray:
    """Footpoints of joint ``points``."""
    return tiles.footpoint(_free(domain, tiles, points))


def footpoints(domain: IterationDomain, tiles: TileSystem) -> np.ndarray:
    """``T_D``: every footpoint hit by the domain, lexicographically sorted."""
    fp = tile_of(domain, tiles, domain.points())
    if len(fp) == 0:
        return fp
    return np.unique(fp, axis=0)


def tile_points(domain: IterationDomain, tiles: TileSystem, t) -> np.ndarray:
    """Domain points of the tile at footpoint ``t`` (empty when ``t`` is not in ``T_D``)."""
    t = np.asarray(t, dtype=np.int64).reshape(-1)
    if t.size != tiles.dim:
        raise DomainError("footpoint dimension does not match the tile system")
    pts = domain.points()
    return pts[np.all(tile_of(domain, tiles, pts) == t[None, :], axis=1)]


def group_by_tile(domain: IterationDomain, tiles: TileSystem,
                  points=None) -> Iterator[tuple[tuple[int, ...], np.ndarray]]:
    """``(footpoint, points)`` pairs in lexicographic footpoint order."""
    pts = domain.points() if points is None else np.asarray(points, dtype=np.int64)
    if len(pts) == 0:
        return
    fp = tile_of(domain, tiles, pts)
    uniq, inv = np.unique(fp, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(len(uniq) + 1))
    for g in range(len(uniq)):
        yield tuple(int(v) for v in uniq[g]), pts[order[bounds[g]:bounds[g + 1]]]


def is_interior(domain: IterationDomain, tiles: TileSystem, t) -> bool:
    """A tile is interior when it holds a full ``|det P|`` domain points."""
    return len(tile_points(domain, tiles, t)) == tiles.volume


def box_domain(dims: Sequence[int]) -> IterationDomain:
    """Unconstrained box ``prod [0, m_i)``, one free variable per axis."""
    dims = tuple(int(m) for m in dims)
    op = Operand("X", make_column_major(dims), virtual=True)
    return IterationDomain([op], (), [(f"x{i}", i) for i in range(len(dims))],
                           kind="box", sizes={f"x{i}": m for i, m in enumerate(dims)})


class TiledOrder:
    """Tiles in lexicographic footpoint order, points in ``inner`` order within a tile."""

    def __init__(self, tiles: TileSystem, inner: Optional[IterationOrder] = None):
        self.tiles = tiles
        self.inner = inner

    @property
    def perm(self):
        return self.inner.perm if self.inner else None

    def sort_keys(self, domain: IterationDomain, points) -> list[np.ndarray]:
        fp = tile_of(domain, self.tiles, points)
        inner = self.inner or domain.default_order()
        return [fp[:, c] for c in range(fp.shape[1])] + inner.sort_keys(domain, points)


# ---------------------------------------------------------------------------
# lattice tiles
# ---------------------------------------------------------------------------

def lattice_tiles_from(lattice: ConflictLattice, scales: Sequence[int]) -> TileSystem:
    """Tiles spanned by ``c_i * b_i`` for the reduced basis vectors ``b_i``."""
    scales = [int(c) for c in scales]
    if len(scales) != lattice.dim:
        raise InvalidArgument("one scale per basis vector is required")
    if any(c <= 0 for c in scales):
        raise InvalidArgument("scales must be positive")
    return TileSystem.from_vectors([[c * v for v in b] for c, b in zip(scales, oriented(lattice.reduced))])


def oriented(vectors) -> list[list[int]]:
    """Negate vectors whose first nonzero entry is negative (same lattice)."""
    out = []
    for v in vectors:
        v = [int(x) for x in v]
        lead = next((x for x in v if x), 0)
        out.append([-x for x in v] if lead < 0 else v)
    return out


def lattice_points_in_tile(lattice: ConflictLattice, tiles: TileSystem, t, set_id: int = 0) -> int:
    """Lattice points inside the (unclipped) tile at footpoint ``t``."""
    lo, hi = tiles.bounding_box()
    origin = tiles.origin(t)[0]
    ranges = [np.arange(origin[k] + lo[k], origin[k] + hi[k] + 1) for k in range(tiles.dim)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*ranges, indexing="ij")], axis=1)
    inside = np.all(tiles.footpoint(grid) == np.asarray(t)[None, :], axis=1)
    return int(lattice.member(grid[inside], set_id).sum())


def scale_vectors(product: int, d: int) -> list[tuple[int, ...]]:
    """All ordered factorizations of ``product`` into ``d`` positive integers."""
    if product < 1:
        return []
    if d == 1:
        return [(product,)]
    out = []
    for c in range(1, product + 1):
        if product % c == 0:
            out.extend((c,) + rest for rest in scale_vectors(product // c, d - 1))
    return out


def _column_norm(vectors) -> float:
    return max(math.sqrt(sum(v * v for v in col)) for col in vectors)


@dataclass
class TilingPlan:
    """How the free-variable space of a domain is tiled."""

    kind: str                         # "lattice" | "rect"
    tiles: TileSystem
    operand: Optional[str] = None     # lattice-tiled operand
    scales: tuple[int, ...] = ()
    operand_vectors: tuple = ()       # tile vectors in operand coordinates
    target: Optional[int] = None
    window: tuple[int, int] = (0, 0)
    points_per_tile: Optional[int] = None
    free_names: tuple[str, ...] = ()
    diagnostics: list = field(default_factory=list)

    def order(self, inner: Optional[IterationOrder] = None) -> TiledOrder:
        return TiledOrder(self.tiles, inner)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "operand": self.operand, "scales": list(self.scales),
                "operand_vectors": [list(v) for v in self.operand_vectors],
                "tile_vectors": [list(v) for v in self.tiles.vectors],
                "tile_volume": self.tiles.volume, "free_vars": list(self.free_names),
                "target": self.target, "window": list(self.window),
                "lattice_points_per_tile": self.points_per_tile,
                "diagnostics": list(self.diagnostics)}


def lift_operand_tile(domain: IterationDomain, i: int, vectors) -> TileSystem:
    """Lift operand-space tile vectors into the domain's free-variable space.

    Each operand axis must be ``+-1`` times a distinct free variable plus a
    constant. Free variables the operand does not index get a rectangular
    extent equal to the smallest projected extent of the operand tile.
    """
    fmap = domain.operand_free_map(i)
    if fmap is None:
        raise InvalidArgument(f"operand {domain.operands[i].name} is not a permutation of free variables")
    vectors = [list(v) for v in vectors]
    d = len(vectors)
    nf = domain.n_free
    cols = []
    for v in vectors:
        col = [0] * nf
        for axis, (fv, sign) in enumerate(fmap):
            col[fv] = sign * v[axis]
        cols.append(col)
    covered = {fv for fv, _ in fmap}
    extent = min(sum(abs(v[a]) for v in vectors) for a in range(d))
    for fv in range(nf):
        if fv not in covered:
            col = [0] * nf
            col[fv] = max(1, min(extent, domain.free_extents[fv]))
            cols.append(col)
    # order columns by free variable so rectangular parts stay diagonal
    cols.sort(key=lambda c: min((k for k, v in enumerate(c) if v), default=nf))
    return TileSystem.from_vectors(cols)


def rect_plan(domain: IterationDomain, extents: Sequence[int]) -> TilingPlan:
    ext = [max(1, int(e)) for e in extents]
    if len(ext) != domain.n_free:
        raise InvalidArgument("one extent per free variable is required")
    return TilingPlan("rect", TileSystem.rectangular(ext), free_names=domain.free_names)


def whole_domain_plan(domain: IterationDomain) -> TilingPlan:
    return rect_plan(domain, domain.free_extents)


def feasible_target(assoc: int, alpha: int, beta: int, target: Optional[int]) -> tuple[Optional[int], tuple[int, int], list]:
    lo, hi = assoc - alpha, assoc + beta
    notes = []
    if target is None:
        target = assoc - 1
    if lo > hi:
        notes.append(f"empty window [{lo}, {hi}]")
        return None, (lo, hi), notes
    if not lo <= target <= hi or target < 1:
        cand = max(lo, 1)
        if cand > hi:
            notes.append(f"no positive lattice-point count in window [{lo}, {hi}]")
            return None, (lo, hi), notes
        notes.append(f"target {target} outside usable window [{max(lo, 1)}, {hi}]; using {cand}")
        target = cand
    return target, (lo, hi), notes


def choose_plan(spec: CacheSpec, domain: IterationDomain, lattices, alpha: int = 1,
                beta: int = 0, target: Optional[int] = None) -> TilingPlan:
    """Lattice tiling with a fixed number of conflict points per tile.

    The operand with the smallest lattice determinant is tiled by scaled
    reduced basis vectors whose scale product hits ``target`` (default
    ``K - 1``, clipped into ``[K - alpha, K + beta]``); ties between scale
    vectors go to the smallest maximal column norm.
    """
    tgt, window, notes = feasible_target(spec.assoc, alpha, beta, target)
    cands = []
    for i, (op, lat) in enumerate(zip(domain.operands, lattices)):
        if op.virtual or lat is None:
            continue
        if lat.det <= 1:
            notes.append(f"operand {op.name}: lattice has determinant 1")
            continue
        if domain.operand_free_map(i) is None:
            notes.append(f"operand {op.name}: axes are not free variables")
            continue
        cands.append((lat.det, i))
    if tgt is None or not cands:
        if not cands:
            notes.append("no operand with a usable conflict lattice; rectangular fallback")
        plan = whole_domain_plan(domain)
        plan.window = window
        plan.diagnostics = notes
        return plan
    _, i = min(cands)
    lat = lattices[i]
    best = None
    for sc in scale_vectors(tgt, lat.dim):
        vecs = [[c * v for v in b] for c, b in zip(sc, oriented(lat.reduced))]
        key = (_column_norm(vecs), sc)
        if best is None or key < best[0]:
            best = (key, sc, vecs)
    _, sc, vecs = best
    tiles = lift_operand_tile(domain, i, vecs)
    return TilingPlan("lattice", tiles, domain.operands[i].name, tuple(sc),
                      tuple(tuple(v) for v in vecs), tgt, window, math.prod(sc),
                      domain.free_names, notes)


def baseline_rect_plan(domain: IterationDomain, plan: TilingPlan, lattices,
                       search_box: Optional[Sequence[int]] = None) -> TilingPlan:
    """Rectangular tiles of the lattice-tiled operand holding at most the same
    number of lattice points, lifted like the lattice tile."""
    if plan.kind != "lattice":
        return plan
    i = domain.operand_index(plan.operand)
    lat = lattices[i]
    dims = domain.operands[i].imap.dims
    box = tuple(search_box) if search_box else dims
    rect = max_rectangle(lat, plan.points_per_tile, box)
    vecs = [[rect.extents[a] if a == b else 0 for b in range(len(dims))] for a in range(len(dims))]
    tiles = lift_operand_tile(domain, i, vecs)
    return TilingPlan("rect", tiles, plan.operand, (), tuple(tuple(v) for v in vecs),
                      plan.target, plan.window, rect.count, domain.free_names,
                      [f"max rectangle {rect.extents} volume {rect.volume}"])


# ---------------------------------------------------------------------------
# maximal empty-ish rectangles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RectResult:
    extents: tuple[int, ...]
    volume: int
    count: int                        # worst-case lattice points over all placements
    maximizers: tuple[tuple[int, ...], ...]


def _residue_box(lattice: ConflictLattice) -> tuple[list[list[int]], list[int]]:
    h = il.hnf(lattice.raw)
    return h, [h[k][k] for k in range(len(h))]


def worst_case_count(lattice: ConflictLattice, extents: Sequence[int]) -> tuple[int, int]:
    """(min, max) lattice points in a half-open box of ``extents`` over all placements."""
    h, diag = _residue_box(lattice)
    ext = [int(e) for e in extents]
    ranges = [np.arange(diag[k] + ext[k]) for k in range(len(ext))]
    grid = np.stack([g.ravel() for g in np.meshgrid(*ranges, indexing="ij")], axis=1)
    ind = in_lattice_rows(h, grid).reshape([diag[k] + ext[k] for k in range(len(ext))])
    counts = []
    for origin in itertools.product(*[range(dk) for dk in diag]):
        sl = tuple(slice(o, o + e) for o, e in zip(origin, ext))
        counts.append(int(ind[sl].sum()))
    return min(counts), max(counts)


def in_lattice_rows(basis, pts: np.ndarray) -> np.ndarray:
    from .lattice import in_lattice
    return in_lattice(basis, pts)


def max_rectangle(lattice: ConflictLattice, budget: int, search_box: Sequence[int]) -> RectResult:
    """Largest half-open axis-aligned box inside ``search_box`` that holds at
    most ``budget`` lattice points wherever it is placed."""
    box = tuple(int(b) for b in search_box)
    if lattice.dim not in (1, 2) or len(box) != lattice.dim:
        raise InvalidArgument("max_rectangle supports 1-d and 2-d lattices")
    if budget < 0:
        raise InvalidArgument("budget must be nonnegative")
    if math.prod(box) > MAX_RECT_CANDIDATES:
        raise SizeError(f"search box {box} has more than {MAX_RECT_CANDIDATES} candidates")
    h, diag = _residue_box(lattice)
    if lattice.dim == 1:
        a = diag[0]
        w = min(box[0], budget * a)
        mx = worst_case_count(lattice, (w,))[1] if w else 0
        return RectResult((w,), w, mx, ((w,),))
    px, py = diag
    W, H = box
    xs = np.arange(px + W)
    ys = np.arange(py + H)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    ind = in_lattice_rows(h, grid).reshape(px + W, py + H).astype(np.int64)
    prefix = np.zeros((px + W + 1, py + H + 1), dtype=np.int64)
    prefix[1:, 1:] = ind.cumsum(0).cumsum(1)
    worst = _kernels.rect_sweep(prefix, px, py, W, H)
    ok = worst[1:, 1:] <= budget
    if not ok.any():
        return RectResult((0, 0), 0, 0, ())
    vol = np.outer(np.arange(1, W + 1), np.arange(1, H + 1))
    vol = np.where(ok, vol, 0)
    best = int(vol.max())
    ws, hs = np.nonzero(vol == best)
    maxi = tuple(sorted((int(w) + 1, int(hh) + 1) for w, hh in zip(ws, hs)))
    pick = min(maxi, key=lambda e: (abs(e[0] - e[1]), e))
    return RectResult(pick, best, int(worst[pick[0], pick[1]]), maxi)


def rect_tiling_counts(lattice: ConflictLattice, extents: Sequence[int], box: Sequence[int],
                       shift: Sequence[int] = (0, 0)) -> np.ndarray:
    """Lattice points per full tile of a rectangular tiling of ``box``."""
    w, h = (int(e) for e in extents)
    W, H = (int(b) for b in box)
    sx, sy = (int(s) for s in shift)
    nx, ny = W // w, H // h
    xs = np.arange(nx * w) + sx
    ys = np.arange(ny * h) + sy
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    ind = lattice.member(grid).reshape(nx * w, ny * h)
    return ind.reshape(nx, w, ny, h).sum(axis=(1, 3))


def volume_savings(lattice_volume: int, rect_volume: int) -> float:
    """Relative volume gain of the lattice tile over a rectangle."""
    if rect_volume <= 0:
        raise InvalidArgument("rectangle volume must be positive")
    return lattice_volume / rect_volume - 1.0
