"""Analytic miss counting on conflict-lattice points.

Every point of ``Lambda^D`` that is a potential conflict for operand ``p``
yields one *entry* ``(x, p)``. Entries are visited in iteration order; an
entry is a reuse when the same element was touched by an earlier entry at
most ``K`` positions of ``Lambda^D`` before (``< K`` with ``strict``), and a
miss otherwise. Elements are identified by address, so operands that alias
the same memory share their reuse history.

Sets are independent: for set ``s`` the lattice cosets of that set replace
the base-point translates, and positions are counted in that set's own
``Lambda^D``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .domain import IterationDomain
from .errors import DomainError, InvalidArgument
from .lattice import conflict_mask, enumerate_conflicts

Sets = Union[int, str, Sequence[int], None]


@dataclass(frozen=True)
class TraversalSequence:
    """``S(A_i)``: the operand's conflict points in order, tagged miss/reuse."""

    operand: str
    points: np.ndarray
    miss: np.ndarray
    cold: np.ndarray

    @property
    def misses(self) -> np.ndarray:
        return self.points[self.miss]

    @property
    def reuses(self) -> np.ndarray:
        return self.points[~self.miss]


@dataclass(frozen=True)
class Classification:
    set_id: int
    points: np.ndarray      # Lambda^D (or Lambda^t) in order
    mask: np.ndarray        # T(x) per point
    entry_pos: np.ndarray   # position of the entry's point in ``points``
    entry_op: np.ndarray
    entry_addr: np.ndarray
    miss: np.ndarray
    cold: np.ndarray
    operands: tuple[str, ...]

    def sequence(self, i: int) -> TraversalSequence:
        sel = self.entry_op == i
        return TraversalSequence(self.operands[i], self.points[self.entry_pos[sel]],
                                 self.miss[sel], self.cold[sel])


@dataclass
class MissReport:
    total: int = 0
    cold: int = 0
    per_operand: dict = field(default_factory=dict)
    per_set: dict = field(default_factory=dict)
    lower_bound: int = 0
    upper_bound: int = 0
    n_points: int = 0

    @property
    def conflict(self) -> int:
        return self.total - self.cold

    def __add__(self, other: "MissReport") -> "MissReport":
        out = MissReport(self.total + other.total, self.cold + other.cold,
                         dict(self.per_operand), dict(self.per_set),
                         self.lower_bound + other.lower_bound,
                         self.upper_bound + other.upper_bound,
                         self.n_points + other.n_points)
        for k, v in other.per_operand.items():
            out.per_operand[k] = out.per_operand.get(k, 0) + v
        for k, v in other.per_set.items():
            out.per_set[k] = out.per_set.get(k, 0) + v
        return out

    def to_dict(self) -> dict:
        return {"total": self.total, "cold": self.cold, "conflict": self.conflict,
                "per_operand": dict(sorted(self.per_operand.items())),
                "per_set": {str(k): v for k, v in sorted(self.per_set.items())},
                "lower_bound": self.lower_bound, "upper_bound": self.upper_bound,
                "n_points": self.n_points}


def resolve_sets(lattices, sets: Sets) -> list[int]:
    if sets is None:
        return [0]
    if isinstance(sets, str):
        if sets != "all":
            raise InvalidArgument(f"unknown set selection {sets!r}")
        n = max((lat.n_sets for lat in lattices if lat is not None), default=1)
        return list(range(n))
    if isinstance(sets, (int, np.integer)):
        return [int(sets)]
    return [int(s) for s in sets]


def classify(domain: IterationDomain, lattices, order=None, assoc: int = 1,
             set_id: int = 0, points=None, strict: bool = False) -> Classification:
    """Tag every conflict entry of ``Lambda^D`` (or of ``points``) miss/reuse."""
    if assoc < 0:
        raise InvalidArgument("associativity must be nonnegative")
    seq = enumerate_conflicts(domain, lattices, order, set_id, points)
    rows, ops = np.nonzero(seq.mask)  # point-major, operands in declaration order
    addr = domain.addresses(seq.points)[rows, ops] if len(rows) else np.zeros(0, np.int64)
    uniq, key = np.unique(addr, return_inverse=True)
    miss, cold = _kernels.classify(rows.astype(np.int64), key.astype(np.int64).ravel(),
                                   len(uniq), int(assoc), bool(strict))
    return Classification(set_id, seq.points, seq.mask, rows.astype(np.int64), ops.astype(np.int64),
                          addr.astype(np.int64), np.asarray(miss), np.asarray(cold), seq.operands)


def _point_ids(domain: IterationDomain, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.int64).reshape(-1, domain.dim)
    return np.ravel_multi_index(pts.T, tuple(int(m) for m in domain.extents)) if len(pts) else \
        np.zeros(0, dtype=np.int64)


def _report(cls_list: Iterable[Classification], domain: IterationDomain,
            scope_ids: Optional[np.ndarray] = None) -> MissReport:
    rep = MissReport(per_operand={op.name: 0 for op in domain.operands if not op.virtual})
    for c in cls_list:
        sel = np.ones(len(c.entry_pos), dtype=bool)
        npts = len(c.points)
        if scope_ids is not None:
            in_scope = np.isin(_point_ids(domain, c.points), scope_ids)
            sel = in_scope[c.entry_pos]
            npts = int(in_scope.sum())
        m = c.miss & sel
        total = int(m.sum())
        rep.total += total
        rep.cold += int((c.cold & sel).sum())
        rep.per_set[c.set_id] = rep.per_set.get(c.set_id, 0) + total
        for i, op in enumerate(domain.operands):
            if not op.virtual:
                rep.per_operand[op.name] += int(m[c.entry_op == i].sum())
        rep.upper_bound += int(sel.sum())
        rep.lower_bound += int(np.unique(c.entry_addr[sel]).size)
        rep.n_points += npts
    return rep


def count_misses(domain: IterationDomain, lattices, order=None, assoc: int = 1,
                 scope=None, sets: Sets = None, strict: bool = False) -> MissReport:
    """Miss count over ``J = scope`` (default all of ``Lambda^D``).

    The traversal sequences always span the whole ``Lambda^D``; ``scope``
    only selects which points are summed.
    """
    set_ids = resolve_sets(lattices, sets)
    cls_list = [classify(domain, lattices, order, assoc, s, strict=strict) for s in set_ids]
    scope_ids = None
    if scope is not None:
        scope = np.asarray(scope, dtype=np.int64).reshape(-1, domain.dim)
        scope_ids = _point_ids(domain, scope)
        known = np.concatenate([_point_ids(domain, c.points) for c in cls_list]) \
            if cls_list else np.zeros(0, np.int64)
        if not np.all(np.isin(scope_ids, known)):
            raise DomainError("scope is not a subset of the conflict points")
    return _report(cls_list, domain, scope_ids)


def count_misses_tiled(domain: IterationDomain, tiles, footpoint, lattices, order=None,
                       assoc: int = 1, sets: Sets = None, strict: bool = False) -> MissReport:
    """Miss count of one tile, with the tile's sequences starting cold."""
    from .tiling import tile_points
    t = np.asarray(footpoint, dtype=np.int64).ravel()
    if t.size != tiles.dim:
        raise DomainError("footpoint dimension does not match the tile system")
    pts = tile_points(domain, tiles, t)
    set_ids = resolve_sets(lattices, sets)
    return _report([classify(domain, lattices, order, assoc, s, pts, strict) for s in set_ids],
                   domain)


def count_misses_all_tiles(domain: IterationDomain, tiles, lattices, order=None,
                           assoc: int = 1, sets: Sets = None, strict: bool = False):
    """Per-tile reports for every footpoint, and their sum."""
    from .tiling import group_by_tile
    set_ids = resolve_sets(lattices, sets)
    per_tile = {}
    total = MissReport(per_operand={op.name: 0 for op in domain.operands if not op.virtual})
    for t, pts in group_by_tile(domain, tiles):
        rep = _report([classify(domain, lattices, order, assoc, s, pts, strict) for s in set_ids],
                      domain)
        per_tile[t] = rep
        total = total + rep
    return total, per_tile


def presence_bounds(domain: IterationDomain, lattices, sets: Sets = None) -> tuple[int, int]:
    """Order-free (lower, upper) bounds: distinct elements vs. all entries."""
    lo = hi = 0
    for s in resolve_sets(lattices, sets):
        pts = domain.points()
        mask = conflict_mask(domain, lattices, pts, s)
        addr = domain.addresses(pts)
        hi += int(mask.sum())
        lo += int(np.unique(addr[mask]).size)
    return lo, hi


# ---------------------------------------------------------------------------
# direct-definition evaluator
# ---------------------------------------------------------------------------

def count_misses_direct(domain: IterationDomain, spec_modulus: int, line: int, order=None,
                        assoc: int = 1, sets: Sets = None, points=None,
                        strict: bool = False) -> int:
    """Quadratic evaluation of the reuse-point predicate from its definition.

    Kept independent of :func:`classify`: conflict membership is recomputed
    from the index maps element by element, the order is realized with
    Python tuple sorting, and each entry is compared against *every* earlier
    entry of its sequence rather than only the most recent touch.
    """
    order = order or domain.default_order()
    if isinstance(sets, str):
        set_ids = range(spec_modulus // line)
    elif sets is None:
        set_ids = [0]
    elif isinstance(sets, int):
        set_ids = [sets]
    else:
        set_ids = list(sets)
    pts = domain.points() if points is None else np.asarray(points).reshape(-1, domain.dim)
    names = list(domain.free_names)
    fcols = [domain.free_coords[names.index(v)] for v in order.perm]

    def key(x):
        return tuple(d * int(x[c]) for c, d in zip(fcols, order.directions))

    ordered = sorted((tuple(int(v) for v in x) for x in pts), key=key)
    total = 0
    for s in set_ids:
        residue = (s * line) % spec_modulus
        lam = []  # (rank, [addresses of operands in T(x)])
        for x in ordered:
            touched = []
            for i, op in enumerate(domain.operands):
                if op.virtual:
                    continue
                a = op.imap(x[domain.starts[i]:domain.starts[i + 1]])
                if (a - residue) % spec_modulus == 0:
                    touched.append(a)
            if touched:
                lam.append(touched)
        ranks = []
        addrs = []
        for r, touched in enumerate(lam):
            for a in touched:
                ranks.append(r)
                addrs.append(a)
        ranks = np.asarray(ranks, dtype=np.int64)
        addrs = np.asarray(addrs, dtype=np.int64)
        for k in range(len(addrs)):
            earlier_same = addrs[:k] == addrs[k]
            gap = ranks[k] - ranks[:k]
            close = gap < assoc if strict else gap <= assoc
            if not np.any(earlier_same & close):
                total += 1
    return total
