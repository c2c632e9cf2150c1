"""Conflict lattices of operands and their extension to joint domains.

Two elements of an operand conflict when their addresses are congruent
modulo the set stride ``M = N * l``, i.e. when their lines map to the same
cache set at the same line offset. The set of index differences with this
property is the lattice ``{x : w . x == 0 (mod M)}``; its translate through
the operand base point holds the indices whose line starts in set 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import intlinalg as il
from .core import CacheSpec, IndexMap, residue_point
from .domain import IterationDomain
from .errors import InvalidArgument


@dataclass(frozen=True)
class ConflictLattice:
    """Integer lattice (basis rows) with an optional affine translate.

    Lattices derived from an index map also carry the map's weights, offset
    and the modulus ``M``; membership is then the congruence test, which
    works for the coset of every cache set. Lattices given only by a basis
    (e.g. a textbook example) test membership through the adjugate.
    """

    raw: tuple[tuple[int, ...], ...]
    reduced: tuple[tuple[int, ...], ...]
    translate: Optional[tuple[int, ...]] = None
    weights: Optional[tuple[int, ...]] = None
    offset: int = 0
    modulus: Optional[int] = None
    line: int = 1

    @property
    def dim(self) -> int:
        return len(self.raw)

    @property
    def det(self) -> int:
        return abs(il.det(self.raw))

    @property
    def n_sets(self) -> int:
        return (self.modulus // self.line) if self.modulus else 1

    def residue(self, set_id: int = 0) -> int:
        return (set_id * self.line) % self.modulus

    def member(self, points, set_id: int = 0) -> np.ndarray:
        """Membership of index points in the coset belonging to ``set_id``."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim)
        if self.weights is not None:
            addr = self.offset + pts @ np.asarray(self.weights, dtype=np.int64)
            return (addr - self.residue(set_id)) % self.modulus == 0
        if set_id != 0:
            raise InvalidArgument("basis-only lattices have a single coset")
        shift = np.asarray(self.translate or (0,) * self.dim, dtype=np.int64)
        return in_lattice(self.raw, pts - shift)

    def contains_vector(self, v) -> bool:
        """Untranslated membership of a difference vector."""
        return bool(in_lattice(self.raw, np.asarray(v, dtype=np.int64).reshape(1, -1))[0])


def in_lattice(basis, points: np.ndarray) -> np.ndarray:
    """Row-basis membership: ``x`` is an integer combination of the rows."""
    b = il.as_matrix(basis)
    d = il.det(b)
    if d == 0:
        raise InvalidArgument("basis is rank deficient")
    adj = np.asarray(il.adjugate(b), dtype=np.int64)  # adj(B) with B^-1 = adj/det
    coeff = np.asarray(points, dtype=np.int64) @ adj
    return np.all(coeff % d == 0, axis=1)


def lattice_basis(spec: CacheSpec, imap: IndexMap) -> ConflictLattice:
    """Conflict lattice of one operand under ``spec``."""
    if not any(imap.weights):
        raise InvalidArgument("index map has an all-zero weight vector")
    m = spec.set_stride
    raw = il.congruence_kernel(imap.weights, m)
    red = il.reduce_basis(raw)
    base = residue_point(imap, 0, m)
    return ConflictLattice(tuple(map(tuple, raw)), tuple(map(tuple, red)), base,
                           imap.weights, imap.offset, m, spec.line)


def lattice_from_basis(basis: Sequence[Sequence[int]], translate=None) -> ConflictLattice:
    raw = il.hnf(basis)
    if len(raw) != len(basis) or len(raw) != len(basis[0]):
        raise InvalidArgument("basis must be square and full rank")
    red = il.reduce_basis(basis)
    return ConflictLattice(tuple(map(tuple, raw)), tuple(map(tuple, red)),
                           tuple(translate) if translate is not None else None)


def reduce_basis(basis):
    return il.reduce_basis(basis)


def build_lattices(spec: CacheSpec, domain: IterationDomain) -> tuple[Optional[ConflictLattice], ...]:
    """One lattice per operand (``None`` for virtual operands)."""
    return tuple(None if op.virtual else lattice_basis(spec, op.imap) for op in domain.operands)


@dataclass(frozen=True)
class ExtendedLattice:
    """``Z^{d_1} x ... x L(A_i) x ... x Z^{d_k}`` over joint coordinates."""

    domain: IterationDomain
    operand: int
    lattice: ConflictLattice

    def member(self, points, set_id: int = 0) -> np.ndarray:
        return self.lattice.member(self.domain.project(self.operand, points), set_id)


@dataclass(frozen=True)
class ConflictSet:
    operands: frozenset

    @property
    def level(self) -> int:
        return len(self.operands)

    def __bool__(self):
        return bool(self.operands)


def conflict_mask(domain: IterationDomain, lattices, points, set_id: int = 0) -> np.ndarray:
    """``(n, k)`` boolean matrix: entry ``[x, p]`` is ``p in T(x)``."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, domain.dim)
    cols = []
    for i, (op, lat) in enumerate(zip(domain.operands, lattices)):
        if op.virtual or lat is None:
            cols.append(np.zeros(len(pts), dtype=bool))
        else:
            cols.append(lat.member(domain.project(i, pts), set_id))
    return np.stack(cols, axis=1) if cols else np.zeros((len(pts), 0), dtype=bool)


def conflict_set(domain: IterationDomain, lattices, x, set_id: int = 0) -> ConflictSet:
    row = conflict_mask(domain, lattices, domain.require(x), set_id)[0]
    return ConflictSet(frozenset(op.name for op, t in zip(domain.operands, row) if t))


@dataclass(frozen=True)
class ConflictSequence:
    """Points of ``Lambda^D`` in iteration order together with ``T(x)``."""

    points: np.ndarray
    mask: np.ndarray
    operands: tuple[str, ...]

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        for x, row in zip(self.points, self.mask):
            yield x, ConflictSet(frozenset(n for n, t in zip(self.operands, row) if t))


def enumerate_conflicts(domain: IterationDomain, lattices, order=None,
                        set_id: int = 0, points=None) -> ConflictSequence:
    """``Lambda^D`` (or its restriction to ``points``) in iteration order."""
    if points is None:
        pts = domain.enumerate(order)
    else:
        from .domain import argsort_points
        pts = np.asarray(points, dtype=np.int64).reshape(-1, domain.dim)
        pts = pts[argsort_points(domain, order or domain.default_order(), pts)]
    mask = conflict_mask(domain, lattices, pts, set_id)
    keep = mask.any(axis=1)
    return ConflictSequence(pts[keep], mask[keep], tuple(op.name for op in domain.operands))
