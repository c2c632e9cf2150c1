"""Cache specifications, tables and affine index maps.

All addresses are in *elements*. A byte-based cache description is scaled
into element units once, when it is loaded (see :meth:`CacheSpec.from_bytes`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidArgument

#: general-affine maps are checked for injectivity exhaustively up to this size
MAX_INJECTIVITY_CHECK = 10**6


@dataclass(frozen=True)
class CacheSpec:
    """A K-way set-associative cache level ``(c, l, K, rho)`` in element units."""

    capacity: int
    line: int
    assoc: int
    level: int = 1

    def __post_init__(self):
        if self.line < 1 or self.assoc < 1 or self.capacity < 1:
            raise InvalidArgument("capacity, line and assoc must be positive")
        if self.capacity % (self.line * self.assoc):
            raise InvalidArgument(
                f"capacity {self.capacity} is not divisible by line*assoc = "
                f"{self.line * self.assoc}")

    @classmethod
    def from_sets(cls, n_sets: int, line: int, assoc: int, level: int = 1) -> "CacheSpec":
        return cls(n_sets * line * assoc, line, assoc, level)

    @classmethod
    def from_bytes(cls, capacity: int, line: int, assoc: int, level: int = 1,
                   element_bytes: int = 1) -> "CacheSpec":
        if element_bytes < 1:
            raise InvalidArgument("element_bytes must be positive")
        if capacity % element_bytes or line % element_bytes:
            raise InvalidArgument("capacity and line must be multiples of element_bytes")
        return cls(capacity // element_bytes, line // element_bytes, assoc, level)

    @property
    def n_sets(self) -> int:
        return self.capacity // (self.line * self.assoc)

    @property
    def set_stride(self) -> int:
        """Element distance after which addresses wrap onto the same set, N*l."""
        return self.n_sets * self.line


@dataclass(frozen=True)
class Table:
    """A ``(m_1, ..., m_d)`` table placed at ``offset`` in element memory."""

    name: str
    dims: tuple[int, ...]
    offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(m) for m in self.dims))
        if not self.dims:
            raise InvalidArgument("a table needs at least one dimension")
        if any(m < 1 for m in self.dims):
            raise InvalidArgument(f"table extents must be positive, got {self.dims}")
        if self.offset < 0:
            raise InvalidArgument("table offset must be nonnegative")

    @property
    def size(self) -> int:
        return math.prod(self.dims)


@dataclass(frozen=True)
class IndexMap:
    """Affine index map ``phi(x) = offset + sum(w_r * x_r)`` over ``Q(A)``.

    ``reflected`` marks axes that were mirrored (``x_i -> m_i - 1 - x_i``)
    when a general map with negative strides was normalized.
    """

    dims: tuple[int, ...]
    weights: tuple[int, ...]
    offset: int = 0
    kind: str = "general"
    reflected: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(m) for m in self.dims))
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))
        if not self.reflected:
            object.__setattr__(self, "reflected", (False,) * len(self.dims))
        if len(self.weights) != len(self.dims):
            raise InvalidArgument("weights and dims differ in length")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def __call__(self, x) -> int:
        return self.offset + sum(w * int(v) for w, v in zip(self.weights, x))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Vectorized map over an ``(n, d)`` integer array."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.ndim)
        return self.offset + pts @ np.asarray(self.weights, dtype=np.int64)

    def contains(self, x) -> bool:
        return len(x) == self.ndim and all(0 <= int(v) < m for v, m in zip(x, self.dims))

    def image(self) -> np.ndarray:
        """All addresses of ``Q(A)`` in ascending order."""
        return np.sort(self.evaluate(index_box(self.dims)))

    def inverse(self, address: int) -> tuple[int, ...]:
        """Index with ``phi(x) == address``; raises DomainError if none."""
        if self.kind in ("col", "row"):
            rel = int(address) - self.offset
            if not 0 <= rel < self.size:
                raise DomainError(f"address {address} outside the table image")
            axes = range(self.ndim) if self.kind == "col" else reversed(range(self.ndim))
            x = [0] * self.ndim
            for r in axes:
                rel, x[r] = divmod(rel, self.dims[r])
            return tuple(x)
        pts = index_box(self.dims)
        hit = np.nonzero(self.evaluate(pts) == int(address))[0]
        if hit.size == 0:
            raise DomainError(f"address {address} outside the table image")
        return tuple(int(v) for v in pts[hit[0]])


def index_box(dims: Sequence[int]) -> np.ndarray:
    """All points of ``prod [0, m_i - 1]`` in row-major order, shape (n, d)."""
    grids = np.meshgrid(*[np.arange(m, dtype=np.int64) for m in dims], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _check_dims(dims) -> tuple[int, ...]:
    dims = tuple(int(m) for m in dims)
    if not dims:
        raise InvalidArgument("dims must not be empty")
    if any(m < 1 for m in dims):
        raise InvalidArgument(f"extents must be positive, got {dims}")
    return dims


def make_column_major(dims: Sequence[int], offset: int = 0) -> IndexMap:
    dims = _check_dims(dims)
    weights = [math.prod(dims[:k]) for k in range(len(dims))]
    return IndexMap(dims, tuple(weights), int(offset), "col")


def make_row_major(dims: Sequence[int], offset: int = 0) -> IndexMap:
    dims = _check_dims(dims)
    weights = [math.prod(dims[k + 1:]) for k in range(len(dims))]
    return IndexMap(dims, tuple(weights), int(offset), "row")


def make_affine(dims: Sequence[int], weights: Sequence[int], offset: int = 0) -> IndexMap:
    """General affine map, normalized to nonnegative strides.

    An axis with a negative stride is mirrored, which moves its contribution
    into the offset; the map must then be injective on ``Q(A)``.
    """
    dims = _check_dims(dims)
    weights = [int(w) for w in weights]
    if len(weights) != len(dims):
        raise InvalidArgument("weights and dims differ in length")
    reflected = []
    offset = int(offset)
    for i, (w, m) in enumerate(zip(weights, dims)):
        if w < 0:
            offset += w * (m - 1)
            weights[i] = -w
        reflected.append(w < 0)
    if offset < 0:
        raise InvalidArgument("normalized map has a negative offset")
    imap = IndexMap(dims, tuple(weights), offset, "general", tuple(reflected))
    size = imap.size
    if size > MAX_INJECTIVITY_CHECK:
        raise InvalidArgument(
            f"cannot verify injectivity of a general map over {size} points")
    if np.unique(imap.evaluate(index_box(dims))).size != size:
        raise InvalidArgument(f"index map with weights {tuple(weights)} is not injective")
    return imap


def make_index_map(table: Table, layout="col") -> IndexMap:
    """Build the map for ``table`` from a layout tag or ``{"weights": [...]}``."""
    if layout in ("col", "column", "column-major"):
        return make_column_major(table.dims, table.offset)
    if layout in ("row", "row-major"):
        return make_row_major(table.dims, table.offset)
    if isinstance(layout, dict) and "weights" in layout:
        return make_affine(table.dims, layout["weights"], table.offset)
    raise InvalidArgument(f"unknown layout {layout!r}")


def set_index(spec: CacheSpec, imap: IndexMap, x) -> int:
    if not imap.contains(x):
        raise DomainError(f"point {tuple(x)} outside Q(A) = {imap.dims}")
    return (imap(x) // spec.line) % spec.n_sets


def base_point(spec: CacheSpec, imap: IndexMap, modulus: Optional[int] = None):
    """Index of minimal address congruent to 0 modulo the set stride.

    ``modulus`` defaults to ``N * l``, so the base point starts a line that
    maps to set 0. Returns ``None`` when no address of the image qualifies.
    """
    m = spec.set_stride if modulus is None else int(modulus)
    return residue_point(imap, 0, m)


def residue_point(imap: IndexMap, residue: int, modulus: int):
    """Index of minimal address ``== residue (mod modulus)``, or ``None``."""
    if imap.kind in ("col", "row"):
        lo = imap.offset
        first = lo + (residue - lo) % modulus
        if first < lo + imap.size:
            return imap.inverse(first)
        return None
    pts = index_box(imap.dims)
    addr = imap.evaluate(pts)
    ok = np.nonzero((addr - residue) % modulus == 0)[0]
    if ok.size == 0:
        return None
    best = ok[np.argmin(addr[ok])]
    return tuple(int(v) for v in pts[best])


def will_contain_misses(spec: CacheSpec, imap: IndexMap, points) -> bool:
    """True if some cache set receives more than K distinct lines of ``points``.

    Order independent; cold misses are not counted as evidence.
    """
    pts = np.asarray(points, dtype=np.int64).reshape(-1, imap.ndim)
    if pts.size == 0:
        return False
    lines = np.unique(imap.evaluate(pts) // spec.line)
    counts = np.bincount(lines % spec.n_sets, minlength=spec.n_sets)
    return bool(counts.max() > spec.assoc)
