"""Joint iteration domains, iteration orders, reuse domains and distances.

A domain is the set of integer points of ``Q(A_1) x ... x Q(A_k)`` that
satisfy a system of affine equalities. Points are stored as rows of an
``(n, D)`` int64 array in *joint* coordinates (operand coordinates
concatenated in declaration order). Equalities are solved once over the
rationals; the remaining free coordinates are the loop variables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import IndexMap, make_column_major, make_index_map, Table
from .errors import DomainError, InvalidArgument


@dataclass(frozen=True)
class Operand:
    name: str
    imap: IndexMap
    virtual: bool = False  # contributes constraints/ordering but no memory traffic

    @property
    def ndim(self) -> int:
        return self.imap.ndim


@dataclass(frozen=True)
class Equality:
    """``coeffs . x == rhs`` over joint coordinates."""

    coeffs: tuple[int, ...]
    rhs: int = 0


@dataclass(frozen=True)
class IterationOrder:
    """Lexicographic order over a permutation of the free variables.

    ``directions`` holds +1 (ascending) or -1 (descending) per entry of
    ``perm``; the first name is the outermost (slowest) variable.
    """

    perm: tuple[str, ...]
    directions: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "perm", tuple(self.perm))
        if not self.directions:
            object.__setattr__(self, "directions", (1,) * len(self.perm))
        if len(self.directions) != len(self.perm) or any(d not in (1, -1) for d in self.directions):
            raise InvalidArgument("directions must be +1/-1 per variable")

    def sort_keys(self, domain: "IterationDomain", points: np.ndarray) -> list[np.ndarray]:
        """Key columns, most significant first."""
        if sorted(self.perm) != sorted(domain.free_names):
            raise InvalidArgument(
                f"order {self.perm} is not a permutation of {domain.free_names}")
        free = domain.free_values(points)
        return [d * free[:, domain.free_names.index(v)] for v, d in zip(self.perm, self.directions)]


def argsort_points(domain: "IterationDomain", order, points: np.ndarray) -> np.ndarray:
    keys = order.sort_keys(domain, points)
    if not keys or len(points) == 0:
        return np.arange(len(points))
    return np.lexsort(keys[::-1])


class IterationDomain:
    """Operands, an affine constraint system, and its free-variable solution."""

    def __init__(self, operands: Sequence[Operand], constraints: Sequence[Equality] = (),
                 free: Optional[Sequence[tuple[str, int]]] = None, kind: str = "custom",
                 sizes: Optional[Mapping[str, int]] = None):
        self.operands = tuple(operands)
        if not self.operands:
            raise InvalidArgument("a domain needs at least one operand")
        names = [op.name for op in self.operands]
        if len(set(names)) != len(names):
            raise InvalidArgument("operand names must be unique")
        self.kind = kind
        self.sizes = dict(sizes or {})
        self.starts = np.cumsum([0] + [op.ndim for op in self.operands])
        self.dim = int(self.starts[-1])
        self.extents = np.array([m for op in self.operands for m in op.imap.dims], dtype=np.int64)
        self.constraints = tuple(constraints)
        for eq in self.constraints:
            if len(eq.coeffs) != self.dim:
                raise InvalidArgument("constraint length does not match joint dimension")
        self._solve(free)

    # -- parametrization -------------------------------------------------
    def _solve(self, free):
        D = self.dim
        want_free = [c for _, c in free] if free else []
        # eliminate non-free columns first so requested free columns stay free
        col_order = [c for c in range(D) if c not in want_free] + list(want_free)
        rows = [[Fraction(eq.coeffs[c]) for c in col_order] + [Fraction(eq.rhs)]
                for eq in self.constraints]
        pivots = []
        r = 0
        for j in range(D):
            p = next((i for i in range(r, len(rows)) if rows[i][j] != 0), None)
            if p is None:
                continue
            rows[r], rows[p] = rows[p], rows[r]
            pv = rows[r][j]
            rows[r] = [v / pv for v in rows[r]]
            for i in range(len(rows)):
                if i != r and rows[i][j] != 0:
                    f = rows[i][j]
                    rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
            pivots.append(j)
            r += 1
        for row in rows[r:]:
            if row[-1] != 0:
                raise InvalidArgument("inconsistent constraint system")
        free_cols = [col_order[j] for j in range(D) if j not in pivots]
        if free:
            if sorted(free_cols) != sorted(want_free):
                raise InvalidArgument("requested free coordinates are constrained")
            self.free_names = tuple(n for n, _ in free)
            self.free_coords = tuple(c for _, c in free)
        else:
            self.free_coords = tuple(sorted(free_cols))
            self.free_names = tuple(f"x{c}" for c in self.free_coords)
        nf = len(self.free_coords)
        base = [Fraction(0)] * D
        F = [[Fraction(0)] * nf for _ in range(D)]
        for k, c in enumerate(self.free_coords):
            F[c][k] = Fraction(1)
        for i, j in enumerate(pivots):
            c = col_order[j]
            base[c] = rows[i][-1]
            for k, fc in enumerate(self.free_coords):
                F[c][k] = -rows[i][col_order.index(fc)]
        den = 1
        for v in base + [x for row in F for x in row]:
            den = den * v.denominator // math.gcd(den, v.denominator)
        self.den = den
        self.base_num = np.array([int(v * den) for v in base], dtype=np.int64)
        self.F_num = np.array([[int(v * den) for v in row] for row in F],
                              dtype=np.int64).reshape(D, nf)
        self.free_extents = tuple(int(self.extents[c]) for c in self.free_coords)
        self._points = None

    @property
    def n_free(self) -> int:
        return len(self.free_coords)

    def default_order(self) -> IterationOrder:
        return IterationOrder(self.free_names)

    def order(self, names: Optional[Sequence[str]] = None, directions=()) -> IterationOrder:
        return IterationOrder(tuple(names) if names else self.free_names, tuple(directions))

    def lift(self, free_vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Joint points for free-variable values, plus a validity mask."""
        f = np.asarray(free_vals, dtype=np.int64).reshape(-1, self.n_free)
        num = self.base_num[None, :] + f @ self.F_num.T
        ok = np.all(num % self.den == 0, axis=1)
        pts = num // self.den
        ok &= np.all((pts >= 0) & (pts < self.extents[None, :]), axis=1)
        return pts, ok

    def points(self) -> np.ndarray:
        """All domain points, lexicographic in the free variables."""
        if self._points is None:
            ranges = [np.arange(m, dtype=np.int64) for m in self.free_extents]
            if ranges:
                grids = np.meshgrid(*ranges, indexing="ij")
                free = np.stack([g.ravel() for g in grids], axis=1)
            else:
                free = np.zeros((1, 0), dtype=np.int64)
            pts, ok = self.lift(free)
            self._points = pts[ok]
            self._points.setflags(write=False)
        return self._points

    def __len__(self) -> int:
        return len(self.points())

    def enumerate(self, order=None) -> np.ndarray:
        pts = self.points()
        order = order or self.default_order()
        return pts[argsort_points(self, order, pts)]

    def free_values(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.int64).reshape(-1, self.dim)[:, list(self.free_coords)]

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim)
        ok = np.all((pts >= 0) & (pts < self.extents[None, :]), axis=1)
        for eq in self.constraints:
            ok &= pts @ np.asarray(eq.coeffs, dtype=np.int64) == eq.rhs
        return ok

    def require(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim)
        if not np.all(self.contains(pts)):
            raise DomainError("point outside the iteration domain")
        return pts

    def project(self, i: int, points: np.ndarray) -> np.ndarray:
        """Operand-``i`` coordinates, the projection pi_i."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim)
        return pts[:, self.starts[i]:self.starts[i + 1]]

    def addresses(self, points: np.ndarray) -> np.ndarray:
        """``(n, k)`` element addresses phi_i(pi_i(x)) for every operand."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim)
        cols = [op.imap.evaluate(self.project(i, pts)) for i, op in enumerate(self.operands)]
        return np.stack(cols, axis=1) if cols else np.zeros((len(pts), 0), dtype=np.int64)

    def operand_index(self, name: str) -> int:
        for i, op in enumerate(self.operands):
            if op.name == name:
                return i
        raise InvalidArgument(f"no operand named {name!r}")

    def operand_free_map(self, i: int):
        """Map operand-``i`` axes to ``(free index, sign)`` if each axis is
        ``+-1`` times a distinct free variable plus a constant, else ``None``."""
        out = []
        for c in range(self.starts[i], self.starts[i + 1]):
            row = self.F_num[c]
            nz = np.nonzero(row)[0]
            if len(nz) != 1 or abs(int(row[nz[0]])) != self.den:
                return None
            out.append((int(nz[0]), int(np.sign(row[nz[0]]))))
        if len({v for v, _ in out}) != len(out):
            return None
        return out

    def __repr__(self):
        return (f"IterationDomain(kind={self.kind!r}, operands={[o.name for o in self.operands]}, "
                f"free={self.free_names})")


# ---------------------------------------------------------------------------
# Table 1 kernels
# ---------------------------------------------------------------------------

def _eq(dim: int, terms: Mapping[int, int], rhs: int = 0) -> Equality:
    c = [0] * dim
    for k, v in terms.items():
        c[k] += v
    return Equality(tuple(c), rhs)


def kernel_shapes(kind: str, sizes: Mapping[str, int]) -> dict[str, tuple[int, ...]]:
    """Operand shapes of a builtin kernel."""
    s = dict(sizes)
    try:
        if kind == "dot":
            n = s["n"]
            return {"A": (1,), "B": (n,), "C": (n,)}
        if kind == "conv":
            n = s["n"]
            m = s.get("m", n)
            return {"A": (1,), "B": (n,), "C": (m,)}
        if kind == "matmul":
            n = s.get("n")
            i, j, k = s.get("i", n), s.get("j", n), s.get("k", n)
            if None in (i, j, k):
                raise KeyError("i/j/k")
            return {"A": (i, j), "B": (i, k), "C": (k, j)}
        if kind == "kron":
            i, j, k, l = s["i"], s["j"], s["k"], s["l"]
            return {"A": (i * k, j * l), "B": (i, j), "C": (k, l)}
    except KeyError as exc:
        raise InvalidArgument(f"missing size {exc} for kernel {kind!r}") from None
    raise InvalidArgument(f"unknown kernel kind {kind!r}")


KIND_ALIASES = {"scalar-product": "dot", "dot": "dot", "convolution": "conv", "conv": "conv",
                "matmul": "matmul", "kronecker": "kron", "kron": "kron"}


def builtin_domain(kind: str, sizes: Mapping[str, int] | int,
                   maps: Optional[Mapping[str, IndexMap]] = None,
                   layout="col", offsets: Optional[Mapping[str, int]] = None) -> IterationDomain:
    """Domains of the common kernels (scalar product, convolution, matmul, Kronecker).

    Operands are ``A`` (output), ``B`` and ``C``. The scalar accumulators of
    ``dot``/``conv`` are virtual (register resident). Unless ``maps`` or
    ``offsets`` say otherwise, memory operands are laid out back to back in
    declaration order with the given ``layout``.
    """
    kind = KIND_ALIASES.get(kind, kind)
    if isinstance(sizes, int):
        sizes = {"n": sizes}
    shapes = kernel_shapes(kind, sizes)
    for name, shape in shapes.items():
        if any(m < 1 for m in shape):
            raise InvalidArgument(f"operand {name} has non-positive extent {shape}")
    virtual = {"A"} if kind in ("dot", "conv") else set()
    maps = dict(maps or {})
    offsets = dict(offsets or {})
    cursor = 0
    operands = []
    for name, shape in shapes.items():
        if name in maps:
            imap = maps[name]
            if imap.dims != tuple(shape):
                raise InvalidArgument(f"operand {name} needs dims {shape}, map has {imap.dims}")
        elif name in virtual:
            imap = make_column_major(shape, 0)
        else:
            off = offsets.get(name, cursor)
            imap = make_index_map(Table(name, shape, off), layout)
        if name not in virtual:
            cursor = max(cursor, int(imap.image()[-1]) + 1)
        operands.append(Operand(name, imap, name in virtual))

    D = sum(len(s) for s in shapes.values())
    if kind == "dot":
        # A_0 = sum_k B_k C_k :  i1 = 0, i2 = i3
        cons = [_eq(D, {0: 1}, 0), _eq(D, {1: 1, 2: -1})]
        free = [("k", 1)]
    elif kind == "conv":
        # A_0 = sum_k B_k C_{m-k-1} : i1 = 0, i2 = m - i3  (constraint column as tabulated)
        m = shapes["C"][0]
        cons = [_eq(D, {0: 1}, 0), _eq(D, {1: 1, 2: 1}, m)]
        free = [("k", 1)]
    elif kind == "matmul":
        # A_ij = sum_k B_ik C_kj : i1 = i, i2 = j, i3 = i, i4 = i5, i6 = j
        cons = [_eq(D, {2: 1, 0: -1}), _eq(D, {3: 1, 4: -1}), _eq(D, {5: 1, 1: -1})]
        free = [("i", 0), ("j", 1), ("k", 3)]
    else:
        # A_{mc1*i + k, mc2*j + l} = B_ij C_kl with 0-based indices
        mc1, mc2 = shapes["C"]
        cons = [_eq(D, {0: 1, 2: -mc1, 4: -1}), _eq(D, {1: 1, 3: -mc2, 5: -1})]
        free = [("i", 2), ("j", 3), ("k", 4), ("l", 5)]
    return IterationDomain(operands, cons, free, kind=kind, sizes=dict(sizes))


# ---------------------------------------------------------------------------
# reuse domains, subsequent reuse, distance
# ---------------------------------------------------------------------------

def reuse_domain(domain: IterationDomain, i: int, q) -> np.ndarray:
    """``R_i(q)``: all domain points whose operand-``i`` projection is ``q``."""
    pts = domain.points()
    q = np.asarray(q, dtype=np.int64).reshape(1, -1)
    return pts[np.all(domain.project(i, pts) == q, axis=1)]


def subsequent_reuse(domain: IterationDomain, order, i: int, x) -> Optional[np.ndarray]:
    """The next point after ``x`` (under ``order``) touching the same element
    of operand ``i``; ``None`` if ``x`` is the last such point."""
    x = domain.require(x)[0]
    seq = domain.enumerate(order)
    q = domain.project(i, x[None, :])
    same = np.all(domain.project(i, seq) == q, axis=1)
    hits = np.nonzero(same)[0]
    at = np.nonzero(np.all(seq == x[None, :], axis=1))[0][0]
    later = hits[hits > at]
    return seq[later[0]].copy() if later.size else None


def distance(domain: IterationDomain, order, set_x: np.ndarray, x, y) -> int:
    """``|[x, y)| + |[y, x)|`` counted in ``set_x`` under ``order``."""
    set_x = np.asarray(set_x, dtype=np.int64).reshape(-1, domain.dim)
    x = np.asarray(x, dtype=np.int64).reshape(1, -1)
    y = np.asarray(y, dtype=np.int64).reshape(1, -1)
    seq = set_x[argsort_points(domain, order, set_x)]
    ix = np.nonzero(np.all(seq == x, axis=1))[0]
    iy = np.nonzero(np.all(seq == y, axis=1))[0]
    if ix.size == 0 or iy.size == 0:
        raise DomainError("distance endpoints must belong to the point set")
    return int(abs(int(ix[0]) - int(iy[0])))
