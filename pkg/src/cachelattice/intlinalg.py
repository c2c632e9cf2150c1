"""Exact integer linear algebra on small dense matrices.

Everything here works on Python ints (lists of rows) so that determinants,
Hermite normal forms and reductions never overflow or round.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .errors import InvalidArgument

Matrix = list[list[int]]


def as_matrix(rows) -> Matrix:
    return [[int(v) for v in row] for row in rows]


def det(m: Sequence[Sequence[int]]) -> int:
    """Determinant by fraction-free (Bareiss) elimination."""
    a = as_matrix(m)
    n = len(a)
    if n == 0:
        return 1
    if any(len(row) != n for row in a):
        raise InvalidArgument("determinant of a non-square matrix")
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for r in range(k + 1, n):
                if a[r][k] != 0:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def adjugate(m: Sequence[Sequence[int]]) -> Matrix:
    """Integer adjugate, so that ``adj(m) @ m == det(m) * I``."""
    a = as_matrix(m)
    n = len(a)
    if n == 1:
        return [[1]]
    out = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(a) if k != i]
            out[j][i] = (-1) ** (i + j) * det(minor)
    return out


def matmul(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> Matrix:
    return [[sum(x * y for x, y in zip(row, col)) for col in zip(*b)] for row in a]


def transpose(a: Sequence[Sequence[int]]) -> Matrix:
    return [list(col) for col in zip(*a)]


def hnf(rows: Sequence[Sequence[int]]) -> Matrix:
    """Row-style Hermite normal form of the lattice generated by ``rows``.

    The result is upper triangular with a positive pivot in every nonzero
    row, and entries above each pivot reduced into ``[0, pivot)``. Zero rows
    are dropped, so for generators of a full-rank lattice in Z^d the result
    is a d x d basis.
    """
    a = [r for r in as_matrix(rows) if any(r)]
    if not a:
        return []
    ncols = len(a[0])
    out: Matrix = []
    col = 0
    while a and col < ncols:
        nz = [r for r in a if r[col] != 0]
        zero = [r for r in a if r[col] == 0]
        if not nz:
            col += 1
            continue
        # Euclid on column ``col`` across the rows that have it nonzero.
        while len(nz) > 1:
            nz.sort(key=lambda r: abs(r[col]))
            piv = nz[0]
            rest = []
            for r in nz[1:]:
                q = r[col] // piv[col]
                r = [x - q * y for x, y in zip(r, piv)]
                if r[col] != 0:
                    rest.append(r)
                elif any(r):
                    zero.append(r)
            nz = [piv] + rest
        piv = nz[0]
        if piv[col] < 0:
            piv = [-x for x in piv]
        out.append(piv)
        a = zero
        col += 1
    # reduce entries above pivots
    for i, row in enumerate(out):
        pc = next(c for c, v in enumerate(row) if v != 0)
        for k in range(i):
            q = out[k][pc] // row[pc]
            if q:
                out[k] = [x - q * y for x, y in zip(out[k], row)]
    return out


def congruence_kernel(weights: Sequence[int], modulus: int) -> Matrix:
    """Basis (rows) of ``{x in Z^d : weights . x == 0 (mod modulus)}``.

    The lattice is the projection of the integer kernel of the row vector
    ``[w_1 ... w_d  modulus]``. That kernel is read off a unimodular column
    transform reducing the row to ``[g 0 ... 0]`` by an extended-gcd cascade.
    """
    w = [int(v) for v in weights]
    d = len(w)
    if modulus <= 0:
        raise InvalidArgument("modulus must be positive")
    v = w + [int(modulus)]
    n = d + 1
    u = [[int(i == j) for j in range(n)] for i in range(n)]  # columns transform
    while sum(1 for x in v if x != 0) > 1:
        j = min((k for k in range(n) if v[k] != 0), key=lambda k: abs(v[k]))
        for i in range(n):
            if i != j and v[i] != 0:
                q = v[i] // v[j]
                v[i] -= q * v[j]
                for r in range(n):
                    u[r][i] -= q * u[r][j]
    p = next(k for k in range(n) if v[k] != 0)
    basis = [[u[r][c] for r in range(d)] for c in range(n) if c != p]
    return hnf(basis)


def gram_schmidt(b: Sequence[Sequence[int]]):
    bstar: list[list[Fraction]] = []
    mu = [[Fraction(0)] * len(b) for _ in b]
    for i, bi in enumerate(b):
        v = [Fraction(x) for x in bi]
        for j in range(i):
            denom = sum(x * x for x in bstar[j])
            mu[i][j] = sum(Fraction(x) * y for x, y in zip(bi, bstar[j])) / denom
            v = [x - mu[i][j] * y for x, y in zip(v, bstar[j])]
        bstar.append(v)
    return bstar, mu


def lagrange_gauss(b1: Sequence[int], b2: Sequence[int]) -> Matrix:
    """Gauss-Lagrange reduction of a 2-vector basis."""
    u = [int(x) for x in b1]
    v = [int(x) for x in b2]
    norm = lambda x: sum(t * t for t in x)  # noqa: E731
    dot = lambda x, y: sum(s * t for s, t in zip(x, y))  # noqa: E731
    if norm(u) > norm(v):
        u, v = v, u
    while True:
        q = Fraction(dot(u, v), norm(u))
        m = round(q)
        v = [a - m * b for a, b in zip(v, u)]
        if norm(v) >= norm(u):
            return [u, v]
        u, v = v, u


def lll(basis: Sequence[Sequence[int]], delta: Fraction = Fraction(3, 4)) -> Matrix:
    """Textbook LLL with exact rational Gram-Schmidt."""
    b = as_matrix(basis)
    n = len(b)
    bstar, mu = gram_schmidt(b)
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round(mu[k][j])
            if q:
                b[k] = [x - q * y for x, y in zip(b[k], b[j])]
                bstar, mu = gram_schmidt(b)
        nk = sum(x * x for x in bstar[k])
        nk1 = sum(x * x for x in bstar[k - 1])
        if nk >= (delta - mu[k][k - 1] ** 2) * nk1:
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            bstar, mu = gram_schmidt(b)
            k = max(k - 1, 1)
    return b


def reduce_basis(basis: Sequence[Sequence[int]]) -> Matrix:
    """Reduce a full-rank integer basis (rows).

    Two-dimensional bases are Gauss-Lagrange reduced; higher dimensions use
    LLL with delta = 3/4. The determinant sign is normalized to be positive
    by negating the last vector if needed.
    """
    b = as_matrix(basis)
    n = len(b)
    if n == 0 or any(len(r) != n for r in b):
        raise InvalidArgument("basis must be a square matrix")
    if det(b) == 0:
        raise InvalidArgument("basis is rank deficient")
    if n == 1:
        out = [[abs(b[0][0])]]
    elif n == 2:
        out = lagrange_gauss(b[0], b[1])
    else:
        out = lll(b)
    if det(out) < 0:
        out[-1] = [-x for x in out[-1]]
    return out


def same_lattice(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> bool:
    """True when two full-rank bases generate the same lattice."""
    return hnf(a) == hnf(b)
