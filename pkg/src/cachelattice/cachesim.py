"""Trace-driven simulation of one set-associative cache level.

Every trace record is one access (reads only). A miss on a line never seen
before is *cold*; any other miss is a *conflict* miss (capacity misses are
folded in).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .core import CacheSpec
from .domain import IterationDomain
from .errors import InvalidArgument
from .lattice import conflict_mask

HIT, COLD, CONFLICT = _kernels.HIT, _kernels.COLD, _kernels.CONFLICT
POLICIES = ("lru", "plru")


@dataclass(frozen=True)
class AccessTrace:
    operand: np.ndarray     # operand index per record
    address: np.ndarray     # element address per record
    points: np.ndarray      # (n, D) joint iteration point per record
    names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.address)

    @classmethod
    def empty(cls, dim: int = 0, names=()) -> "AccessTrace":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, dim), np.int64),
                   tuple(names))


def gen_trace(domain: IterationDomain, order=None, points=None) -> AccessTrace:
    """One record per (point, memory operand), operands in declaration order."""
    pts = domain.enumerate(order) if points is None else np.asarray(points, dtype=np.int64)
    real = [i for i, op in enumerate(domain.operands) if not op.virtual]
    names = tuple(op.name for op in domain.operands)
    if not real or len(pts) == 0:
        return AccessTrace.empty(domain.dim, names)
    addr = domain.addresses(pts)[:, real]
    n, k = addr.shape
    return AccessTrace(np.tile(np.asarray(real, dtype=np.int64), n), addr.ravel(),
                       np.repeat(pts, k, axis=0), names)


@dataclass
class SimReport:
    hits: int = 0
    cold: int = 0
    conflict: int = 0
    per_set: dict = field(default_factory=dict)     # set -> misses
    outcomes: Optional[np.ndarray] = None
    evictions: Optional[np.ndarray] = None

    @property
    def total(self) -> int:
        return self.hits + self.cold + self.conflict

    @property
    def misses(self) -> int:
        return self.cold + self.conflict

    def to_dict(self) -> dict:
        return {"accesses": self.total, "hits": self.hits, "misses": self.misses,
                "cold": self.cold, "conflict": self.conflict,
                "per_set": {str(k): v for k, v in sorted(self.per_set.items())}}


def _summarize(outcomes: np.ndarray, sets: np.ndarray, evictions=None) -> SimReport:
    miss = outcomes != HIT
    per_set = {}
    if miss.any():
        s, c = np.unique(sets[miss], return_counts=True)
        per_set = {int(a): int(b) for a, b in zip(s, c)}
    return SimReport(int((outcomes == HIT).sum()), int((outcomes == COLD).sum()),
                     int((outcomes == CONFLICT).sum()), per_set, outcomes, evictions)


def simulate(spec: CacheSpec, policy: str, trace: AccessTrace) -> SimReport:
    policy = policy.lower()
    if policy not in POLICIES:
        raise InvalidArgument(f"unknown policy {policy!r}")
    K = spec.assoc
    if policy == "plru" and K & (K - 1):
        raise InvalidArgument(f"tree-PLRU needs a power-of-two associativity, got {K}")
    addr = np.asarray(trace.address, dtype=np.int64)
    if addr.size == 0:
        return SimReport(outcomes=np.zeros(0, np.int8), evictions=np.zeros(0, np.int64))
    lines = addr // spec.line
    sets = lines % spec.n_sets
    uniq, dense = np.unique(lines, return_inverse=True)
    dense = dense.ravel().astype(np.int64)
    replay = _kernels.lru_replay if policy == "lru" else _kernels.plru_replay
    out, ev_dense = replay(sets, dense, spec.n_sets, K, len(uniq))
    ev = np.where(ev_dense >= 0, uniq[np.maximum(ev_dense, 0)], -1)
    return _summarize(np.asarray(out), sets, ev)


def restrict_report(report: SimReport, trace: AccessTrace, domain: IterationDomain, lattices,
                    spec: CacheSpec, sets=(0,)) -> SimReport:
    """Keep only records ``(x, p)`` with ``p`` in ``T(x)`` for one of ``sets``."""
    if lattices is None or all(lat is None for lat in lattices) or len(trace) == 0:
        return SimReport(outcomes=np.zeros(0, np.int8))
    if isinstance(sets, str):
        sets = range(spec.n_sets)
    elif isinstance(sets, (int, np.integer)):
        sets = [int(sets)]
    keep = np.zeros(len(trace), dtype=bool)
    rows = np.arange(len(trace))
    for s in sets:
        keep |= conflict_mask(domain, lattices, trace.points, s)[rows, trace.operand]
    out = report.outcomes[keep]
    line_sets = (trace.address[keep] // spec.line) % spec.n_sets
    return _summarize(out, line_sets)


def write_trace(path, trace: AccessTrace) -> None:
    lines = ["# operand address coords..."]
    for op, a, x in zip(trace.operand, trace.address, trace.points):
        name = trace.names[op] if trace.names else str(op)
        lines.append(" ".join([name, str(int(a))] + [str(int(v)) for v in x]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path, names: Sequence[str] = ()) -> AccessTrace:
    """Parse ``<operand> <address> <coords...>`` lines; ``#`` starts a comment."""
    names = list(names)
    ops, addrs, pts = [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) < 2:
            raise InvalidArgument(f"{path}:{lineno}: expected '<operand> <address> ...'")
        if parts[0] not in names:
            names.append(parts[0])
        try:
            addrs.append(int(parts[1]))
            pts.append([int(v) for v in parts[2:]])
        except ValueError:
            raise InvalidArgument(f"{path}:{lineno}: non-integer field") from None
        ops.append(names.index(parts[0]))
    if not addrs:
        return AccessTrace.empty(0, names)
    dims = {len(p) for p in pts}
    if len(dims) != 1:
        raise InvalidArgument(f"{path}: records have differing coordinate counts")
    return AccessTrace(np.asarray(ops, np.int64), np.asarray(addrs, np.int64),
                       np.asarray(pts, np.int64).reshape(len(pts), dims.pop()), tuple(names))
