"""Hot inner loops, compiled with numba when available.

Set ``CACHELATTICE_NUMBA=0`` in the environment to force the pure Python /
numpy fallbacks. Both paths are always importable under explicit names
(``*_py`` / ``*_np``) so tests and the benchmark can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CACHELATTICE_NUMBA", "1") != "0"

HIT, COLD, CONFLICT = 0, 1, 2


def _jit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# set-associative replay
# ---------------------------------------------------------------------------

def _lru_replay_py(sets, lines, n_sets, assoc, n_lines):
    n = sets.shape[0]
    out = np.empty(n, dtype=np.int8)
    evicted = np.full(n, -1, dtype=np.int64)
    tags = np.full((n_sets, assoc), -1, dtype=np.int64)
    stamp = np.zeros((n_sets, assoc), dtype=np.int64)
    seen = np.zeros(n_lines, dtype=np.bool_)
    for r in range(n):
        s = sets[r]
        ln = lines[r]
        way = -1
        for w in range(assoc):
            if tags[s, w] == ln:
                way = w
                break
        if way >= 0:
            out[r] = HIT
        else:
            if seen[ln]:
                out[r] = CONFLICT
            else:
                out[r] = COLD
                seen[ln] = True
            way = 0
            for w in range(assoc):
                if tags[s, w] == -1:
                    way = w
                    break
                if stamp[s, w] < stamp[s, way]:
                    way = w
            if tags[s, way] != -1:
                evicted[r] = tags[s, way]
            tags[s, way] = ln
        stamp[s, way] = r + 1
    return out, evicted


def _plru_replay_py(sets, lines, n_sets, assoc, n_lines):
    n = sets.shape[0]
    out = np.empty(n, dtype=np.int8)
    evicted = np.full(n, -1, dtype=np.int64)
    tags = np.full((n_sets, assoc), -1, dtype=np.int64)
    bits = np.zeros((n_sets, max(assoc - 1, 1)), dtype=np.int8)
    seen = np.zeros(n_lines, dtype=np.bool_)
    for r in range(n):
        s = sets[r]
        ln = lines[r]
        way = -1
        for w in range(assoc):
            if tags[s, w] == ln:
                way = w
                break
        if way >= 0:
            out[r] = HIT
        else:
            if seen[ln]:
                out[r] = CONFLICT
            else:
                out[r] = COLD
                seen[ln] = True
            # the victim is the leaf the tree bits point to, even during warm-up
            node = 0
            lo = 0
            span = assoc
            while span > 1:
                half = span // 2
                if bits[s, node] == 0:
                    node = 2 * node + 1
                else:
                    node = 2 * node + 2
                    lo += half
                span = half
            way = lo
            if tags[s, way] != -1:
                evicted[r] = tags[s, way]
            tags[s, way] = ln
        # point every node on the path away from the touched way
        node = 0
        lo = 0
        span = assoc
        while span > 1:
            half = span // 2
            if way < lo + half:
                bits[s, node] = 1
                node = 2 * node + 1
            else:
                bits[s, node] = 0
                node = 2 * node + 2
                lo += half
            span = half
    return out, evicted


# ---------------------------------------------------------------------------
# reuse-point classification
# ---------------------------------------------------------------------------

def _classify_py(pos, key, n_keys, assoc, strict):
    """Tag each entry miss/reuse from the last position its key was seen."""
    n = pos.shape[0]
    miss = np.empty(n, dtype=np.bool_)
    cold = np.empty(n, dtype=np.bool_)
    last = np.full(n_keys, -1, dtype=np.int64)
    for e in range(n):
        k = key[e]
        p = last[k]
        if p < 0:
            miss[e] = True
            cold[e] = True
        else:
            dist = pos[e] - p
            miss[e] = dist >= assoc if strict else dist > assoc
            cold[e] = False
        last[k] = pos[e]
    return miss, cold


def _classify_np(pos, key, n_keys, assoc, strict):
    n = pos.shape[0]
    miss = np.ones(n, dtype=np.bool_)
    cold = np.ones(n, dtype=np.bool_)
    if n == 0:
        return miss, cold
    idx = np.lexsort((np.arange(n), key))
    k_sorted = key[idx]
    p_sorted = pos[idx]
    same = np.zeros(n, dtype=np.bool_)
    same[1:] = k_sorted[1:] == k_sorted[:-1]
    gap = np.zeros(n, dtype=np.int64)
    gap[1:] = p_sorted[1:] - p_sorted[:-1]
    far = gap >= assoc if strict else gap > assoc
    miss[idx] = ~same | far
    cold[idx] = ~same
    return miss, cold


# ---------------------------------------------------------------------------
# rectangle sweep
# ---------------------------------------------------------------------------

def _rect_sweep_py(prefix, px, py, max_w, max_h):
    """Worst-case lattice-point count of every w x h half-open rectangle.

    ``prefix`` is a 2-d inclusive prefix sum (padded with a leading zero row
    and column) of the lattice indicator on ``[0, px + max_w) x [0, py +
    max_h)``; placements range over the ``px x py`` residue box.
    """
    out = np.zeros((max_w + 1, max_h + 1), dtype=np.int64)
    for w in range(1, max_w + 1):
        for h in range(1, max_h + 1):
            best = 0
            for x0 in range(px):
                for y0 in range(py):
                    c = (prefix[x0 + w, y0 + h] - prefix[x0, y0 + h]
                         - prefix[x0 + w, y0] + prefix[x0, y0])
                    if c > best:
                        best = c
            out[w, h] = best
    return out


def _rect_sweep_np(prefix, px, py, max_w, max_h):
    out = np.zeros((max_w + 1, max_h + 1), dtype=np.int64)
    base = prefix[:px, :py]
    for w in range(1, max_w + 1):
        top = prefix[w:w + px, :]
        for h in range(1, max_h + 1):
            c = top[:, h:h + py] - prefix[:px, h:h + py] - top[:, :py] + base
            out[w, h] = c.max()
    return out


lru_replay_jit = _jit(_lru_replay_py)
plru_replay_jit = _jit(_plru_replay_py)
classify_jit = _jit(_classify_py)
rect_sweep_jit = _jit(_rect_sweep_py)

if USE_NUMBA:
    lru_replay = lru_replay_jit
    plru_replay = plru_replay_jit
    classify = classify_jit
    rect_sweep = rect_sweep_jit
else:
    lru_replay = _lru_replay_py
    plru_replay = _plru_replay_py
    classify = _classify_np
    rect_sweep = _rect_sweep_np
