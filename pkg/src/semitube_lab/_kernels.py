"""Grid kernels with a numba path and a pure-numpy path.

Every public function takes ``use_numba``; ``None`` means the process-wide
default from :mod:`semitube_lab._backend`. Both paths return identical results
up to floating-point summation order.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from ._backend import njit


def _pick(use_numba: bool | None) -> bool:
    if use_numba is None:
        return _backend.USE_NUMBA
    return bool(use_numba) and _backend.HAVE_NUMBA


# --------------------------------------------------------------------------
# exact squared Euclidean distance transform (separable, index units)


@njit
def _edt_lines_nb(f):
    nlines, n = f.shape
    out = np.empty_like(f)
    v = np.empty(n, np.int64)
    z = np.empty(n + 1)
    for line in range(nlines):
        row = f[line]
        k = -1
        for q in range(n):
            fq = row[q]
            if fq == np.inf:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
                continue
            s = 0.0
            while True:
                p = v[k]
                s = ((fq + q * q) - (row[p] + p * p)) / (2.0 * (q - p))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        if k < 0:
            for q in range(n):
                out[line, q] = np.inf
            continue
        j = 0
        for q in range(n):
            while z[j + 1] < q:
                j += 1
            d = q - v[j]
            out[line, q] = d * d + row[v[j]]
    return out


def _edt_lines_np(f):
    n = f.shape[1]
    idx = np.arange(n, dtype=np.float64)
    out = np.full_like(f, np.inf)
    for j in range(n):
        np.minimum(out, f[:, j : j + 1] + (idx - j) ** 2, out=out)
    return out


def squared_edt(outside: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """Squared distance (in index units) from every node to the nearest ``outside`` node."""
    lines = _edt_lines_nb if _pick(use_numba) else _edt_lines_np
    f = np.where(outside, 0.0, np.inf)
    for axis in range(f.ndim):
        moved = np.moveaxis(f, axis, -1)
        shape = moved.shape
        res = lines(np.ascontiguousarray(moved.reshape(-1, shape[-1])))
        f = np.moveaxis(res.reshape(shape), -1, axis)
    return np.ascontiguousarray(f)


# --------------------------------------------------------------------------
# direct correlation on flat index lists


@njit
def _correlate_nb(vals, targets, offsets, weights):
    out = np.empty(targets.size)
    for t in range(targets.size):
        base = targets[t]
        acc = 0.0
        for k in range(offsets.size):
            acc += weights[k] * vals[base + offsets[k]]
        out[t] = acc
    return out


def _correlate_np(vals, targets, offsets, weights):
    acc = np.zeros(targets.size)
    for k in range(offsets.size):
        acc += weights[k] * vals[targets + offsets[k]]
    return acc


def correlate_at(
    vals: np.ndarray,
    targets: np.ndarray,
    offsets: np.ndarray,
    weights: np.ndarray,
    use_numba: bool | None = None,
) -> np.ndarray:
    """``sum_k weights[k] * vals[t + offsets[k]]`` for every flat target index ``t``.

    The caller guarantees every touched index is in range.
    """
    fn = _correlate_nb if _pick(use_numba) else _correlate_np
    return fn(
        np.ascontiguousarray(vals, dtype=np.float64).ravel(),
        np.ascontiguousarray(targets, dtype=np.int64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
    )


# --------------------------------------------------------------------------
# face-adjacency flood fill


@njit
def _flood_nb(mask, shape, strides, start):
    n = mask.size
    out = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    out[start] = True
    stack[0] = start
    top = 1
    ndim = shape.size
    while top > 0:
        top -= 1
        idx = stack[top]
        for a in range(ndim):
            c = (idx // strides[a]) % shape[a]
            if c > 0:
                j = idx - strides[a]
                if mask[j] and not out[j]:
                    out[j] = True
                    stack[top] = j
                    top += 1
            if c < shape[a] - 1:
                j = idx + strides[a]
                if mask[j] and not out[j]:
                    out[j] = True
                    stack[top] = j
                    top += 1
    return out


def _flood_np(mask, start):
    comp = np.zeros_like(mask)
    comp[start] = True
    while True:
        grown = comp.copy()
        for a in range(mask.ndim):
            lo = [slice(None)] * mask.ndim
            hi = [slice(None)] * mask.ndim
            lo[a] = slice(None, -1)
            hi[a] = slice(1, None)
            grown[tuple(hi)] |= comp[tuple(lo)]
            grown[tuple(lo)] |= comp[tuple(hi)]
        grown &= mask
        if np.array_equal(grown, comp):
            return comp
        comp = grown


def flood_fill(mask: np.ndarray, start: tuple[int, ...], use_numba: bool | None = None) -> np.ndarray:
    """Face-connected component of ``mask`` containing the node ``start``."""
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if not _pick(use_numba):
        return _flood_np(mask, tuple(start))
    shape = np.array(mask.shape, dtype=np.int64)
    strides = np.array(mask.strides, dtype=np.int64) // mask.itemsize
    flat = int(np.ravel_multi_index(tuple(start), mask.shape))
    return _flood_nb(mask.ravel(), shape, strides, flat).reshape(mask.shape)
