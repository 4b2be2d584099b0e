"""Scalar fields on R^m: exact quadratics, analytic combinators and sampled grids.

All fields are vectorised over leading axes: ``value`` maps ``(..., m)`` to
``(...)``, ``gradient`` to ``(..., m)`` and ``hessian`` to ``(..., m, m)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from . import _kernels
from .errors import DegenerateMaskError, DimensionError, DomainError, PreconditionError, StencilTooSmallError


def _points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim:
        raise DimensionError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


class ScalarField:
    """Base class; subclasses implement ``_value``, ``_gradient`` and ``_hessian``."""

    dim: int

    def value(self, x):
        return _scalar(self._value(_points(x, self.dim)))

    def gradient(self, x) -> np.ndarray:
        return self._gradient(_points(x, self.dim))

    def hessian(self, x) -> np.ndarray:
        return self._hessian(_points(x, self.dim))

    __call__ = value

    def __neg__(self) -> "ScalarField":
        return ScaledField(self, -1.0)

    def _value(self, x):
        raise NotImplementedError

    def _gradient(self, x):
        raise NotImplementedError

    def _hessian(self, x):
        raise NotImplementedError


class QuadraticField(ScalarField):
    """``u(x) = c + b.x + x^T Q x`` (no factor 1/2), so ``hessian = 2Q``."""

    def __init__(self, c: float, b, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        if Q.shape[0] != Q.shape[1] or b.shape[0] != Q.shape[0]:
            raise DimensionError(f"inconsistent shapes b{b.shape}, Q{Q.shape}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12:
            raise PreconditionError("Q must be symmetric")
        self.c = float(c)
        self.b = b
        self.Q = 0.5 * (Q + Q.T)
        self.dim = Q.shape[0]

    @classmethod
    def from_diagonal(cls, diag, c: float = 0.0) -> "QuadraticField":
        diag = np.asarray(diag, dtype=np.float64)
        return cls(c, np.zeros(diag.size), np.diag(diag))

    def _value(self, x):
        return self.c + x @ self.b + np.einsum("...i,ij,...j->...", x, self.Q, x)

    def _gradient(self, x):
        return self.b + 2.0 * x @ self.Q

    def _hessian(self, x):
        return np.broadcast_to(2.0 * self.Q, x.shape[:-1] + self.Q.shape).copy()

    def __repr__(self):
        return f"QuadraticField(c={self.c}, b={self.b.tolist()}, Q={self.Q.tolist()})"


class FunctionField(ScalarField):
    """Field from a vectorised callable; missing derivatives use central differences."""

    def __init__(self, dim: int, func: Callable, grad: Callable | None = None,
                 hess: Callable | None = None, step: float = 1e-4):
        self.dim = dim
        self._f = func
        self._g = grad
        self._h = hess
        self.step = step

    def _value(self, x):
        return np.asarray(self._f(x), dtype=np.float64)

    def _gradient(self, x):
        if self._g is not None:
            return np.asarray(self._g(x), dtype=np.float64)
        h = self.step
        out = np.empty(x.shape)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            out[..., i] = (self._f(x + e) - self._f(x - e)) / (2 * h)
        return out

    def _hessian(self, x):
        if self._h is not None:
            return np.asarray(self._h(x), dtype=np.float64)
        h = 10 * self.step
        out = np.empty(x.shape + (self.dim,))
        f0 = self._f(x)
        eye = np.eye(self.dim) * h
        for i in range(self.dim):
            out[..., i, i] = (self._f(x + eye[i]) - 2 * f0 + self._f(x - eye[i])) / h**2
            for j in range(i + 1, self.dim):
                v = (self._f(x + eye[i] + eye[j]) - self._f(x + eye[i] - eye[j])
                     - self._f(x - eye[i] + eye[j]) + self._f(x - eye[i] - eye[j])) / (4 * h**2)
                out[..., i, j] = out[..., j, i] = v
        return out


class ScaledField(ScalarField):
    """``scale * f + shift``."""

    def __init__(self, inner: ScalarField, scale: float, shift: float = 0.0):
        self.inner = inner
        self.scale = float(scale)
        self.shift = float(shift)
        self.dim = inner.dim

    def _value(self, x):
        return self.scale * self.inner._value(x) + self.shift

    def _gradient(self, x):
        return self.scale * self.inner._gradient(x)

    def _hessian(self, x):
        return self.scale * self.inner._hessian(x)


class SmoothMax(ScalarField):
    """Log-sum-exp maximum ``log(sum exp(k f_i)) / k`` with exact derivatives.

    It overestimates ``max f_i`` by at most ``log(len(fields)) / k`` and is
    convex whenever every ``f_i`` is.
    """

    def __init__(self, fields: Sequence[ScalarField], sharpness: float = 20.0):
        dims = {f.dim for f in fields}
        if len(dims) != 1:
            raise DimensionError("SmoothMax needs fields of a common dimension")
        self.fields = list(fields)
        self.k = float(sharpness)
        self.dim = dims.pop()

    def _weights(self, x):
        vals = np.stack([f._value(x) for f in self.fields], axis=-1)
        top = vals.max(axis=-1, keepdims=True)
        e = np.exp(self.k * (vals - top))
        s = e.sum(axis=-1, keepdims=True)
        return top[..., 0] + np.log(s[..., 0]) / self.k, e / s

    def _value(self, x):
        return self._weights(x)[0]

    def _gradient(self, x):
        _, w = self._weights(x)
        grads = np.stack([f._gradient(x) for f in self.fields], axis=-2)
        return np.einsum("...k,...ki->...i", w, grads)

    def _hessian(self, x):
        _, w = self._weights(x)
        grads = np.stack([f._gradient(x) for f in self.fields], axis=-2)
        hess = np.stack([f._hessian(x) for f in self.fields], axis=-3)
        g = np.einsum("...k,...ki->...i", w, grads)
        second = np.einsum("...k,...ki,...kj->...ij", w, grads, grads)
        return (np.einsum("...k,...kij->...ij", w, hess)
                + self.k * (second - g[..., :, None] * g[..., None, :]))


def smooth_min(fields: Sequence[ScalarField], sharpness: float = 20.0) -> ScalarField:
    return -SmoothMax([-f for f in fields], sharpness)


class PullbackField(ScalarField):
    """``f(O^T (x - t))``: the push-forward of ``f``'s sublevel sets by ``x -> Ox + t``."""

    def __init__(self, inner: ScalarField, O, t):
        self.inner = inner
        self.O = np.asarray(O, dtype=np.float64)
        self.t = np.asarray(t, dtype=np.float64)
        self.dim = inner.dim

    def _pre(self, x):
        return (x - self.t) @ self.O

    def _value(self, x):
        return self.inner._value(self._pre(x))

    def _gradient(self, x):
        return self.inner._gradient(self._pre(x)) @ self.O.T

    def _hessian(self, x):
        return self.O @ self.inner._hessian(self._pre(x)) @ self.O.T


class ExtendedField(ScalarField):
    """A field on R^k read through selected coordinates of R^m (others ignored)."""

    def __init__(self, inner: ScalarField, dim: int, coords: Sequence[int]):
        if len(coords) != inner.dim:
            raise DimensionError("one coordinate per inner dimension required")
        self.inner = inner
        self.dim = dim
        self.coords = np.asarray(coords, dtype=np.int64)

    def _value(self, x):
        return self.inner._value(x[..., self.coords])

    def _gradient(self, x):
        out = np.zeros(x.shape)
        out[..., self.coords] = self.inner._gradient(x[..., self.coords])
        return out

    def _hessian(self, x):
        out = np.zeros(x.shape + (self.dim,))
        h = self.inner._hessian(x[..., self.coords])
        out[..., self.coords[:, None], self.coords[None, :]] = h
        return out


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class RegularGrid:
    origin: np.ndarray
    spacing: float
    shape: tuple[int, ...]

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.spacing <= 0:
            raise PreconditionError("grid spacing must be positive")
        if len(self.shape) != origin.size or min(self.shape) < 2:
            raise PreconditionError("need one extent >= 2 per axis")

    @classmethod
    def covering(cls, lo, hi, spacing: float) -> "RegularGrid":
        """Smallest grid with the given spacing whose box contains ``[lo, hi]``."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        shape = np.maximum(np.ceil((hi - lo) / spacing - 1e-9).astype(int) + 1, 2)
        return cls(lo, spacing, tuple(shape))

    @classmethod
    def cube(cls, lo: float, hi: float, n: int, dim: int) -> "RegularGrid":
        return cls(np.full(dim, lo), (hi - lo) / (n - 1), (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * (np.asarray(self.shape) - 1)

    def axes(self) -> list[np.ndarray]:
        return [o + self.spacing * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def point(self, index) -> np.ndarray:
        return self.origin + self.spacing * np.asarray(index, dtype=np.float64)

    def nearest_index(self, x) -> tuple[int, ...] | np.ndarray:
        x = _points(x, self.dim)
        idx = np.rint((x - self.origin) / self.spacing).astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise DomainError("point outside grid box")
        return tuple(int(i) for i in idx) if idx.ndim == 1 else idx


@dataclass
class GridField(ScalarField):
    """Node values on a :class:`RegularGrid`; ``-inf`` marks nodes outside the support."""

    grid: RegularGrid
    values: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise DimensionError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        self.dim = self.grid.dim

    @classmethod
    def sample(cls, grid: RegularGrid, func: Callable) -> "GridField":
        return cls(grid, np.asarray(func(grid.nodes()), dtype=np.float64))

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)

    def _cell(self, x, margin: int):
        rel = (x - self.grid.origin) / self.grid.spacing
        n = np.asarray(self.grid.shape)
        tol = 1e-9
        if np.any(rel < margin - tol) or np.any(rel > n - 1 - margin + tol):
            raise DomainError("point outside the admissible grid region")
        base = np.clip(np.floor(rel).astype(np.int64), margin, n - 2 - margin)
        base = np.maximum(base, 0)
        return base, np.clip(rel - base, 0.0, 1.0)

    def _interpolate(self, x, margin, nodal):
        """Multilinear interpolation of ``nodal(idx) -> (N, ...)`` at points ``x``."""
        flat = x.reshape(-1, self.dim)
        base, t = self._cell(flat, margin)
        acc = None
        bad = np.zeros(flat.shape[0], dtype=bool)
        for corner in itertools.product((0, 1), repeat=self.dim):
            c = np.asarray(corner)
            w = np.prod(np.where(c == 1, t, 1.0 - t), axis=1)
            v = nodal(base + c)
            tail = (slice(None),) + (None,) * (v.ndim - 1)
            live = w > 0
            bad |= live & ~np.all(np.isfinite(v.reshape(v.shape[0], -1)), axis=1)
            term = np.where(live[tail], w[tail] * np.where(np.isfinite(v), v, 0.0), 0.0)
            acc = term if acc is None else acc + term
        return acc, bad, x.shape[:-1]

    def _value(self, x):
        acc, bad, lead = self._interpolate(x, 0, lambda idx: self.values[tuple(idx.T)].astype(np.float64))
        acc = np.where(bad, -np.inf, acc)
        return acc.reshape(lead)

    def _gradient(self, x):
        acc, bad, lead = self._interpolate(x, 1, lambda idx: gradient_at_nodes(self.values, self.grid.spacing, idx))
        acc[bad] = np.nan
        return acc.reshape(lead + (self.dim,))

    def _hessian(self, x):
        acc, bad, lead = self._interpolate(x, 1, lambda idx: hessian_at_nodes(self.values, self.grid.spacing, idx))
        acc[bad] = np.nan
        return acc.reshape(lead + (self.dim, self.dim))


def _shifted(values, idx, shift):
    return values[tuple((idx + shift).T)].astype(np.float64)


def gradient_at_nodes(values: np.ndarray, h: float, idx) -> np.ndarray:
    """Central-difference gradient at interior node indices ``idx`` of shape ``(N, m)``."""
    idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
    m = values.ndim
    out = np.empty((idx.shape[0], m))
    eye = np.eye(m, dtype=np.int64)
    with np.errstate(invalid="ignore"):
        for a in range(m):
            out[:, a] = (_shifted(values, idx, eye[a]) - _shifted(values, idx, -eye[a])) / (2 * h)
    out[~np.isfinite(out)] = np.nan
    return out


def hessian_at_nodes(values: np.ndarray, h: float, idx) -> np.ndarray:
    """Second-order central-difference Hessian at interior node indices, symmetrised."""
    idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
    m = values.ndim
    out = np.empty((idx.shape[0], m, m))
    eye = np.eye(m, dtype=np.int64)
    with np.errstate(invalid="ignore"):
        f0 = _shifted(values, idx, 0)
        for a in range(m):
            out[:, a, a] = (_shifted(values, idx, eye[a]) - 2 * f0 + _shifted(values, idx, -eye[a])) / h**2
            for b in range(a + 1, m):
                v = (_shifted(values, idx, eye[a] + eye[b]) - _shifted(values, idx, eye[a] - eye[b])
                     - _shifted(values, idx, eye[b] - eye[a]) + _shifted(values, idx, -eye[a] - eye[b])) / (4 * h**2)
                out[:, a, b] = out[:, b, a] = v
    out[~np.isfinite(out)] = np.nan
    return 0.5 * (out + np.swapaxes(out, -1, -2))


# ---------------------------------------------------------------------------
# distance transform and mollification


def distance_field(mask: GridField, use_numba: bool | None = None) -> GridField:
    """Exact Euclidean distance from each inside node to the nearest outside node.

    Outside nodes carry 0; distances are in world units.
    """
    inside = np.asarray(mask.values, dtype=bool)
    if inside.all() or not inside.any():
        raise DegenerateMaskError("mask needs at least one inside and one outside node")
    sq = _kernels.squared_edt(~inside, use_numba=use_numba)
    return GridField(mask.grid, np.sqrt(sq) * mask.grid.spacing)


class MollifierKernel:
    """Radial bump ``exp(1/((r/eps)^2 - 1))`` sampled on grid offsets with ``r < eps``."""

    def __init__(self, eps: float, spacing: float, dim: int):
        self.eps = float(eps)
        self.spacing = float(spacing)
        self.dim = dim
        rad = int(np.floor(eps / spacing))
        rng = np.arange(-rad, rad + 1)
        offs = np.stack(np.meshgrid(*([rng] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        sq = (offs**2).sum(axis=1)
        keep = sq * spacing * spacing < eps * eps
        self.offsets = offs[keep]
        self.squared_norms = sq[keep]
        s = self.squared_norms * spacing * spacing / (eps * eps)
        w = np.exp(1.0 / (s - 1.0))
        self.weights = w / w.sum()
        self.radius_nodes = rad

    def __len__(self):
        return self.weights.size

    def dense(self) -> np.ndarray:
        r = self.radius_nodes
        k = np.zeros((2 * r + 1,) * self.dim)
        k[tuple((self.offsets + r).T)] = self.weights
        return k


DIRECT_WORK_LIMIT = 1e8


def mollify(f: GridField, eps: float, method: str = "auto", use_numba: bool | None = None) -> GridField:
    """Convolve with the radial bump of radius ``eps``.

    Output nodes whose stencil would touch an undefined node (or leave the
    grid) are undefined (``-inf``). ``method`` is ``"direct"``, ``"fft"`` or
    ``"auto"``; only the direct path is exactly order preserving.
    """
    h = f.grid.spacing
    if eps < 2 * h:
        raise StencilTooSmallError(f"eps={eps} below 2h={2 * h}")
    kernel = MollifierKernel(eps, h, f.dim)
    defined = f.defined
    outside = np.pad(~defined, 1, constant_values=True)
    sq = _kernels.squared_edt(outside, use_numba=use_numba)[(slice(1, -1),) * f.dim]
    ok = ~(sq * h * h < eps * eps)
    out = np.full(f.grid.shape, -np.inf)
    if not ok.any():
        return GridField(f.grid, out)
    if method == "auto":
        method = "direct" if ok.sum() * len(kernel) <= DIRECT_WORK_LIMIT else "fft"
    vals = np.where(defined, f.values, 0.0).astype(np.float64)
    if method == "direct":
        strides = np.array(vals.strides) // vals.itemsize
        targets = np.flatnonzero(ok)
        flat_offsets = kernel.offsets @ strides
        out.ravel()[targets] = _kernels.correlate_at(vals, targets, flat_offsets, kernel.weights, use_numba)
    elif method == "fft":
        conv = fftconvolve(vals, kernel.dense(), mode="same")
        out[ok] = conv[ok]
    else:
        raise ValueError(f"unknown method {method!r}")
    return GridField(f.grid, out)
