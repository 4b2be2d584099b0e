"""Semitube domains, Hartogs-Laurent domains and the covering map between them.

Points of C^2 are complex arrays of shape ``(..., 2)``. A base ``B`` in R^3
uses effective coordinates ``(Re z1, Im z1, Re z2)``; the semitube over it
never reads ``Im z2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classify import complex_hessian
from .errors import DimensionError, DomainError, PreconditionError, ResolutionError
from .fields import ExtendedField, FunctionField, GridField
from .geometry import ImplicitDomain

DEFAULT_SCAN = 512
BISECT_TOL = 1e-10


class TruncationWarning(UserWarning):
    """A slice reaches the end of its scan range."""


def to_real(z) -> np.ndarray:
    """``(..., n)`` complex to ``(..., 2n)`` real in ``(x1, y1, ..., xn, yn)`` order."""
    z = np.asarray(z, dtype=np.complex128)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def to_complex(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[..., 0::2] + 1j * x[..., 1::2]


def effective(z) -> np.ndarray:
    """``(Re z1, Im z1, Re z2)`` for points of C^2."""
    z = np.asarray(z, dtype=np.complex128)
    return np.stack([z[..., 0].real, z[..., 0].imag, z[..., 1].real], axis=-1)


# ---------------------------------------------------------------------------
# bases and semitubes


def _base_dim(B) -> int:
    return B.dim if isinstance(B, ImplicitDomain) else B.grid.dim


def base_contains(B, x) -> np.ndarray:
    """Membership in a base given as an :class:`ImplicitDomain` or a boolean :class:`GridField`."""
    x = np.asarray(x, dtype=np.float64)
    if isinstance(B, ImplicitDomain):
        return np.asarray(B.rho.value(x) < 0)
    rel = np.rint((x - B.grid.origin) / B.grid.spacing).astype(np.int64)
    inside = np.all((rel >= 0) & (rel < np.asarray(B.grid.shape)), axis=-1)
    out = np.zeros(x.shape[:-1], dtype=bool)
    rel = rel[inside]
    out[inside] = np.asarray(B.values, dtype=bool)[tuple(rel.T)]
    return out


@dataclass
class SemitubeDomain:
    """``S_B = {(z1, z2) : (z1, Re z2) in B}``."""

    base: object

    def contains(self, z) -> np.ndarray:
        return base_contains(self.base, effective(z))

    @property
    def rho(self) -> ExtendedField:
        """Defining function on R^4 ``(x1, y1, x2, y2)`` that ignores ``y2``."""
        if not isinstance(self.base, ImplicitDomain):
            raise PreconditionError("grid-mask bases have no defining function")
        return ExtendedField(self.base.rho, 4, [0, 1, 2])

    def as_implicit_domain(self, im_range: tuple[float, float] = (-0.5, 0.5)) -> ImplicitDomain:
        B = self.base
        if not isinstance(B, ImplicitDomain):
            raise PreconditionError("grid-mask bases have no defining function")
        lo = np.array([B.lo[0], B.lo[1], B.lo[2], im_range[0]])
        hi = np.array([B.hi[0], B.hi[1], B.hi[2], im_range[1]])
        return ImplicitDomain(self.rho, lo, hi)


def make_semitube(B) -> SemitubeDomain:
    if _base_dim(B) != 3:
        raise DimensionError("a semitube base lives in R^3")
    return SemitubeDomain(B)


def pi_map(z) -> np.ndarray:
    """Covering map ``(z1, z2) -> (z1, exp z2)``."""
    z = np.asarray(z, dtype=np.complex128)
    return np.stack([z[..., 0], np.exp(z[..., 1])], axis=-1)


# ---------------------------------------------------------------------------
# slices


@dataclass
class Slice:
    """Maximal open intervals of ``{x3 : (Re z1, Im z1, x3) in B}``."""

    intervals: list[tuple[float, float]]
    truncated: bool = False
    # intervals resolved by fewer than two scan steps
    narrow: list[bool] = field(default_factory=list)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)


def _bisect(f, inside, outside, tol=BISECT_TOL, max_iter=80):
    """Vectorised bisection between points known inside (f<0) and outside (f>=0)."""
    a = np.array(inside, dtype=np.float64)
    b = np.array(outside, dtype=np.float64)
    for _ in range(max_iter):
        if np.all(np.abs(b - a) <= tol):
            break
        m = 0.5 * (a + b)
        neg = f(m) < 0
        a = np.where(neg, m, a)
        b = np.where(neg, b, m)
    return a, b


def _runs(neg: np.ndarray):
    """Start/stop indices (inclusive) of True-runs along the last axis, per row."""
    pad = np.zeros(neg.shape[:-1] + (1,), dtype=bool)
    d = np.diff(np.concatenate([pad, neg, pad], axis=-1).astype(np.int8), axis=-1)
    starts = np.argwhere(d == 1)
    stops = np.argwhere(d == -1)
    return starts, stops


def fiber_intervals_many(B, z1, scan: int = DEFAULT_SCAN, x3_range=None) -> list[Slice]:
    """:func:`fiber_intervals` for an array of base points ``z1``."""
    z1 = np.atleast_1d(np.asarray(z1, dtype=np.complex128)).ravel()
    if isinstance(B, GridField):
        return [_mask_slice(B, c) for c in z1]
    lo, hi = (B.lo[2], B.hi[2]) if x3_range is None else x3_range
    t = np.linspace(lo, hi, scan)
    step = t[1] - t[0]
    N = z1.size
    X = np.empty((N, scan, 3))
    X[..., 0] = z1.real[:, None]
    X[..., 1] = z1.imag[:, None]
    X[..., 2] = t[None, :]
    neg = B.rho.value(X) < 0
    starts, stops = _runs(neg)
    rows = starts[:, 0]
    i0 = starts[:, 1]
    i1 = stops[:, 1] - 1

    def f_rows(r):
        def f(x3):
            P = np.stack([z1.real[r], z1.imag[r], x3], axis=-1)
            return B.rho.value(P)
        return f

    left = t[i0].astype(np.float64)
    need_l = i0 > 0
    if need_l.any():
        a, b = _bisect(f_rows(rows[need_l]), t[i0[need_l]], t[i0[need_l] - 1])
        left[need_l] = 0.5 * (a + b)
    right = t[i1].astype(np.float64)
    need_r = i1 < scan - 1
    if need_r.any():
        a, b = _bisect(f_rows(rows[need_r]), t[i1[need_r]], t[i1[need_r] + 1])
        right[need_r] = 0.5 * (a + b)

    out = [Slice([], False, []) for _ in range(N)]
    for k in range(rows.size):
        s = out[rows[k]]
        s.intervals.append((float(left[k]), float(right[k])))
        s.narrow.append(bool(i1[k] - i0[k] + 1 < 2))
        if not need_l[k] or not need_r[k]:
            s.truncated = True
    return out


def _mask_slice(B: GridField, z1: complex) -> Slice:
    g = B.grid
    i = int(np.rint((z1.real - g.origin[0]) / g.spacing))
    j = int(np.rint((z1.imag - g.origin[1]) / g.spacing))
    if not (0 <= i < g.shape[0] and 0 <= j < g.shape[1]):
        return Slice([], False, [])
    col = np.asarray(B.values[i, j, :], dtype=bool)
    starts, stops = _runs(col[None, :])
    t = g.axes()[2]
    h = g.spacing
    iv, narrow = [], []
    trunc = False
    for s, e in zip(starts[:, 1], stops[:, 1] - 1):
        iv.append((float(t[s] - h / 2), float(t[e] + h / 2)))
        narrow.append(bool(e - s + 1 < 2))
        trunc |= s == 0 or e == len(t) - 1
    return Slice(iv, trunc, narrow)


def fiber_intervals(B, z1: complex, scan: int = DEFAULT_SCAN, x3_range=None) -> Slice:
    """Maximal open intervals of the vertical slice of ``B`` over ``z1``.

    Sign scan of ``rho`` at ``scan`` samples, endpoints refined by bisection
    to 1e-10; grid-mask bases report node-run intervals.
    """
    s = fiber_intervals_many(B, [z1], scan, x3_range)[0]
    if s.truncated:
        warnings.warn(f"slice over z1={z1} touches the scan range", TruncationWarning, stacklevel=2)
    return s


# ---------------------------------------------------------------------------
# Hartogs-Laurent domains


@dataclass(frozen=True)
class AnnulusUnion:
    """Disjoint, ascending open radius intervals ``(r_k, R_k)``."""

    radii: tuple[tuple[float, float], ...]

    def __post_init__(self):
        prev = -np.inf
        for r, R in self.radii:
            if not (0 <= r < R) or r < prev:
                raise PreconditionError(f"bad annulus list {self.radii}")
            prev = R

    @classmethod
    def from_log_intervals(cls, intervals) -> "AnnulusUnion":
        return cls(tuple((float(np.exp(a)), float(np.exp(b))) for a, b in intervals))

    def contains(self, radius) -> np.ndarray:
        radius = np.asarray(radius, dtype=np.float64)
        out = np.zeros(radius.shape, dtype=bool)
        for r, R in self.radii:
            out |= (radius > r) & (radius < R)
        return out

    def __len__(self):
        return len(self.radii)


@dataclass
class HartogsLaurentDomain:
    """Domain in C^2 with annular fibers; membership depends on ``(z1, |z2|)`` only."""

    fiber_fn: Callable[[complex], AnnulusUnion]
    fibers_fn: Callable | None = None
    base_box: tuple | None = None

    def fiber(self, z1: complex) -> AnnulusUnion:
        return self.fiber_fn(complex(z1))

    def fibers(self, z1) -> list[AnnulusUnion]:
        z1 = np.atleast_1d(np.asarray(z1, dtype=np.complex128)).ravel()
        if self.fibers_fn is not None:
            return self.fibers_fn(z1)
        return [self.fiber(c) for c in z1]

    def in_base(self, z1) -> np.ndarray:
        return np.array([len(f) > 0 for f in self.fibers(z1)])

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.complex128)
        flat = z.reshape(-1, 2)
        uniq, inv = np.unique(flat[:, 0], return_inverse=True)
        fibs = self.fibers(uniq)
        out = np.zeros(len(flat), dtype=bool)
        rad = np.abs(flat[:, 1])
        inv = inv.ravel()
        for k, fib in enumerate(fibs):
            sel = inv == k
            out[sel] = fib.contains(rad[sel])
        return out.reshape(z.shape[:-1])


def pi_push(S: SemitubeDomain, scan: int = DEFAULT_SCAN, strict: bool = False) -> HartogsLaurentDomain:
    """The Hartogs-Laurent domain ``pi(S_B)``; fibers are exponentials of base slices.

    With ``strict`` a slice containing an under-resolved interval raises
    :class:`ResolutionError`.
    """
    B = S.base

    def convert(sl: Slice) -> AnnulusUnion:
        if strict and any(sl.narrow):
            raise ResolutionError("slice interval narrower than two scan steps")
        return AnnulusUnion.from_log_intervals(sl.intervals)

    def many(z1):
        return [convert(s) for s in fiber_intervals_many(B, z1, scan)]

    def one(z1):
        return many(np.array([z1]))[0]

    box = None
    if isinstance(B, ImplicitDomain):
        box = ((B.lo[0], B.lo[1]), (B.hi[0], B.hi[1]))
    return HartogsLaurentDomain(one, many, box)


# ---------------------------------------------------------------------------
# lifted functions (exhaustion of pi(S_B))


def lift_invariant_function(u: Callable) -> Callable:
    """``v(z, w) = u(Re z, Im z, log|w|)`` for ``u`` on effective coordinates.

    Well defined on ``pi(S_B)`` because ``u`` ignores ``Im z2``.
    """

    def v(z1, w):
        z1 = np.asarray(z1, dtype=np.complex128)
        w = np.asarray(w, dtype=np.complex128)
        if np.any(w == 0):
            raise DomainError("v is undefined at w = 0")
        return u(np.stack(np.broadcast_arrays(z1.real, z1.imag, np.log(np.abs(w))), axis=-1))

    return v


def exhaustion_function_hl(u: Callable) -> Callable:
    """``max(v(z, w), |z|^2 + |w|^2)`` with ``v`` the lift of ``u = -log d``."""
    v = lift_invariant_function(u)

    def vt(z1, w):
        z1 = np.asarray(z1, dtype=np.complex128)
        w = np.asarray(w, dtype=np.complex128)
        return np.maximum(v(z1, w), np.abs(z1) ** 2 + np.abs(w) ** 2)

    vt.branch = v
    return vt


def complex_hessian_min_fd(func: Callable, z, step: float = 1e-3) -> np.ndarray:
    """Smallest eigenvalue of the finite-difference complex Hessian of ``func(z1, w)``."""
    z = np.atleast_2d(np.asarray(z, dtype=np.complex128))

    def f_real(x):
        c = to_complex(x)
        return func(c[..., 0], c[..., 1])

    H = FunctionField(4, f_real, step=step / 10).hessian(to_real(z))
    return np.linalg.eigvalsh(complex_hessian(H))[:, 0]


@dataclass
class ExhaustionCheck:
    level: float
    n_points: int
    n_sublevel: int
    max_norm: float
    all_inside: bool
    min_fiber_gap: float
    psh_min: float
    n_psh_checked: int

    @property
    def bounded(self) -> bool:
        return self.max_norm < np.sqrt(self.level) and self.all_inside

    def to_dict(self):
        return dict(self.__dict__, bounded=self.bounded)


def check_exhaustion(vt: Callable, G: HartogsLaurentDomain, points, level: float,
                     psh_points=None, dominance: float = 1e-6) -> ExhaustionCheck:
    """Sublevel boundedness of ``vt`` on sample ``points`` of ``G`` plus a psh spot check.

    The psh check uses the finite-difference complex Hessian of whichever
    branch dominates by more than ``dominance``; switch-locus points are skipped.
    """
    z = np.asarray(points, dtype=np.complex128)
    vals = vt(z[:, 0], z[:, 1])
    sub = vals < level
    zs = z[sub]
    norms = np.sqrt(np.sum(np.abs(zs) ** 2, axis=1)) if len(zs) else np.zeros(0)
    inside = G.contains(zs) if len(zs) else np.zeros(0, bool)
    gaps = []
    for (z1, w) in zs:
        fib = G.fiber(z1)
        r = abs(w)
        gaps.append(min(min(abs(r - a), abs(r - b)) for a, b in fib.radii) if len(fib) else 0.0)
    psh_min, n_psh = np.inf, 0
    if psh_points is not None and len(psh_points):
        P = np.asarray(psh_points, dtype=np.complex128)
        v = vt.branch(P[:, 0], P[:, 1])
        nrm = np.sum(np.abs(P) ** 2, axis=1)
        use_v = v > nrm + dominance
        use_n = nrm > v + dominance
        if use_v.any():
            psh_min = min(psh_min, float(complex_hessian_min_fd(vt.branch, P[use_v]).min()))
        if use_n.any():
            psh_min = min(psh_min, 1.0)  # |z|^2 + |w|^2 has complex Hessian = identity
        n_psh = int(use_v.sum() + use_n.sum())
    return ExhaustionCheck(level, len(z), int(sub.sum()), float(norms.max(initial=0.0)),
                           bool(np.all(inside)), float(min(gaps, default=np.inf)), float(psh_min), n_psh)
