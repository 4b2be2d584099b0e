"""Pointwise classification of C^2 fields: convex, subharmonic, psh, msh.

Multisubharmonicity at a point means ``X^T H X + Y^T H Y >= 0`` for every
orthonormal pair ``(X, Y)``. By the Ky Fan minimum principle the minimum of
that quantity over all pairs is the sum of the two smallest eigenvalues of
``H``; :func:`msh_margin` uses this, :func:`msh_margin_oracle` samples pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError, PreconditionError
from .fields import GridField, ScalarField

PAIR_TOL = 1e-8


class FieldClass(str, Enum):
    CONVEX = "convex"
    SUBHARMONIC = "subharmonic"
    PSH = "psh"
    MSH = "msh"


class Verdict(str, Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"


@dataclass
class ClassificationReport:
    requested: FieldClass
    verdict: Verdict
    margin: float
    witness_point: np.ndarray | None
    witness_directions: tuple[np.ndarray, ...] = ()
    tolerance: float = 1e-9
    n_samples: int = 0
    # margin within tolerance of zero: the class boundary, reported as "holds"
    on_boundary: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "class": self.requested.value,
            "verdict": self.verdict.value,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "on_boundary": self.on_boundary,
            "n_samples": self.n_samples,
            "witness_point": None if self.witness_point is None else self.witness_point.tolist(),
            "witness_directions": [d.tolist() for d in self.witness_directions],
            "notes": list(self.notes),
        }


def _check_pair(X, Y):
    nx, ny, dot = np.linalg.norm(X), np.linalg.norm(Y), float(np.dot(X, Y))
    if abs(nx - 1) > PAIR_TOL or abs(ny - 1) > PAIR_TOL or abs(dot) > PAIR_TOL:
        raise PreconditionError(f"X, Y not orthonormal (|X|={nx}, |Y|={ny}, <X,Y>={dot})")


def directional_laplacian(H, X, Y) -> float:
    """``X^T H X + Y^T H Y`` for an orthonormal pair."""
    H = np.asarray(H, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    _check_pair(X, Y)
    return float(X @ H @ X + Y @ H @ Y)


def msh_margin(H) -> float | np.ndarray:
    """Sum of the two smallest eigenvalues of the symmetric matrix (stack) ``H``."""
    H = np.asarray(H, dtype=np.float64)
    if H.shape[-1] < 2:
        raise DimensionError("multisubharmonicity needs m >= 2")
    if H.shape[-1] == 2:
        # both eigenvalues: the sum is the trace, taken directly to avoid rounding
        out = H[..., 0, 0] + H[..., 1, 1]
        return float(out) if np.ndim(out) == 0 else out
    ev = np.linalg.eigvalsh(H)
    out = ev[..., 0] + ev[..., 1]
    return float(out) if np.ndim(out) == 0 else out


def random_orthonormal_pair(m: int, rng: np.random.Generator, size: int | None = None):
    """Gaussian draw followed by Gram-Schmidt; near-collinear draws are redrawn.

    With ``size`` given, returns arrays of shape ``(size, m)``.
    """
    if m < 2:
        raise DimensionError("need m >= 2 for an orthonormal pair")
    n = 1 if size is None else int(size)
    X = np.empty((n, m))
    Y = np.empty((n, m))
    todo = np.arange(n)
    while todo.size:
        g = rng.standard_normal((todo.size, 2, m))
        a = g[:, 0]
        na = np.linalg.norm(a, axis=1)
        x = a / na[:, None]
        b = g[:, 1] - np.sum(g[:, 1] * x, axis=1)[:, None] * x
        nb = np.linalg.norm(b, axis=1)
        good = (na > 1e-8) & (nb > 1e-8 * np.linalg.norm(g[:, 1], axis=1))
        y = b[good] / nb[good][:, None]
        # one re-orthogonalisation pass keeps <X,Y> at rounding level
        y = y - np.sum(y * x[good], axis=1)[:, None] * x[good]
        y /= np.linalg.norm(y, axis=1)[:, None]
        X[todo[good]] = x[good]
        Y[todo[good]] = y
        todo = todo[~good]
    if size is None:
        return X[0], Y[0]
    return X, Y


def msh_margin_oracle(H, trials: int, rng: np.random.Generator, batch: int = 65536) -> float:
    """Minimum of the directional Laplacian over ``trials`` random orthonormal pairs."""
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    H = np.asarray(H, dtype=np.float64)
    best = np.inf
    left = int(trials)
    while left > 0:
        k = min(batch, left)
        X, Y = random_orthonormal_pair(H.shape[0], rng, size=k)
        vals = np.einsum("ni,ij,nj->n", X, H, X) + np.einsum("ni,ij,nj->n", Y, H, Y)
        best = min(best, float(vals.min()))
        left -= k
    return best


def complex_hessian(H) -> np.ndarray:
    """Complex (Levi) Hessian ``d^2u / dz_j dzbar_k`` from the real Hessian.

    Real coordinates are ordered ``(x1, y1, ..., xn, yn)`` with ``z_j = x_j + i y_j``.
    """
    H = np.asarray(H, dtype=np.float64)
    m = H.shape[-1]
    if m % 2:
        raise DimensionError(f"complex Hessian needs even real dimension, got {m}")
    xx = H[..., 0::2, 0::2]
    yy = H[..., 1::2, 1::2]
    xy = H[..., 0::2, 1::2]
    yx = H[..., 1::2, 0::2]
    L = 0.25 * ((xx + yy) + 1j * (xy - yx))
    return 0.5 * (L + np.conj(np.swapaxes(L, -1, -2)))


def _canonical_sign(v):
    i = np.argmax(np.abs(v))
    return v if v[i].real >= 0 else -v


def _hessians_and_tol(field: ScalarField, points):
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] == 0:
        raise PreconditionError("empty sample set")
    H = field.hessian(pts)
    if isinstance(field, GridField):
        tol = 10 * field.grid.spacing**2
    else:
        tol = 1e-9
    return pts, H, tol


def classify(field: ScalarField, points, cls: FieldClass | str, tol: float | None = None) -> ClassificationReport:
    """Minimum of the class criterion over ``points``; holds iff ``margin >= -tol``.

    The default tolerance is 1e-9 for analytic fields and ``10 h^2`` for grid fields.
    """
    cls = FieldClass(cls)
    if cls is FieldClass.PSH and field.dim % 2:
        raise DimensionError("psh requested in odd real dimension")
    if cls is FieldClass.SUBHARMONIC and field.dim != 2:
        raise DimensionError("subharmonic classification is for m = 2")
    if cls is FieldClass.MSH and field.dim < 2:
        raise DimensionError("msh needs m >= 2")
    pts, H, default_tol = _hessians_and_tol(field, points)
    tol = default_tol if tol is None else tol
    finite = np.all(np.isfinite(H.reshape(H.shape[0], -1)), axis=1)
    if not finite.any():
        return ClassificationReport(cls, Verdict.INCONCLUSIVE, float("nan"), None, (), tol, 0,
                                    notes=["no sample with a finite Hessian"])
    pts, H = pts[finite], H[finite]

    if cls is FieldClass.CONVEX:
        ev, vec = np.linalg.eigh(H)
        crit = ev[:, 0]
        k = int(np.argmin(crit))
        dirs = (_canonical_sign(vec[k][:, 0]),)
    elif cls is FieldClass.SUBHARMONIC:
        crit = np.trace(H, axis1=-2, axis2=-1)
        k = int(np.argmin(crit))
        dirs = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    elif cls is FieldClass.PSH:
        ev, vec = np.linalg.eigh(complex_hessian(H))
        crit = ev[:, 0]
        k = int(np.argmin(crit))
        w = vec[k][:, 0]
        w = w * np.exp(-1j * np.angle(w[np.argmax(np.abs(w))]))
        real = np.empty(2 * w.size)
        real[0::2], real[1::2] = w.real, w.imag
        dirs = (real / np.linalg.norm(real),)
    else:
        ev, vec = np.linalg.eigh(H)
        crit = ev[:, 0] + ev[:, 1]
        k = int(np.argmin(crit))
        dirs = (_canonical_sign(vec[k][:, 0]), _canonical_sign(vec[k][:, 1]))

    margin = float(crit[k])
    verdict = Verdict.FAILS if margin < -tol else Verdict.HOLDS
    notes = [] if finite.all() else [f"{int((~finite).sum())} samples without finite Hessian skipped"]
    return ClassificationReport(cls, verdict, margin, pts[k].copy(), dirs, tol, int(pts.shape[0]),
                                on_boundary=abs(margin) <= tol, notes=notes)
