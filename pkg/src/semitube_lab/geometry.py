"""Implicit domains, isometries, boundary sampling and Levi-form tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .classify import Verdict, complex_hessian
from .errors import CriticalBoundaryPointError, DimensionError, EmptyDomainError, PreconditionError
from .fields import PullbackField, QuadraticField, ScalarField

GRADIENT_FLOOR = 1e-6


@dataclass
class ImplicitDomain:
    """``{x : rho(x) < 0}``, with a box that contains the region of interest."""

    rho: ScalarField
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64).reshape(-1)
        self.hi = np.asarray(self.hi, dtype=np.float64).reshape(-1)
        if self.lo.size != self.rho.dim or self.hi.size != self.rho.dim:
            raise DimensionError("bounding box dimension does not match rho")
        if np.any(self.hi <= self.lo):
            raise PreconditionError("empty bounding box")

    @property
    def dim(self) -> int:
        return self.rho.dim

    def contains(self, x) -> np.ndarray | bool:
        v = self.rho.value(x)
        return bool(v < 0) if np.ndim(v) == 0 else v < 0

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def inside_points(self, rng: np.random.Generator, n: int, max_draws: int = 2_000_000) -> np.ndarray:
        """Rejection sample ``n`` points of the domain from its box (fewer if rare)."""
        got = []
        have = 0
        drawn = 0
        batch = max(1024, 4 * n)
        while have < n and drawn < max_draws:
            x = self.uniform(rng, batch)
            drawn += batch
            x = x[self.rho.value(x) < 0]
            got.append(x)
            have += len(x)
        pts = np.concatenate(got) if got else np.empty((0, self.dim))
        return pts[:n]


@dataclass
class Isometry:
    """``x -> O x + t``."""

    O: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.O = np.asarray(self.O, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        m = self.O.shape[0]
        if self.O.shape != (m, m) or self.t.size != m:
            raise DimensionError("Isometry needs a square O and matching t")
        if np.max(np.abs(self.O.T @ self.O - np.eye(m))) > 1e-10:
            raise PreconditionError("O is not orthogonal")

    @classmethod
    def identity(cls, m: int) -> "Isometry":
        return cls(np.eye(m), np.zeros(m))

    @property
    def dim(self) -> int:
        return self.O.shape[0]

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.O.T + self.t

    def inverse(self) -> "Isometry":
        return Isometry(self.O.T, -self.O.T @ self.t)

    def __matmul__(self, other: "Isometry") -> "Isometry":
        """Composition ``self o other``."""
        return Isometry(self.O @ other.O, self.O @ other.t + self.t)

    def to_dict(self) -> dict:
        return {"O": self.O.tolist(), "t": self.t.tolist()}


def random_isometry(m: int, rng: np.random.Generator, translation: float = 1.0) -> Isometry:
    """Haar-distributed orthogonal part (QR with sign correction), uniform translation."""
    if m < 1:
        raise DimensionError("m >= 1 required")
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    t = rng.uniform(-translation, translation, size=m) if translation > 0 else np.zeros(m)
    return Isometry(q, t)


def transform_quadratic(q: QuadraticField, A: Isometry) -> QuadraticField:
    """Closed form of ``q o A^{-1}``."""
    O, t = A.O, A.t
    Qn = O @ q.Q @ O.T
    bn = O @ q.b - 2.0 * Qn @ t
    cn = q.c - q.b @ (O.T @ t) + t @ Qn @ t
    return QuadraticField(cn, bn, 0.5 * (Qn + Qn.T))


def apply_isometry(A: Isometry, D: ImplicitDomain) -> ImplicitDomain:
    """The image ``A(D)``, defined by ``rho o A^{-1}``."""
    if A.dim != D.dim:
        raise DimensionError(f"isometry of R^{A.dim} applied to a domain in R^{D.dim}")
    if isinstance(D.rho, QuadraticField):
        rho = transform_quadratic(D.rho, A)
    else:
        rho = PullbackField(D.rho, A.O, A.t)
    corners = np.array(list(itertools.product(*zip(D.lo, D.hi))))
    image = A(corners)
    return ImplicitDomain(rho, image.min(axis=0), image.max(axis=0))


# ---------------------------------------------------------------------------
# boundary sampling


@dataclass
class BoundarySample:
    point: np.ndarray
    normal: np.ndarray


@dataclass
class BoundarySamples:
    points: np.ndarray
    normals: np.ndarray
    residuals: np.ndarray
    # converged boundary points where |grad rho| is below the floor
    inapplicable: np.ndarray
    requested: int
    warnings: list[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return len(self.points) < self.requested

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        for p, n in zip(self.points, self.normals):
            yield BoundarySample(p, n)


def _scan_crossings(D: ImplicitDomain, budget: int):
    m = D.dim
    n = max(6, int(round(budget ** (1.0 / m))))
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(D.lo, D.hi)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = D.rho.value(nodes.reshape(-1, m)).reshape((n,) * m)
    neg = vals < 0
    a_list, b_list = [], []
    for ax in range(m):
        lo = [slice(None)] * m
        hi = [slice(None)] * m
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        cross = neg[tuple(lo)] != neg[tuple(hi)]
        idx = np.argwhere(cross)
        if idx.size == 0:
            continue
        step = np.zeros(m, dtype=np.int64)
        step[ax] = 1
        a_list.append(idx)
        b_list.append(idx + step)
    if not a_list:
        return None
    a = np.concatenate(a_list)
    b = np.concatenate(b_list)
    spacing = (D.hi - D.lo) / (n - 1)
    return a, b, vals, spacing


def _project(rho: ScalarField, x: np.ndarray, eta: float, floor: float, max_iter: int):
    x = x.copy()
    done = np.zeros(len(x), dtype=bool)
    flat = np.zeros(len(x), dtype=bool)
    for _ in range(max_iter):
        live = ~done & ~flat
        if not live.any():
            break
        v = rho.value(x[live])
        g = rho.gradient(x[live])
        gn2 = np.einsum("ij,ij->i", g, g)
        ok = np.abs(v) <= eta
        small = gn2 < floor**2
        idx = np.flatnonzero(live)
        done[idx[ok]] = True
        flat[idx[~ok & small]] = True
        step = ~ok & ~small
        x[idx[step]] -= (v[step] / gn2[step])[:, None] * g[step]
    v = rho.value(x)
    done |= np.abs(v) <= eta
    return x, done, flat


def sample_boundary(D: ImplicitDomain, count: int, rng: np.random.Generator, eta: float = 1e-10,
                    grad_floor: float = GRADIENT_FLOOR, scan_budget: int = 200_000,
                    max_iter: int = 50) -> BoundarySamples:
    """Boundary points from scan-grid sign changes refined by normal projection.

    Seeds are interpolated zero crossings on scan-grid edges, jittered within a
    cell, then moved by ``x <- x - rho grad / |grad|^2`` until ``|rho| <= eta``.
    Seeds that do not converge in ``max_iter`` steps are discarded.
    """
    found = _scan_crossings(D, scan_budget)
    warnings: list[str] = []
    m = D.dim
    if found is None:
        return BoundarySamples(np.empty((0, m)), np.empty((0, m)), np.empty(0), np.empty((0, m)),
                               count, ["no sign change of rho on the scan grid"])
    a, b, vals, spacing = found
    pts, inapp = [], []
    have = 0
    for _ in range(4):
        need = int(1.5 * (count - have)) + 8
        pick = rng.integers(0, len(a), size=need)
        va = vals[tuple(a[pick].T)]
        vb = vals[tuple(b[pick].T)]
        t = np.clip(va / (va - vb), 0.0, 1.0)
        pa = D.lo + a[pick] * spacing
        pb = D.lo + b[pick] * spacing
        seed = pa + t[:, None] * (pb - pa) + rng.uniform(-0.5, 0.5, size=(need, m)) * spacing
        x, conv, flat = _project(D.rho, seed, eta, grad_floor, max_iter)
        inapp.append(x[flat])
        keep = conv & ~flat
        g = D.rho.gradient(x[keep]) if keep.any() else np.empty((0, m))
        good = np.linalg.norm(g, axis=1) >= grad_floor
        inapp.append(x[keep][~good])
        pts.append(x[keep][good])
        have += int(good.sum())
        if have >= count:
            break
    P = np.concatenate(pts)[:count]
    G = D.rho.gradient(P) if len(P) else np.empty((0, m))
    normals = G / np.linalg.norm(G, axis=1)[:, None] if len(P) else G
    res = np.abs(D.rho.value(P)) if len(P) else np.empty(0)
    if len(P) < count:
        warnings.append(f"only {len(P)} of {count} boundary samples found")
    return BoundarySamples(P, normals, np.atleast_1d(res), np.concatenate(inapp), count, warnings)


# ---------------------------------------------------------------------------
# convexity


@dataclass
class ConvexityWitness:
    p: np.ndarray
    q: np.ndarray
    midpoint: np.ndarray

    def verify(self, D: ImplicitDomain) -> bool:
        return bool(D.contains(self.p) and D.contains(self.q) and not D.contains(self.midpoint))


def convexity_witness(D: ImplicitDomain, trials: int, rng: np.random.Generator) -> ConvexityWitness | None:
    """Search ``trials`` random pairs of inside points for a midpoint outside ``D``.

    A returned witness certifies non-convexity; ``None`` certifies nothing.
    """
    if trials < 1:
        raise PreconditionError("trials >= 1 required")
    pool = D.inside_points(rng, min(2 * trials, 20000))
    if len(pool) == 0:
        raise EmptyDomainError("no interior point found in the bounding box")
    i = rng.integers(0, len(pool), size=trials)
    j = rng.integers(0, len(pool), size=trials)
    mid = 0.5 * (pool[i] + pool[j])
    bad = np.flatnonzero(D.rho.value(mid) >= 0)
    if bad.size == 0:
        return None
    k = bad[0]
    return ConvexityWitness(pool[i[k]].copy(), pool[j[k]].copy(), mid[k].copy())


# ---------------------------------------------------------------------------
# Levi form


def wirtinger_gradient(g: np.ndarray) -> np.ndarray:
    """``d rho / d z_j = (rho_xj - i rho_yj) / 2`` for real gradients ``(..., 2n)``."""
    return 0.5 * (g[..., 0::2] - 1j * g[..., 1::2])


def _levi_parts(rho: ScalarField, a, grad_floor: float):
    a = np.asarray(a, dtype=np.float64)
    if rho.dim % 2:
        raise DimensionError("Levi form needs even real dimension")
    g = rho.gradient(a)
    gn = np.linalg.norm(g, axis=-1)
    if np.any(gn < grad_floor):
        raise CriticalBoundaryPointError(f"|grad rho| below {grad_floor} at a boundary point")
    return wirtinger_gradient(g), complex_hessian(rho.hessian(a))


def levi_scalar(rho: ScalarField, a, grad_floor: float = GRADIENT_FLOOR):
    """Levi form on the unit complex tangent of a domain in C^2.

    The tangent is ``w = (-rho_z2, rho_z1) / |.|`` and the value is
    ``sum_jk L_jk w_j conj(w_k)`` with ``L_jk = d^2 rho / dz_j dzbar_k``.
    Vectorised over leading axes of ``a``.
    """
    if rho.dim != 4:
        raise DimensionError("levi_scalar is for domains in C^2 (R^4)")
    dz, L = _levi_parts(rho, a, grad_floor)
    w = np.stack([-dz[..., 1], dz[..., 0]], axis=-1)
    w = w / np.linalg.norm(w, axis=-1, keepdims=True)
    val = np.einsum("...j,...jk,...k->...", w, L, np.conj(w)).real
    return float(val) if np.ndim(val) == 0 else val


def levi_min(rho: ScalarField, a, grad_floor: float = GRADIENT_FLOOR):
    """Smallest eigenvalue of the Levi form on the complex tangent space (any n >= 2)."""
    dz, L = _levi_parts(rho, a, grad_floor)
    dz = np.atleast_2d(dz)
    L = L.reshape((-1,) + L.shape[-2:])
    n = dz.shape[-1]
    out = np.empty(dz.shape[0])
    for i in range(dz.shape[0]):
        # tangent vectors v (conjugate coordinates) satisfy <v, dz> = 0
        g = dz[i] / np.linalg.norm(dz[i])
        basis = np.linalg.svd(g[None, :].conj())[2][1:].conj().T
        M = basis.conj().T @ L[i] @ basis
        out[i] = np.linalg.eigvalsh(0.5 * (M + M.conj().T))[0] if n > 1 else 0.0
    return float(out[0]) if np.ndim(a) == 1 else out


@dataclass
class PseudoconvexityReport:
    min_levi: float
    argmin: np.ndarray | None
    verdict: Verdict
    tolerance: float
    n_samples: int
    n_inapplicable: int
    # sampling never proves pseudoconvexity; only "fails" is a certificate
    caveat: bool = True
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "min_levi": self.min_levi,
            "argmin": None if self.argmin is None else self.argmin.tolist(),
            "verdict": self.verdict.value,
            "tolerance": self.tolerance,
            "n_samples": self.n_samples,
            "n_inapplicable": self.n_inapplicable,
            "caveat": self.caveat,
            "warnings": list(self.warnings),
        }


def pseudoconvexity_report(D: ImplicitDomain, samples: int, rng: np.random.Generator,
                           tol: float = 1e-7, **sample_kw) -> PseudoconvexityReport:
    """Minimum Levi value over sampled boundary points of ``D`` (in C^n = R^{2n})."""
    if D.dim % 2:
        raise DimensionError("pseudoconvexity is tested in even real dimension")
    bs = sample_boundary(D, samples, rng, **sample_kw)
    if len(bs) == 0:
        return PseudoconvexityReport(float("nan"), None, Verdict.INCONCLUSIVE, tol, 0,
                                     len(bs.inapplicable), True, bs.warnings)
    vals = levi_scalar(D.rho, bs.points) if D.dim == 4 else levi_min(D.rho, bs.points)
    vals = np.atleast_1d(vals)
    k = int(np.argmin(vals))
    verdict = Verdict.FAILS if vals[k] < -tol else Verdict.HOLDS
    return PseudoconvexityReport(float(vals[k]), bs.points[k].copy(), verdict, tol, len(bs),
                                 len(bs.inapplicable), True, bs.warnings)
