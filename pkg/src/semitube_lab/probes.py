"""Detection instruments for non-pseudoconvexity of semitubes.

* slice-component counts and a lower-semicontinuity test,
* the annulus-family (continuity principle) probe,
* an isometry-orbit search that tries to falsify "pseudoconvex for every
  rotation implies convex",
* the quadric counterexample suite (multisubharmonic, non-convex, every
  rotation pseudoconvex).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import shapes
from .classify import Verdict, msh_margin, msh_margin_oracle
from .errors import InapplicableProbeError, PreconditionError
from .geometry import (
    ConvexityWitness,
    ImplicitDomain,
    Isometry,
    apply_isometry,
    convexity_witness,
    levi_scalar,
    pseudoconvexity_report,
    random_isometry,
    sample_boundary,
)
from .semitube import (
    DEFAULT_SCAN,
    HartogsLaurentDomain,
    SemitubeDomain,
    fiber_intervals,
    fiber_intervals_many,
    make_semitube,
    pi_push,
)

log = logging.getLogger(__name__)


def torus_base(R_major: float = 1.0, r_minor: float = 0.4, orientation: str = "vertical") -> ImplicitDomain:
    """Solid torus in R^3.

    ``"vertical"`` (or ``"vertical-x1"``) puts the symmetry axis along x1,
    ``"vertical-x2"`` along x2; then the x3-slices over the hole's shadow
    split in two. ``"horizontal"`` puts the axis along x3.
    """
    axes = {"vertical": 0, "vertical-x1": 0, "vertical-x2": 1, "horizontal": 2}
    if orientation not in axes:
        raise PreconditionError(f"unknown orientation {orientation!r}")
    return shapes.torus(R_major, r_minor, axes[orientation])


# ---------------------------------------------------------------------------
# slice counts


def slice_components_semitube(D, z: complex, scan: int = DEFAULT_SCAN) -> int:
    """Number of components of ``D`` intersected with the x3-line over ``z``."""
    return len(fiber_intervals(D, z, scan))


def slice_components_hl(G: HartogsLaurentDomain, z1: complex) -> int:
    return len(G.fiber(z1))


def _semitube_slicer(D, scan):
    def slicer(z):
        return [s.intervals for s in fiber_intervals_many(D, z, scan)]
    return slicer


def _hl_slicer(G: HartogsLaurentDomain):
    def slicer(z):
        return [list(f.radii) for f in G.fibers(z)]
    return slicer


@dataclass
class SliceCountMap:
    """Component counts of vertical slices on a 2-D grid of base points ``z``.

    The nonempty mask realizes the projection of the domain onto the z-plane.
    """

    lo: tuple[float, float]
    spacing: float
    shape: tuple[int, int]
    counts: np.ndarray
    slicer: object = field(repr=False, default=None)

    @property
    def mask(self) -> np.ndarray:
        return self.counts >= 1

    def points(self, idx=None) -> np.ndarray:
        if idx is None:
            ii, jj = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="ij")
            idx = np.stack([ii, jj], axis=-1)
        idx = np.asarray(idx)
        return (self.lo[0] + idx[..., 0] * self.spacing) + 1j * (self.lo[1] + idx[..., 1] * self.spacing)


def _count_map(slicer, lo, hi, spacing) -> SliceCountMap:
    lo = (float(lo[0]), float(lo[1]))
    shape = tuple(int(np.floor((h - l) / spacing + 1e-9)) + 1 for l, h in zip(lo, hi))
    m = SliceCountMap(lo, float(spacing), shape, np.zeros(shape, dtype=np.int64), slicer)
    z = m.points().ravel()
    m.counts = np.array([len(s) for s in slicer(z)], dtype=np.int64).reshape(shape)
    return m


def slice_count_map(D: ImplicitDomain, spacing: float, lo=None, hi=None, scan: int = DEFAULT_SCAN) -> SliceCountMap:
    """Count map ``s(z)`` of the semitube over base ``D`` (defaults to the box of D)."""
    lo = D.lo[:2] if lo is None else lo
    hi = D.hi[:2] if hi is None else hi
    return _count_map(_semitube_slicer(D, scan), lo, hi, spacing)


def slice_count_map_hl(G: HartogsLaurentDomain, spacing: float, lo=None, hi=None) -> SliceCountMap:
    """Count map ``t(z1)`` of a Hartogs-Laurent domain."""
    if lo is None or hi is None:
        if G.base_box is None:
            raise PreconditionError("HL domain without a base box needs explicit lo/hi")
        lo, hi = G.base_box
    return _count_map(_hl_slicer(G), lo, hi, spacing)


_NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _merges(high, low) -> bool:
    """Some interval of ``low`` meets at least two intervals of ``high``."""
    for a, b in low:
        hits = sum(1 for c, d in high if c < b and a < d)
        if hits >= 2:
            return True
    return False


@dataclass
class LscResult:
    violations: np.ndarray      # (k, 2) node indices z0 with a persistent drop nearby
    inconclusive: np.ndarray    # (k, 2) nodes whose drop type changed between refinements
    n_candidates: int
    spacing: float

    @property
    def points(self):
        return self.violations

    def __len__(self):
        return len(self.violations)


def lsc_violations(cmap: SliceCountMap, levels: tuple[float, ...] = (0.5, 0.25)) -> LscResult:
    """Nodes ``z0`` of the nonempty region where the count drops nearby.

    A candidate pair is ``z0`` and an 8-neighbour inside the nonempty region
    with a smaller count. The segment between them is bisected down to
    brackets of ``levels * spacing``. At each bracket the drop is classified:
    a *merge* (one low-side interval meets two or more high-side intervals)
    is a genuine failure of lower semicontinuity; a *vanishing* component is
    compatible with it because the limit slice is open. The pair is
    persistent when every level shows a merge and inconclusive when the
    levels disagree.
    """
    c = cmap.counts
    inside = c >= 1
    n0, n1 = c.shape
    pairs = []
    for di, dj in _NEIGHBOURS:
        i0 = slice(max(0, -di), n0 - max(0, di))
        j0 = slice(max(0, -dj), n1 - max(0, dj))
        i1 = slice(max(0, di), n0 - max(0, -di))
        j1 = slice(max(0, dj), n1 - max(0, -dj))
        hit = inside[i0, j0] & inside[i1, j1] & (c[i1, j1] < c[i0, j0])
        idx = np.argwhere(hit)
        if idx.size:
            base = idx + np.array([i0.start, j0.start])
            pairs.append(np.concatenate([base, base + np.array([di, dj])], axis=1))
    if not pairs:
        empty = np.empty((0, 2), dtype=np.int64)
        return LscResult(empty, empty, 0, cmap.spacing)
    P = np.concatenate(pairs)
    za = cmap.points(P[:, :2])
    zb = cmap.points(P[:, 2:])
    c0 = c[P[:, 0], P[:, 1]]
    seglen = np.abs(zb - za)
    a = np.zeros(len(P))
    b = np.ones(len(P))
    verdicts = []
    for lev in sorted(levels, reverse=True):
        target = lev * cmap.spacing
        while True:
            live = (b - a) * seglen > target
            if not live.any():
                break
            m = 0.5 * (a + b)
            zm = za[live] + m[live] * (zb[live] - za[live])
            cnt = np.array([len(s) for s in cmap.slicer(zm)])
            high = cnt >= c0[live]
            idx = np.flatnonzero(live)
            a[idx[high]] = m[live][high]
            b[idx[~high]] = m[live][~high]
        sa = cmap.slicer(za + a * (zb - za))
        sb = cmap.slicer(za + b * (zb - za))
        verdicts.append(np.array([_merges(h, l) for h, l in zip(sa, sb)]))
    V = np.stack(verdicts)
    persistent = V.all(axis=0)
    mixed = V.any(axis=0) & ~persistent
    viol = np.unique(P[persistent, :2], axis=0) if persistent.any() else np.empty((0, 2), dtype=np.int64)
    inc = np.unique(P[mixed, :2], axis=0) if mixed.any() else np.empty((0, 2), dtype=np.int64)
    return LscResult(viol, inc, len(P), cmap.spacing)


# ---------------------------------------------------------------------------
# annulus families


@dataclass
class ContinuityViolation:
    """The family ``b -> {z1(b)} x closed annulus(p, q)`` escapes at ``b_star``."""

    b_star: float
    z1_star: complex
    radii: tuple[float, float]
    lambda_star: complex
    b_values: np.ndarray
    interior_ok: np.ndarray
    boundary_ok: np.ndarray
    line: tuple[complex, complex]
    n_radial: int
    n_angular: int

    def reverify(self, omega: HartogsLaurentDomain) -> bool:
        """Recompute all membership bits up to ``b_star`` and compare exactly."""
        k = int(np.searchsorted(self.b_values, self.b_star))
        inter, bound, _ = _family_membership(omega, self.b_values[: k + 1], self.line, self.radii,
                                             self.n_radial, self.n_angular)
        point_out = not bool(omega.contains(np.array([self.z1_star, self.lambda_star]))[()])
        return bool(point_out and np.array_equal(inter, self.interior_ok[: k + 1])
                    and np.array_equal(bound, self.boundary_ok[: k + 1]))

    def to_dict(self) -> dict:
        return {
            "b_star": self.b_star,
            "z1_star": [self.z1_star.real, self.z1_star.imag],
            "radii": list(self.radii),
            "lambda_star": [self.lambda_star.real, self.lambda_star.imag],
            "b_values": self.b_values.tolist(),
            "interior_ok": self.interior_ok.tolist(),
            "boundary_ok": self.boundary_ok.tolist(),
        }


def _annulus_grid(radii, n_radial, n_angular):
    p, q = radii
    r = p * (q / p) ** np.linspace(0.0, 1.0, n_radial)
    r[0], r[-1] = p, q
    th = 2 * np.pi * np.arange(n_angular) / n_angular
    return (r[:, None] * np.exp(1j * th)[None, :]).ravel()


def _family_membership(omega, b_values, line, radii, n_radial, n_angular):
    lam = _annulus_grid(radii, n_radial, n_angular)
    z1 = line[0] + np.asarray(b_values) * line[1]
    Z = np.empty((len(z1), lam.size, 2), dtype=np.complex128)
    Z[..., 0] = z1[:, None]
    Z[..., 1] = lam[None, :]
    inside = omega.contains(Z)
    on_circle = np.zeros((n_radial, n_angular), dtype=bool)
    on_circle[[0, -1], :] = True
    on_circle = on_circle.ravel()
    return inside.all(axis=1), inside[:, on_circle].all(axis=1), inside


def continuity_probe(omega: HartogsLaurentDomain, b_range, radii, steps: int = 64,
                     line: tuple[complex, complex] = (0j, 1 + 0j), n_radial: int = 64,
                     n_angular: int = 32) -> ContinuityViolation | None:
    """Annulus family ``f_b(lambda) = (z1(b), lambda)`` with ``z1(b) = line[0] + b line[1]``.

    Scans ``b`` over ``steps`` values in ``b_range``. Returns the first ``b*``
    where the closed annulus leaves ``omega`` while both boundary circles
    stayed inside for every ``b <= b*``; ``None`` if the family stays inside
    or a boundary circle escapes first.
    """
    p, q = map(float, radii)
    if not 0 < p < q:
        raise PreconditionError("need 0 < p < q")
    bs = np.linspace(float(b_range[0]), float(b_range[1]), steps)
    line = (complex(line[0]), complex(line[1]))
    inter, bound, inside = _family_membership(omega, bs, line, (p, q), n_radial, n_angular)
    if not inter[0]:
        raise InapplicableProbeError("the closed annulus is not inside the domain at the start of the family")
    for i in range(steps):
        if not bound[i]:
            return None
        if not inter[i]:
            lam = _annulus_grid((p, q), n_radial, n_angular)
            k = int(np.flatnonzero(~inside[i])[0])
            return ContinuityViolation(float(bs[i]), line[0] + bs[i] * line[1], (p, q), complex(lam[k]),
                                       bs, inter, bound, line, n_radial, n_angular)
    return None


# ---------------------------------------------------------------------------
# orbit search


class Mechanism(str, enum.Enum):
    LEVI_NEGATIVE = "levi-negative"
    CONTINUITY_VIOLATION = "continuity-violation"
    SLICE_JUMP = "slice-jump"


@dataclass
class OrbitSearchResult:
    isometry: Isometry
    mechanism: Mechanism
    witness: object
    tried: int
    strategy: str

    def to_dict(self) -> dict:
        w = self.witness
        if hasattr(w, "to_dict"):
            w = w.to_dict()
        return {"isometry": self.isometry.to_dict(), "mechanism": self.mechanism.value,
                "witness": w, "tried": self.tried, "strategy": self.strategy}


@dataclass
class LeviWitness:
    point: np.ndarray   # boundary point of the semitube in R^4
    value: float

    def to_dict(self):
        return {"point": self.point.tolist(), "value": self.value}


@dataclass
class SliceJumpWitness:
    nodes: np.ndarray
    points: np.ndarray
    spacings: tuple[float, float]

    def to_dict(self):
        return {"nodes": self.nodes.tolist(), "points": [[z.real, z.imag] for z in self.points],
                "spacings": list(self.spacings)}


def semitube_levi_report(B: ImplicitDomain, samples: int, rng: np.random.Generator, tol: float = 1e-7,
                         im_range=(-0.5, 0.5)):
    """Levi minimum of the semitube over ``B`` using boundary samples of the base.

    Boundary points of ``B`` are lifted with a random ``Im z2``; the Levi form
    does not depend on it, so sampling the base is exact and cheaper.
    Returns ``(min_levi, argmin_point_R4, n_samples)``.
    """
    bs = sample_boundary(B, samples, rng)
    if len(bs) == 0:
        return float("nan"), None, 0
    P = np.empty((len(bs), 4))
    P[:, :3] = bs.points
    P[:, 3] = rng.uniform(*im_range, size=len(bs))
    S = make_semitube(B)
    vals = np.atleast_1d(levi_scalar(S.rho, P))
    k = int(np.argmin(vals))
    return float(vals[k]), P[k].copy(), len(bs)


def rotation_onto_e3(v) -> np.ndarray:
    """Orthogonal matrix ``O`` with ``O v = |v| e3`` (Householder reflection, sign fixed to det +1)."""
    v = np.asarray(v, dtype=np.float64)
    v = v / np.linalg.norm(v)
    e3 = np.array([0.0, 0.0, 1.0])
    w = v - e3
    if np.linalg.norm(w) < 1e-12:
        return np.eye(3)
    w /= np.linalg.norm(w)
    O = np.eye(3) - 2 * np.outer(w, w)
    if np.linalg.det(O) < 0:
        # compose with a reflection that fixes e3
        O = np.diag([-1.0, 1.0, 1.0]) @ O
    return O


def _rot_z(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def targeted_isometries(w: ConvexityWitness, n_dirs: int = 16):
    """Isometries sending the witness segment onto ``{0} x {0} x [-L/2, L/2]``.

    The ``k``-th one additionally rotates about x3 so that the base direction
    at angle ``2 pi k / n_dirs`` points along ``-x1``.
    """
    d = w.q - w.p
    O0 = rotation_onto_e3(d)
    mid = 0.5 * (w.p + w.q)
    for k in range(n_dirs):
        theta = 2 * np.pi * k / n_dirs
        O = _rot_z(np.pi - theta) @ O0
        yield Isometry(O, -O @ mid)


def _segment_inside(D: ImplicitDomain, b, half: float, n: int = 65) -> np.ndarray:
    b = np.atleast_1d(b)
    t = np.linspace(-half, half, n)
    X = np.zeros((len(b), n, 3))
    X[..., 0] = b[:, None]
    X[..., 2] = t[None, :]
    return (D.rho.value(X) < 0).all(axis=1)


def _family_start(DA: ImplicitDomain, half: float, reach: float, n: int = 200):
    """Largest ``b < 0`` (closest to the witness) where the whole segment lies in ``DA``."""
    bs = -reach * np.arange(1, n + 1) / n
    ok = _segment_inside(DA, bs, half)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    return float(bs[hits[0]])


def orbit_search(D: ImplicitDomain, budget: int = 100, rng: np.random.Generator | None = None,
                 levi_samples: int = 500, tol: float = 1e-7, witness_trials: int = 20000,
                 n_dirs: int = 16, lsc_spacing: float | None = None, scan: int = 256) -> OrbitSearchResult | None:
    """Look for an isometry ``A`` with ``S_{A(D)}`` verifiably not pseudoconvex.

    Order: the identity (slice-count jumps), then the targeted rotations
    built from a convexity witness (continuity-principle probe), then
    Haar-random isometries (Levi form). Each isometry tried costs one unit of
    ``budget``. Every returned witness has been re-verified.
    """
    rng = np.random.default_rng() if rng is None else rng
    if D.dim != 3:
        return _orbit_search_levi(D, budget, rng, levi_samples, tol)
    tried = 0
    reach = float(np.linalg.norm(D.hi - D.lo))

    # identity: slice-jump mechanism at two resolutions
    tried += 1
    h = lsc_spacing or float(max(D.hi[:2] - D.lo[:2]) / 48)
    found = []
    for hh in (h, h / 2):
        res = lsc_violations(slice_count_map(D, hh, scan=scan))
        found.append(res)
    if len(found[0]) and len(found[1]):
        cm = found[1]
        pts = D.lo[0] + cm.violations[:, 0] * cm.spacing + 1j * (D.lo[1] + cm.violations[:, 1] * cm.spacing)
        return OrbitSearchResult(Isometry.identity(3), Mechanism.SLICE_JUMP,
                                 SliceJumpWitness(cm.violations, pts, (h, h / 2)), tried, "identity")

    # targeted
    w = convexity_witness(D, witness_trials, rng)
    if w is not None:
        half = 0.5 * float(np.linalg.norm(w.q - w.p))
        radii = (float(np.exp(-half)), float(np.exp(half)))
        for A in targeted_isometries(w, n_dirs):
            if tried >= budget:
                return None
            tried += 1
            DA = apply_isometry(A, D)
            b0 = _family_start(DA, half, reach)
            if b0 is None:
                continue
            omega = pi_push(make_semitube(DA), scan=scan)
            try:
                v = continuity_probe(omega, (b0, 0.0), radii)
            except InapplicableProbeError:
                continue
            if v is not None and v.reverify(omega):
                log.info("continuity violation after %d isometries", tried)
                return OrbitSearchResult(A, Mechanism.CONTINUITY_VIOLATION, v, tried, "targeted")

    # random
    while tried < budget:
        tried += 1
        A = random_isometry(3, rng)
        DA = apply_isometry(A, D)
        val, pt, n = semitube_levi_report(DA, levi_samples, rng, tol)
        if n and val < -tol:
            again = float(levi_scalar(make_semitube(DA).rho, pt))
            if again < -tol:
                return OrbitSearchResult(A, Mechanism.LEVI_NEGATIVE, LeviWitness(pt, again), tried, "random")
    return None


def _orbit_search_levi(D: ImplicitDomain, budget, rng, samples, tol) -> OrbitSearchResult | None:
    """Random isometries of a domain in C^n (even real dimension), Levi form only."""
    for tried in range(1, budget + 1):
        A = random_isometry(D.dim, rng)
        rep = pseudoconvexity_report(apply_isometry(A, D), samples, rng, tol)
        if rep.verdict is Verdict.FAILS:
            DA = apply_isometry(A, D)
            again = float(levi_scalar(DA.rho, rep.argmin)) if D.dim == 4 else rep.min_levi
            if again < -tol:
                return OrbitSearchResult(A, Mechanism.LEVI_NEGATIVE, LeviWitness(rep.argmin, again), tried, "random")
    return None


# ---------------------------------------------------------------------------
# quadric counterexample


@dataclass
class CounterexampleReport:
    n: int
    alpha: float
    witness: ConvexityWitness
    witness_ok: bool
    msh_margin: float
    expected_margin: float
    oracle_margin: float
    levi_minima: list[float]
    tol: float
    connected: bool
    sample_counts: list[int] = field(default_factory=list)

    @property
    def min_levi(self) -> float:
        return float(min(self.levi_minima)) if self.levi_minima else float("nan")

    @property
    def all_pseudoconvex(self) -> bool:
        return bool(self.levi_minima) and self.min_levi >= -self.tol

    @property
    def verdict(self) -> Verdict:
        ok = self.witness_ok and self.msh_margin >= 0 and self.all_pseudoconvex and self.connected
        return Verdict.HOLDS if ok else Verdict.FAILS

    def to_dict(self) -> dict:
        return {
            "n": self.n, "alpha": self.alpha,
            "witness": {"p": self.witness.p.tolist(), "q": self.witness.q.tolist(),
                        "midpoint": self.witness.midpoint.tolist(), "verified": self.witness_ok},
            "msh_margin": self.msh_margin, "expected_margin": self.expected_margin,
            "oracle_margin": self.oracle_margin, "levi_minima": list(self.levi_minima),
            "sample_counts": list(self.sample_counts),
            "min_levi": self.min_levi, "tolerance": self.tol,
            "all_pseudoconvex": self.all_pseudoconvex, "connected": self.connected,
            "verdict": self.verdict.value,
        }


def quadric_witness(n: int, alpha: float) -> ConvexityWitness:
    """``p, q = 2 e1 +- (2/sqrt(alpha)) e_m``: both on ``{u = 0}``, midpoint ``2 e1`` has ``u = 4``."""
    m = 2 * n
    p = np.zeros(m)
    p[0] = 2.0
    q = p.copy()
    p[-1] = 2.0 / np.sqrt(alpha)
    q[-1] = -2.0 / np.sqrt(alpha)
    return ConvexityWitness(p, q, 0.5 * (p + q))


def quadric_connected(D: ImplicitDomain, rng: np.random.Generator, pairs: int = 50, steps: int = 64) -> bool:
    """Path check: shrink the first ``m-1`` coordinates to zero, then travel along the x_m axis.

    Along the first leg ``u`` decreases monotonically; on the axis ``u <= 0``.
    """
    pts = D.inside_points(rng, 2 * pairs)
    if len(pts) < 2:
        return False
    t = np.linspace(0.0, 1.0, steps)[:, None]
    for a, b in zip(pts[0::2], pts[1::2]):
        a_ax = np.zeros_like(a)
        a_ax[-1] = a[-1]
        b_ax = np.zeros_like(b)
        b_ax[-1] = b[-1]
        path = np.concatenate([a + t * (a_ax - a), a_ax + t * (b_ax - a_ax), b_ax + t * (b - b_ax)])
        if not np.all(D.contains(path)):
            return False
    return True


def counterexample_suite(n: int = 2, alpha: float = 1.0, trials: int = 50,
                         rng: np.random.Generator | None = None, samples: int = 500,
                         tol: float = 1e-7, oracle_trials: int = 100_000) -> CounterexampleReport:
    """Checks on ``D = {sum_{i<m} x_i^2 - alpha x_m^2 < 1}`` in ``R^{2n}``.

    (a) an explicit non-convexity witness, (b) the multisubharmonic margin
    ``2(1 - alpha)`` with a sampling cross-check, (c) Levi minima of ``A(D)``
    for ``trials`` random isometries, (d) a path-connectivity spot check.
    """
    if n < 2:
        raise PreconditionError("n >= 2 required")
    if not 0 < alpha <= 1:
        raise PreconditionError("alpha must lie in (0, 1]")
    rng = np.random.default_rng() if rng is None else rng
    D = shapes.counterexample_domain(n, alpha)
    w = quadric_witness(n, alpha)
    H = D.rho.hessian(np.zeros(2 * n))
    margin = msh_margin(H)
    oracle = msh_margin_oracle(H, oracle_trials, rng)
    minima, counts = [], []
    for _ in range(trials):
        A = random_isometry(2 * n, rng)
        rep = pseudoconvexity_report(apply_isometry(A, D), samples, rng, tol)
        minima.append(rep.min_levi)
        counts.append(rep.n_samples)
    return CounterexampleReport(n, float(alpha), w, w.verify(D), float(margin), 2.0 * (1.0 - alpha),
                                float(oracle), minima, tol, quadric_connected(D, rng), counts)
