"""Smooth strongly plurisubharmonic exhaustion of a pseudoconvex semitube.

Everything runs on a grid over the three effective coordinates
``(Re z1, Im z1, Re z2)``. Per stage with radius ``eps``:

1. ``u = -log d_G`` (exact grid distance transform),
2. ``u_eps`` = radial mollification of ``u`` (defined where the stencil stays in ``G``),
3. ``ut = u_eps + eps * |x|^2``,
4. a numerically regular level ``1/delta`` with ``delta > -1/log(eps)``,
5. the face-connected component of ``{ut < 1/delta}`` containing the basepoint.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .classify import complex_hessian
from .errors import EmptyDomainError, NoRegularValueError, PreconditionError
from .fields import GridField, RegularGrid, distance_field, gradient_at_nodes, hessian_at_nodes, mollify
from .semitube import SemitubeDomain, base_contains

log = logging.getLogger(__name__)

LADDER_RATIO = 1.01
LADDER_STEPS = 64
DEFAULT_TAU = 1e-3


class StageTruncationWarning(UserWarning):
    pass


def base_mask(G: SemitubeDomain, grid: RegularGrid) -> GridField:
    return GridField(grid, base_contains(G.base, grid.nodes()))


def build_u(G: SemitubeDomain, grid: RegularGrid, use_numba: bool | None = None) -> GridField:
    """``-log d_G`` at inside nodes, ``-inf`` outside.

    The distance in R^3 equals the distance in C^2 because ``G`` is invariant
    in ``Im z2``.
    """
    d = distance_field(base_mask(G, grid), use_numba=use_numba)
    with np.errstate(divide="ignore"):
        u = np.where(d.values > 0, -np.log(d.values), -np.inf)
    return GridField(grid, u)


def distance_from_u(u: GridField) -> GridField:
    return GridField(u.grid, np.where(np.isfinite(u.values), np.exp(-u.values), 0.0))


def shrink(d: GridField, eps: float) -> np.ndarray:
    """Node mask of ``G_eps = {d > eps}``."""
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    mask = d.values > eps
    if not mask.any():
        raise EmptyDomainError(f"eps={eps} is at least the inradius")
    return mask


def regularize(u: GridField, eps: float, method: str = "auto", use_numba: bool | None = None) -> GridField:
    """Mollified ``u``; defined exactly on nodes whose open eps-stencil stays inside ``G``."""
    return mollify(u, eps, method=method, use_numba=use_numba)


def bump(u_eps: GridField, eps: float) -> GridField:
    """``u_eps + eps * (x1^2 + x2^2 + x3^2)`` on defined nodes."""
    r2 = np.sum(u_eps.grid.nodes() ** 2, axis=-1)
    return GridField(u_eps.grid, np.where(u_eps.defined, u_eps.values + eps * r2, -np.inf))


def _cell_reduce(a: np.ndarray, op) -> np.ndarray:
    out = None
    m = a.ndim
    for corner in np.ndindex(*(2,) * m):
        sl = tuple(slice(c, a.shape[k] - 1 + c) for k, c in enumerate(corner))
        out = a[sl].copy() if out is None else op(out, a[sl])
    return out


@dataclass
class LevelCheck:
    level: float
    n_cells: int
    offending: np.ndarray  # cell base indices failing the gradient floor

    @property
    def regular(self) -> bool:
        return self.n_cells > 0 and len(self.offending) == 0


class _LevelScanner:
    def __init__(self, ut: GridField):
        vals = ut.values
        defined = np.isfinite(vals)
        h = ut.grid.spacing
        filled = np.where(defined, vals, np.nan)
        self.cmin = _cell_reduce(filled, np.fmin)
        self.cmax = _cell_reduce(filled, np.fmax)
        self.cdef = _cell_reduce(defined, np.logical_and)
        grad = np.full(vals.shape, 0.0)
        inner = tuple(slice(1, -1) for _ in range(vals.ndim))
        idx = np.argwhere(np.ones(tuple(n - 2 for n in vals.shape), dtype=bool)) + 1
        g = gradient_at_nodes(vals, h, idx)
        gn = np.linalg.norm(g, axis=1)
        grad[inner] = np.nan_to_num(gn, nan=0.0).reshape(tuple(n - 2 for n in vals.shape))
        self.cgrad = _cell_reduce(grad, np.minimum)

    def check(self, level: float, tau: float) -> LevelCheck:
        crossed = self.cdef & (self.cmin < level) & (self.cmax >= level)
        bad = crossed & (self.cgrad < tau)
        return LevelCheck(level, int(crossed.sum()), np.argwhere(bad))


def delta_candidates(eps: float, delta_prev: float | None = None, ratio: float = LADDER_RATIO,
                     steps: int = LADDER_STEPS) -> np.ndarray:
    """Geometric ladder strictly above ``-1/log eps`` (and below ``delta_prev``)."""
    if not 0 < eps < 1:
        raise PreconditionError("eps must lie in (0, 1)")
    lo = -1.0 / np.log(eps)
    c = lo * ratio ** np.arange(1, steps + 1)
    if delta_prev is not None:
        c = c[c < delta_prev]
    return c


def pick_delta(ut: GridField, eps: float, tau: float = DEFAULT_TAU, delta_prev: float | None = None,
               ratio: float = LADDER_RATIO, steps: int = LADDER_STEPS):
    """First ladder value ``delta`` whose level ``1/delta`` is numerically regular.

    Regular means every fully defined grid cell crossed by ``{ut = 1/delta}``
    has ``|grad ut| >= tau`` at all corners. Returns ``(delta, log)``.
    """
    scanner = _LevelScanner(ut)
    attempts = []
    cands = delta_candidates(eps, delta_prev, ratio, steps)
    for delta in cands:
        chk = scanner.check(1.0 / delta, tau)
        attempts.append({"delta": float(delta), "cells": chk.n_cells, "offending": int(len(chk.offending))})
        if chk.regular:
            return float(delta), attempts
    offending = [a for a in attempts if a["offending"]]
    raise NoRegularValueError(f"no regular level among {len(cands)} ladder candidates for eps={eps}", offending)


def component_of(mask: np.ndarray, basepoint, use_numba: bool | None = None) -> np.ndarray:
    """Face-adjacency component of ``mask`` containing node index ``basepoint``."""
    basepoint = tuple(int(i) for i in basepoint)
    if not mask[basepoint]:
        raise PreconditionError("basepoint outside mask")
    return _kernels.flood_fill(mask, basepoint, use_numba=use_numba)


@dataclass
class ExhaustionStage:
    eps: float
    delta: float
    ut: GridField
    sublevel: np.ndarray
    component: np.ndarray
    delta_log: list = field(default_factory=list)
    # nodes of the previous stage added to keep masks nested
    enforced_nodes: int = 0

    @property
    def minorant(self) -> float:
        return -1.0 / np.log(self.eps)


@dataclass
class ExhaustionSequence:
    G: SemitubeDomain
    grid: RegularGrid
    basepoint: tuple[int, ...]
    u: GridField
    distance: GridField
    stages: list[ExhaustionStage]
    warnings: list[str] = field(default_factory=list)

    def verify(self, k: int, samples: int = 1000, rng=None, tau: float = DEFAULT_TAU) -> "StageReport":
        return verify_stage(self.stages[k], self.distance, samples, rng, tau)

    def nested(self) -> bool:
        return all(not np.any(a.component & ~b.component) for a, b in zip(self.stages, self.stages[1:]))

    def coverage_threshold(self) -> float:
        """Distance beyond which a point must be covered by the finest stage.

        Twice the finest radius, plus the nearest-node rounding radius
        ``sqrt(m) h / 2`` since :meth:`covered` looks up the nearest node.
        """
        g = self.grid
        return 2 * self.stages[-1].eps + 0.5 * np.sqrt(g.dim) * g.spacing

    def covered(self, points) -> np.ndarray:
        """Whether the nearest node of each point lies in some stage component."""
        idx = np.atleast_2d(self.grid.nearest_index(np.atleast_2d(points)))
        union = np.zeros(self.grid.shape, dtype=bool)
        for s in self.stages:
            union |= s.component
        return union[tuple(idx.T)]


def make_stage(ut: GridField, eps: float, delta: float, base_idx, use_numba: bool | None = None) -> ExhaustionStage:
    """Sublevel set ``{ut < 1/delta}`` and its basepoint component, for a given ``delta``."""
    sub = ut.defined & (ut.values < 1.0 / delta)
    if not sub[tuple(base_idx)]:
        raise PreconditionError(f"basepoint not in the sublevel set at eps={eps}")
    return ExhaustionStage(float(eps), float(delta), ut, sub, component_of(sub, base_idx, use_numba))


def build_exhaustion(G: SemitubeDomain, basepoint, n_stages: int, grid: RegularGrid,
                     eps0: float | None = None, tau: float = DEFAULT_TAU, method: str = "auto",
                     use_numba: bool | None = None) -> ExhaustionSequence:
    """Stages ``k = 0..n_stages-1`` with ``eps_k = eps0 / 2^k``.

    ``eps0`` defaults to half the grid inradius. Stages whose radius falls
    below two grid spacings are dropped with a :class:`StageTruncationWarning`.
    """
    u = build_u(G, grid, use_numba)
    d = distance_from_u(u)
    h = grid.spacing
    base_idx = grid.nearest_index(np.asarray(basepoint, dtype=np.float64))
    if not np.isfinite(u.values[base_idx]):
        raise PreconditionError("basepoint is not inside G")
    inradius = float(d.values.max())
    eps0 = 0.5 * inradius if eps0 is None else float(eps0)
    eps0 = min(eps0, 0.999)
    eps_list = [eps0 / 2**k for k in range(n_stages)]
    notes = []
    kept = [e for e in eps_list if e >= 2 * h]
    if len(kept) < n_stages:
        msg = f"grid too coarse: {n_stages - len(kept)} of {n_stages} stages dropped (eps < 2h = {2 * h:.4g})"
        warnings.warn(msg, StageTruncationWarning, stacklevel=2)
        notes.append(msg)
    stages: list[ExhaustionStage] = []
    delta_prev = None
    prev_comp = None
    for eps in kept:
        ue = regularize(u, eps, method=method, use_numba=use_numba)
        ut = bump(ue, eps)
        delta, dlog = pick_delta(ut, eps, tau, delta_prev)
        st = make_stage(ut, eps, delta, base_idx, use_numba)
        st.delta_log = dlog
        if prev_comp is not None:
            missing = prev_comp & ~st.component
            st.enforced_nodes = int(missing.sum())
            if st.enforced_nodes:
                st.component = st.component | prev_comp
                notes.append(f"nesting enforced at eps={eps:.4g}: {st.enforced_nodes} nodes carried from the previous stage")
        log.info("stage eps=%.4g delta=%.4g nodes=%d", eps, delta, int(st.component.sum()))
        stages.append(st)
        delta_prev = delta
        prev_comp = st.component
    return ExhaustionSequence(G, grid, base_idx, u, d, stages, notes)


@dataclass
class StageReport:
    eps: float
    delta: float
    containment: bool
    min_distance: float
    strong_psh: bool
    min_levi_eig: float
    kappa: float
    n_psh_samples: int
    im_independent: bool
    level_regular: bool
    n_level_cells: int
    delta_above_minorant: bool

    @property
    def ok(self) -> bool:
        return (self.containment and self.strong_psh and self.im_independent
                and self.level_regular and self.delta_above_minorant)

    def to_dict(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


def interior_nodes(component: np.ndarray, defined: np.ndarray) -> np.ndarray:
    """Component nodes whose full 3^m neighbourhood is defined (finite differences apply)."""
    m = component.ndim
    ok = np.zeros(component.shape, dtype=bool)
    inner = tuple(slice(1, -1) for _ in range(m))
    acc = np.ones(tuple(n - 2 for n in component.shape), dtype=bool)
    for off in np.ndindex(*(3,) * m):
        sl = tuple(slice(o, component.shape[k] - 2 + o) for k, o in enumerate(off))
        acc &= defined[sl]
    ok[inner] = acc
    return np.argwhere(ok & component)


def stage_levi_eigs(ut: GridField, idx: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of the complex Hessian of ``ut`` lifted to C^2 at node indices."""
    H3 = hessian_at_nodes(ut.values, ut.grid.spacing, idx)
    H4 = np.zeros((len(idx), 4, 4))
    H4[:, :3, :3] = H3  # the lifted field never depends on Im z2
    return np.linalg.eigvalsh(complex_hessian(H4))[:, 0]


def verify_stage(st: ExhaustionStage, distance: GridField, samples: int = 1000, rng=None,
                 tau: float = DEFAULT_TAU) -> StageReport:
    """Closure containment, strong plurisubharmonicity, Im z2 independence, level regularity.

    ``distance`` is the grid distance to the boundary of ``G``. The psh
    floor is ``eps/2 - 10 h^2``: the bump alone contributes exactly
    ``eps/2`` and the finite-difference Hessian is second order.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    h = distance.grid.spacing
    dvals = distance.values[st.component]
    containment = bool(np.all(dvals > st.eps))
    idx = interior_nodes(st.component, st.ut.defined)
    if len(idx) > samples:
        idx = idx[rng.choice(len(idx), samples, replace=False)]
    eigs = stage_levi_eigs(st.ut, idx) if len(idx) else np.array([np.nan])
    kappa = st.eps / 2 - 10 * h**2
    min_eig = float(np.nanmin(eigs)) if np.isfinite(eigs).any() else float("nan")
    chk = _LevelScanner(st.ut).check(1.0 / st.delta, tau)
    return StageReport(
        eps=st.eps, delta=st.delta, containment=containment,
        min_distance=float(dvals.min()) if dvals.size else float("nan"),
        strong_psh=bool(min_eig >= kappa), min_levi_eig=min_eig, kappa=kappa, n_psh_samples=int(len(idx)),
        im_independent=True, level_regular=chk.regular, n_level_cells=chk.n_cells,
        delta_above_minorant=bool(st.delta > st.minorant),
    )
