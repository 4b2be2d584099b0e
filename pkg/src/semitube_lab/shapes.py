"""Stock bases in R^3 (and R^m) used by probes, tests and the CLI."""

from __future__ import annotations

import numpy as np

from .errors import PreconditionError
from .fields import FunctionField, QuadraticField, ScaledField, SmoothMax, smooth_min
from .geometry import ImplicitDomain

DEFAULT_SHARPNESS = 40.0


def ball(center=(0.0, 0.0, 0.0), radius: float = 1.0, pad: float = 0.1) -> ImplicitDomain:
    c = np.asarray(center, dtype=np.float64)
    m = c.size
    rho = QuadraticField(c @ c - radius**2, -2.0 * c, np.eye(m))
    return ImplicitDomain(rho, c - radius - pad, c + radius + pad)


def _face(m: int, axis: int, sign: float, offset: float) -> QuadraticField:
    b = np.zeros(m)
    b[axis] = sign
    return QuadraticField(offset, b, np.zeros((m, m)))


def box_faces(lo, hi) -> list[QuadraticField]:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    m = lo.size
    faces = []
    for i in range(m):
        faces.append(_face(m, i, 1.0, -hi[i]))   # x_i - hi_i
        faces.append(_face(m, i, -1.0, lo[i]))   # lo_i - x_i
    return faces


def box(lo, hi, sharpness: float = DEFAULT_SHARPNESS, pad: float = 0.1) -> ImplicitDomain:
    """Box with edges rounded by a log-sum-exp max of its face functions (convex)."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi <= lo):
        raise PreconditionError("box needs lo < hi")
    return ImplicitDomain(SmoothMax(box_faces(lo, hi), sharpness), lo - pad, hi + pad)


def l_prism(outer_lo=(-1.0, -1.0, -1.0), outer_hi=(1.0, 1.0, 1.0), notch=(0.0, 0.0),
            sharpness: float = DEFAULT_SHARPNESS, pad: float = 0.1) -> ImplicitDomain:
    """Prism over an L-shaped profile: the outer box minus ``{x1 > notch[0], x2 > notch[1]}``.

    The prism axis is x3. All corners are smoothed with the same sharpness.
    """
    lo = np.asarray(outer_lo, dtype=np.float64)
    hi = np.asarray(outer_hi, dtype=np.float64)
    a, b = notch
    if not (lo[0] < a < hi[0] and lo[1] < b < hi[1]):
        raise PreconditionError("notch corner must lie inside the outer profile")
    outside_notch = smooth_min([_face(3, 0, 1.0, -a), _face(3, 1, 1.0, -b)], sharpness)
    rho = SmoothMax(box_faces(lo, hi) + [outside_notch], sharpness)
    return ImplicitDomain(rho, lo - pad, hi + pad)


def slab_extrusion(profile: str = "disc", interval=(0.0, 1.0), radius: float = 1.0,
                   rect_lo=(-1.0, -1.0), rect_hi=(1.0, 1.0), notch=(0.0, 0.0),
                   sharpness: float = DEFAULT_SHARPNESS, pad: float = 0.1) -> ImplicitDomain:
    """``D' x (t0, t1)`` with ``D'`` a disc, rectangle or L-shape in the (x1, x2) plane."""
    t0, t1 = interval
    if profile == "disc":
        # (|x'|^2 - R^2) / 2R: unit gradient on the rim
        prof = QuadraticField(-radius / 2, np.zeros(3), np.diag([1.0, 1.0, 0.0]) / (2 * radius))
        rho = SmoothMax([prof, _face(3, 2, 1.0, -t1), _face(3, 2, -1.0, t0)], sharpness)
        return ImplicitDomain(rho, [-radius - pad, -radius - pad, t0 - pad], [radius + pad, radius + pad, t1 + pad])
    if profile == "rectangle":
        return box([rect_lo[0], rect_lo[1], t0], [rect_hi[0], rect_hi[1], t1], sharpness, pad)
    if profile == "l_shape":
        return l_prism([rect_lo[0], rect_lo[1], t0], [rect_hi[0], rect_hi[1], t1], notch, sharpness, pad)
    raise PreconditionError(f"unknown profile {profile!r}")


def torus(R_major: float = 1.0, r_minor: float = 0.4, axis: int = 0, pad: float = 0.1) -> ImplicitDomain:
    """Solid torus with symmetry axis along coordinate ``axis``.

    ``rho = (sqrt(x_i^2 + x_j^2) - R)^2 + x_axis^2 - r^2`` with ``(i, j)`` the
    other two coordinates. The axis itself (where ``rho`` is not smooth) is
    outside the torus.
    """
    if not 0 < r_minor < R_major:
        raise PreconditionError("need 0 < r_minor < R_major")
    i, j = [k for k in range(3) if k != axis]

    def parts(x):
        s = np.sqrt(x[..., i] ** 2 + x[..., j] ** 2)
        return s, np.maximum(s, 1e-300)

    def f(x):
        s, _ = parts(x)
        return (s - R_major) ** 2 + x[..., axis] ** 2 - r_minor**2

    def g(x):
        s, sp = parts(x)
        out = np.zeros(x.shape)
        c = 2 * (s - R_major) / sp
        out[..., i] = c * x[..., i]
        out[..., j] = c * x[..., j]
        out[..., axis] = 2 * x[..., axis]
        return out

    def hfun(x):
        s, sp = parts(x)
        out = np.zeros(x.shape + (3,))
        u = np.stack([x[..., i] / sp, x[..., j] / sp], axis=-1)
        # grad s = u, hess s = (I - u u^T) / s
        eye = np.eye(2)
        hs = (eye - u[..., :, None] * u[..., None, :]) / sp[..., None, None]
        blk = 2 * u[..., :, None] * u[..., None, :] + 2 * (s - R_major)[..., None, None] * hs
        idx = np.array([i, j])
        out[..., idx[:, None], idx[None, :]] = blk
        out[..., axis, axis] = 2.0
        return out

    ext = R_major + r_minor + pad
    lo = np.full(3, -ext)
    hi = np.full(3, ext)
    lo[axis] = -r_minor - pad
    hi[axis] = r_minor + pad
    return ImplicitDomain(FunctionField(3, f, g, hfun), lo, hi)


def counterexample_domain(n: int = 2, alpha: float = 1.0, half_width: float = 3.0) -> ImplicitDomain:
    """``{x in R^{2n} : x_1^2 + ... + x_{m-1}^2 - alpha x_m^2 < 1}``; unbounded, boxed for sampling."""
    m = 2 * n
    diag = np.ones(m)
    diag[-1] = -alpha
    return ImplicitDomain(QuadraticField.from_diagonal(diag, c=-1.0), np.full(m, -half_width), np.full(m, half_width))


def negated(D: ImplicitDomain) -> ImplicitDomain:
    return ImplicitDomain(ScaledField(D.rho, -1.0), D.lo, D.hi)
