"""Velocity field of a patch and its derivatives by boundary reduction.

For a patch D with boundary contour c and kernel k, the velocity is the
single boundary integral

    v(x) = - oint k(x - y) <x - y, n(y)> dsigma(y),

valid on and off the boundary (the integrand vanishes continuously at
y = x).  Off the boundary the first and second derivatives reduce to
boundary integrals as well:

    d_j v_i(x)      = - oint k_i(x - y) n_j(y) dsigma(y),
    d_l d_j v_i(x)  = - oint (d_l k_i)(x - y) n_j(y) dsigma(y),

using the analytic kernel gradient (never numerical differentiation).
All quadratures are trapezoidal in the uniform marker index with spectral
arclength weights; sums run in fixed index order for reproducibility.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import ResolutionWarning, SingularEvaluation
from .geometry import Contour, FrameData
from .kernels import KernelSpec

__all__ = [
    "VelocitySample",
    "GradSample",
    "boundary_velocity",
    "velocity",
    "grad_velocity",
    "second_grad_velocity",
]

_TWO_PI = 2.0 * np.pi
_COINCIDENT_TOL = 1e-12
_ON_BOUNDARY_TOL = 1e-6


@dataclass(frozen=True)
class VelocitySample:
    """Velocity at a point, flagged if the point lies on the contour."""

    location: np.ndarray
    v: np.ndarray
    on_boundary: bool


@dataclass(frozen=True)
class GradSample:
    """Velocity gradient at a point; grad[i, j] = d_j v_i, divergence = trace."""

    location: np.ndarray
    grad: np.ndarray
    divergence: float


def _kernel_terms(c: Contour, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Displacements and squared radii from a point batch to every marker."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts[:, None, :] - c.markers[None, :, :]  # (M, N, 2)
    r2 = np.einsum("mni,mni->mn", d, d)
    return pts, d, r2


def boundary_velocity(c: Contour, k: KernelSpec, x, frame: FrameData | None = None) -> np.ndarray:
    """Velocity at x (a point or an (M, 2) batch), on or off the boundary.

    When an evaluation point coincides with a marker, that marker's term is
    set to 0: the integrand <x-y, n(y)> k(x-y) vanishes there, and for
    analytic contours the quadrature stays spectrally accurate.
    """
    if frame is None:
        frame = geometry.frames(c)
    pts, d, r2 = _kernel_terms(c, x)
    s = np.einsum("mni,ni->mn", d, frame.normal)
    mx = d @ k.matrix.T  # (M, N, 2); component i is (M (x-y))_i
    scale = frame.quad_weight[None, :] * s
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = scale / (_TWO_PI * r2)
    factor[r2 < _COINCIDENT_TOL ** 2] = 0.0
    v = -k.scale * np.einsum("mn,mni->mi", factor, mx)
    return v if np.asarray(x).ndim == 2 else v[0]


def velocity(c: Contour, k: KernelSpec, x, frame: FrameData | None = None) -> VelocitySample:
    """Velocity sample at a single point with an on-boundary flag.

    Accuracy degrades smoothly as the point approaches the contour between
    markers (no near-boundary correction is applied); points within 1e-6
    of the marker polyline are flagged.
    """
    pt = np.asarray(x, dtype=float)
    v = boundary_velocity(c, k, pt, frame=frame)
    dist = float(geometry.distance_to_boundary(c, pt))
    return VelocitySample(location=pt, v=v, on_boundary=dist < _ON_BOUNDARY_TOL)


def grad_velocity(c: Contour, k: KernelSpec, x, frame: FrameData | None = None):
    """Velocity gradient at off-boundary x; returns GradSample (or a list).

    Raises
    ------
    SingularEvaluation
        If an evaluation point coincides with a marker (the reduced
        integrand is singular there).
    """
    if frame is None:
        frame = geometry.frames(c)
    pts, d, r2 = _kernel_terms(c, x)
    if np.any(r2 < _COINCIDENT_TOL ** 2):
        raise SingularEvaluation("gradient evaluation point coincides with a marker")
    kv = k.scale * (d @ k.matrix.T) / (_TWO_PI * r2[..., None])  # (M, N, 2)
    g = -np.einsum("mni,nj,n->mij", kv, frame.normal, frame.quad_weight)
    samples = [
        GradSample(location=p, grad=gi, divergence=float(np.trace(gi)))
        for p, gi in zip(pts, g)
    ]
    return samples if np.asarray(x).ndim == 2 else samples[0]


def second_grad_velocity(c: Contour, k: KernelSpec, x, frame: FrameData | None = None) -> np.ndarray:
    """Second derivatives at off-boundary x: tensor [..., i, j, l] = d_l d_j v_i.

    Warns with ResolutionWarning when N * dist(x, boundary) < 10, below
    which the near-singular trapezoid loses accuracy.
    """
    if frame is None:
        frame = geometry.frames(c)
    pts, d, r2 = _kernel_terms(c, x)
    if np.any(r2 < _COINCIDENT_TOL ** 2):
        raise SingularEvaluation("second-derivative evaluation point coincides with a marker")
    dist = geometry.distance_to_boundary(c, pts)
    if np.any(c.n * dist < 10.0):
        warnings.warn(
            f"N*dist = {float(np.min(c.n * dist)):.3g} < 10: second derivatives "
            "under-resolved; increase the marker count",
            ResolutionWarning,
            stacklevel=2,
        )
    flat = d.reshape(-1, 2)
    gk = _grad_kernel_flat(k, flat, r2.reshape(-1)).reshape(d.shape[:2] + (2, 2))
    t = -np.einsum("mnil,nj,n->mijl", gk, frame.normal, frame.quad_weight)
    return t if np.asarray(x).ndim == 2 else t[0]


def _grad_kernel_flat(k: KernelSpec, d: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """grad_kernel specialized to precomputed squared radii."""
    mx = d @ k.matrix.T
    outer = mx[:, :, None] * d[:, None, :]
    g = k.matrix[None, :, :] * r2[:, None, None] - 2.0 * outer
    return k.scale * g / (_TWO_PI * (r2 ** 2)[:, None, None])
