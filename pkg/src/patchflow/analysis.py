"""Numerical verification suite for the singular-integral structure.

Checks implemented here:

- existence of principal values at boundary points, both for odd degree -1
  kernels integrated over the boundary with a normal-component weight and
  for even degree -2 kernels with zero circle mean integrated over the
  patch (truncation ladders in epsilon with Richardson extrapolation);
- the distance scaling |d^2 v(x)| <= C dist(x, boundary)^(gamma-1) near a
  boundary of exactly Hoelder-(1+gamma) smoothness (only the exponent is
  tested; the constant is non-constructive);
- constancy of the complex derivative d v (the Beurling transform of the
  patch indicator) inside an ellipse, where it equals -q e^{-2 i theta};
- the identity between a difference of two "solid" commutators (integrals
  over the patch of a differentiated kernel) and the corresponding
  difference of boundary commutators, at boundary points;
- a discrete Hoelder seminorm of the outward normal direction, the
  boundary-regularity diagnostic recorded along simulations.

Solid integrals use a polar mesh centered at the evaluation point with
exact radial clipping against a convex contour and quadratic radial
grading: the polar Jacobian exactly neutralizes the O(1/r) singularity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import field as field_mod
from . import geometry
from .errors import GeometryError, NonConvexError, ResolutionError
from .geometry import Contour, FrameData
from .kernels import KernelSpec, cauchy, eval_kernel, grad_kernel
from .ellipse_oracle import EllipseState

__all__ = [
    "TestField",
    "TEST_FIELDS",
    "PvResult",
    "pv_boundary",
    "pv_solid_even",
    "even_kernel_from_grad",
    "VasinProfile",
    "vasin_profile",
    "BeurlingSample",
    "beurling_interior",
    "CommutatorResult",
    "commutator_identity",
    "holder_normal",
    "DiagnosticsRecord",
    "diagnostics",
]

_TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# test scalar fields


@dataclass(frozen=True)
class TestField:
    """Scalar field with analytic gradient and Hessian, for commutator checks.

    Only the gradient on and near the contour enters the identities; the
    Hessian is used solely for the smooth diagonal limit of the boundary
    quadrature.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]


def _linear_grad(p):
    p = np.asarray(p, dtype=float)
    out = np.empty(p.shape)
    out[..., 0] = 0.7
    out[..., 1] = -0.3
    return out


def _linear_hess(p):
    p = np.asarray(p, dtype=float)
    return np.zeros(p.shape[:-1] + (2, 2))


def _quad_grad(p):
    p = np.asarray(p, dtype=float)
    return np.stack([2.0 * p[..., 0] + p[..., 1], p[..., 0]], axis=-1)


def _quad_hess(p):
    p = np.asarray(p, dtype=float)
    h = np.empty(p.shape[:-1] + (2, 2))
    h[..., 0, 0] = 2.0
    h[..., 0, 1] = 1.0
    h[..., 1, 0] = 1.0
    h[..., 1, 1] = 0.0
    return h


def _trig_grad(p):
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    return np.stack([np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y)], axis=-1)


def _trig_hess(p):
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    h = np.empty(p.shape[:-1] + (2, 2))
    h[..., 0, 0] = -np.sin(x) * np.cos(y)
    h[..., 0, 1] = -np.cos(x) * np.sin(y)
    h[..., 1, 0] = -np.cos(x) * np.sin(y)
    h[..., 1, 1] = -np.sin(x) * np.cos(y)
    return h


TEST_FIELDS = {
    "linear": TestField(
        "linear",
        value=lambda p: 0.7 * np.asarray(p, float)[..., 0] - 0.3 * np.asarray(p, float)[..., 1],
        grad=_linear_grad,
        hessian=_linear_hess,
    ),
    "quadratic": TestField(
        "quadratic",
        value=lambda p: np.asarray(p, float)[..., 0] ** 2
        + np.asarray(p, float)[..., 0] * np.asarray(p, float)[..., 1],
        grad=_quad_grad,
        hessian=_quad_hess,
    ),
    "trig": TestField(
        "trig",
        value=lambda p: np.sin(np.asarray(p, float)[..., 0]) * np.cos(np.asarray(p, float)[..., 1]),
        grad=_trig_grad,
        hessian=_trig_hess,
    ),
}


# ---------------------------------------------------------------------------
# principal values


@dataclass(frozen=True)
class PvResult:
    """Truncation ladder of a principal-value integral at a boundary point."""

    location: np.ndarray
    epsilons: np.ndarray
    truncated_values: np.ndarray
    extrapolated_limit: float

    def differences(self) -> np.ndarray:
        """|I_eps - I_{eps/2}| down the ladder."""
        return np.abs(np.diff(self.truncated_values))


def _richardson(epsilons: np.ndarray, values: np.ndarray) -> float:
    """Extrapolate I_eps = I + C eps^p to eps -> 0 from the last three rungs."""
    if len(values) < 3:
        return float(values[-1])
    d1 = values[-2] - values[-3]
    d2 = values[-1] - values[-2]
    if d2 == 0.0 or abs(d2) >= abs(d1):
        return float(values[-1])
    p = math.log2(abs(d1) / abs(d2))
    p = min(max(p, 0.1), 4.0)
    r = 2.0 ** (-p)
    return float(values[-1] + d2 * r / (1.0 - r))


def pv_boundary(
    c: Contour,
    k: KernelSpec,
    component: int,
    weight_index: int,
    marker_index: int,
    eps_min: float,
    phi: Callable[[np.ndarray], np.ndarray] | None = None,
    frame: FrameData | None = None,
) -> PvResult:
    """Truncated boundary principal values of an odd degree -1 kernel component.

    Computes I_eps = sum over markers with |y - x| > eps of
    K(x - y) phi(y) n_j(y) w(y), for K the chosen kernel component and j
    the weight index, on the dyadic ladder eps in {diam/4, diam/8, ...}
    down to ``eps_min``.

    Raises
    ------
    ResolutionError
        If eps_min < 4 * max marker spacing (truncation below resolution).
    """
    if frame is None:
        frame = geometry.frames(c)
    spacing = float(c.chord_lengths().max())
    if eps_min < 4.0 * spacing:
        raise ResolutionError(
            f"eps_min = {eps_min:.3g} below 4 * marker spacing = {4 * spacing:.3g}"
        )
    x = c.markers[marker_index]
    d = x[None, :] - c.markers
    r = np.hypot(d[:, 0], d[:, 1])
    phi_vals = np.ones(c.n) if phi is None else np.asarray(phi(c.markers), dtype=float)
    kv = eval_kernel_safe(k, d, r)[:, component]
    kv[r == 0.0] = 0.0
    terms = kv * phi_vals * frame.normal[:, weight_index] * frame.quad_weight

    diam = float(np.ptp(c.markers, axis=0).max())
    eps_list = []
    eps = diam / 4.0
    while eps >= eps_min:
        eps_list.append(eps)
        eps /= 2.0
    if len(eps_list) < 3:
        raise ResolutionError("ladder too short; decrease eps_min or refine the contour")
    epsilons = np.array(eps_list)
    values = np.array([float(terms[r > e].sum()) for e in epsilons])
    return PvResult(
        location=x,
        epsilons=epsilons,
        truncated_values=values,
        extrapolated_limit=_richardson(epsilons, values),
    )


def eval_kernel_safe(k: KernelSpec, d: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Kernel values with the r = 0 row zeroed (used under a mask)."""
    r2 = np.where(r > 0.0, r * r, 1.0)
    mx = d @ k.matrix.T
    return k.scale * mx / (_TWO_PI * r2[:, None])


def even_kernel_from_grad(k: KernelSpec, i: int, l: int) -> Callable[[np.ndarray], np.ndarray]:
    """Even degree -2 scalar kernel L(u) = (d_l k_i)(u); zero circle mean."""

    def ker(u: np.ndarray) -> np.ndarray:
        return grad_kernel(k, u)[..., i, l]

    return ker


def _ray_exit_lengths(c: Contour, x: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Largest positive ray parameter from x to the polygon, per angle.

    For a convex contour this is the exit distance of the ray x + t e(phi);
    0 when the ray immediately leaves the patch.
    """
    e = np.column_stack([np.cos(angles), np.sin(angles)])  # (A, 2)
    a = c.markers
    d = c.chords()
    rel = a - x[None, :]  # (N, 2)
    denom = e[:, None, 0] * d[None, :, 1] - e[:, None, 1] * d[None, :, 0]  # (A, N)
    num_t = rel[None, :, 0] * d[None, :, 1] - rel[None, :, 1] * d[None, :, 0]
    num_s = rel[None, :, 0] * e[:, None, 1] - rel[None, :, 1] * e[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num_t / denom
        s = num_s / denom
    valid = (np.abs(denom) > 1e-300) & (s >= 0.0) & (s < 1.0) & (t > 1e-12)
    t = np.where(valid, t, 0.0)
    return t.max(axis=1)


def pv_solid_even(
    c: Contour,
    kernel: Callable[[np.ndarray], np.ndarray],
    marker_index: int,
    epsilons: Sequence[float],
    n_angles: int = 2048,
) -> PvResult:
    """Truncated solid principal values of an even degree -2 kernel.

    Computes I_eps = integral over {y in D : |y - x| > eps} of L(x - y) dA
    for x the chosen marker of a convex contour.  In polar coordinates
    about x the radial integral is exact by homogeneity:
    I_eps = sum over angles of L(-e(phi)) log(R(phi)/eps), restricted to
    rays with R(phi) > eps, so only the angular quadrature is discrete.
    """
    if not geometry.is_convex(c):
        raise NonConvexError("solid principal values need a convex contour")
    x = c.markers[marker_index]
    angles = _TWO_PI * (np.arange(n_angles) + 0.5) / n_angles
    reach = _ray_exit_lengths(c, x, angles)
    e = np.column_stack([np.cos(angles), np.sin(angles)])
    lvals = np.asarray(kernel(-e), dtype=float)
    w = _TWO_PI / n_angles
    epsilons = np.asarray(sorted(epsilons, reverse=True), dtype=float)
    values = []
    for eps in epsilons:
        live = reach > eps
        values.append(float(np.sum(lvals[live] * np.log(reach[live] / eps)) * w))
    values = np.array(values)
    return PvResult(
        location=x,
        epsilons=epsilons,
        truncated_values=values,
        extrapolated_limit=_richardson(epsilons, values),
    )


# ---------------------------------------------------------------------------
# distance scaling of second derivatives


@dataclass(frozen=True)
class VasinProfile:
    """Max second-derivative magnitude m(d) against probe distance d."""

    gamma: float
    distances: np.ndarray
    magnitudes: np.ndarray
    products: np.ndarray  # m * d^(1-gamma)

    def loglog_slope(self) -> float:
        """Least-squares slope of log m against log d."""
        coef = np.polyfit(np.log(self.distances), np.log(self.magnitudes), 1)
        return float(coef[0])


def vasin_profile(
    c: Contour,
    k: KernelSpec,
    gamma: float,
    distances: Sequence[float],
    probe_indices: Sequence[int] | None = None,
) -> VasinProfile:
    """Second-derivative magnitudes at probes straddling the boundary.

    For every distance d, probe points sit at x = m_i +/- d n_i for the
    chosen marker indices (default: 8 equispaced markers plus marker 0,
    which is the apex of bump contours); m(d) is the max of |d_l d_j v_i|
    over probes and tensor entries, and the product column is
    m(d) * d^(1-gamma).

    Raises
    ------
    ResolutionError
        If N * d < 10 for some requested distance (under-resolved).
    """
    distances = np.asarray(sorted(distances), dtype=float)
    if np.any(c.n * distances < 10.0):
        raise ResolutionError(
            f"marker count {c.n} under-resolves the smallest distance "
            f"{distances.min():.3g} (need N*d >= 10)"
        )
    frame = geometry.frames(c)
    if probe_indices is None:
        probe_indices = sorted({0, *(int(i) for i in np.linspace(0, c.n, 9)[:-1])})
    idx = np.asarray(list(probe_indices), dtype=int)
    base = c.markers[idx]
    nrm = frame.normal[idx]
    mags = []
    for d in distances:
        probes = np.vstack([base - d * nrm, base + d * nrm])
        with warnings.catch_warnings():
            # the precondition above already guarantees N*d >= 10 for the
            # requested analytic distances; the polyline distance sits an
            # epsilon below and would trip the warning spuriously
            warnings.simplefilter("ignore")
            tensor = field_mod.second_grad_velocity(c, k, probes, frame=frame)
        mags.append(float(np.max(np.abs(tensor))))
    mags = np.array(mags)
    return VasinProfile(
        gamma=gamma,
        distances=distances,
        magnitudes=mags,
        products=mags * distances ** (1.0 - gamma),
    )


# ---------------------------------------------------------------------------
# Beurling transform inside the patch


@dataclass(frozen=True)
class BeurlingSample:
    """Wirtinger derivatives of the Cauchy-kernel velocity at an interior point."""

    location: np.ndarray
    grad: np.ndarray
    dz: complex  # d v  (the Beurling transform of the patch indicator)
    dzbar: complex  # dbar v  (the patch indicator itself, inside)


def beurling_interior(c: Contour, x, frame: FrameData | None = None) -> BeurlingSample:
    """Complex derivatives of the Cauchy velocity at an interior point.

    With v = v1 + i v2, d v = ((d1 v1 + d2 v2) + i (d1 v2 - d2 v1))/2 and
    dbar v = ((d1 v1 - d2 v2) + i (d1 v2 + d2 v1))/2.  Inside an ellipse
    E(a, b, theta) the exact values are d v = -q e^{-2 i theta} (constant)
    and dbar v = 1.

    Raises
    ------
    GeometryError
        If x is closer to the boundary than 5% of the contour diameter
        (accuracy contract of the quadrature).
    """
    pt = np.asarray(x, dtype=float)
    diam = float(np.ptp(c.markers, axis=0).max())
    dist = float(geometry.distance_to_boundary(c, pt))
    if dist <= 0.05 * diam:
        raise GeometryError(
            f"probe at distance {dist:.3g} from the boundary; need > 0.05*diam = {0.05 * diam:.3g}"
        )
    sample = field_mod.grad_velocity(c, cauchy(), pt, frame=frame)
    g = sample.grad
    dz = 0.5 * complex(g[0, 0] + g[1, 1], g[1, 0] - g[0, 1])
    dzbar = 0.5 * complex(g[0, 0] - g[1, 1], g[1, 0] + g[0, 1])
    return BeurlingSample(location=pt, grad=g, dz=dz, dzbar=dzbar)


# ---------------------------------------------------------------------------
# solid vs boundary commutators


@dataclass(frozen=True)
class CommutatorResult:
    """Solid and boundary commutator differences at a boundary point.

    ``tol`` is the combined two-resolution quadrature error estimate; the
    identity check is |ds - db| against a small multiple of it.
    """

    location: np.ndarray
    ds: float
    db: float
    ds_err: float
    db_err: float

    @property
    def tol(self) -> float:
        return self.ds_err + self.db_err

    @property
    def defect(self) -> float:
        return abs(self.ds - self.db)


def _solid_commutator(
    c: Contour,
    k: KernelSpec,
    phi: TestField,
    x: np.ndarray,
    i: int,
    j: int,
    component: int,
    n_angles: int,
    n_radial: int,
) -> float:
    """Graded-polar quadrature of the absolutely convergent solid difference.

    DS(x) = iint_D d_j k_c(x-y) (d_i Phi(y) - d_i Phi(x)) dA(y)
          - iint_D d_i k_c(x-y) (d_j Phi(y) - d_j Phi(x)) dA(y).
    """
    angles = _TWO_PI * (np.arange(n_angles) + 0.5) / n_angles
    reach = _ray_exit_lengths(c, x, angles)
    live = reach > 0.0
    angles, reach = angles[live], reach[live]
    e = np.column_stack([np.cos(angles), np.sin(angles)])

    # radial grading r = R (k/K)^2; trapezoid in k with Jacobian r'(k)
    kk = np.arange(n_radial + 1) / n_radial
    r = reach[:, None] * (kk[None, :] ** 2)  # (A, K+1)
    rprime = reach[:, None] * 2.0 * kk[None, :] / n_radial
    y = x[None, None, :] + r[:, :, None] * e[:, None, :]

    gphi = phi.grad(y)  # (A, K+1, 2)
    gphix = phi.grad(x)
    diff_i = gphi[..., i] - gphix[i]
    diff_j = gphi[..., j] - gphix[j]

    rr = r.copy()
    rr[:, 0] = 1.0  # r = 0 column is zeroed by the Jacobian below
    # displacement x - y = -r e; degree -2 evenness gives gk(x-y) = gk(-e)/r^2
    gk_unit = grad_kernel(k, -e)  # (A, 2, 2)
    gk_cj = gk_unit[:, component, j][:, None] / rr ** 2
    gk_ci = gk_unit[:, component, i][:, None] / rr ** 2

    integrand = (gk_cj * diff_i - gk_ci * diff_j) * r  # polar Jacobian r
    integrand[:, 0] = 0.0
    vals = integrand * rprime  # unit-spaced trapezoid in k, Jacobian r'(k)
    radial = vals.sum(axis=1) - 0.5 * (vals[:, 0] + vals[:, -1])
    return float(np.sum(radial) * (_TWO_PI / n_angles))


def _boundary_commutator(
    c: Contour,
    k: KernelSpec,
    phi: TestField,
    marker_index: int,
    i: int,
    j: int,
    component: int,
    frame: FrameData,
    stride: int = 1,
) -> float:
    """Trapezoidal boundary difference with the analytic diagonal limit.

    DB(x) = oint k_c(x-y) (d_i Phi(x) - d_i Phi(y)) n_j(y) dsigma(y)
          - oint k_c(x-y) (d_j Phi(x) - d_j Phi(y)) n_i(y) dsigma(y).
    """
    markers = c.markers[::stride]
    normal = frame.normal[::stride]
    qw = frame.quad_weight[::stride] * stride
    tangent = frame.tangent[::stride]
    pos = marker_index // stride  # caller guarantees marker_index % stride == 0
    x = markers[pos]

    d = x[None, :] - markers
    r = np.hypot(d[:, 0], d[:, 1])
    kv = eval_kernel_safe(k, d, r)[:, component]
    gphi = phi.grad(markers)
    gphix = phi.grad(x)
    term = kv * (
        (gphix[i] - gphi[:, i]) * normal[:, j] - (gphix[j] - gphi[:, j]) * normal[:, i]
    )
    # diagonal limit along the curve: k_c(tau) [(H tau)_i n_j - (H tau)_j n_i]
    tau = tangent[pos]
    h_tau = phi.hessian(x) @ tau
    k_tau = float(eval_kernel(k, tau)[component])
    term[pos] = k_tau * (h_tau[i] * normal[pos, j] - h_tau[j] * normal[pos, i])
    return float(np.sum(term * qw))


def commutator_identity(
    c: Contour,
    k: KernelSpec,
    phi: TestField,
    marker_index: int,
    i: int = 0,
    j: int = 1,
    component: int = 1,
    n_angles: int = 256,
    n_radial: int = 256,
    clip_contour: Contour | None = None,
) -> CommutatorResult:
    """Solid vs boundary commutator difference at a boundary marker.

    Indices are 0-based: the default (i, j, component) = (0, 1, 1) is the
    first-coordinate expansion pairing d_2 k_2 with d_1 Phi and d_1 k_2
    with d_2 Phi.  The two sides are computed by independent quadratures
    (graded polar area mesh vs boundary trapezoid); each carries a
    two-resolution error estimate.

    Raises
    ------
    NonConvexError
        If the contour is not convex (exact radial clipping requires it).
    """
    if not geometry.is_convex(c):
        raise NonConvexError("commutator quadrature needs a convex contour")
    if c.n % 2 or marker_index % 2:
        raise GeometryError("need an even marker count and an even marker index")
    frame = geometry.frames(c)
    x = c.markers[marker_index]

    # clip rays against a spline-refined polygon: the raw marker polygon
    # inscribes the smooth curve with an O(N^-2) area deficit that would
    # bias the solid side relative to the spectrally exact boundary side
    clip_c = clip_contour if clip_contour is not None else refined_clip_contour(c)
    ds = _solid_commutator(clip_c, k, phi, x, i, j, component, n_angles, n_radial)
    ds_half = _solid_commutator(clip_c, k, phi, x, i, j, component, n_angles // 2, n_radial // 2)
    db = _boundary_commutator(c, k, phi, marker_index, i, j, component, frame)
    db_half = _boundary_commutator(c, k, phi, marker_index, i, j, component, frame, stride=2)

    scale = max(abs(ds), abs(db), 1.0)
    # residual chord-sag infidelity of the clipping polygon, O((2 pi/N)^2),
    # is shared by both mesh resolutions and invisible to the two-level diff
    clip_floor = (_TWO_PI / clip_c.n) ** 2 * scale
    ds_err = abs(ds - ds_half) + clip_floor + 1e-12 * scale
    db_err = abs(db - db_half) + 1e-12 * scale
    return CommutatorResult(location=x, ds=ds, db=db, ds_err=ds_err, db_err=db_err)


def refined_clip_contour(c: Contour) -> Contour:
    """Spline-refined polygon used for exact radial clipping of solid integrals."""
    return geometry.resample(c, min(16 * c.n, 8192))


# ---------------------------------------------------------------------------
# boundary regularity diagnostics


def holder_normal(
    c: Contour,
    gamma: float,
    frame: FrameData | None = None,
    indices: Sequence[int] | None = None,
) -> float:
    """Discrete Hoelder-gamma seminorm of the outward normal direction.

    Max over marker pairs with |m_i - m_j| >= 2 * max chord spacing of
    |n(m_i) - n(m_j)| / |m_i - m_j|^gamma.  Converges to the continuum
    seminorm from below under refinement.  ``indices`` restricts both pair
    endpoints to a marker subset (a localized seminorm, e.g. around a
    known low-regularity point that the global maximum would mask).
    """
    if frame is None:
        frame = geometry.frames(c)
    if indices is None:
        m = c.markers
        nrm = frame.normal
    else:
        idx = np.asarray(list(indices), dtype=int)
        m = c.markers[idx]
        nrm = frame.normal[idx]
    cutoff = 2.0 * float(c.chord_lengths().max())
    best = 0.0
    block = 256
    for start in range(0, m.shape[0], block):
        sl = slice(start, min(start + block, m.shape[0]))
        dx = m[sl, None, :] - m[None, :, :]
        dist = np.hypot(dx[..., 0], dx[..., 1])
        dn = nrm[sl, None, :] - nrm[None, :, :]
        dn_mag = np.hypot(dn[..., 0], dn[..., 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist >= cutoff, dn_mag / dist ** gamma, 0.0)
        best = max(best, float(ratio.max()))
    return best


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-time snapshot of geometry, fitted ellipse and conserved quantities."""

    t: float
    area: float
    perimeter: float
    centroid: np.ndarray
    fitted: EllipseState
    sum_ab: float
    skew_inv: float
    holder_normal: float


def diagnostics(c: Contour, t: float, kernel: KernelSpec | None = None) -> DiagnosticsRecord:
    """Assemble the standard diagnostics record at time t.

    The kernel argument is accepted for call-site uniformity; every
    recorded field is a pure geometry quantity (gamma = 0.5 for the
    normal-direction seminorm).
    """
    frame = geometry.frames(c)
    st = geometry.fit_ellipse(c)
    return DiagnosticsRecord(
        t=t,
        area=geometry.area(c),
        perimeter=geometry.perimeter(c),
        centroid=geometry.centroid(c),
        fitted=st,
        sum_ab=st.a + st.b,
        skew_inv=(st.a - st.b) * math.sin(2.0 * st.theta),
        holder_normal=holder_normal(c, 0.5, frame=frame),
    )
