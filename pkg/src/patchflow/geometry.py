"""Closed planar marker curves and their discrete differential geometry.

A contour is an ordered, counterclockwise, closed sequence of markers
(marker i connects to marker i+1 mod N).  This module provides
constructors (ellipses, locally-Hoelder bump perturbations of the circle),
per-marker frames (tangent, outward normal, quadrature weights), integral
quantities (area, perimeter, centroid, second moments), ellipse fitting,
arclength resampling and a self-intersection scan.

Markers are expected to sample some smooth periodic parametrization
uniformly in index; all constructors and the resampler guarantee this, and
it is what makes the FFT-based tangents and the trapezoidal boundary
quadrature spectrally accurate on smooth curves.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import FitError, GeometryError
from .ellipse_oracle import EllipseState

try:  # optional fast path for the O(N^2) segment scan
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

__all__ = [
    "Contour",
    "FrameData",
    "make_ellipse_contour",
    "make_bump_contour",
    "make_square_contour",
    "frames",
    "area",
    "perimeter",
    "centroid",
    "second_moments",
    "fit_ellipse",
    "resample",
    "is_simple",
    "spacing_ratio",
    "distance_to_boundary",
    "is_convex",
    "read_contour_csv",
    "write_contour_csv",
]

MIN_MARKERS = 16
SPACING_RATIO_BOUND = 10.0


@dataclass(frozen=True)
class Contour:
    """Closed counterclockwise marker curve.

    Parameters
    ----------
    markers : ndarray, shape (N, 2)
        Marker coordinates in order; the curve closes from the last marker
        back to the first (no repeated closing point).

    Notes
    -----
    Construction validates N >= 16, finiteness and counterclockwise
    orientation (positive signed area).  Simplicity is not enforced here;
    use :func:`is_simple`.
    """

    markers: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.markers, dtype=float)
        if m.ndim != 2 or m.shape[1] != 2:
            raise GeometryError("markers must have shape (N, 2)")
        if m.shape[0] < MIN_MARKERS:
            raise GeometryError(f"need at least {MIN_MARKERS} markers, got {m.shape[0]}")
        if not np.all(np.isfinite(m)):
            raise GeometryError("markers must be finite")
        if _signed_area(m) <= 0.0:
            raise GeometryError("markers must be ordered counterclockwise (signed area > 0)")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "markers", m)

    @property
    def n(self) -> int:
        return self.markers.shape[0]

    def chords(self) -> np.ndarray:
        """Edge vectors marker[i+1] - marker[i], wrapping at the end."""
        return np.roll(self.markers, -1, axis=0) - self.markers

    def chord_lengths(self) -> np.ndarray:
        return np.hypot(*self.chords().T)


@dataclass(frozen=True)
class FrameData:
    """Per-marker frame of a contour.

    Attributes
    ----------
    tangent, normal : ndarray, shape (N, 2)
        Unit tangent and outward unit normal (tangent rotated by -90 deg
        for a counterclockwise curve).
    weight : ndarray, shape (N,)
        Chord-trapezoid arclength weight (|m_{i+1}-m_i| + |m_i-m_{i-1}|)/2.
        Sums exactly to the chord perimeter.
    quad_weight : ndarray, shape (N,)
        Spectral quadrature weight |dz/du|_i * (2*pi/N) for boundary
        integrals, with the parameter derivative taken in the uniform
        index parameter u.  Sums to the smooth-curve perimeter.
    """

    tangent: np.ndarray
    normal: np.ndarray
    weight: np.ndarray
    quad_weight: np.ndarray


def _signed_area(markers: np.ndarray) -> float:
    x, y = markers[:, 0], markers[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def _fft_derivative(values: np.ndarray) -> np.ndarray:
    """Derivative of periodic samples with respect to u in [0, 2*pi)."""
    n = values.shape[0]
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0  # zero the Nyquist mode for a real odd derivative
    spec = np.fft.fft(values, axis=0)
    spec *= (1j * k)[:, None] if values.ndim == 2 else 1j * k
    return np.fft.ifft(spec, axis=0).real


def make_ellipse_contour(a: float, b: float, theta: float, n: int) -> Contour:
    """Markers of a centered tilted ellipse, uniform in the elliptic parameter.

    Marker k sits at ``R(theta) @ (a cos s_k, b sin s_k)`` with
    ``s_k = 2*pi*k/n``, counterclockwise.

    Raises
    ------
    GeometryError
        If an axis is nonpositive or ``n`` < 16.
    """
    if a <= 0 or b <= 0:
        raise GeometryError(f"semi-axes must be positive, got a={a}, b={b}")
    if n < MIN_MARKERS:
        raise GeometryError(f"need at least {MIN_MARKERS} markers, got {n}")
    s = 2.0 * np.pi * np.arange(n) / n
    x = a * np.cos(s)
    y = b * np.sin(s)
    c, si = np.cos(theta), np.sin(theta)
    return Contour(np.column_stack([c * x - si * y, si * x + c * y]))


def _plateau_window(s: np.ndarray, inner: float = 0.5, outer: float = 1.5) -> np.ndarray:
    """Smooth window: 1 for |s| <= inner, 0 for |s| >= outer, C^inf between."""

    def bump(v):
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    t = np.clip((outer - np.abs(s)) / (outer - inner), 0.0, 1.0)
    g, h = bump(t), bump(1.0 - t)
    return g / (g + h)


def make_bump_contour(gamma: float, eps: float, n: int) -> Contour:
    """Unit circle with a radial perturbation of exactly Hoelder-1+gamma smoothness.

    The radius is ``r(s) = 1 + eps * W(s) * |sin(s/2)|^(1+gamma)`` with a
    smooth plateau window W supported near s = 0, so the curve is C^(1+gamma)
    but not C^2 at marker 0 (the apex) and smooth elsewhere.
    """
    if not 0.0 < gamma < 1.0:
        raise GeometryError(f"gamma must be in (0, 1), got {gamma}")
    if not 0.0 <= eps <= 0.2:
        raise GeometryError(f"eps must be in [0, 0.2], got {eps}")
    if n < MIN_MARKERS:
        raise GeometryError(f"need at least {MIN_MARKERS} markers, got {n}")
    s = 2.0 * np.pi * np.arange(n) / n
    wrapped = np.mod(s + np.pi, 2.0 * np.pi) - np.pi
    r = 1.0 + eps * _plateau_window(wrapped) * np.abs(np.sin(wrapped / 2.0)) ** (1.0 + gamma)
    return Contour(np.column_stack([r * np.cos(s), r * np.sin(s)]))


def make_square_contour(side: float, n_per_side: int = 8) -> Contour:
    """Axis-aligned square of the given side, centered at the origin."""
    h = side / 2.0
    t = np.arange(n_per_side) / n_per_side
    bottom = np.column_stack([-h + side * t, np.full_like(t, -h)])
    right = np.column_stack([np.full_like(t, h), -h + side * t])
    top = np.column_stack([h - side * t, np.full_like(t, h)])
    left = np.column_stack([np.full_like(t, -h), h - side * t])
    return Contour(np.vstack([bottom, right, top, left]))


def spacing_ratio(c: Contour) -> float:
    """max chord length / min chord length."""
    lengths = c.chord_lengths()
    lo = float(lengths.min())
    if lo == 0.0:
        raise GeometryError("duplicate adjacent markers")
    return float(lengths.max()) / lo


def frames(c: Contour) -> FrameData:
    """Tangents, outward normals and quadrature weights at every marker.

    Tangents come from FFT differentiation in the uniform index parameter
    (spectrally accurate for markers sampling a smooth parametrization
    uniformly); if the chord-spacing ratio exceeds the contour validity
    bound (10), centered finite differences are used instead.
    """
    m = c.markers
    n = c.n
    lengths = c.chord_lengths()
    if lengths.min() == 0.0:
        raise GeometryError("duplicate adjacent markers")
    ratio = float(lengths.max() / lengths.min())
    if ratio <= SPACING_RATIO_BOUND:
        dz = _fft_derivative(m)
    else:
        du = 2.0 * np.pi / n
        dz = (np.roll(m, -1, axis=0) - np.roll(m, 1, axis=0)) / (2.0 * du)
    ds_du = np.hypot(dz[:, 0], dz[:, 1])
    if ds_du.min() <= 0.0:
        raise GeometryError("degenerate tangent")
    tangent = dz / ds_du[:, None]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    weight = 0.5 * (lengths + np.roll(lengths, 1))
    quad_weight = ds_du * (2.0 * np.pi / n)
    return FrameData(tangent=tangent, normal=normal, weight=weight, quad_weight=quad_weight)


def area(c: Contour) -> float:
    """Signed polygon area by the shoelace formula (positive, CCW)."""
    return _signed_area(c.markers)


def perimeter(c: Contour) -> float:
    """Polygon perimeter (sum of chord lengths)."""
    return float(c.chord_lengths().sum())


def centroid(c: Contour) -> np.ndarray:
    """Polygon centroid via the exact Green's-theorem moment formulas."""
    m = c.markers
    x, y = m[:, 0], m[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * float(np.sum(cross))
    cx = float(np.sum((x + xn) * cross)) / (6.0 * a)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * a)
    return np.array([cx, cy])


def second_moments(c: Contour) -> np.ndarray:
    """Central second-moment matrix of the polygonal region.

    Returns (1/A) * integral over the polygon of (x-c)(x-c)^T dA, computed
    exactly with the Green's-theorem polygon formulas.  For markers of an
    exact ellipse E(a,b,theta) the eigenvalues approach a^2/4 and b^2/4
    with eigenvectors at angles theta, theta + pi/2.
    """
    m = c.markers
    x, y = m[:, 0], m[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * float(np.sum(cross))
    cx = float(np.sum((x + xn) * cross)) / (6.0 * a)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * a)
    sxx = float(np.sum((x * x + x * xn + xn * xn) * cross)) / 12.0
    syy = float(np.sum((y * y + y * yn + yn * yn) * cross)) / 12.0
    sxy = float(np.sum((x * yn + 2.0 * x * y + 2.0 * xn * yn + xn * y) * cross)) / 24.0
    mxx = sxx / a - cx * cx
    myy = syy / a - cy * cy
    mxy = sxy / a - cx * cy
    return np.array([[mxx, mxy], [mxy, myy]])


def _spectral_second_moments(c: Contour) -> np.ndarray:
    """Central second moments by spectral flux quadrature.

    Same quantity as :func:`second_moments` but with the Green's-theorem
    line integrals evaluated by the trapezoidal rule in the uniform index
    parameter (FFT derivatives): exact to roundoff for trigonometric
    marker curves and spectrally accurate on smooth contours, where the
    polygon formulas carry an O(N^-2) inscribed-chord bias.
    """
    m = c.markers
    dz = _fft_derivative(m)
    x, y = m[:, 0], m[:, 1]
    dx, dy = dz[:, 0], dz[:, 1]
    du = 2.0 * np.pi / c.n
    a = float(np.sum(x * dy)) * du
    cx = 0.5 * float(np.sum(x * x * dy)) * du / a
    cy = -0.5 * float(np.sum(y * y * dx)) * du / a
    sxx = float(np.sum(x ** 3 * dy)) * du / 3.0
    syy = -float(np.sum(y ** 3 * dx)) * du / 3.0
    sxy = 0.5 * float(np.sum(x * x * y * dy)) * du
    return np.array(
        [
            [sxx / a - cx * cx, sxy / a - cx * cy],
            [sxy / a - cx * cy, syy / a - cy * cy],
        ]
    )


def fit_ellipse(c: Contour) -> EllipseState:
    """Ellipse state (a, b, theta) matching the contour's second moments.

    Diagonalizes the central second-moment matrix (spectral flux
    quadrature) and maps eigenvalues to semi-axes via a = 2*sqrt(l1),
    b = 2*sqrt(l2) with l1 >= l2.  theta is the leading-eigenvector angle
    normalized to (-pi/2, pi/2]; equal eigenvalues (within 1e-12) tie-break
    to theta = 0.

    Raises
    ------
    FitError
        If the smaller eigenvalue is not positive.
    """
    mom = _spectral_second_moments(c)
    evals, evecs = np.linalg.eigh(mom)
    l1, l2 = float(evals[1]), float(evals[0])
    if l2 <= 0.0:
        raise FitError(f"degenerate moment matrix, eigenvalues ({l1:.3e}, {l2:.3e})")
    if l1 - l2 <= 1e-12:
        return EllipseState(a=2.0 * np.sqrt(l1), b=2.0 * np.sqrt(l2), theta=0.0)
    vx, vy = evecs[0, 1], evecs[1, 1]
    theta = float(np.arctan2(vy, vx))
    if theta <= -np.pi / 2.0:
        theta += np.pi
    elif theta > np.pi / 2.0:
        theta -= np.pi
    return EllipseState(a=2.0 * np.sqrt(l1), b=2.0 * np.sqrt(l2), theta=theta)


def resample(c: Contour, n_target: int) -> Contour:
    """Reparametrize to ``n_target`` markers uniformly spaced in arclength.

    Fits periodic cubic splines through the markers (chord-length
    parameter), measures arclength on a dense refinement and places the new
    markers at equal arclength fractions.  Uniformly spaced input markers
    are a fixed point.

    Raises
    ------
    GeometryError
        If the resampled polygon self-intersects (geometry breakdown).
    """
    if n_target < MIN_MARKERS:
        raise GeometryError(f"need at least {MIN_MARKERS} markers, got {n_target}")
    m = c.markers
    lengths = c.chord_lengths()
    if lengths.min() == 0.0:
        raise GeometryError("duplicate adjacent markers")
    knots = np.concatenate([[0.0], np.cumsum(lengths)])
    closed = np.vstack([m, m[:1]])
    spline = CubicSpline(knots, closed, bc_type="periodic", axis=0)

    oversample = 16
    dense_u = np.linspace(0.0, knots[-1], oversample * c.n + 1)
    dense_pts = spline(dense_u)
    seg = np.diff(dense_pts, axis=0)
    dense_s = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    total = dense_s[-1]
    targets = total * np.arange(n_target) / n_target
    u_new = np.interp(targets, dense_s, dense_u)
    out = Contour(spline(u_new))
    if not is_simple(out):
        raise GeometryError("resampled contour self-intersects")
    return out


_ADJACENCY_CACHE: dict[int, np.ndarray] = {}


def _adjacency_mask(n: int) -> np.ndarray:
    mask = _ADJACENCY_CACHE.get(n)
    if mask is None:
        idx = np.arange(n)
        mask = (np.abs(idx[:, None] - idx[None, :]) % (n - 1)) <= 1
        if len(_ADJACENCY_CACHE) > 8:
            _ADJACENCY_CACHE.clear()
        _ADJACENCY_CACHE[n] = mask
    return mask


def is_simple(c: Contour) -> bool:
    """True iff no two non-adjacent segments properly intersect (O(N^2) scan).

    Exactly-touching segments (zero cross products) are treated as
    non-crossing; markers in general position make this a measure-zero
    concern.
    """
    m = c.markers
    if _has_proper_intersection is not None:
        return not _has_proper_intersection(
            np.ascontiguousarray(m[:, 0]), np.ascontiguousarray(m[:, 1])
        )
    n = c.n
    a = m
    b = np.roll(m, -1, axis=0)
    d = b - a
    # cross(d_i, p - a_i) for p = a_j and p = b_j, all pairs
    ax, ay = a[:, 0][:, None], a[:, 1][:, None]
    dx, dy = d[:, 0][:, None], d[:, 1][:, None]
    d1 = dx * (a[:, 1][None, :] - ay) - dy * (a[:, 0][None, :] - ax)
    d2 = dx * (b[:, 1][None, :] - ay) - dy * (b[:, 0][None, :] - ax)
    straddle = (d1 * d2 < 0.0) & (d1.T * d2.T < 0.0)
    return not bool(np.any(straddle & ~_adjacency_mask(n)))


if njit is not None:

    @njit(cache=True)
    def _has_proper_intersection(x, y):
        n = x.shape[0]
        for i in range(n - 1):
            axi, ayi = x[i], y[i]
            dxi, dyi = x[i + 1] - axi, y[i + 1] - ayi
            j_end = n - 1 if i == 0 else n
            for j in range(i + 2, j_end):
                j1 = j + 1 if j + 1 < n else 0
                d1 = dxi * (y[j] - ayi) - dyi * (x[j] - axi)
                d2 = dxi * (y[j1] - ayi) - dyi * (x[j1] - axi)
                if d1 * d2 < 0.0:
                    dxj, dyj = x[j1] - x[j], y[j1] - y[j]
                    d3 = dxj * (ayi - y[j]) - dyj * (axi - x[j])
                    d4 = dxj * (y[i + 1] - y[j]) - dyj * (x[i + 1] - x[j])
                    if d3 * d4 < 0.0:
                        return True
        return False

else:  # pragma: no cover
    _has_proper_intersection = None


def is_convex(c: Contour, tol: float = 1e-12) -> bool:
    """True iff all consecutive edge cross products are nonnegative (CCW convex)."""
    d = c.chords()
    cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
    scale = float(np.max(np.abs(cross))) + 1e-300
    return bool(np.all(cross >= -tol * scale))


def distance_to_boundary(c: Contour, points: np.ndarray) -> np.ndarray:
    """Distance from each query point to the marker polyline."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = c.markers
    d = c.chords()
    dd = np.einsum("ij,ij->i", d, d)
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("pij,ij->pi", rel, d) / dd[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist = np.hypot(pts[:, None, 0] - closest[:, :, 0], pts[:, None, 1] - closest[:, :, 1])
    out = dist.min(axis=1)
    return out if np.asarray(points).ndim == 2 else out[0]


def write_contour_csv(c: Contour, path) -> None:
    """Write markers as CSV with header ``x,y`` (no repeated closing point)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for px, py in c.markers:
            w.writerow([format(px, ".17g"), format(py, ".17g")])


def read_contour_csv(path) -> Contour:
    """Read a contour from a CSV file with header ``x,y``."""
    if isinstance(path, io.TextIOBase):
        rows = list(csv.reader(path))
    else:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    if not rows or [h.strip().lower() for h in rows[0]] != ["x", "y"]:
        raise GeometryError("contour CSV must start with header 'x,y'")
    try:
        markers = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise GeometryError(f"malformed contour CSV: {exc}") from exc
    return Contour(markers)
