"""Exact dynamics of elliptical patches under the Cauchy-kernel transport.

A centered tilted ellipse stays an ellipse; its semi-axes and tilt obey a
3-ODE system whose two first integrals are a + b and (a - b) sin(2 theta).
For axis-aligned initial data the axes have closed forms.  These exact
solutions are the ground truth the marker simulator is validated against.

Velocity normalization: the kernel is 1/(pi z), under which the interior
velocity of E(a, b, theta) is the affine field
``v(z) = conj(z) - q e^{-2 i theta} z`` with q = (a - b)/(a + b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularStateError

__all__ = [
    "EllipseState",
    "EllipseTrajectory",
    "closed_form_axis_aligned",
    "ode_rhs",
    "integrate",
    "interior_velocity",
    "interior_velocity_matrix",
    "conserved",
    "limit_angle",
]

_DISC_TOL = 1e-12


@dataclass(frozen=True)
class EllipseState:
    """Centered tilted ellipse (a, b, theta); theta normalized to (-pi/2, pi/2].

    For an exact disc (a == b) the tilt is meaningless and is stored as 0,
    matching the ellipse-fit tie-break.
    """

    a: float
    b: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError(f"semi-axes must be positive, got a={self.a}, b={self.b}")
        th = float(self.theta)
        if self.a == self.b:
            th = 0.0
        else:
            while th <= -math.pi / 2.0:
                th += math.pi
            while th > math.pi / 2.0:
                th -= math.pi
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def q(self) -> float:
        """Axis-ratio parameter (a - b)/(a + b) in (-1, 1)."""
        return (self.a - self.b) / (self.a + self.b)


@dataclass(frozen=True)
class EllipseTrajectory:
    """Sampled solution of the ellipse ODE system.

    ``sum_ab`` (= a0 + b0) and ``skew`` (= (a0 - b0) sin 2 theta0) are the
    two first integrals; ``ts`` runs from 0 to the requested horizon (and
    is decreasing for backward integration).
    """

    ts: np.ndarray
    a: np.ndarray
    b: np.ndarray
    theta: np.ndarray
    sum_ab: float
    skew: float

    @property
    def final(self) -> EllipseState:
        return EllipseState(a=float(self.a[-1]), b=float(self.b[-1]), theta=float(self.theta[-1]))

    def max_conserved_drift(self) -> tuple[float, float]:
        """Max |a+b - sum_ab| and max |(a-b) sin 2theta - skew| along the samples."""
        d_sum = float(np.max(np.abs(self.a + self.b - self.sum_ab)))
        d_skew = float(np.max(np.abs((self.a - self.b) * np.sin(2.0 * self.theta) - self.skew)))
        return d_sum, d_skew


def closed_form_axis_aligned(a0: float, b0: float, t: float) -> tuple[float, float]:
    """Axis-aligned semi-axes at time t.

    ``a(t) = a0 (a0+b0) e^{2t} / (b0 + a0 e^{2t})`` and
    ``b(t) = b0 (a0+b0) / (b0 + a0 e^{2t})``; evaluated in the
    exponentially stable form for either sign of t.
    """
    if a0 <= 0.0 or b0 <= 0.0:
        raise ValueError("semi-axes must be positive")
    s = a0 + b0
    if t >= 0.0:
        w = math.exp(-2.0 * t)  # in (0, 1]
        a = a0 * s / (b0 * w + a0)
        b = b0 * s * w / (b0 * w + a0)
    else:
        w = math.exp(2.0 * t)
        a = a0 * s * w / (b0 + a0 * w)
        b = b0 * s / (b0 + a0 * w)
    return a, b


def ode_rhs(state: EllipseState, sum_ab: float) -> tuple[float, float, float]:
    """Right-hand side (a', b', theta') of the ellipse system.

    ``a' = (2/S) a b cos 2theta``, ``b' = -a'`` and
    ``theta' = -(2/S) (a b/(a - b)) sin 2theta`` with S = a0 + b0 frozen.

    Raises
    ------
    SingularStateError
        If a = b within 1e-12 while sin 2theta != 0 (the tilt rate is
        undefined there; only the disc, theta = 0, passes through a = b).
    """
    a, b, th = state.a, state.b, state.theta
    s2 = math.sin(2.0 * th)
    c2 = math.cos(2.0 * th)
    rate = 2.0 / sum_ab * a * b
    da = rate * c2
    if abs(a - b) < _DISC_TOL:
        if abs(s2) > 0.0:
            raise SingularStateError(f"a = b with sin(2 theta) = {s2:.3e} != 0")
        dth = 0.0
    else:
        dth = -rate / (a - b) * s2
    return da, -da, dth


def integrate(
    state0: EllipseState,
    t_end: float,
    dt: float,
    max_samples: int = 100_001,
) -> EllipseTrajectory:
    """Fixed-step RK4 integration of the ellipse system up to t_end.

    S = a0 + b0 is frozen from the initial condition, and a' = -b' is
    evaluated once per stage so a + b is conserved to roundoff.  Negative
    ``t_end`` integrates backward.  A disc initial state short-circuits to
    the axis-aligned closed form with theta = 0.

    Samples are thinned to at most ``max_samples`` (the final state is
    always kept exactly).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    a0, b0, th0 = state0.a, state0.b, state0.theta
    s = a0 + b0
    skew = (a0 - b0) * math.sin(2.0 * th0)
    n_steps = max(1, int(round(abs(t_end) / dt)))
    h = t_end / n_steps
    stride = max(1, (n_steps + max_samples - 1) // max_samples)

    if abs(a0 - b0) <= _DISC_TOL:
        idx = np.arange(0, n_steps + 1, stride)
        if idx[-1] != n_steps:
            idx = np.append(idx, n_steps)
        ts = idx * h
        ab = np.array([closed_form_axis_aligned(a0, b0, t) for t in ts])
        return EllipseTrajectory(
            ts=ts, a=ab[:, 0], b=ab[:, 1], theta=np.zeros_like(ts), sum_ab=s, skew=0.0
        )

    two_over_s = 2.0 / s
    sin, cos = math.sin, math.cos

    def rhs(a, b, th):
        s2 = sin(2.0 * th)
        c2 = cos(2.0 * th)
        ab = two_over_s * a * b
        da = ab * c2
        diff = a - b
        if abs(diff) < _DISC_TOL:
            raise SingularStateError("trajectory hit a = b away from the disc case")
        return da, -ab / diff * s2

    a, b, th = a0, b0, th0
    ts = [0.0]
    aa = [a]
    bb = [b]
    tt = [th]
    for i in range(n_steps):
        da1, dth1 = rhs(a, b, th)
        da2, dth2 = rhs(a + 0.5 * h * da1, b - 0.5 * h * da1, th + 0.5 * h * dth1)
        da3, dth3 = rhs(a + 0.5 * h * da2, b - 0.5 * h * da2, th + 0.5 * h * dth2)
        da4, dth4 = rhs(a + h * da3, b - h * da3, th + h * dth3)
        da = h / 6.0 * (da1 + 2.0 * da2 + 2.0 * da3 + da4)
        a += da
        b -= da
        th += h / 6.0 * (dth1 + 2.0 * dth2 + 2.0 * dth3 + dth4)
        if (i + 1) % stride == 0 or i + 1 == n_steps:
            ts.append((i + 1) * h)
            aa.append(a)
            bb.append(b)
            tt.append(th)
    return EllipseTrajectory(
        ts=np.array(ts), a=np.array(aa), b=np.array(bb), theta=np.array(tt),
        sum_ab=s, skew=skew,
    )


def interior_velocity(state: EllipseState, z) -> np.ndarray:
    """Velocity ``conj(z) - q e^{-2 i theta} z`` inside the ellipse.

    The formula is evaluated wherever asked; it is the actual field only
    for z inside E(a, b, theta).
    """
    z = np.asarray(z, dtype=float)
    zc = z[..., 0] + 1j * z[..., 1]
    w = np.conj(zc) - state.q * np.exp(-2j * state.theta) * zc
    return np.stack([w.real, w.imag], axis=-1)


def interior_velocity_matrix(state: EllipseState) -> np.ndarray:
    """Matrix A with interior velocity v = A x: [[1-qc, -qs], [qs, -(1+qc)]].

    Here c = cos 2theta, s = sin 2theta.  Its trace is the interior
    divergence -2 q cos 2theta.
    """
    q = state.q
    c = math.cos(2.0 * state.theta)
    s = math.sin(2.0 * state.theta)
    return np.array([[1.0 - q * c, -q * s], [q * s, -(1.0 + q * c)]])


def conserved(state: EllipseState) -> tuple[float, float]:
    """The two first integrals (a + b, (a - b) sin 2theta)."""
    return state.a + state.b, (state.a - state.b) * math.sin(2.0 * state.theta)


def limit_angle(a0: float, b0: float, theta0: float) -> float:
    """Limit tilt angle: sin 2theta_inf = ((a0-b0)/(a0+b0)) sin 2theta0.

    Defined for a0 > b0 > 0 and 0 < theta0 < pi/2; the arcsin branch is
    fixed in (0, pi/4), where every trajectory ends up.  For a0 < b0
    reflect about the horizontal axis first (a <-> b, theta -> pi/2 - theta).
    """
    if not (a0 > b0 > 0.0):
        raise ValueError(f"need a0 > b0 > 0, got a0={a0}, b0={b0}")
    if not (0.0 < theta0 < math.pi / 2.0):
        raise ValueError(f"need 0 < theta0 < pi/2, got {theta0}")
    return 0.5 * math.asin((a0 - b0) / (a0 + b0) * math.sin(2.0 * theta0))
