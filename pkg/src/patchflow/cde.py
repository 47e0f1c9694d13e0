"""Time integration of the contour dynamics equation.

Markers are material points: every marker of the current contour is
advanced with the boundary-integral velocity evaluated at it, all markers
sharing the same Runge-Kutta stage evaluations (one coupled ODE system of
size 2N).  The fitted ellipse of a contour is read from its moments after
the fact (an ellipse vertex is not a material point, so tracking a vertex
marker would give the wrong tilt rate).

Marker clustering (e.g. during the collapse of a patch onto a segment) is
controlled by periodic uniform-arclength resampling; a self-intersecting
contour is an error, never silently repaired, since the continuum dynamics
preserve a simple smooth boundary and breakdown flags numerical failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import analysis, geometry
from .errors import ConfigError, GeometryBreakdown
from .geometry import Contour
from .kernels import KernelSpec

try:  # optional fast path for the innermost pairwise sum
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

__all__ = ["SimConfig", "Trajectory", "TrajectoryFrame", "rhs", "step", "evolve"]

_TWO_PI = 2.0 * np.pi
_INTEGRATORS = ("rk4", "heun")


@dataclass(frozen=True)
class SimConfig:
    """Time-stepping configuration.

    ``resample_every = 0`` disables resampling; otherwise the spacing
    ratio is checked every that many steps and the contour resampled to
    ``n_markers`` uniform-arclength markers when it exceeds
    ``resample_trigger``.  Acceptance-grade runs use dt <= 0.01.
    """

    dt: float = 1e-3
    t_end: float = 1.0
    integrator: str = "rk4"
    n_markers: int = 512
    resample_every: int = 50
    resample_trigger: float = 3.0
    diagnostics_every: int = 10

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not np.isfinite(self.t_end) or self.t_end <= 0.0:
            raise ConfigError(f"t_end must be positive and finite, got {self.t_end}")
        if self.integrator not in _INTEGRATORS:
            raise ConfigError(
                f"unknown integrator {self.integrator!r}; valid: {', '.join(_INTEGRATORS)}"
            )
        if self.n_markers < geometry.MIN_MARKERS:
            raise ConfigError(f"n_markers must be >= {geometry.MIN_MARKERS}")
        if self.resample_every < 0 or self.diagnostics_every < 1:
            raise ConfigError("resample_every must be >= 0 and diagnostics_every >= 1")


@dataclass(frozen=True)
class TrajectoryFrame:
    t: float
    contour: Contour
    record: "analysis.DiagnosticsRecord"


@dataclass
class Trajectory:
    """Recorded frames of an evolution, plus breakdown information.

    ``breakdown_time`` is None for a completed run; otherwise the run
    stopped there and the frames hold the last valid states.
    """

    frames: list[TrajectoryFrame] = field(default_factory=list)
    breakdown_time: float | None = None

    @property
    def ok(self) -> bool:
        return self.breakdown_time is None

    @property
    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.frames])

    @property
    def final(self) -> TrajectoryFrame:
        return self.frames[-1]

    def records(self) -> list["analysis.DiagnosticsRecord"]:
        return [f.record for f in self.frames]


def _self_velocity(markers: np.ndarray, k: KernelSpec) -> np.ndarray:
    """Boundary-integral velocity of every marker of a raw marker array.

    Same quadrature as field.boundary_velocity with the singular diagonal
    term set to 0, specialized to the self-evaluation case (no contour
    validation per RK stage) and written with explicit component arrays:
    this is the innermost loop of every simulation.
    """
    n = markers.shape[0]
    lengths = np.hypot(*(np.roll(markers, -1, axis=0) - markers).T)
    if lengths.min() == 0.0:
        raise GeometryBreakdown(np.nan, "duplicate adjacent markers during stage evaluation")
    ratio = lengths.max() / lengths.min()
    if ratio <= geometry.SPACING_RATIO_BOUND:
        dz = geometry._fft_derivative(markers)
    else:
        du = _TWO_PI / n
        dz = (np.roll(markers, -1, axis=0) - np.roll(markers, 1, axis=0)) / (2.0 * du)
    # unnormalized normal absorbs |dz/du|: n * qw = (dz_y, -dz_x) * 2*pi/N
    wnx = dz[:, 1] * (_TWO_PI / n)
    wny = -dz[:, 0] * (_TWO_PI / n)

    x = np.ascontiguousarray(markers[:, 0])
    y = np.ascontiguousarray(markers[:, 1])
    (m00, m01), (m10, m11) = k.matrix
    pref = k.scale / _TWO_PI
    if _pairwise_velocity is not None:
        return _pairwise_velocity(x, y, wnx, wny, m00, m01, m10, m11, pref)
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    r2 = dx * dx + dy * dy
    np.fill_diagonal(r2, 1.0)
    s = dx * wnx[None, :] + dy * wny[None, :]
    factor = (pref * s) / r2
    np.fill_diagonal(factor, 0.0)
    vx = -((m00 * dx + m01 * dy) * factor).sum(axis=1)
    vy = -((m10 * dx + m11 * dy) * factor).sum(axis=1)
    return np.column_stack([vx, vy])


if njit is not None:

    @njit(cache=True)
    def _pairwise_velocity(x, y, wnx, wny, m00, m01, m10, m11, pref):
        # single-threaded, fixed summation order: bit-reproducible per run
        n = x.shape[0]
        out = np.empty((n, 2))
        for i in range(n):
            xi = x[i]
            yi = y[i]
            sx = 0.0
            sy = 0.0
            for j in range(n):
                dx = xi - x[j]
                dy = yi - y[j]
                r2 = dx * dx + dy * dy
                if r2 > 0.0:
                    f = (dx * wnx[j] + dy * wny[j]) / r2
                    sx += (m00 * dx + m01 * dy) * f
                    sy += (m10 * dx + m11 * dy) * f
            out[i, 0] = -pref * sx
            out[i, 1] = -pref * sy
        return out

else:  # pragma: no cover
    _pairwise_velocity = None


def rhs(c: Contour, k: KernelSpec) -> np.ndarray:
    """Material velocity of every marker of the contour, shape (N, 2)."""
    return _self_velocity(c.markers, k)


def _advance(markers: np.ndarray, k: KernelSpec, dt: float, integrator: str) -> np.ndarray:
    if integrator == "rk4":
        k1 = _self_velocity(markers, k)
        k2 = _self_velocity(markers + 0.5 * dt * k1, k)
        k3 = _self_velocity(markers + 0.5 * dt * k2, k)
        k4 = _self_velocity(markers + dt * k3, k)
        return markers + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    k1 = _self_velocity(markers, k)
    k2 = _self_velocity(markers + dt * k1, k)
    return markers + 0.5 * dt * (k1 + k2)


def step(c: Contour, k: KernelSpec, dt: float, integrator: str = "rk4", t: float = 0.0) -> Contour:
    """One time step of the marker system; dt = 0 returns the contour unchanged.

    Raises
    ------
    GeometryBreakdown
        If the stepped contour self-intersects (carries the time t + dt).
    """
    if dt < 0.0:
        raise ConfigError("dt must be nonnegative")
    if integrator not in _INTEGRATORS:
        raise ConfigError(f"unknown integrator {integrator!r}")
    if dt == 0.0:
        return c
    try:
        out = Contour(_advance(c.markers, k, dt, integrator))
    except geometry.GeometryError as exc:
        # orientation flip or degenerate markers: the discrete curve is no
        # longer a counterclockwise closed contour
        raise GeometryBreakdown(t + dt, f"contour degenerated at t={t + dt:.6g}: {exc}") from exc
    if not geometry.is_simple(out):
        raise GeometryBreakdown(t + dt)
    return out


def evolve(c0: Contour, k: KernelSpec, cfg: SimConfig) -> Trajectory:
    """Advance the contour to cfg.t_end, recording diagnostics along the way.

    Diagnostics are recorded at t = 0, every ``diagnostics_every`` steps
    and at the final time.  On geometry breakdown the partial trajectory is
    returned with ``breakdown_time`` set.
    """
    n_steps = max(1, int(round(cfg.t_end / cfg.dt)))
    dts = np.full(n_steps, cfg.dt)
    dts[-1] = cfg.t_end - cfg.dt * (n_steps - 1)  # in [dt/2, 3dt/2), lands exactly on t_end

    traj = Trajectory()
    c = c0
    t = 0.0
    traj.frames.append(TrajectoryFrame(t, c, analysis.diagnostics(c, t, k)))
    for i, dt_i in enumerate(dts, start=1):
        try:
            c = step(c, k, float(dt_i), cfg.integrator, t=t)
        except GeometryBreakdown as exc:
            traj.breakdown_time = exc.time if np.isfinite(exc.time) else t
            return traj
        except geometry.GeometryError:
            traj.breakdown_time = t
            return traj
        t += float(dt_i)
        if cfg.resample_every and i % cfg.resample_every == 0 and i < len(dts):
            if geometry.spacing_ratio(c) > cfg.resample_trigger:
                try:
                    c = geometry.resample(c, cfg.n_markers)
                except geometry.GeometryError:
                    traj.breakdown_time = t
                    return traj
        if i % cfg.diagnostics_every == 0 or i == len(dts):
            traj.frames.append(TrajectoryFrame(t, c, analysis.diagnostics(c, t, k)))
    return traj
