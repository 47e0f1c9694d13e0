"""Admissible convolution kernels: odd, homogeneous of degree -1, smooth off 0.

Every built-in variant has the closed form ``k(z) = scale * M z / (2 pi |z|^2)``
for a 2x2 matrix M, i.e. k = scale * M(grad N) with N the planar Newtonian
potential.  Variants:

- ``cauchy``:       1/(pi z) as a complex map, M = diag(2, -2)
- ``euler``:        perpendicular gradient (vorticity velocity), M = rot(90)
- ``aggregation``:  -grad N, M = -I
- ``linear-map``:   user-supplied M = L

Differentiating such a kernel in the distributional sense produces a
pointwise even degree -2 part plus a Dirac mass at the origin whose vector
coefficients c_j = integral over the unit circle of k(xi) xi_j are the
"delta constants"; their trace is the jump of div v across the patch
boundary (0 for divergence-free kernels).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularEvaluation

__all__ = [
    "KernelSpec",
    "DeltaConstants",
    "cauchy",
    "euler_vorticity",
    "aggregation_newtonian",
    "linear_map",
    "kernel_from_name",
    "eval_kernel",
    "grad_kernel",
    "delta_constants",
]

_TWO_PI = 2.0 * np.pi

_VARIANT_MATRICES = {
    "cauchy": np.array([[2.0, 0.0], [0.0, -2.0]]),
    "euler": np.array([[0.0, -1.0], [1.0, 0.0]]),
    "aggregation": np.array([[-1.0, 0.0], [0.0, -1.0]]),
}


@dataclass(frozen=True)
class KernelSpec:
    """An odd degree -1 kernel ``k(z) = scale * M z / (2 pi |z|^2)``."""

    variant: str
    matrix: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2) or not np.all(np.isfinite(m)):
            raise ConfigError("kernel matrix must be a finite 2x2 array")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __call__(self, x):
        return eval_kernel(self, x)


@dataclass(frozen=True)
class DeltaConstants:
    """Dirac-mass coefficients c_j = oint_{|xi|=1} k(xi) xi_j dsigma(xi)."""

    c1: np.ndarray
    c2: np.ndarray

    @property
    def trace(self) -> float:
        """c1[0] + c2[1]: total strength of the divergence delta part."""
        return float(self.c1[0] + self.c2[1])


def cauchy(scale: float = 1.0) -> KernelSpec:
    """The Cauchy kernel 1/(pi z), i.e. (x, -y)/(pi |z|^2)."""
    return KernelSpec("cauchy", _VARIANT_MATRICES["cauchy"], scale)


def euler_vorticity(scale: float = 1.0) -> KernelSpec:
    """The planar vorticity kernel (-y, x)/(2 pi |z|^2) (divergence free)."""
    return KernelSpec("euler", _VARIANT_MATRICES["euler"], scale)


def aggregation_newtonian(scale: float = 1.0) -> KernelSpec:
    """The attractive Newtonian kernel -(x, y)/(2 pi |z|^2)."""
    return KernelSpec("aggregation", _VARIANT_MATRICES["aggregation"], scale)


def linear_map(matrix, scale: float = 1.0) -> KernelSpec:
    """Kernel L(grad N) for a user 2x2 matrix L."""
    return KernelSpec("linear-map", np.asarray(matrix, dtype=float), scale)


def kernel_from_name(name: str, matrix=None, scale: float = 1.0) -> KernelSpec:
    """Resolve a config kernel name; 'linear-map' requires the L matrix."""
    if name in _VARIANT_MATRICES:
        return KernelSpec(name, _VARIANT_MATRICES[name], scale)
    if name == "linear-map":
        if matrix is None:
            raise ConfigError("kernel 'linear-map' requires the field 'L' (2x2 matrix)")
        return linear_map(matrix, scale)
    valid = sorted(_VARIANT_MATRICES) + ["linear-map"]
    raise ConfigError(f"unknown kernel {name!r}; valid kernels: {', '.join(valid)}")


def eval_kernel(k: KernelSpec, x) -> np.ndarray:
    """Kernel value at x (any array of shape (..., 2)).

    Raises
    ------
    SingularEvaluation
        If any evaluation point is the origin.
    """
    x = np.asarray(x, dtype=float)
    r2 = np.einsum("...i,...i->...", x, x)
    if np.any(r2 == 0.0):
        raise SingularEvaluation("kernel evaluated at the origin")
    mx = x @ k.matrix.T
    return k.scale * mx / (_TWO_PI * r2[..., None])


def grad_kernel(k: KernelSpec, x) -> np.ndarray:
    """Pointwise gradient: entry [..., i, l] is (d_l k_i)(x).

    Closed form (M_{il} |z|^2 - 2 (M z)_i z_l) / (2 pi |z|^4): even and
    homogeneous of degree -2 off the origin.
    """
    x = np.asarray(x, dtype=float)
    r2 = np.einsum("...i,...i->...", x, x)
    if np.any(r2 == 0.0):
        raise SingularEvaluation("kernel gradient evaluated at the origin")
    mx = x @ k.matrix.T
    outer = mx[..., :, None] * x[..., None, :]
    g = k.matrix * r2[..., None, None] - 2.0 * outer
    return k.scale * g / (_TWO_PI * (r2 ** 2)[..., None, None])


def delta_constants(k: KernelSpec, n_quad: int = 4096) -> DeltaConstants:
    """Delta constants by trapezoidal quadrature over the unit circle.

    The integrands are degree-2 trigonometric polynomials, so the
    4096-point trapezoid is exact to roundoff.  Analytically the column-j
    constant equals scale * M e_j / 2.
    """
    phi = _TWO_PI * np.arange(n_quad) / n_quad
    xi = np.column_stack([np.cos(phi), np.sin(phi)])
    kv = eval_kernel(k, xi)
    w = _TWO_PI / n_quad
    c1 = (kv * xi[:, :1]).sum(axis=0) * w
    c2 = (kv * xi[:, 1:]).sum(axis=0) * w
    return DeltaConstants(c1=c1, c2=c2)
