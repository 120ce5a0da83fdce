"""
Piecewise Lagrange interpolation of grid functions on a uniform mesh.

Each evaluation point uses the p + 1 contiguous mesh nodes closest to it, with
ties broken toward lower indices. The basis is formed from the node
coordinates themselves, so a node returns its stored value exactly.
"""

from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum

import numpy as np

from fbsde.jumps.errors import ConfigurationError, InterpolationError, UnsupportedError
from fbsde.jumps.models import SpatialMesh

DEGREES = (1, 2, 3)
# relative distance below which a coordinate is treated as sitting on a node
NODE_SNAP = 1e-10


class ExtrapolationPolicy(str, Enum):
    EXTRAPOLATE = "extrapolate"
    CLAMP = "clamp"
    ANALYTIC = "analytic"


def _check_degree(mesh: SpatialMesh, p: int) -> None:
    if p not in DEGREES:
        raise ConfigurationError(f"Interpolation degree must be one of {DEGREES}, got {p}")
    if mesh.size < p + 1:
        raise ConfigurationError(f"Degree {p} needs at least {p + 1} mesh points, mesh has {mesh.size}")


def stencil_start(mesh: SpatialMesh, x: np.ndarray, p: int) -> np.ndarray:
    """First index of the closest p + 1 contiguous nodes, vectorised over x."""
    u = (np.asarray(x, dtype=float) - mesh.points[0]) / mesh.dx
    nearest = np.rint(u)
    u = np.where(np.abs(u - nearest) < NODE_SNAP, nearest, u)
    # window centre s + p/2 nearest to u, ties to the lower window
    start = np.ceil(u - 0.5 * p - 0.5)
    start = np.clip(start, 0, mesh.size - p - 1)
    return start.astype(np.intp)


def stencil(mesh: SpatialMesh, x: float, p: int) -> np.ndarray:
    """
    Mesh indices of the p + 1 contiguous nodes closest to x.

    Parameters
    ----------
    mesh : SpatialMesh
        Uniform mesh with at least p + 1 points.
    x : float
        Evaluation point, may lie outside the mesh.
    p : int
        Polynomial degree.

    Returns
    -------
    np.ndarray
        Ascending indices, clamped to the mesh.
    """
    _check_degree(mesh, p)
    start = int(stencil_start(mesh, x, p))
    return np.arange(start, start + p + 1)


def lagrange_basis(mesh: SpatialMesh, x: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Stencil indices and Lagrange basis values at x.

    Returns
    -------
    tuple[np.ndarray, np.ndarray]
        Index array and basis array, both of shape x.shape + (p + 1,).
    """
    x = np.asarray(x, dtype=float)
    indices = stencil_start(mesh, x, p)[..., None] + np.arange(p + 1)
    nodes = mesh.points[indices]
    basis = np.ones(indices.shape)
    for k in range(p + 1):
        for m in range(p + 1):
            if m != k:
                basis[..., k] *= (x - nodes[..., m]) / (nodes[..., k] - nodes[..., m])
    return indices, basis


@dataclass(frozen=True)
class PiecewiseLagrangeInterpolant:
    """
    Interpolant of one or several grid functions sharing a mesh.

    ``values`` has shape (n,) or (k, n) for k fields; evaluation returns
    x.shape or (k,) + x.shape accordingly. Outside the mesh extent [A, B] the
    policy decides: ``extrapolate`` evaluates the nearest stencil polynomial,
    ``clamp`` evaluates the interpolant at the nearest end of [A, B] and
    ``analytic`` calls ``extension``.
    """

    mesh: SpatialMesh
    values: np.ndarray
    degree: int = 3
    policy: ExtrapolationPolicy = ExtrapolationPolicy.EXTRAPOLATE
    extension: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        _check_degree(self.mesh, self.degree)
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "policy", ExtrapolationPolicy(self.policy))
        if values.ndim not in (1, 2) or values.shape[-1] != self.mesh.size:
            raise ConfigurationError(
                f"Interpolant values of shape {values.shape} do not match {self.mesh.size} mesh points"
            )
        if self.policy is ExtrapolationPolicy.ANALYTIC and self.extension is None:
            raise UnsupportedError("The analytic policy needs an extension function")

    def evaluate(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        lower, upper = self.mesh.extent
        outside = (x < lower) | (x > upper)
        if self.policy is ExtrapolationPolicy.EXTRAPOLATE:
            where = x
        else:
            where = np.clip(x, lower, upper)

        indices, basis = lagrange_basis(self.mesh, where, self.degree)
        result = np.sum(self.values[..., indices] * basis, axis=-1)

        if self.policy is ExtrapolationPolicy.ANALYTIC and outside.any():
            extended = np.broadcast_to(
                np.asarray(self.extension(x), dtype=float), result.shape
            )
            result = np.where(outside, extended, result)

        bad = ~np.isfinite(result)
        if bad.any():
            position = np.argwhere(bad)[0]
            point = x[tuple(position[-x.ndim:])] if x.ndim else x
            raise InterpolationError(
                "Non-finite interpolated value", f"x={float(point):.6g}"
            )
        return result if result.ndim else float(result)

    __call__ = evaluate
