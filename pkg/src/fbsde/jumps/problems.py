"""
Registry of the benchmark problems with closed-form solutions.

Both problems use uniform jump sizes on [-delta, delta] with intensity
2 * delta, jump coefficient c(t, x, e) = e and eta = 1, so that
Gamma = int [u(t, x + e) - u(t, x)] de.
"""

from collections.abc import Callable

import numpy as np

from fbsde.jumps.errors import ProblemNotFoundError, UnsupportedError
from fbsde.jumps.models import (
    ExactSolution,
    FBSDEProblem,
    FiniteActivityLevyMeasure,
    SolutionLayer,
    SpatialMesh,
)


def _identity_jump(t, x, e):
    return e


def example1(delta: float = 1.0, horizon: float = 1.0) -> FBSDEProblem:
    """
    Brownian motion plus compensated uniform jumps with a nonlinear generator.

    u(t, x) = sin(x + t) + 2.
    """

    def drift(t, x):
        return np.zeros_like(x)

    def diffusion(t, x):
        return np.ones_like(x)

    def generator(t, x, y, z, gamma):
        s = np.sin(x + t) + 2.0
        return (y - 2.0) * np.exp(y) / (2.0 * np.exp(s)) - z * y / s - gamma

    def terminal(x):
        return np.sin(x + horizon) + 2.0

    def terminal_gradient(x):
        return np.cos(x + horizon)

    exact = ExactSolution(
        y=lambda t, x: np.sin(x + t) + 2.0,
        z=lambda t, x: np.cos(x + t),
        gamma=lambda t, x: (
            np.cos(x + t - delta) - np.cos(x + t + delta) - 2.0 * delta * np.sin(x + t)
        ),
    )
    return FBSDEProblem(
        name="example1",
        drift=drift,
        diffusion=diffusion,
        jump=_identity_jump,
        generator=generator,
        terminal=terminal,
        terminal_gradient=terminal_gradient,
        measure=FiniteActivityLevyMeasure.uniform(delta),
        horizon=horizon,
        exact=exact,
        description="dX = dW + jumps; u = sin(x + t) + 2",
    )


def example2(delta: float = 1.0, horizon: float = 1.0) -> FBSDEProblem:
    """
    State-dependent drift and diffusion, so the Euler map limits the rate to one.

    u(t, x) = (sin t + 2) exp(-x). The generator carries the source term
    -cos(t) exp(-x) so that u solves the associated PIDE.
    """

    def drift(t, x):
        return np.sin(2.0 * x + t)

    def diffusion(t, x):
        return np.cos(x) + t + 2.0

    def generator(t, x, y, z, gamma):
        sigma = np.cos(x) + t + 2.0
        scale = (np.sin(t) + 2.0) * np.exp(-x)
        return (
            -np.sin(2.0 * x + t) * y * z / (sigma * scale)
            - 0.5 * sigma**2 * y
            - gamma
            - np.cos(t) * np.exp(-x)
        )

    def terminal(x):
        return (np.sin(horizon) + 2.0) * np.exp(-x)

    def terminal_gradient(x):
        return -(np.sin(horizon) + 2.0) * np.exp(-x)

    exact = ExactSolution(
        y=lambda t, x: (np.sin(t) + 2.0) * np.exp(-x),
        z=lambda t, x: -(np.cos(x) + t + 2.0) * (np.sin(t) + 2.0) * np.exp(-x),
        gamma=lambda t, x: (np.sin(t) + 2.0)
        * (np.exp(-x + delta) - np.exp(-x - delta) - 2.0 * delta * np.exp(-x)),
    )
    return FBSDEProblem(
        name="example2",
        drift=drift,
        diffusion=diffusion,
        jump=_identity_jump,
        generator=generator,
        terminal=terminal,
        terminal_gradient=terminal_gradient,
        measure=FiniteActivityLevyMeasure.uniform(delta),
        horizon=horizon,
        exact=exact,
        description="dX = sin(2x + t) dt + (cos x + t + 2) dW + jumps; u = (sin t + 2) exp(-x)",
    )


REGISTRY: dict[str, Callable[..., FBSDEProblem]] = {
    "example1": example1,
    "example2": example2,
}


def problem_names() -> list[str]:
    return sorted(REGISTRY)


def registry_get(name: str, delta: float = 1.0, horizon: float = 1.0) -> FBSDEProblem:
    """
    Build a registered problem.

    Parameters
    ----------
    name : str
        Registry identifier, one of ``problem_names()``.
    delta : float, optional
        Half-width of the jump-size support, by default 1.
    horizon : float, optional
        Terminal time T, by default 1.

    Returns
    -------
    FBSDEProblem
        Problem with its exact solution attached.
    """
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ProblemNotFoundError(
            f"Unknown problem {name!r}, expected one of {', '.join(problem_names())}"
        )
    return factory(delta=delta, horizon=horizon)


def exact_layer(
    problem: FBSDEProblem, mesh: SpatialMesh, t: float, level: int = 0
) -> SolutionLayer:
    """Exact (Y, Z, Gamma) at the mesh points at time t."""
    if problem.exact is None:
        raise UnsupportedError(f"Problem {problem.name!r} has no exact solution")
    y, z, gamma = problem.exact.fields(t, mesh.points)
    return SolutionLayer(level=level, y=y, z=z, gamma=gamma)
