"""
Backward time-marching solver for decoupled FBSDEs with jumps.

At every grid point x_i and level n the step computes

    Z_i   = (2/dt) (E_My[Y^ dW~]   + dt E_Mf[f^ dW~])
    G_i   = (2/dt) (E_My[Y^ dmu*]  + dt E_Mf[f^ dmu*])
    Y_i   = E_My[Y^] + (dt/2) f(t_n, x_i, Y_i, Z_i, G_i) + (dt/2) E_Mf[f^]

where Y^ and f^ are evaluated at the quadrature atoms through piecewise
Lagrange interpolants of level n + 1. Z and Gamma are explicit; Y is solved by
Picard iteration. Grid points are independent within a step, so the mesh is
split into fixed chunks that a thread pool processes.

By default the kept jump branches are scaled to unit mass and the dmu* sums
run over Y^ - Y^(x_i) and f^ - f^(x_i). Without this the truncated mixture
leaves a -lambda eta_mean P_M Y^ bias in Gamma that does not vanish with dt.
"""

import logging
import math
import time
from collections.abc import Callable, Iterable
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from fbsde.jumps import settings
from fbsde.jumps.errors import (
    ConfigurationError,
    EvaluationError,
    PicardConvergenceError,
    StepError,
    UnsupportedError,
)
from fbsde.jumps.forward import EULER, ForwardMap
from fbsde.jumps.interp import ExtrapolationPolicy, PiecewiseLagrangeInterpolant
from fbsde.jumps.models import FBSDEProblem, SolutionLayer, SpatialMesh, TimePartition
from fbsde.jumps.quadrature import build_atom_grid

logger = logging.getLogger("fbsde")

INTEREST_SAMPLES = 201


class SolverConfig(BaseModel):
    """Numerical parameters of the fully discrete scheme"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    m_y: int = Field(2, ge=0, description="Jump branches kept in the Y expectations")
    m_f: int = Field(1, ge=0, description="Jump branches kept in the generator expectations")
    n_gh: int = Field(8, ge=1, le=64)
    n_gl: int = Field(8, ge=1, le=64)
    degree: int = Field(3, ge=1, le=3)
    picard_tol: float = Field(1e-12, gt=0)
    picard_max_iters: int = Field(50, ge=1)
    boundary: ExtrapolationPolicy = ExtrapolationPolicy.EXTRAPOLATE
    renormalise: bool = Field(
        True,
        description="Scale the kept jump branches to unit mass and centre the jump-weighted sums",
    )
    padding: float | None = Field(None, ge=0)
    workers: int = Field(default_factory=settings.default_workers, ge=1)
    chunk_size: int = Field(default_factory=settings.default_chunk_size, ge=1)

    @model_validator(mode="after")
    def _truncations_ordered(self):
        if self.m_f > self.m_y:
            raise ValueError(f"m_f={self.m_f} must not exceed m_y={self.m_y}")
        return self


class SolveDiagnostics(BaseModel):
    steps: int
    mesh_points: int
    atoms_per_point_y: int
    atoms_per_point_f: int
    max_picard_iterations: int
    wall_time_s: float


@dataclass(frozen=True)
class SolveResult:
    layer: SolutionLayer
    diagnostics: SolveDiagnostics


def default_padding(
    problem: FBSDEProblem,
    config: SolverConfig,
    interest: tuple[float, float] = (0.0, 1.0),
    partition: TimePartition | None = None,
) -> float:
    """
    Width added on both sides of the interval of interest.

    T sup|b| + 6 sup|sigma| sqrt(T) + M_y max|c| ceil(lambda T + 3 sqrt(lambda T)),
    with the sups taken over the time nodes and a sample of the interval of
    interest, and max|c| over the jump-size rule nodes.
    """
    horizon = problem.horizon
    times = partition.nodes if partition is not None else np.linspace(0.0, horizon, 33)
    xs = np.linspace(interest[0], interest[1], INTEREST_SAMPLES)
    jump_nodes, _ = problem.measure.jump_rule(config.n_gl)
    sup_b = max(float(np.max(np.abs(problem.drift_at(t, xs)))) for t in times)
    sup_sigma = max(float(np.max(np.abs(problem.diffusion_at(t, xs)))) for t in times)
    max_c = max(
        float(np.max(np.abs(problem.jump_at(t, xs[:, None], jump_nodes[None, :]))))
        for t in times
    )
    expected_jumps = problem.measure.intensity * horizon
    return (
        horizon * sup_b
        + 6.0 * sup_sigma * math.sqrt(horizon)
        + config.m_y * max_c * math.ceil(expected_jumps + 3.0 * math.sqrt(expected_jumps))
    )


def terminal_layer(
    problem: FBSDEProblem, mesh: SpatialMesh, *, level: int = 0, n_gl: int = 8
) -> SolutionLayer:
    """
    Terminal (Y, Z, Gamma) from the terminal function phi.

    Z = sigma(T, x) phi'(x) with the supplied gradient, or a central difference
    with step dx when none is given. Gamma = int [phi(x + c) - phi(x)] eta lambda(de)
    by the n_gl-point jump-size rule.
    """
    x = mesh.points
    horizon = problem.horizon
    y = problem.terminal_at(x)
    if problem.terminal_gradient is not None:
        gradient = np.broadcast_to(
            np.asarray(problem.terminal_gradient(x), dtype=float), x.shape
        )
    else:
        dx = mesh.dx
        gradient = (problem.terminal_at(x + dx) - problem.terminal_at(x - dx)) / (2.0 * dx)
    z = problem.diffusion_at(horizon, x) * gradient

    measure = problem.measure
    nodes, weights = measure.jump_rule(n_gl)
    shifted = problem.terminal_at(x[:, None] + problem.jump_at(horizon, x[:, None], nodes[None, :]))
    increments = weights * measure.eta_at(nodes) * (shifted - y[:, None])
    gamma = measure.intensity * np.sum(increments, axis=1)
    return SolutionLayer(level=level, y=y, z=z, gamma=gamma)


def picard_solve_y(
    rhs_fixed: float | np.ndarray,
    f_partial: Callable[[np.ndarray], np.ndarray],
    dt: float,
    tol: float,
    max_iters: int,
    initial: float | np.ndarray | None = None,
) -> tuple[float | np.ndarray, int]:
    """
    Solve y = rhs_fixed + (dt/2) f_partial(y) by fixed-point iteration.

    Works element-wise on arrays: an element stops updating once its own
    increment is <= tol * max(1, |y|), so its result never depends on the
    other elements.

    Parameters
    ----------
    rhs_fixed : float or np.ndarray
        The part of the right-hand side that does not depend on y.
    f_partial : Callable
        Generator as a vectorised function of y alone.
    dt : float
        Step size.
    tol : float
        Increment tolerance, relative to |y| where |y| > 1.
    max_iters : int
        Iteration limit.
    initial : float or np.ndarray, optional
        Initial guess, by default rhs_fixed.

    Returns
    -------
    tuple
        Fixed point (same shape as rhs_fixed) and the number of iterations
        used by the slowest element.
    """
    rhs = np.asarray(rhs_fixed, dtype=float)
    y = np.array(rhs if initial is None else np.broadcast_to(initial, rhs.shape), dtype=float)
    active = np.ones(rhs.shape, dtype=bool)
    residual = np.full(rhs.shape, np.inf)
    for iteration in range(1, max_iters + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            update = rhs + 0.5 * dt * np.asarray(f_partial(y), dtype=float)
            step = np.abs(update - y)
        y = np.where(active, update, y)
        residual = np.where(active, step, residual)
        active &= ~(step <= tol * np.maximum(1.0, np.abs(update)))
        if not active.any():
            return (float(y) if y.ndim == 0 else y), iteration

    worst = np.where(np.isfinite(residual), residual, np.inf)
    index = int(np.argmax(np.where(active, worst, -1.0))) if rhs.ndim else None
    raise PicardConvergenceError(max_iters, float(np.max(worst[active])), index)


@dataclass(frozen=True)
class _StepContext:
    problem: FBSDEProblem
    mesh: SpatialMesh
    config: SolverConfig
    forward: ForwardMap
    next_layer: SolutionLayer
    y_hat: PiecewiseLagrangeInterpolant
    fields_hat: PiecewiseLagrangeInterpolant
    t_n: float
    dt: float
    level: int


def _interpolants(
    problem: FBSDEProblem,
    mesh: SpatialMesh,
    config: SolverConfig,
    next_layer: SolutionLayer,
    t_next: float,
) -> tuple[PiecewiseLagrangeInterpolant, PiecewiseLagrangeInterpolant]:
    y_extension = fields_extension = None
    if config.boundary is ExtrapolationPolicy.ANALYTIC:
        if problem.exact is None:
            raise UnsupportedError(
                f"Analytic boundary needs an exact solution, problem {problem.name!r} has none"
            )
        exact = problem.exact

        def y_extension(x):
            return exact.y(t_next, x)

        def fields_extension(x):
            return exact.fields(t_next, x)

    y_hat = PiecewiseLagrangeInterpolant(
        mesh, next_layer.y, config.degree, config.boundary, y_extension
    )
    fields_hat = PiecewiseLagrangeInterpolant(
        mesh, next_layer.stacked(), config.degree, config.boundary, fields_extension
    )
    return y_hat, fields_hat


def _step_chunk(ctx: _StepContext, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    problem, config, dt = ctx.problem, ctx.config, ctx.dt
    x = ctx.mesh.points[indices]
    eta_mean = problem.measure.eta_mean
    t_next = ctx.t_n + dt
    options = {"forward": ctx.forward, "renormalise": config.renormalise}
    failed = 0
    try:
        grid_y = build_atom_grid(
            problem, ctx.t_n, dt, x, config.m_y, config.n_gh, config.n_gl, **options
        )
        y_values = ctx.y_hat(grid_y.locations)

        grid_f = build_atom_grid(
            problem, ctx.t_n, dt, x, config.m_f, config.n_gh, config.n_gl, **options
        )
        y_f, z_f, gamma_f = ctx.fields_hat(grid_f.locations)
        f_values = problem.generator_at(t_next, grid_f.locations, y_f, z_f, gamma_f)
        bad = np.argwhere(~np.isfinite(f_values))
        if bad.size:
            failed, r, g = (int(i) for i in bad[0])
            raise EvaluationError("Non-finite generator value", grid_f.describe_atom(failed, r, g))

        centre_y = centre_f = None
        if config.renormalise:
            layer = ctx.next_layer
            centre_y = layer.y[indices]
            centre_f = problem.generator_at(
                t_next, x, centre_y, layer.z[indices], layer.gamma[indices]
            )
            bad = np.flatnonzero(~np.isfinite(centre_f))
            if bad.size:
                failed = int(bad[0])
                raise EvaluationError("Non-finite generator value", f"mesh point x={x[failed]:.6g}")
    except EvaluationError as error:
        raise StepError(ctx.level, int(indices[failed]), None, str(error)) from error

    e_y = grid_y.integrate(y_values)
    w_y = grid_y.integrate_brownian(y_values)
    j_y = grid_y.integrate_jump(y_values, eta_mean, centre_y)
    e_f = grid_f.integrate(f_values)
    w_f = grid_f.integrate_brownian(f_values)
    j_f = grid_f.integrate_jump(f_values, eta_mean, centre_f)

    z = (2.0 / dt) * (w_y + dt * w_f)
    gamma = (2.0 / dt) * (j_y + dt * j_f)
    rhs = e_y + 0.5 * dt * e_f

    def f_partial(y):
        return problem.generator_at(ctx.t_n, x, y, z, gamma)

    try:
        y, iterations = picard_solve_y(
            rhs, f_partial, dt, config.picard_tol, config.picard_max_iters, initial=e_y
        )
    except PicardConvergenceError as error:
        index = int(indices[error.index or 0])
        raise StepError(ctx.level, index, error.residual, str(error)) from error
    return y, z, gamma, iterations


def _chunks(size: int, chunk_size: int) -> list[np.ndarray]:
    return [np.arange(start, min(start + chunk_size, size)) for start in range(0, size, chunk_size)]


def _march_step(
    problem: FBSDEProblem,
    mesh: SpatialMesh,
    config: SolverConfig,
    next_layer: SolutionLayer,
    t_n: float,
    dt: float,
    level: int,
    executor: Executor | None,
    forward: ForwardMap,
) -> tuple[SolutionLayer, int]:
    next_layer.check_mesh(mesh)
    y_hat, fields_hat = _interpolants(problem, mesh, config, next_layer, t_n + dt)
    ctx = _StepContext(problem, mesh, config, forward, next_layer, y_hat, fields_hat, t_n, dt, level)
    chunks = _chunks(mesh.size, config.chunk_size)

    results: Iterable
    if executor is None:
        results = map(lambda indices: _step_chunk(ctx, indices), chunks)
    else:
        results = executor.map(lambda indices: _step_chunk(ctx, indices), chunks)

    y, z, gamma = (np.empty(mesh.size) for _ in range(3))
    max_iterations = 0
    for indices, (y_c, z_c, gamma_c, iterations) in zip(chunks, results):
        y[indices], z[indices], gamma[indices] = y_c, z_c, gamma_c
        max_iterations = max(max_iterations, iterations)
    return SolutionLayer(level=level, y=y, z=z, gamma=gamma), max_iterations


def backward_step(
    problem: FBSDEProblem,
    mesh: SpatialMesh,
    config: SolverConfig,
    next_layer: SolutionLayer,
    t_n: float,
    dt: float,
    *,
    executor: Executor | None = None,
    forward: ForwardMap = EULER,
) -> SolutionLayer:
    """
    One step from level n + 1 (``next_layer``) to level n at time t_n.

    Parameters
    ----------
    problem : FBSDEProblem
        Problem coefficients.
    mesh : SpatialMesh
        Mesh shared by both layers.
    config : SolverConfig
        Truncations, rule sizes, interpolation degree and Picard settings.
    next_layer : SolutionLayer
        Layer at t_n + dt.
    t_n : float
        Time of the new layer.
    dt : float
        Step size.
    executor : Executor, optional
        Pool used for the mesh chunks; the step runs inline when omitted.
    forward : ForwardMap, optional
        One-step map placing the quadrature atoms, by default the Euler step.

    Returns
    -------
    SolutionLayer
        Layer at level ``next_layer.level - 1``.
    """
    layer, _ = _march_step(
        problem, mesh, config, next_layer, t_n, dt, next_layer.level - 1, executor, forward
    )
    return layer


def solve(
    problem: FBSDEProblem,
    mesh: SpatialMesh,
    partition: TimePartition,
    config: SolverConfig,
    *,
    forward: ForwardMap = EULER,
) -> SolveResult:
    """
    March from the terminal layer at t_N = T down to level 0.

    Returns
    -------
    SolveResult
        Level-0 layer, whose Y approximates u(0, x) at the mesh points, and
        run diagnostics.
    """
    if not math.isclose(problem.horizon, partition.terminal_time, rel_tol=1e-12):
        raise ConfigurationError(
            f"Partition ends at {partition.terminal_time} but the problem horizon is {problem.horizon}"
        )
    started = time.perf_counter()
    nodes, dt = partition.nodes, partition.dt
    layer = terminal_layer(problem, mesh, level=partition.num_steps, n_gl=config.n_gl)
    atoms_y = config.n_gh * sum(config.n_gl**m for m in range(config.m_y + 1))
    atoms_f = config.n_gh * sum(config.n_gl**m for m in range(config.m_f + 1))
    logger.info(
        "Solving %s: %d steps of %.6g, %d mesh points on [%.6g, %.6g], %d + %d atoms per point",
        problem.name,
        partition.num_steps,
        dt,
        mesh.size,
        *mesh.extent,
        atoms_y,
        atoms_f,
    )

    max_iterations = 0
    executor = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for n in range(partition.num_steps - 1, -1, -1):
            layer, iterations = _march_step(
                problem, mesh, config, layer, float(nodes[n]), dt, n, executor, forward
            )
            max_iterations = max(max_iterations, iterations)
            logger.debug("Level %d done, %d Picard iterations", n, iterations)
    finally:
        if executor is not None:
            executor.shutdown()

    wall_time = time.perf_counter() - started
    logger.info("Solved %s in %.2f s", problem.name, wall_time)
    diagnostics = SolveDiagnostics(
        steps=partition.num_steps,
        mesh_points=mesh.size,
        atoms_per_point_y=atoms_y,
        atoms_per_point_f=atoms_f,
        max_picard_iterations=max_iterations,
        wall_time_s=wall_time,
    )
    return SolveResult(layer=layer, diagnostics=diagnostics)
