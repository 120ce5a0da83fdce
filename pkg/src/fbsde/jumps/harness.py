import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd

from fbsde.jumps.errors import ConfigurationError, FBSDEError, UsageError
from fbsde.jumps.models import FBSDEProblem, SolutionLayer, SpatialMesh, TimePartition
from fbsde.jumps.problems import exact_layer, registry_get
from fbsde.jumps.schemas import (
    ConvergenceReport,
    ErrorNorms,
    Rates,
    RunRecord,
    RunSettings,
    SolveReport,
)
from fbsde.jumps.solver import SolveResult, default_padding, solve

logger = logging.getLogger("fbsde")

Axis = Literal["dt", "dx"]
FIELDS = ("y", "z", "gamma")
CSV_COLUMNS = ["step", "e_y", "e_z", "e_gamma", "cr_y", "cr_z", "cr_gamma"]


@dataclass(frozen=True)
class Preset:
    """Pinned configuration of one published error table"""

    problem: str
    axis: Axis
    values: tuple[float, ...]
    num_steps: int
    dx: float
    degree: int
    m_y: int
    m_f: int
    caption: str

    def settings(self, **solver_overrides) -> RunSettings:
        solver = {"degree": self.degree, "m_y": self.m_y, "m_f": self.m_f}
        solver.update({k: v for k, v in solver_overrides.items() if v is not None})
        return RunSettings(
            problem=self.problem,
            num_steps=self.num_steps,
            dx=self.dx,
            solver=solver,
        )


PRESETS = {
    "table1": Preset(
        problem="example1",
        axis="dt",
        values=tuple(2.0**-k for k in range(4, 9)),
        num_steps=16,
        dx=0.01,
        degree=3,
        m_y=2,
        m_f=1,
        caption="example1, errors against dt; dx = 0.01, cubic interpolation",
    ),
    "table2": Preset(
        problem="example1",
        axis="dx",
        values=tuple(2.0**-k for k in range(2, 7)),
        num_steps=1024,
        dx=0.25,
        degree=2,
        m_y=3,
        m_f=2,
        caption="example1, errors against dx; N = 1024, quadratic interpolation",
    ),
    "table2-linear": Preset(
        problem="example1",
        axis="dx",
        values=tuple(2.0**-k for k in range(4, 9)),
        num_steps=256,
        dx=2.0**-4,
        degree=1,
        m_y=2,
        m_f=1,
        caption="example1, errors against dx; N = 256 so that dx <= sigma sqrt(dt), linear interpolation",
    ),
    "table3": Preset(
        problem="example2",
        axis="dt",
        values=tuple(2.0**-k for k in range(5, 10)),
        num_steps=32,
        dx=0.01,
        degree=3,
        m_y=2,
        m_f=1,
        caption="example2, errors against dt; dx = 0.01, cubic interpolation",
    ),
    "table4": Preset(
        problem="example2",
        axis="dx",
        values=tuple(2.0**-k for k in range(5, 10)),
        num_steps=1024,
        dx=2.0**-5,
        degree=1,
        m_y=2,
        m_f=1,
        caption="example2, errors against dx; N = 1024, linear interpolation",
    ),
}


def build_run(settings: RunSettings) -> tuple[FBSDEProblem, SpatialMesh, TimePartition]:
    """
    Build the problem, padded mesh and time partition described by a settings object.

    Parameters
    ----------
    settings : RunSettings
        Problem name, delta, horizon, N, dx, interest interval and solver config.

    Returns
    -------
    tuple
        The problem, the mesh over [a - P, b + P] and the uniform partition.
    """
    problem = registry_get(settings.problem, delta=settings.delta, horizon=settings.horizon)
    partition = TimePartition(settings.horizon, settings.num_steps)
    config = settings.solver
    padding = config.padding
    if padding is None:
        padding = default_padding(problem, config, settings.interest, partition)
    mesh = SpatialMesh.uniform(settings.dx, settings.interest, padding)
    return problem, mesh, partition


def solve_run(settings: RunSettings) -> tuple[SolveResult, FBSDEProblem, SpatialMesh]:
    problem, mesh, partition = build_run(settings)
    return solve(problem, mesh, partition, settings.solver), problem, mesh


def error_linf(
    layer: SolutionLayer,
    exact: SolutionLayer,
    mesh: SpatialMesh,
    interval: tuple[float, float] | None = None,
) -> tuple[float, float, float]:
    """
    Component-wise maximum absolute error over the mesh points inside an interval.

    Parameters
    ----------
    layer : SolutionLayer
        Computed layer.
    exact : SolutionLayer
        Reference layer on the same mesh.
    mesh : SpatialMesh
        Mesh shared by both layers.
    interval : tuple[float, float], optional
        Closed interval [a, b], by default the mesh's interval of interest.

    Returns
    -------
    tuple[float, float, float]
        (e_y, e_z, e_gamma).
    """
    if layer.size != mesh.size or exact.size != mesh.size:
        raise UsageError(
            f"Layers of sizes {layer.size} and {exact.size} do not share a mesh of {mesh.size} points"
        )
    if interval is None:
        mask = mesh.interest_mask()
    else:
        a, b = interval
        tol = 1e-9 * mesh.dx
        mask = (mesh.points >= a - tol) & (mesh.points <= b + tol)
    if not mask.any():
        raise UsageError(f"No mesh point lies inside {interval}")
    return tuple(
        float(np.max(np.abs(getattr(layer, name)[mask] - getattr(exact, name)[mask])))
        for name in FIELDS
    )


def fit_rate(step_sizes: Sequence[float], errors: Sequence[float]) -> float:
    """
    Least-squares slope of log2(error) against log2(step size).

    Parameters
    ----------
    step_sizes : Sequence[float]
        Positive step sizes, at least two distinct.
    errors : Sequence[float]
        Positive errors, one per step size.

    Returns
    -------
    float
        The fitted convergence rate.
    """
    steps = np.asarray(step_sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if steps.ndim != 1 or steps.shape != errors.shape:
        raise UsageError("Step sizes and errors must be 1-D sequences of equal length")
    if steps.size < 2:
        raise UsageError(f"A rate needs at least two points, got {steps.size}")
    if not (np.all(steps > 0) and np.all(errors > 0)):
        raise UsageError("Step sizes and errors must be positive")
    if np.unique(steps).size < 2:
        raise UsageError("A rate needs at least two distinct step sizes")
    slope, _ = np.polyfit(np.log2(steps), np.log2(errors), 1)
    return float(slope)


def pairwise_rates(step_sizes: Sequence[float], errors: Sequence[float]) -> list[float | None]:
    """Rate between each record and the one before it; None for the first or a failed pair."""
    rates = [None]
    for (h0, e0), (h1, e1) in zip(zip(step_sizes, errors), zip(step_sizes[1:], errors[1:])):
        if None in (e0, e1) or not (e0 > 0 and e1 > 0 and h0 > 0 and h1 > 0) or h0 == h1:
            rates.append(None)
        else:
            rates.append(math.log2(e0 / e1) / math.log2(h0 / h1))
    return rates


def _run_record(step: float, settings: RunSettings) -> RunRecord:
    try:
        result, problem, mesh = solve_run(settings)
        exact = exact_layer(problem, mesh, 0.0)
        e_y, e_z, e_gamma = error_linf(result.layer, exact, mesh)
    except FBSDEError as error:
        logger.warning("Run with step %.6g failed: %s", step, error)
        return RunRecord(
            step=step, num_steps=settings.num_steps, dx=settings.dx, error=str(error)
        )
    logger.info(
        "Step %.6g: e_y=%.3e e_z=%.3e e_gamma=%.3e in %.2f s",
        step,
        e_y,
        e_z,
        e_gamma,
        result.diagnostics.wall_time_s,
    )
    return RunRecord(
        step=step,
        num_steps=settings.num_steps,
        dx=settings.dx,
        e_y=e_y,
        e_z=e_z,
        e_gamma=e_gamma,
        wall_time_s=result.diagnostics.wall_time_s,
        diagnostics=result.diagnostics,
    )


def _fit_rates(records: list[RunRecord]) -> Rates:
    done = [record for record in records if not record.failed]
    rates = {}
    for name in FIELDS:
        try:
            rates[f"cr_{name}"] = fit_rate(
                [record.step for record in done], [getattr(record, f"e_{name}") for record in done]
            )
        except UsageError as error:
            logger.warning("No %s rate: %s", name, error)
            rates[f"cr_{name}"] = None
    return Rates(**rates)


def run_study(
    problem_name: str,
    axis: Axis,
    values: Iterable[float],
    settings: RunSettings,
    *,
    preset: str | None = None,
    on_record: Callable[[RunRecord], None] | None = None,
) -> ConvergenceReport:
    """
    Solve once per step size and fit the convergence rates.

    Parameters
    ----------
    problem_name : str
        Registry name of a problem with an exact solution.
    axis : {"dt", "dx"}
        Which step size the values set; the other one stays as in ``settings``.
    values : Iterable[float]
        Step sizes. A dt value must divide the horizon.
    settings : RunSettings
        Fixed part of the configuration.
    preset : str, optional
        Name recorded in the report.
    on_record : Callable, optional
        Called with each record once it is done.

    Returns
    -------
    ConvergenceReport
        Records sorted by decreasing step size; a failed solve is recorded
        with its error message and left out of the rate fit.
    """
    if axis not in ("dt", "dx"):
        raise UsageError(f"Study axis must be 'dt' or 'dx', got {axis!r}")
    steps = sorted({float(value) for value in values}, reverse=True)
    if not steps:
        raise UsageError("A study needs at least one step size")
    registry_get(problem_name)
    settings = settings.model_copy(update={"problem": problem_name})

    records = []
    for step in steps:
        if axis == "dt":
            try:
                partition = TimePartition.from_step(settings.horizon, step)
            except ConfigurationError as error:
                logger.warning("Skipping dt=%.6g: %s", step, error)
                record = RunRecord(step=step, num_steps=0, dx=settings.dx, error=str(error))
            else:
                run = settings.model_copy(update={"num_steps": partition.num_steps})
                record = _run_record(step, run)
        else:
            record = _run_record(step, settings.model_copy(update={"dx": step}))
        records.append(record)
        if on_record is not None:
            on_record(record)

    return ConvergenceReport(
        axis=axis,
        preset=preset,
        settings=settings,
        records=records,
        rates=_fit_rates(records),
    )


def solve_report(settings: RunSettings) -> SolveReport:
    """Solve one configuration and collect the level-0 layer on the interval of interest."""
    result, problem, mesh = solve_run(settings)
    errors = None
    if problem.exact is not None:
        exact = exact_layer(problem, mesh, 0.0)
        errors = ErrorNorms(**dict(zip(("e_y", "e_z", "e_gamma"), error_linf(result.layer, exact, mesh))))
    mask = mesh.interest_mask()
    layer = result.layer
    return SolveReport(
        settings=settings,
        diagnostics=result.diagnostics,
        errors=errors,
        x=mesh.points[mask].tolist(),
        y=layer.y[mask].tolist(),
        z=layer.z[mask].tolist(),
        gamma=layer.gamma[mask].tolist(),
    )


def report_frame(report: ConvergenceReport) -> pd.DataFrame:
    """One row per record with the pairwise rates next to the errors."""
    frame = pd.DataFrame(
        {
            "step": [record.step for record in report.records],
            **{
                f"e_{name}": [getattr(record, f"e_{name}") for record in report.records]
                for name in FIELDS
            },
        },
        dtype=float,
    )
    steps = frame["step"].tolist()
    for name in FIELDS:
        rates = pairwise_rates(steps, [getattr(record, f"e_{name}") for record in report.records])
        frame[f"cr_{name}"] = [np.nan if rate is None else rate for rate in rates]
    return frame[CSV_COLUMNS]


def layer_frame(report: SolveReport) -> pd.DataFrame:
    return pd.DataFrame({"x": report.x, "y": report.y, "z": report.z, "gamma": report.gamma})


def write_report(report: ConvergenceReport | SolveReport, path: str | Path) -> Path:
    """
    Write a report as JSON or CSV, chosen by the file suffix.

    Parameters
    ----------
    report : ConvergenceReport or SolveReport
        Report to write.
    path : str or Path
        Output file ending in .json or .csv.

    Returns
    -------
    Path
        The written file.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".json":
        path.write_text(report.model_dump_json(indent=2))
    elif suffix == ".csv":
        if isinstance(report, ConvergenceReport):
            frame = report_frame(report)
        else:
            frame = layer_frame(report)
        frame.to_csv(path, index=False)
    else:
        raise UsageError(f"Unsupported report format {path.suffix!r}, use .json or .csv")
    return path


def read_report(path: str | Path) -> ConvergenceReport:
    return ConvergenceReport.model_validate_json(Path(path).read_text())


def read_report_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
