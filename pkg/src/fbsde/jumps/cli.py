import click
import numpy as np
from pydantic import ValidationError

from fbsde.jumps import harness, oracle
from fbsde.jumps.errors import (
    ConfigurationError,
    FBSDEError,
    ProblemNotFoundError,
    UsageError,
)
from fbsde.jumps.interp import ExtrapolationPolicy, PiecewiseLagrangeInterpolant
from fbsde.jumps.log import configure_logging
from fbsde.jumps.models import SpatialMesh
from fbsde.jumps.problems import problem_names, registry_get
from fbsde.jumps.schemas import RunSettings

BOUNDARIES = [policy.value for policy in ExtrapolationPolicy]


def _fail(error: Exception):
    """Translate a library error into the matching click exception"""
    if isinstance(error, (ConfigurationError, UsageError, ProblemNotFoundError, ValidationError)):
        return click.UsageError(str(error))
    return click.ClickException(str(error))


def _parse_values(ctx, param, value):
    """Comma-separated step sizes, each a number or a power of two written 2^k"""
    if value is None:
        return None
    values = []
    for token in value.split(","):
        token = token.strip()
        try:
            if token.startswith("2^"):
                values.append(2.0 ** float(token[2:]))
            else:
                values.append(float(token))
        except ValueError:
            raise click.BadParameter(f"{token!r} is not a number or 2^k")
    return values


def _solver_options(**options) -> dict:
    return {key: value for key, value in options.items() if value is not None}


def _write(report, out: str):
    try:
        path = harness.write_report(report, out)
    except UsageError as error:
        raise click.UsageError(str(error))
    except OSError as error:
        raise click.exceptions.FileError(out, str(error))
    click.echo(f"Report written to {path}")


def _echo_errors(e_y, e_z, e_gamma):
    click.echo(f"  e_y     = {e_y:.4e}")
    click.echo(f"  e_z     = {e_z:.4e}")
    click.echo(f"  e_gamma = {e_gamma:.4e}")


@click.group()
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False), default=None, help="Level of the fbsde logger. By default, FBSDE_LOG_LEVEL or INFO.")  # fmt: skip
def cli(log_level: str):
    try:
        configure_logging(log_level)
    except ConfigurationError as error:
        raise click.UsageError(str(error))


@click.command()
@click.option("-p", "--problem", type=str, default="example1", show_default=True, help="Registry name of the problem, see list-problems.")  # fmt: skip
@click.option("--T", "horizon", type=float, default=1.0, show_default=True, help="Terminal time.")  # fmt: skip
@click.option("--N", "num_steps", type=int, default=64, show_default=True, help="Number of time steps.")  # fmt: skip
@click.option("--dx", type=float, default=0.01, show_default=True, help="Mesh spacing.")  # fmt: skip
@click.option("--delta", type=float, default=1.0, show_default=True, help="Half-width of the jump-size support.")  # fmt: skip
@click.option("--interval", type=(float, float), default=(0.0, 1.0), show_default=True, help="Interval of interest [a, b] on which errors are measured and the layer is reported.")  # fmt: skip
@click.option("--degree", type=click.IntRange(1, 3), default=3, show_default=True, help="Degree of the piecewise Lagrange interpolation.")  # fmt: skip
@click.option("--my", "m_y", type=click.IntRange(0), default=2, show_default=True, help="Jump branches kept in the Y expectations.")  # fmt: skip
@click.option("--mf", "m_f", type=click.IntRange(0), default=1, show_default=True, help="Jump branches kept in the generator expectations.")  # fmt: skip
@click.option("--gh", "n_gh", type=click.IntRange(1, 64), default=8, show_default=True, help="Gauss-Hermite nodes for the Brownian increment.")  # fmt: skip
@click.option("--gl", "n_gl", type=click.IntRange(1, 64), default=8, show_default=True, help="Nodes of the jump-size rule.")  # fmt: skip
@click.option("--pad", "padding", type=float, default=None, help="Mesh padding on both sides of the interval. By default, derived from the coefficient bounds.")  # fmt: skip
@click.option("--boundary", type=click.Choice(BOUNDARIES), default="extrapolate", show_default=True, help="Interpolant policy beyond the padded mesh.")  # fmt: skip
@click.option("--literal-mixture", is_flag=True, help="Keep the truncated Poisson mixture as is instead of scaling it to unit mass and centring the jump-weighted sums.")  # fmt: skip
@click.option("-w", "--workers", type=click.IntRange(1), default=None, help="Worker threads. By default, FBSDE_WORKERS or the CPU count.")  # fmt: skip
@click.option("-o", "--out", type=click.Path(dir_okay=False, writable=True), default=None, help="Output file, .json for the full report or .csv for the level-0 layer.")  # fmt: skip
def solve(problem, horizon, num_steps, dx, delta, interval, degree, m_y, m_f, n_gh, n_gl, padding, boundary, literal_mixture, workers, out):  # fmt: skip
    """Solve one problem

    Marches the scheme from the terminal time to t = 0 and reports the L-infinity
    errors of (Y, Z, Gamma) on the interval of interest when the problem has an
    exact solution.
    """
    try:
        settings = RunSettings(
            problem=problem,
            delta=delta,
            horizon=horizon,
            num_steps=num_steps,
            dx=dx,
            interest=interval,
            solver=_solver_options(
                m_y=m_y,
                m_f=m_f,
                n_gh=n_gh,
                n_gl=n_gl,
                degree=degree,
                boundary=boundary,
                renormalise=not literal_mixture,
                padding=padding,
                workers=workers,
            ),
        )
    except ValidationError as error:
        raise _fail(error)

    click.secho(f"Solving {problem} with N={num_steps}, dx={dx}", bold=True)
    try:
        report = harness.solve_report(settings)
    except FBSDEError as error:
        raise _fail(error)

    diagnostics = report.diagnostics
    click.echo(
        f"{diagnostics.mesh_points} mesh points, {diagnostics.atoms_per_point_y} + "
        f"{diagnostics.atoms_per_point_f} atoms per point, "
        f"{diagnostics.max_picard_iterations} Picard iterations at most, "
        f"{diagnostics.wall_time_s:.2f} s"
    )
    if report.errors is not None:
        click.echo("L-infinity errors at t = 0:")
        _echo_errors(report.errors.e_y, report.errors.e_z, report.errors.e_gamma)
    if out is not None:
        _write(report, out)


@click.command()
@click.option("--preset", type=click.Choice(sorted(harness.PRESETS)), default=None, help="Pin the configuration of a published error table. Other options override it.")  # fmt: skip
@click.option("-p", "--problem", type=str, default=None, help="Registry name of the problem.  [default: example1, or the preset's]")  # fmt: skip
@click.option("--axis", type=click.Choice(["dt", "dx"]), default=None, help="Step size varied by the study.  [default: dt, or the preset's]")  # fmt: skip
@click.option("--values", callback=_parse_values, default=None, help="Comma-separated step sizes, e.g. 2^-4,2^-5,2^-6.")  # fmt: skip
@click.option("--T", "horizon", type=float, default=None, help="Terminal time.  [default: 1.0]")  # fmt: skip
@click.option("--N", "num_steps", type=int, default=None, help="Number of time steps for a dx study.")  # fmt: skip
@click.option("--dx", type=float, default=None, help="Mesh spacing for a dt study.")  # fmt: skip
@click.option("--delta", type=float, default=None, help="Half-width of the jump-size support.  [default: 1.0]")  # fmt: skip
@click.option("--degree", type=click.IntRange(1, 3), default=None, help="Degree of the piecewise Lagrange interpolation.")  # fmt: skip
@click.option("--my", "m_y", type=click.IntRange(0), default=None, help="Jump branches kept in the Y expectations.")  # fmt: skip
@click.option("--mf", "m_f", type=click.IntRange(0), default=None, help="Jump branches kept in the generator expectations.")  # fmt: skip
@click.option("--gh", "n_gh", type=click.IntRange(1, 64), default=None, help="Gauss-Hermite nodes for the Brownian increment.")  # fmt: skip
@click.option("--gl", "n_gl", type=click.IntRange(1, 64), default=None, help="Nodes of the jump-size rule.")  # fmt: skip
@click.option("--pad", "padding", type=float, default=None, help="Mesh padding on both sides of the interval.")  # fmt: skip
@click.option("--boundary", type=click.Choice(BOUNDARIES), default=None, help="Interpolant policy beyond the padded mesh.  [default: extrapolate]")  # fmt: skip
@click.option("--literal-mixture", is_flag=True, help="Keep the truncated Poisson mixture as is instead of scaling it to unit mass and centring the jump-weighted sums.")  # fmt: skip
@click.option("-w", "--workers", type=click.IntRange(1), default=None, help="Worker threads. By default, FBSDE_WORKERS or the CPU count.")  # fmt: skip
@click.option("-o", "--out", type=click.Path(dir_okay=False, writable=True), default=None, help="Output file, .json or .csv.")  # fmt: skip
def converge(preset, problem, axis, values, horizon, num_steps, dx, delta, degree, m_y, m_f, n_gh, n_gl, padding, boundary, literal_mixture, workers, out):  # fmt: skip
    """Run a convergence study

    Solves once per step size, measures the L-infinity errors against the exact
    solution and fits the convergence rates. Exits with an error if any run
    failed.
    """
    solver_options = _solver_options(
        degree=degree,
        m_y=m_y,
        m_f=m_f,
        n_gh=n_gh,
        n_gl=n_gl,
        padding=padding,
        boundary=boundary,
        renormalise=False if literal_mixture else None,
        workers=workers,
    )
    try:
        if preset is not None:
            pinned = harness.PRESETS[preset]
            settings = pinned.settings(**solver_options)
            problem = problem or pinned.problem
            axis = axis or pinned.axis
            values = values or list(pinned.values)
        else:
            settings = RunSettings(solver=solver_options)
            problem = problem or "example1"
            axis = axis or "dt"
        overrides = _solver_options(horizon=horizon, num_steps=num_steps, dx=dx, delta=delta)
        settings = RunSettings.model_validate({**settings.model_dump(), **overrides})
    except ValidationError as error:
        raise _fail(error)
    if not values:
        raise click.UsageError("--values is required without --preset")

    click.secho(f"Convergence study of {problem} in {axis} over {len(values)} step sizes", bold=True)
    try:
        with click.progressbar(length=len(values), label="Solving") as bar:
            report = harness.run_study(
                problem, axis, values, settings, preset=preset, on_record=lambda record: bar.update(1)
            )
    except FBSDEError as error:
        raise _fail(error)

    for record in report.records:
        if record.failed:
            click.secho(f"{axis}={record.step:.6g}: failed, {record.error}", fg="red")
        else:
            click.echo(
                f"{axis}={record.step:.6g}: e_y={record.e_y:.4e} e_z={record.e_z:.4e} e_gamma={record.e_gamma:.4e}"
            )
    rates = report.rates
    click.echo(
        "Rates: "
        + ", ".join(
            f"{name}={'n/a' if value is None else f'{value:.3f}'}"
            for name, value in (("CR_y", rates.cr_y), ("CR_z", rates.cr_z), ("CR_gamma", rates.cr_gamma))
        )
    )
    if out is not None:
        _write(report, out)
    if report.failed:
        raise click.ClickException(f"{len(report.failed)} of {len(report.records)} runs failed")


def _integrand(name: str, problem, x: float):
    if name == "one":
        return lambda v: np.ones_like(v)
    if name == "identity":
        return lambda v: v
    if name == "sin":
        return np.sin
    # cubic interpolant of the terminal data on a mesh wide enough for one step
    mesh = SpatialMesh.uniform(0.01, (x - 0.5, x + 0.5), padding=6.0)
    interpolant = PiecewiseLagrangeInterpolant(
        mesh, problem.terminal_at(mesh.points), 3, ExtrapolationPolicy.CLAMP
    )
    return interpolant.evaluate


@click.command("oracle")
@click.option("-p", "--problem", type=str, default="example1", show_default=True, help="Registry name of the problem.")  # fmt: skip
@click.option("--delta", type=float, default=1.0, show_default=True, help="Half-width of the jump-size support.")  # fmt: skip
@click.option("--t", "t_n", type=float, default=0.5, show_default=True, help="Time of the origin.")  # fmt: skip
@click.option("--x", "x", type=float, default=0.5, show_default=True, help="Origin.")  # fmt: skip
@click.option("--dt", type=float, default=1 / 64, show_default=True, help="Step size.")  # fmt: skip
@click.option("--weight", type=click.Choice([weight.value for weight in oracle.Weight]), default="plain", show_default=True, help="Weight multiplying V(X').")  # fmt: skip
@click.option("--function", "function", type=click.Choice(["one", "identity", "sin", "terminal"]), default="sin", show_default=True, help="Integrand V; terminal is the cubic interpolant of the terminal data.")  # fmt: skip
@click.option("--paths", type=click.IntRange(oracle.MIN_PATHS), default=100_000, show_default=True, help="Number of Monte Carlo paths.")  # fmt: skip
@click.option("--seed", type=int, default=0, show_default=True, help="Root seed of the path streams.")  # fmt: skip
@click.option("--second-moment", is_flag=True, help="Square the weight factor.")  # fmt: skip
@click.option("--compare", is_flag=True, help="Also print the truncated quadrature estimate.")  # fmt: skip
@click.option("--m", "truncation", type=click.IntRange(0), default=3, show_default=True, help="Jump branches kept by the quadrature in --compare.")  # fmt: skip
@click.option("--gh", "n_gh", type=click.IntRange(1, 64), default=8, show_default=True, help="Gauss-Hermite nodes in --compare.")  # fmt: skip
@click.option("--gl", "n_gl", type=click.IntRange(1, 64), default=8, show_default=True, help="Jump-size nodes in --compare.")  # fmt: skip
@click.option("-w", "--workers", type=click.IntRange(1), default=None, help="Worker threads.")  # fmt: skip
def oracle_command(problem, delta, t_n, x, dt, weight, function, paths, seed, second_moment, compare, truncation, n_gh, n_gl, workers):  # fmt: skip
    """Monte Carlo estimate of a one-step expectation

    Estimates E[V(X') w] with w = 1, the Brownian weight or the jump weight,
    drawing untruncated jump counts.
    """
    try:
        fbsde_problem = registry_get(problem, delta=delta)
        V = _integrand(function, fbsde_problem, x)
        estimate, stderr = oracle.mc_expectation(
            fbsde_problem, t_n, x, dt, weight, V, paths, seed,
            second_moment=second_moment, workers=workers,
        )  # fmt: skip
    except FBSDEError as error:
        raise _fail(error)

    click.secho(f"E[{function}(X') * {weight}] at t={t_n}, x={x}, dt={dt}", bold=True)
    click.echo(f"  Monte Carlo  {estimate:.10g} +/- {stderr:.3g} ({paths} paths, seed {seed})")
    if compare:
        if second_moment:
            raise click.UsageError("--compare has no quadrature counterpart for --second-moment")
        try:
            quadrature = oracle.quadrature_expectation(
                fbsde_problem, t_n, x, dt, weight, V, M=truncation, n_gh=n_gh, n_gl=n_gl
            )
        except FBSDEError as error:
            raise _fail(error)
        deviation = abs(quadrature - estimate) / stderr if stderr > 0 else float("nan")
        click.echo(f"  Quadrature   {quadrature:.10g} (M={truncation}, {deviation:.2f} standard errors away)")


@click.command()
def list_problems():
    """List the registered problems"""
    for name in problem_names():
        click.echo(f"{name}: {registry_get(name).description}")


cli.add_command(solve)
cli.add_command(converge)
cli.add_command(oracle_command)
cli.add_command(list_problems)


# as referenced in setup.py (is the CLI console_script function)
def main():
    cli(max_content_width=250)
