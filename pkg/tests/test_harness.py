import numpy as np
import pandas as pd
import pytest

from fbsde.jumps.errors import UsageError
from fbsde.jumps.harness import (
    PRESETS,
    build_run,
    error_linf,
    fit_rate,
    pairwise_rates,
    read_report,
    read_report_csv,
    report_frame,
    run_study,
    solve_report,
    write_report,
)
from fbsde.jumps.interp import ExtrapolationPolicy
from fbsde.jumps.models import SolutionLayer, SpatialMesh
from fbsde.jumps.problems import exact_layer
from fbsde.jumps.schemas import ConvergenceReport, Rates, RunRecord, RunSettings
from fbsde.jumps.solver import SolverConfig

TABLE1_STEPS = [2.0**-k for k in range(4, 9)]
TABLE1_Y = [4.539e-3, 9.878e-4, 2.211e-4, 5.065e-5, 1.144e-5]
TABLE2_STEPS = [2.0**-k for k in range(2, 7)]
TABLE2_QUADRATIC_Y = [6.183e-2, 8.004e-3, 9.941e-4, 1.266e-4, 1.438e-5]


def quick_settings(num_steps: int = 4, **solver) -> RunSettings:
    config = {"m_y": 1, "m_f": 0, "degree": 1, "workers": 1, "padding": 3.0, "boundary": "analytic", **solver}
    return RunSettings(problem="example1", num_steps=num_steps, dx=0.1, solver=config)


@pytest.fixture
def report():
    settings = quick_settings()
    records = [
        RunRecord(step=0.5, num_steps=2, dx=0.1, e_y=0.1 / 3, e_z=0.2 / 7, e_gamma=0.3 / 11, wall_time_s=0.25),
        RunRecord(step=0.3, num_steps=0, dx=0.1, error="T=1.0 is not a multiple of dt=0.3"),
        RunRecord(step=0.25, num_steps=4, dx=0.1, e_y=0.1 / 13, e_z=0.2 / 17, e_gamma=0.3 / 19, wall_time_s=0.5),
        RunRecord(step=0.125, num_steps=8, dx=0.1, e_y=0.1 / 59, e_z=0.2 / 61, e_gamma=0.3 / 67, wall_time_s=1.0),
    ]
    return ConvergenceReport(
        axis="dt", settings=settings, records=records, rates=Rates(cr_y=2.0 / 3, cr_z=None, cr_gamma=1.5)
    )


class TestFitRate:
    def test_exact_first_order(self):
        assert fit_rate([0.4, 0.2, 0.1, 0.05], [8.0, 4.0, 2.0, 1.0]) == pytest.approx(1.0, abs=1e-12)

    def test_table1_y_row(self):
        assert fit_rate(TABLE1_STEPS, TABLE1_Y) == pytest.approx(2.155, abs=1e-3)

    def test_table2_quadratic_y_row(self):
        assert fit_rate(TABLE2_STEPS, TABLE2_QUADRATIC_Y) == pytest.approx(3.012, abs=1e-3)

    def test_invariant_under_scaling(self):
        scaled = [1e3 * e for e in TABLE1_Y]
        assert fit_rate(TABLE1_STEPS, scaled) == pytest.approx(fit_rate(TABLE1_STEPS, TABLE1_Y), abs=1e-12)

    @pytest.mark.parametrize(
        "steps, errors",
        [([0.1], [1.0]), ([0.1, 0.05], [1.0, 0.0]), ([0.1, -0.05], [1.0, 0.5]), ([0.1, 0.1], [1.0, 0.5]), ([0.1, 0.05], [1.0])],
    )
    def test_invalid_input(self, steps, errors):
        with pytest.raises(UsageError):
            fit_rate(steps, errors)

    def test_pairwise_rates(self):
        rates = pairwise_rates([0.4, 0.2, 0.1], [16.0, 4.0, None])
        assert rates[0] is None
        assert rates[1] == pytest.approx(2.0)
        assert rates[2] is None


class TestErrorNorm:
    def test_identity(self, example1, coarse_mesh):
        exact = exact_layer(example1, coarse_mesh, 0.0)
        assert error_linf(exact, exact, coarse_mesh) == (0.0, 0.0, 0.0)

    def test_constant_offset_on_y(self, example1, coarse_mesh):
        exact = exact_layer(example1, coarse_mesh, 0.0)
        shifted = SolutionLayer(level=0, y=exact.y + 1e-3, z=exact.z, gamma=exact.gamma)
        e_y, e_z, e_gamma = error_linf(shifted, exact, coarse_mesh)
        assert e_y == pytest.approx(1e-3, rel=1e-9)
        assert (e_z, e_gamma) == (0.0, 0.0)

    def test_only_the_interval_counts(self, example1, coarse_mesh):
        exact = exact_layer(example1, coarse_mesh, 0.0)
        y = exact.y.copy()
        y[0] += 1.0
        outside = SolutionLayer(level=0, y=y, z=exact.z, gamma=exact.gamma)
        assert error_linf(outside, exact, coarse_mesh)[0] == 0.0
        assert error_linf(outside, exact, coarse_mesh, (-1.0, 0.0))[0] == pytest.approx(1.0)

    def test_mesh_mismatch(self, example1, coarse_mesh):
        other = SpatialMesh.uniform(0.2, (0.0, 1.0), 1.0)
        with pytest.raises(UsageError):
            error_linf(exact_layer(example1, other, 0.0), exact_layer(example1, coarse_mesh, 0.0), coarse_mesh)


class TestStudy:
    def test_dt_study(self):
        report = run_study("example1", "dt", [0.125, 0.25], quick_settings())
        assert [record.step for record in report.records] == [0.25, 0.125]
        assert [record.num_steps for record in report.records] == [4, 8]
        assert not report.failed
        assert report.rates.cr_y is not None
        assert report.settings.problem == "example1"

    def test_failed_run_is_recorded(self):
        seen = []
        report = run_study("example1", "dt", [0.25, 0.3, 0.125], quick_settings(), on_record=seen.append)
        assert len(seen) == 3
        assert [record.failed for record in report.records] == [True, False, False]
        assert "multiple" in report.records[0].error
        assert report.rates.cr_y is not None

    def test_dx_study(self):
        report = run_study("example2", "dx", [0.25, 0.125], quick_settings(num_steps=16))
        assert [record.dx for record in report.records] == [0.25, 0.125]
        assert all(record.num_steps == 16 for record in report.records)
        assert not report.failed

    def test_bad_axis(self):
        with pytest.raises(UsageError):
            run_study("example1", "dy", [0.5], quick_settings())

    def test_identical_invocations_give_identical_reports(self):
        first = run_study("example1", "dt", [0.25, 0.125], quick_settings())
        second = run_study("example1", "dt", [0.25, 0.125], quick_settings())
        strip = {"records": {"__all__": {"wall_time_s", "diagnostics"}}}
        assert first.model_dump(exclude=strip) == second.model_dump(exclude=strip)

    def test_records_must_be_sorted(self, report):
        with pytest.raises(ValueError):
            ConvergenceReport(axis="dt", settings=report.settings, records=report.records[::-1])


class TestReports:
    def test_json_round_trip(self, report, tmp_path):
        path = write_report(report, tmp_path / "report.json")
        assert read_report(path).model_dump() == report.model_dump()

    def test_csv_round_trip(self, report, tmp_path):
        path = write_report(report, tmp_path / "report.csv")
        frame = read_report_csv(path)
        assert list(frame.columns) == ["step", "e_y", "e_z", "e_gamma", "cr_y", "cr_z", "cr_gamma"]
        pd.testing.assert_frame_equal(frame, report_frame(report), check_exact=True)
        assert frame["e_y"][0] == 0.1 / 3
        assert np.isnan(frame["e_y"][1])

    def test_csv_pairwise_rates(self, report):
        frame = report_frame(report)
        assert np.isnan(frame["cr_y"][0])
        assert np.isnan(frame["cr_y"][2])
        expected = np.log2((0.1 / 13) / (0.1 / 59)) / np.log2(0.25 / 0.125)
        assert frame["cr_y"][3] == pytest.approx(expected)

    def test_unknown_format(self, report, tmp_path):
        with pytest.raises(UsageError):
            write_report(report, tmp_path / "report.txt")

    def test_solve_report(self):
        report = solve_report(quick_settings())
        assert report.errors is not None
        assert len(report.x) == 11
        assert report.x[0] == 0.0
        assert report.diagnostics.steps == 4


def test_build_run_uses_default_padding():
    settings = RunSettings(problem="example1", num_steps=4, dx=0.5, solver=SolverConfig(workers=1))
    problem, mesh, partition = build_run(settings)
    assert mesh.extent[0] < -19.0
    assert mesh.extent[1] > 20.0
    assert partition.num_steps == 4


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets(name):
    preset = PRESETS[name]
    settings = preset.settings(workers=1)
    assert settings.solver.degree == preset.degree
    assert settings.solver.m_f <= settings.solver.m_y
    assert sorted(preset.values, reverse=True) == list(preset.values)
    assert settings.solver.boundary is ExtrapolationPolicy.EXTRAPOLATE
    assert settings.solver.renormalise
