"""Reproductions of the published error tables, run with `pytest -m slow`"""

import pytest

from fbsde.jumps.harness import PRESETS, run_study
from fbsde.jumps.interp import ExtrapolationPolicy
from fbsde.jumps.schemas import RunSettings

pytestmark = pytest.mark.slow

# dt = 2^-4 ... 2^-7 with M_y = 2, M_f = 1
TABLE1 = {
    "y": [4.539e-3, 9.878e-4, 2.211e-4, 5.065e-5],
    "z": [1.846e-2, 5.459e-3, 1.536e-3, 3.293e-4],
    "gamma": [2.151e-2, 5.364e-3, 1.453e-3, 3.365e-4],
}


def preset_study(name: str, values=None, **overrides):
    preset = PRESETS[name]
    settings = preset.settings()
    solver = {**settings.solver.model_dump(), **overrides.pop("solver", {})}
    settings = RunSettings.model_validate({**settings.model_dump(), **overrides, "solver": solver})
    return run_study(preset.problem, preset.axis, values or preset.values[:4], settings, preset=name)


@pytest.fixture(scope="module")
def table1():
    return preset_study("table1")


def test_table1_runs_with_the_default_configuration(table1):
    solver = table1.settings.solver
    assert solver.boundary is ExtrapolationPolicy.EXTRAPOLATE
    assert solver.renormalise
    assert not table1.failed


def test_table1_second_order_in_time(table1):
    assert table1.rates.cr_y >= 1.85
    assert table1.rates.cr_z >= 1.7
    assert table1.rates.cr_gamma >= 1.7
    for record, expected in zip(table1.records, TABLE1["y"]):
        assert expected / 3 <= record.e_y <= 3 * expected
    for name in ("z", "gamma"):
        for record, expected in zip(table1.records, TABLE1[name]):
            assert getattr(record, f"e_{name}") <= 3 * expected


def test_table1_literal_mixture_is_less_accurate(table1):
    literal = preset_study("table1", solver={"renormalise": False})
    assert not literal.failed
    for centred, plain in zip(table1.records, literal.records):
        assert plain.e_y > 3 * centred.e_y


def test_table1_without_jump_branches_stalls():
    report = preset_study("table1", solver={"m_y": 0, "m_f": 0})
    assert not report.failed
    assert report.rates.cr_y <= 0.3


def test_table2_linear_second_order_in_space():
    report = preset_study("table2-linear")
    assert not report.failed
    for name in ("y", "z", "gamma"):
        assert getattr(report.rates, f"cr_{name}") == pytest.approx(2.0, abs=0.3)


def test_table2_quadratic_at_least_second_order_in_space():
    # the leading bias of a centred quadratic stencil is dx^2 sigma^2 T u'''' / 24 for any N
    report = preset_study("table2", num_steps=256)
    assert not report.failed
    assert report.rates.cr_y >= 1.8


def test_table3_first_order_with_euler_forward_map():
    report = preset_study("table3")
    assert not report.failed
    for name in ("y", "z", "gamma"):
        assert 0.85 <= getattr(report.rates, f"cr_{name}") <= 1.6
