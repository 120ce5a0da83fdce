import math

import numpy as np
import pytest

from fbsde.jumps.errors import ConfigurationError, EvaluationError, UnsupportedError
from fbsde.jumps.interp import ExtrapolationPolicy, PiecewiseLagrangeInterpolant
from fbsde.jumps.models import FBSDEProblem, FiniteActivityLevyMeasure, SpatialMesh
from fbsde.jumps.oracle import (
    BLOCK_SIZE,
    Weight,
    draw_sample,
    mc_expectation,
    quadrature_expectation,
)

T_N, X, DT = 0.5, 0.5, 1 / 64


def test_too_few_paths(example1):
    with pytest.raises(ConfigurationError):
        mc_expectation(example1, T_N, X, DT, "plain", np.ones_like, 999, 0)


def test_plain_expectation_of_one_is_exact(example1):
    estimate, stderr = mc_expectation(example1, T_N, X, DT, Weight.PLAIN, np.ones_like, 20_000, 3)
    assert estimate == 1.0
    assert stderr == 0.0


def test_brownian_weight_has_zero_mean(example2):
    estimate, stderr = mc_expectation(example2, T_N, X, DT, "brownian", np.ones_like, 50_000, 11)
    assert stderr > 0
    assert abs(estimate) <= 4 * stderr


def test_jump_weight_second_moment(example1):
    # E[(dmu*)^2] = dt * int eta^2 lambda(de) = 2 delta dt
    estimate, stderr = mc_expectation(
        example1, T_N, X, DT, "jump", np.ones_like, 100_000, 5, second_moment=True
    )
    assert abs(estimate - 2 * DT) <= 4 * stderr


def test_same_seed_is_bit_identical(example1):
    first = mc_expectation(example1, T_N, X, DT, "jump", np.sin, 20_000, 42)
    second = mc_expectation(example1, T_N, X, DT, "jump", np.sin, 20_000, 42)
    pooled = mc_expectation(example1, T_N, X, DT, "jump", np.sin, 20_000, 42, workers=3)
    assert first == second == pooled
    assert mc_expectation(example1, T_N, X, DT, "jump", np.sin, 20_000, 43) != first


def test_stderr_scales_with_paths(example2):
    _, coarse = mc_expectation(example2, T_N, X, DT, "brownian", np.sin, 10_000, 1)
    _, fine = mc_expectation(example2, T_N, X, DT, "brownian", np.sin, 100_000, 1)
    assert coarse / fine == pytest.approx(math.sqrt(10.0), rel=0.2)


def test_sample_layout(example1):
    rng = np.random.default_rng(np.random.SeedSequence(0, spawn_key=(0,)))
    sample = draw_sample(example1, T_N, X, DT, rng, BLOCK_SIZE)
    assert sample.size == BLOCK_SIZE
    assert sample.jump_sizes.size == sample.counts.sum() == sample.owners.size
    assert np.all((sample.fractions >= 0) & (sample.fractions < 1))
    jumps = np.bincount(sample.owners, weights=sample.jump_sizes, minlength=BLOCK_SIZE)
    expected = X + math.sqrt(DT) * sample.xi + jumps
    np.testing.assert_allclose(sample.x_next, expected, rtol=1e-14)


def test_non_finite_sample(example1):
    with pytest.raises(EvaluationError, match="path"):
        mc_expectation(example1, T_N, X, DT, "plain", lambda v: np.log(v - 10.0), 1000, 0)


def test_measure_without_sampler(example1):
    measure = FiniteActivityLevyMeasure(
        intensity=2.0, density=lambda e: np.full_like(e, 0.5), support=(-1.0, 1.0)
    )
    problem = FBSDEProblem(
        name="unsampled",
        drift=example1.drift,
        diffusion=example1.diffusion,
        jump=example1.jump,
        generator=example1.generator,
        terminal=example1.terminal,
        measure=measure,
        horizon=1.0,
    )
    with pytest.raises(UnsupportedError):
        mc_expectation(problem, T_N, X, DT, "plain", np.sin, 1000, 0)


def random_trigonometric(seed: int):
    """Offset plus cosines and sines of frequency 1 to 3 with decaying random amplitudes"""
    rng = np.random.default_rng(seed)
    offset = rng.normal()
    frequencies = np.arange(1, 4)
    cosines, sines = rng.normal(size=(2, 3)) / frequencies

    def V(v):
        v = np.asarray(v, dtype=float)[..., None]
        terms = cosines * np.cos(frequencies * v) + sines * np.sin(frequencies * v)
        return offset + np.sum(terms, axis=-1)

    return V


@pytest.mark.parametrize("seed", range(20))
def test_quadrature_agrees_with_oracle(seed, request):
    problem = request.getfixturevalue("example1" if seed % 2 else "example2")
    weight = list(Weight)[seed % 3]
    V = random_trigonometric(seed)
    estimate, stderr = mc_expectation(problem, T_N, X, DT, weight, V, 200_000, 100 + seed)
    quadrature = quadrature_expectation(problem, T_N, X, DT, weight, V, M=3)
    assert abs(quadrature - estimate) <= 3 * stderr


@pytest.mark.slow
@pytest.mark.parametrize("weight", list(Weight))
@pytest.mark.parametrize("name", ["example1", "example2"])
@pytest.mark.parametrize("function", ["one", "identity", "sin", "terminal"])
def test_quadrature_agrees_with_oracle_at_a_million_paths(name, weight, function, request):
    problem = request.getfixturevalue(name)
    if function == "one":
        V = np.ones_like
    elif function == "identity":
        V = lambda v: v  # noqa: E731
    elif function == "sin":
        V = np.sin
    else:
        mesh = SpatialMesh.uniform(0.01, (0.0, 1.0), 6.0)
        V = PiecewiseLagrangeInterpolant(
            mesh, problem.terminal_at(mesh.points), 3, ExtrapolationPolicy.CLAMP
        )
    estimate, stderr = mc_expectation(problem, T_N, X, DT, weight, V, 1_000_000, 2024, workers=4)
    quadrature = quadrature_expectation(problem, T_N, X, DT, weight, V, M=3)
    # the truncated Poisson tail bounds the bias when the oracle variance vanishes
    tail = (2 * DT) ** 4 / 24
    assert abs(quadrature - estimate) <= 3 * stderr + tail
