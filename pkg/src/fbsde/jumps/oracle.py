"""
Monte Carlo estimates of the one-step conditional expectations.

Every path draws xi, xi~, an untruncated Poisson jump count, the jump sizes and
the jump times (as fractions of the step, i.i.d. uniform since every estimated
functional is symmetric in them). Paths come in fixed blocks, each with its own
counter-based stream, so path j depends only on (seed, j) and the estimate is
bit-identical for any number of workers.
"""

import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from fbsde.jumps.errors import ConfigurationError, EvaluationError
from fbsde.jumps.forward import EULER, ForwardMap
from fbsde.jumps.models import FBSDEProblem
from fbsde.jumps.quadrature import (
    build_atom_grid,
    expect_brownian_weighted,
    expect_jump_weighted,
    expect_plain,
)

BLOCK_SIZE = 8192
MIN_PATHS = 1000


class Weight(str, Enum):
    PLAIN = "plain"
    BROWNIAN = "brownian"
    JUMP = "jump"


@dataclass(frozen=True)
class OneStepSample:
    """
    A block of one-step paths from origin x at time t_n.

    Jump-level arrays are flat over all jumps of the block; ``owners`` maps
    each jump to its path.
    """

    xi: np.ndarray
    xi_tilde: np.ndarray
    counts: np.ndarray
    jump_sizes: np.ndarray
    fractions: np.ndarray
    owners: np.ndarray
    x_next: np.ndarray
    brownian_weight: np.ndarray
    jump_weight: np.ndarray

    @property
    def size(self) -> int:
        return int(self.xi.size)

    def factor(self, weight: Weight) -> np.ndarray:
        if weight is Weight.PLAIN:
            return np.ones(self.size)
        if weight is Weight.BROWNIAN:
            return self.brownian_weight
        return self.jump_weight


def draw_sample(
    problem: FBSDEProblem,
    t_n: float,
    x: float,
    dt: float,
    rng: np.random.Generator,
    size: int,
    forward: ForwardMap = EULER,
) -> OneStepSample:
    """Draw ``size`` one-step paths in a fixed order: xi, xi~, counts, sizes, fractions."""
    measure = problem.measure
    xi = rng.standard_normal(size)
    xi_tilde = rng.standard_normal(size)
    counts = rng.poisson(measure.intensity * dt, size)
    total = int(counts.sum())
    sizes = measure.sample(rng, total)
    fractions = rng.uniform(0.0, 1.0, total)
    owners = np.repeat(np.arange(size), counts)

    # one row of jump sizes per path, NaN past its count
    slots = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    padded = np.full((size, int(counts.max(initial=0))), np.nan)
    padded[owners, slots] = sizes
    x_next = forward(problem, t_n, dt, np.asarray(x, dtype=float), math.sqrt(dt) * xi, padded)

    brownian = 0.5 * math.sqrt(dt) * (xi + math.sqrt(3.0) * xi_tilde)
    timed = (2.0 - 3.0 * fractions) * measure.eta_at(sizes)
    compensator = 0.5 * measure.intensity * dt * measure.eta_mean
    jump_weight = np.bincount(owners, weights=timed, minlength=size) - compensator
    return OneStepSample(
        xi=xi,
        xi_tilde=xi_tilde,
        counts=counts,
        jump_sizes=sizes,
        fractions=fractions,
        owners=owners,
        x_next=x_next,
        brownian_weight=brownian,
        jump_weight=jump_weight,
    )


def _block_sums(
    problem: FBSDEProblem,
    t_n: float,
    x: float,
    dt: float,
    weight: Weight,
    V: Callable[[np.ndarray], np.ndarray],
    seed: int,
    block: int,
    keep: int,
    second_moment: bool,
    forward: ForwardMap,
) -> tuple[float, float]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    # always a full block: the stream position of path j must not depend on n_paths
    sample = draw_sample(problem, t_n, x, dt, rng, BLOCK_SIZE, forward)
    factor = sample.factor(weight)[:keep]
    if second_moment:
        factor = factor**2
    x_next = sample.x_next[:keep]
    with np.errstate(all="ignore"):
        values = np.broadcast_to(np.asarray(V(x_next), dtype=float), x_next.shape) * factor
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        j = int(bad[0])
        raise EvaluationError(
            "Non-finite sample value",
            f"path {block * BLOCK_SIZE + j}, x'={x_next[j]:.6g}",
        )
    return float(np.sum(values)), float(np.sum(values**2))


def mc_expectation(
    problem: FBSDEProblem,
    t_n: float,
    x: float,
    dt: float,
    weight: Weight | str,
    V: Callable[[np.ndarray], np.ndarray],
    n_paths: int,
    seed: int,
    *,
    second_moment: bool = False,
    workers: int | None = None,
    forward: ForwardMap = EULER,
) -> tuple[float, float]:
    """
    Monte Carlo estimate of E[V(X') w] with w = 1, dW~ or dmu*.

    Parameters
    ----------
    problem : FBSDEProblem
        Supplies the coefficients and a jump measure with a sampler.
    t_n : float
        Time of the origin.
    x : float
        Origin.
    dt : float
        Step size.
    weight : Weight or str
        ``plain``, ``brownian`` or ``jump``.
    V : Callable
        Vectorised integrand of X'.
    n_paths : int
        Number of paths, at least 1000.
    seed : int
        Root seed of the path streams.
    second_moment : bool, optional
        Square the weight factor, by default False.
    workers : int, optional
        Threads evaluating blocks, by default inline.
    forward : ForwardMap, optional
        One-step map of the paths, by default the Euler step.

    Returns
    -------
    tuple[float, float]
        Sample mean and its standard error.
    """
    if n_paths < MIN_PATHS:
        raise ConfigurationError(f"The oracle needs at least {MIN_PATHS} paths, got {n_paths}")
    if not dt > 0:
        raise ConfigurationError(f"Step size must be positive, got {dt}")
    weight = Weight(weight)
    x = float(x)
    blocks = math.ceil(n_paths / BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, n_paths - block * BLOCK_SIZE) for block in range(blocks)]

    def run(block):
        return _block_sums(
            problem, t_n, x, dt, weight, V, seed, block, sizes[block], second_moment, forward
        )

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            partials = list(executor.map(run, range(blocks)))
    else:
        partials = [run(block) for block in range(blocks)]

    sums = np.array(partials)
    total, total_square = float(np.sum(sums[:, 0])), float(np.sum(sums[:, 1]))
    mean = total / n_paths
    variance = max((total_square - total * total / n_paths) / (n_paths - 1), 0.0)
    return mean, math.sqrt(variance / n_paths)


def quadrature_expectation(
    problem: FBSDEProblem,
    t_n: float,
    x: float,
    dt: float,
    weight: Weight | str,
    V: Callable[[np.ndarray], np.ndarray],
    *,
    M: int = 3,
    n_gh: int = 8,
    n_gl: int = 8,
    forward: ForwardMap = EULER,
) -> float:
    """The truncated quadrature counterpart of ``mc_expectation``."""
    grid = build_atom_grid(problem, t_n, dt, float(x), M, n_gh, n_gl, forward=forward)
    weight = Weight(weight)
    if weight is Weight.PLAIN:
        return expect_plain(grid, V)
    if weight is Weight.BROWNIAN:
        return expect_brownian_weighted(grid, V)
    return expect_jump_weighted(grid, V, problem.measure)
