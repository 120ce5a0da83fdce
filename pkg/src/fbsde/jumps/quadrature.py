"""
Gaussian rules and truncated Poisson-mixture expectations over one time step.

A one-step conditional expectation of a function of the forward image, by
default the Euler step

    X' = x + b(t, x) dt + sigma(t, x) sqrt(dt) xi + sum_k c(t, x, e_k)

is a mixture over the number of jumps m ~ Poisson(lambda dt). Keeping the
branches m = 0..M and integrating xi with Gauss-Hermite and each jump size with
the measure's jump rule turns it into a finite sum over weighted atoms. The
atoms are laid out as a (rows, n_gh) block where each row is one tuple of jump
sizes and the trailing axis runs over the Gauss-Hermite nodes.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np
from scipy import stats

from fbsde.jumps.errors import ConfigurationError, EvaluationError
from fbsde.jumps.forward import EULER, ForwardMap

if TYPE_CHECKING:
    from fbsde.jumps.models import FBSDEProblem, FiniteActivityLevyMeasure

MAX_RULE_SIZE = 64


class MeasureKind(str, Enum):
    STANDARD_NORMAL = "standard-normal"
    LEBESGUE = "lebesgue-on-interval"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class QuadratureRule1D:
    nodes: np.ndarray
    weights: np.ndarray
    measure_kind: MeasureKind
    interval: tuple[float, float] | None = None

    @property
    def size(self) -> int:
        return len(self.nodes)

    def integrate(self, func: Callable[[np.ndarray], np.ndarray]) -> float:
        """Apply the rule to a vectorised function."""
        return float(np.sum(self.weights * func(self.nodes)))


def _check_size(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_RULE_SIZE:
        raise ConfigurationError(
            f"Quadrature size must be an integer in [1, {MAX_RULE_SIZE}], got {n!r}"
        )


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=float)
    array.setflags(write=False)
    return array


@lru_cache(maxsize=None)
def gauss_hermite_normal(n: int) -> QuadratureRule1D:
    """
    Gauss-Hermite rule for the standard normal density.

    Uses the probabilists' Hermite polynomials, whose nodes numpy returns
    symmetric about zero, and normalises the weights to sum to one.

    Parameters
    ----------
    n : int
        Number of nodes, 1 <= n <= 64.

    Returns
    -------
    QuadratureRule1D
        Rule exact for polynomials of degree <= 2n - 1 under N(0, 1).
    """
    _check_size(n)
    nodes, weights = np.polynomial.hermite_e.hermegauss(n)
    weights = weights / weights.sum()
    return QuadratureRule1D(
        nodes=_frozen(nodes),
        weights=_frozen(weights),
        measure_kind=MeasureKind.STANDARD_NORMAL,
    )


@lru_cache(maxsize=None)
def gauss_legendre(n: int, a: float, b: float) -> QuadratureRule1D:
    """
    Gauss-Legendre rule for Lebesgue measure on [a, b].

    Parameters
    ----------
    n : int
        Number of nodes, 1 <= n <= 64.
    a : float
        Lower bound of the interval.
    b : float
        Upper bound of the interval, must exceed a.

    Returns
    -------
    QuadratureRule1D
        Rule exact for polynomials of degree <= 2n - 1 on [a, b].
    """
    _check_size(n)
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise ConfigurationError(f"Gauss-Legendre interval needs a < b, got [{a}, {b}]")
    knots, weights = np.polynomial.legendre.leggauss(n)
    nodes = 0.5 * (b - a) * knots + 0.5 * (b + a)
    weights = 0.5 * (b - a) * weights
    return QuadratureRule1D(
        nodes=_frozen(nodes),
        weights=_frozen(weights),
        measure_kind=MeasureKind.LEBESGUE,
        interval=(float(a), float(b)),
    )


@lru_cache(maxsize=None)
def gauss_laguerre(n: int, rate: float) -> QuadratureRule1D:
    """
    Gauss-Laguerre rule for the exponential density rate * exp(-rate * e) on [0, inf).

    Parameters
    ----------
    n : int
        Number of nodes, 1 <= n <= 64.
    rate : float
        Positive rate of the exponential distribution.

    Returns
    -------
    QuadratureRule1D
        Rule with probability weights summing to one.
    """
    _check_size(n)
    if not rate > 0:
        raise ConfigurationError(f"Exponential rate must be positive, got {rate}")
    knots, weights = np.polynomial.laguerre.laggauss(n)
    return QuadratureRule1D(
        nodes=_frozen(knots / rate),
        weights=_frozen(weights / weights.sum()),
        measure_kind=MeasureKind.EXPONENTIAL,
        interval=(0.0, math.inf),
    )


def poisson_weights(intensity_dt: float, truncation: int) -> np.ndarray:
    """P(N = m) for m = 0..truncation with N ~ Poisson(intensity_dt)."""
    return stats.poisson.pmf(np.arange(truncation + 1), intensity_dt)


@lru_cache(maxsize=None)
def _jump_combinations(n_nodes: int, jumps: int) -> np.ndarray:
    """Index tuples of the tensor-product jump rule, shape (n_nodes**jumps, jumps)."""
    combos = np.array(
        list(itertools.product(range(n_nodes), repeat=jumps)), dtype=np.intp
    ).reshape(n_nodes**jumps, jumps)
    combos.setflags(write=False)
    return combos


@dataclass(frozen=True)
class AtomGrid:
    """
    Weighted atoms realising the truncated one-step expectation.

    Atom (p, r, g) sits at ``locations[p, r, g]`` for origin p, jump row r and
    Gauss-Hermite node g, with weight ``weights[r, g]``. The weights do not
    depend on the origin; the locations do.
    """

    t_n: float
    dt: float
    origins: np.ndarray  # (P,)
    truncation: int
    intensity: float
    branch_probabilities: np.ndarray  # (M + 1,)
    xi: np.ndarray  # (G,)
    branch: np.ndarray  # (R,) number of jumps in each row
    jump_sizes: np.ndarray  # (R, M), NaN beyond the row's jump count
    eta_sum: np.ndarray  # (R,)
    weights: np.ndarray  # (R, G)
    locations: np.ndarray  # (P, R, G)
    scalar_origin: bool = False

    @property
    def atom_count(self) -> int:
        return int(self.weights.size)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def branch_weight(self, m: int) -> float:
        return float(self.weights[self.branch == m].sum())

    def _result(self, values: np.ndarray) -> float | np.ndarray:
        return float(values[0]) if self.scalar_origin else values

    def integrate(self, values: np.ndarray) -> float | np.ndarray:
        """Sum of w * V over the atoms of each origin."""
        flat = (self.weights * values).reshape(values.shape[0], -1)
        return self._result(np.sum(flat, axis=1))

    def integrate_brownian(self, values: np.ndarray) -> float | np.ndarray:
        """(sqrt(dt) / 2) * sum of w * V * xi, paired over symmetric nodes."""
        half = self.xi.size // 2
        mirrored = values[..., ::-1]
        paired = (
            self.weights[:, :half]
            * self.xi[:half]
            * (values[..., :half] - mirrored[..., :half])
        )
        flat = paired.reshape(values.shape[0], -1)
        return self._result(0.5 * math.sqrt(self.dt) * np.sum(flat, axis=1))

    def integrate_jump(
        self, values: np.ndarray, eta_mean: float, centre: np.ndarray | None = None
    ) -> float | np.ndarray:
        """
        ½ sum of w * V * S_eta minus the compensator term.

        With ``centre`` (one value per origin) V - centre is summed instead,
        which is exact for the untruncated mixture since E[dmu*] = 0.
        """
        if centre is not None:
            values = values - np.reshape(centre, (-1, 1, 1))
        weighted = self.weights * self.eta_sum[:, None] * values
        flat = weighted.reshape(values.shape[0], -1)
        first = 0.5 * np.sum(flat, axis=1)
        plain = np.sum((self.weights * values).reshape(values.shape[0], -1), axis=1)
        return self._result(first - 0.5 * self.intensity * self.dt * eta_mean * plain)

    def describe_atom(self, p: int, r: int, g: int) -> str:
        m = int(self.branch[r])
        sizes = ", ".join(f"{e:.6g}" for e in self.jump_sizes[r, :m])
        return (
            f"origin x={self.origins[p]:.6g}, branch m={m}, jumps=({sizes}), "
            f"xi={self.xi[g]:.6g}, x'={self.locations[p, r, g]:.6g}"
        )


def build_atom_grid(
    problem: FBSDEProblem,
    t_n: float,
    dt: float,
    x: float | np.ndarray,
    M: int,
    n_gh: int,
    n_gl: int,
    *,
    forward: ForwardMap = EULER,
    renormalise: bool = False,
) -> AtomGrid:
    """
    Build the forward-image atoms of the M-jump truncated one-step expectation.

    Parameters
    ----------
    problem : FBSDEProblem
        Supplies the coefficients b, sigma, c and the jump measure.
    t_n : float
        Time of the origin.
    dt : float
        Step size, must be positive.
    x : float or np.ndarray
        Origin, or a 1-D array of origins sharing the same rules.
    M : int
        Number of jump branches retained (m = 0..M).
    n_gh : int
        Gauss-Hermite size for the Brownian increment.
    n_gl : int
        Size of the jump-size rule.
    forward : ForwardMap, optional
        One-step map placing the atoms, by default the Euler step.
    renormalise : bool, optional
        Scale the kept branch probabilities to sum to one, by default False,
        in which case the weights sum to P(N <= M).

    Returns
    -------
    AtomGrid
        n_gh * sum_{m<=M} n_gl**m atoms per origin.
    """
    if not dt > 0:
        raise ConfigurationError(f"Step size must be positive, got {dt}")
    if M < 0:
        raise ConfigurationError(f"Jump truncation must be >= 0, got {M}")
    gh = gauss_hermite_normal(n_gh)
    measure = problem.measure
    jump_nodes, jump_weights = measure.jump_rule(n_gl)

    scalar_origin = np.ndim(x) == 0
    origins = np.atleast_1d(np.asarray(x, dtype=float))
    branch_probabilities = poisson_weights(measure.intensity * dt, M)
    if renormalise:
        branch_probabilities = branch_probabilities / branch_probabilities.sum()
    eta = measure.eta_at(jump_nodes)

    branch, sizes, eta_sums, row_weights = [], [], [], []
    for m in range(M + 1):
        combos = _jump_combinations(len(jump_nodes), m)
        rows = combos.shape[0]
        branch.append(np.full(rows, m, dtype=np.intp))
        padded = np.full((rows, M), np.nan)
        padded[:, :m] = jump_nodes[combos]
        sizes.append(padded)
        eta_sums.append(eta[combos].sum(axis=1))
        row_weights.append(branch_probabilities[m] * jump_weights[combos].prod(axis=1))

    row_weights = np.concatenate(row_weights)
    jump_sizes = np.concatenate(sizes)
    dw = math.sqrt(dt) * gh.nodes
    # (P, 1, 1) x (1, 1, G) x (1, R, 1, M) -> (P, R, G)
    locations = forward(
        problem,
        t_n,
        dt,
        origins[:, None, None],
        dw[None, None, :],
        jump_sizes[None, :, None, :],
    )
    locations = np.broadcast_to(locations, (origins.size, jump_sizes.shape[0], gh.size))
    return AtomGrid(
        t_n=float(t_n),
        dt=float(dt),
        origins=origins,
        truncation=M,
        intensity=measure.intensity,
        branch_probabilities=branch_probabilities,
        xi=gh.nodes,
        branch=np.concatenate(branch),
        jump_sizes=jump_sizes,
        eta_sum=np.concatenate(eta_sums),
        weights=row_weights[:, None] * gh.weights[None, :],
        locations=locations,
        scalar_origin=scalar_origin,
    )


def evaluate_at_atoms(grid: AtomGrid, V: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Evaluate V on every atom location, rejecting non-finite values."""
    values = np.broadcast_to(
        np.asarray(V(grid.locations), dtype=float), grid.locations.shape
    )
    bad = ~np.isfinite(values)
    if bad.any():
        p, r, g = (int(i) for i in np.argwhere(bad)[0])
        raise EvaluationError(
            f"Non-finite integrand value {values[p, r, g]!r}",
            grid.describe_atom(p, r, g),
        )
    return values


def expect_plain(grid: AtomGrid, V: Callable[[np.ndarray], np.ndarray]) -> float | np.ndarray:
    """Truncated-mixture estimate of E[V(X')]; not renormalised, so E[1] = P(N <= M)."""
    return grid.integrate(evaluate_at_atoms(grid, V))


def expect_brownian_weighted(
    grid: AtomGrid,
    V: Callable[[np.ndarray], np.ndarray],
    *,
    reduced: bool = True,
    n_tilde: int = 8,
) -> float | np.ndarray:
    """
    Estimate of E[V(X') dW~] with dW~ = (sqrt(dt) / 2) (xi + sqrt(3) xi~).

    X' does not depend on xi~, so its contribution vanishes and only the xi
    term is summed. With ``reduced=False`` xi~ is integrated with an explicit
    ``n_tilde``-point Gauss-Hermite rule instead.
    """
    values = evaluate_at_atoms(grid, V)
    if reduced:
        return grid.integrate_brownian(values)

    tilde = gauss_hermite_normal(n_tilde)
    factor = 0.5 * math.sqrt(grid.dt) * (
        grid.xi[:, None] + math.sqrt(3.0) * tilde.nodes[None, :]
    )
    weights = grid.weights[:, :, None] * tilde.weights[None, None, :]
    terms = weights * values[..., None] * factor
    return grid._result(np.sum(terms.reshape(values.shape[0], -1), axis=1))


def _time_factor(branch: np.ndarray, eta_values: np.ndarray, n_time: int) -> np.ndarray:
    """
    Integral over jump fractions u in (0, 1]^m of sum_k (2 - 3 u_k) eta(e_k).

    Uses an explicit tensor Gauss-Legendre rule on the fractions, row by row.
    """
    rule = gauss_legendre(n_time, 0.0, 1.0)
    factors = np.zeros(len(branch))
    for m in np.unique(branch):
        if m == 0:
            continue
        rows = branch == m
        combos = _jump_combinations(n_time, int(m))
        fractions = rule.nodes[combos]  # (n_time**m, m)
        weight = rule.weights[combos].prod(axis=1)
        kernel = 2.0 - 3.0 * fractions
        # (rows, m) x (T, m) -> (rows, T)
        per_time = eta_values[rows][:, None, :m] * kernel[None, :, :]
        factors[rows] = np.sum(per_time.sum(axis=2) * weight[None, :], axis=1)
    return factors


def expect_jump_weighted(
    grid: AtomGrid,
    V: Callable[[np.ndarray], np.ndarray],
    measure: FiniteActivityLevyMeasure,
    *,
    reduced: bool = True,
    n_time: int = 4,
) -> float | np.ndarray:
    """
    Estimate of E[V(X') dmu*] for the time-weighted compensated jump sum.

    Conditional on m jumps the jump times are i.i.d. uniform on the step and
    X' does not depend on them, so each factor (2 - 3u) averages to ½. With
    ``reduced=False`` the jump fractions are integrated with an explicit
    ``n_time``-point Gauss-Legendre rule per jump instead.
    """
    values = evaluate_at_atoms(grid, V)
    if reduced:
        return grid.integrate_jump(values, measure.eta_mean)

    eta_values = np.where(
        np.isnan(grid.jump_sizes), 0.0, measure.eta_at(np.nan_to_num(grid.jump_sizes))
    )
    factor = _time_factor(grid.branch, eta_values, n_time)
    weighted = grid.weights * factor[:, None] * values
    first = np.sum(weighted.reshape(values.shape[0], -1), axis=1)
    plain = np.sum((grid.weights * values).reshape(values.shape[0], -1), axis=1)
    compensator = 0.5 * measure.intensity * grid.dt * measure.eta_mean
    return grid._result(first - compensator * plain)
