"""
Domain types shared by the solver, oracle and harness.

All types are immutable after construction. Coefficient functions are plain
vectorised callables (numpy in, numpy out) and must not keep state.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from fbsde.jumps.errors import ConfigurationError, EvaluationError, UnsupportedError
from fbsde.jumps.quadrature import gauss_laguerre, gauss_legendre

MOMENT_RULE_SIZE = 64
MASS_TOLERANCE = 1e-12

Sampler = Callable[[np.random.Generator, int], np.ndarray]


def _readonly(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


def one(e: np.ndarray) -> np.ndarray:
    """The weight eta = 1."""
    return np.ones_like(np.asarray(e, dtype=float))


@dataclass(frozen=True)
class TimePartition:
    terminal_time: float
    num_steps: int

    def __post_init__(self):
        if not self.terminal_time > 0:
            raise ConfigurationError(f"Terminal time must be positive, got {self.terminal_time}")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise ConfigurationError(f"Number of steps must be a positive integer, got {self.num_steps}")

    @classmethod
    def from_step(cls, terminal_time: float, dt: float) -> "TimePartition":
        """Uniform partition with step dt; T / dt must be an integer."""
        if not dt > 0:
            raise ConfigurationError(f"Time step must be positive, got {dt}")
        num_steps = round(terminal_time / dt)
        if num_steps < 1 or abs(num_steps * dt - terminal_time) > 1e-12 * terminal_time:
            raise ConfigurationError(f"T={terminal_time} is not a multiple of dt={dt}")
        return cls(terminal_time, num_steps)

    @property
    def dt(self) -> float:
        return self.terminal_time / self.num_steps

    @property
    def nodes(self) -> np.ndarray:
        nodes = np.linspace(0.0, self.terminal_time, self.num_steps + 1)
        nodes.setflags(write=False)
        return nodes

    @property
    def regularity(self) -> float:
        """Ratio of the largest to the smallest step, 1 for a uniform partition."""
        return 1.0


@dataclass(frozen=True)
class SpatialMesh:
    """Uniform 1-D mesh over a padded extent [A, B] containing the interval of interest [a, b]."""

    points: np.ndarray
    interest: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        points = _readonly(self.points)
        object.__setattr__(self, "points", points)
        if points.ndim != 1 or points.size < 2:
            raise ConfigurationError("A mesh needs at least two points")
        steps = np.diff(points)
        if np.any(steps <= 0):
            raise ConfigurationError("Mesh points must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ConfigurationError("Only uniform meshes are supported")
        a, b = self.interest
        tol = 1e-9 * steps[0]
        if a > b or a < points[0] - tol or b > points[-1] + tol:
            raise ConfigurationError(
                f"Interval of interest [{a}, {b}] is not inside the mesh extent "
                f"[{points[0]}, {points[-1]}]"
            )

    @classmethod
    def uniform(
        cls, dx: float, interest: tuple[float, float] = (0.0, 1.0), padding: float = 0.0
    ) -> "SpatialMesh":
        """
        Mesh with spacing dx anchored at a, extended by at least `padding` on both sides.
        """
        if not dx > 0:
            raise ConfigurationError(f"Mesh spacing must be positive, got {dx}")
        if padding < 0:
            raise ConfigurationError(f"Padding must be non-negative, got {padding}")
        a, b = interest
        if not a < b:
            raise ConfigurationError(f"Interval of interest needs a < b, got [{a}, {b}]")
        below = math.ceil(padding / dx - 1e-9)
        above = math.ceil((b - a + padding) / dx - 1e-9)
        points = a + dx * np.arange(-below, above + 1)
        return cls(points, (float(a), float(b)))

    @property
    def dx(self) -> float:
        return float(self.points[1] - self.points[0])

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def extent(self) -> tuple[float, float]:
        return float(self.points[0]), float(self.points[-1])

    def interest_mask(self) -> np.ndarray:
        a, b = self.interest
        tol = 1e-9 * self.dx
        return (self.points >= a - tol) & (self.points <= b + tol)

    def same_as(self, other: "SpatialMesh") -> bool:
        return self.points.shape == other.points.shape and np.array_equal(
            self.points, other.points
        )


@dataclass(frozen=True)
class FiniteActivityLevyMeasure:
    """
    Levy measure lambda(de) = intensity * rho(e) de with finite intensity.

    Jump sizes are integrated with Gauss-Legendre on a bounded support (weights
    multiplied by rho) or with Gauss-Laguerre for exponential jumps. The
    moments of rho, eta * rho and eta^2 * rho are cached at construction.
    """

    intensity: float
    density: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    eta: Callable[[np.ndarray], np.ndarray] = one
    sampler: Sampler | None = None
    exponential_rate: float | None = None
    mass: float = field(init=False)
    eta_mean: float = field(init=False)
    eta_square_mean: float = field(init=False)

    def __post_init__(self):
        if not (np.isfinite(self.intensity) and self.intensity > 0):
            raise ConfigurationError(f"Jump intensity must be finite and positive, got {self.intensity}")
        e_min, e_max = self.support
        if self.exponential_rate is None and not (
            np.isfinite(e_min) and np.isfinite(e_max) and e_min < e_max
        ):
            raise ConfigurationError(
                f"Jump-size support must be a bounded interval, got [{e_min}, {e_max}]"
            )
        nodes, weights = self.jump_rule(MOMENT_RULE_SIZE)
        eta = self.eta_at(nodes)
        if not np.all(np.isfinite(eta)):
            raise ConfigurationError("eta must be bounded on the jump-size support")
        mass = float(np.sum(weights))
        if abs(mass - 1.0) > MASS_TOLERANCE:
            raise ConfigurationError(f"Jump-size density integrates to {mass!r}, not 1")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "eta_mean", float(np.sum(weights * eta)))
        object.__setattr__(self, "eta_square_mean", float(np.sum(weights * eta**2)))

    @classmethod
    def uniform(cls, delta: float = 1.0, intensity: float | None = None) -> "FiniteActivityLevyMeasure":
        """
        Uniform jump sizes on [-delta, delta]; the default intensity 2 * delta
        gives lambda(de) = de on the support.
        """
        if not delta > 0:
            raise ConfigurationError(f"delta must be positive, got {delta}")

        def density(e):
            e = np.asarray(e, dtype=float)
            return np.where(np.abs(e) <= delta, 1.0 / (2.0 * delta), 0.0)

        def sampler(rng, size):
            return rng.uniform(-delta, delta, size)

        return cls(
            intensity=2.0 * delta if intensity is None else intensity,
            density=density,
            support=(-delta, delta),
            sampler=sampler,
        )

    @classmethod
    def exponential(
        cls, rate: float, intensity: float, eta: Callable = one
    ) -> "FiniteActivityLevyMeasure":
        """Exponential jump sizes with the given rate, integrated with Gauss-Laguerre."""
        if not rate > 0:
            raise ConfigurationError(f"Exponential rate must be positive, got {rate}")

        def density(e):
            e = np.asarray(e, dtype=float)
            return np.where(e >= 0, rate * np.exp(-rate * np.abs(e)), 0.0)

        def sampler(rng, size):
            return rng.exponential(1.0 / rate, size)

        return cls(
            intensity=intensity,
            density=density,
            support=(0.0, math.inf),
            eta=eta,
            sampler=sampler,
            exponential_rate=rate,
        )

    def jump_rule(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Jump-size nodes and probability weights (summing to one) of an n-point rule."""
        if self.exponential_rate is not None:
            rule = gauss_laguerre(n, self.exponential_rate)
            return rule.nodes, rule.weights
        rule = gauss_legendre(n, *self.support)
        return rule.nodes, _readonly(rule.weights * self.density(rule.nodes))

    def eta_at(self, e: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        return np.broadcast_to(np.asarray(self.eta(e), dtype=float), e.shape)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sampler is None:
            raise UnsupportedError("This jump measure has no sampler")
        return np.asarray(self.sampler(rng, size), dtype=float)


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form (Y, Z, Gamma) as functions of (t, x)."""

    y: Callable[[float, np.ndarray], np.ndarray]
    z: Callable[[float, np.ndarray], np.ndarray]
    gamma: Callable[[float, np.ndarray], np.ndarray]

    def fields(self, t: float, x: np.ndarray) -> np.ndarray:
        """Stacked (Y, Z, Gamma) with shape (3,) + x.shape."""
        x = np.asarray(x, dtype=float)
        return np.stack(
            [np.broadcast_to(np.asarray(f(t, x), dtype=float), x.shape) for f in (self.y, self.z, self.gamma)]
        )


@dataclass(frozen=True)
class FBSDEProblem:
    """
    Decoupled FBSDE with jumps

        dX = b(t, X) dt + sigma(t, X) dW + int c(t, X, e) mu~(de, dt)
        -dY = f(t, X, Y, Z, Gamma) dt - Z dW - int U(e) mu~(de, dt),   Y_T = phi(X_T)

    with Gamma = int U(e) eta(e) lambda(de).
    """

    name: str
    drift: Callable
    diffusion: Callable
    jump: Callable
    generator: Callable
    terminal: Callable
    measure: FiniteActivityLevyMeasure
    horizon: float
    terminal_gradient: Callable | None = None
    exact: ExactSolution | None = None
    description: str = ""

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigurationError(f"Horizon must be positive, got {self.horizon}")

    def drift_at(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.drift(t, x), dtype=float), x.shape)

    def diffusion_at(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.diffusion(t, x), dtype=float), x.shape)

    def jump_at(self, t: float, x: np.ndarray, e: np.ndarray) -> np.ndarray:
        x, e = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(e, dtype=float))
        return np.broadcast_to(np.asarray(self.jump(t, x, e), dtype=float), x.shape)

    def generator_at(self, t: float, x, y, z, gamma) -> np.ndarray:
        shape = np.broadcast_shapes(*(np.shape(v) for v in (x, y, z, gamma)))
        return np.broadcast_to(np.asarray(self.generator(t, x, y, z, gamma), dtype=float), shape)

    def terminal_at(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.terminal(x), dtype=float), x.shape)


@dataclass(frozen=True)
class SolutionLayer:
    """(Y, Z, Gamma) on the mesh points at time level n."""

    level: int
    y: np.ndarray
    z: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        arrays = [_readonly(getattr(self, name)) for name in ("y", "z", "gamma")]
        for name, array in zip(("y", "z", "gamma"), arrays):
            object.__setattr__(self, name, array)
        if not arrays[0].shape == arrays[1].shape == arrays[2].shape or arrays[0].ndim != 1:
            raise ConfigurationError("Layer fields must be 1-D arrays of equal length")
        for name, array in zip(("y", "z", "gamma"), arrays):
            bad = np.flatnonzero(~np.isfinite(array))
            if bad.size:
                raise EvaluationError(
                    f"Non-finite {name} in layer n={self.level}", f"mesh index {int(bad[0])}"
                )

    @property
    def size(self) -> int:
        return int(self.y.size)

    def stacked(self) -> np.ndarray:
        """Fields as a (3, size) array in (y, z, gamma) order."""
        return np.stack([self.y, self.z, self.gamma])

    def check_mesh(self, mesh: SpatialMesh) -> None:
        if self.size != mesh.size:
            raise ConfigurationError(
                f"Layer has {self.size} values but the mesh has {mesh.size} points"
            )
