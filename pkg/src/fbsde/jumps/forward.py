"""
One-step maps of the forward process.

A forward map turns an origin, a Brownian increment and the jump sizes that
arrive during the step into the next state X'. The quadrature atoms and the
Monte Carlo oracle both go through one, so they always agree on what X' is.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from fbsde.jumps.models import FBSDEProblem


class ForwardMap(ABC):
    """
    Interface of a one-step forward map X' = x + Phi(t_n, dt, x, dW, e_1..e_m).

    Arguments broadcast against each other, and ``jumps`` carries one extra
    trailing axis of jump sizes padded with NaN where a path has fewer jumps.
    The quadrature reduces the Brownian weight by assuming X' depends on the
    increment through dW alone and not on the jump times.
    """

    name: str = ""

    @abstractmethod
    def __call__(
        self,
        problem: FBSDEProblem,
        t_n: float,
        dt: float,
        x: np.ndarray,
        dw: np.ndarray,
        jumps: np.ndarray,
    ) -> np.ndarray:
        """Next state, shape of ``x``, ``dw`` and ``jumps[..., 0]`` broadcast together."""

    def jump_displacement(
        self, problem: FBSDEProblem, t_n: float, x: np.ndarray, jumps: np.ndarray
    ) -> np.ndarray:
        """Sum of c(t_n, x, e_k) over the non-NaN sizes of the trailing axis."""
        x = np.asarray(x, dtype=float)[..., None]
        missing = np.isnan(jumps)
        sizes = problem.jump_at(t_n, x, np.where(missing, 0.0, jumps))
        return np.sum(np.where(missing, 0.0, sizes), axis=-1)


class EulerStep(ForwardMap):
    """X' = x + b(t_n, x) dt + sigma(t_n, x) dW + sum_k c(t_n, x, e_k)"""

    name = "euler"

    def __call__(self, problem, t_n, dt, x, dw, jumps):
        x = np.asarray(x, dtype=float)
        drift = problem.drift_at(t_n, x) * dt
        diffusion = problem.diffusion_at(t_n, x) * dw
        return x + drift + diffusion + self.jump_displacement(problem, t_n, x, jumps)

    def __repr__(self) -> str:
        return "EulerStep()"


EULER = EulerStep()
