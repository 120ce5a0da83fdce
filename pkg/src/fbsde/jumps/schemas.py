from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from fbsde.jumps.solver import SolveDiagnostics, SolverConfig


class RunSettings(BaseModel):
    """Everything needed to reproduce one solve"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    problem: str = "example1"
    delta: float = Field(1.0, gt=0)
    horizon: float = Field(1.0, gt=0)
    num_steps: int = Field(64, ge=1)
    dx: float = Field(0.01, gt=0)
    interest: tuple[float, float] = (0.0, 1.0)
    solver: SolverConfig = Field(default_factory=SolverConfig)

    @model_validator(mode="after")
    def _interest_ordered(self):
        a, b = self.interest
        if not a < b:
            raise ValueError(f"Interval of interest needs a < b, got [{a}, {b}]")
        return self


class ErrorNorms(BaseModel):
    e_y: float
    e_z: float
    e_gamma: float


class RunRecord(BaseModel):
    step: float
    num_steps: int
    dx: float
    e_y: float | None = None
    e_z: float | None = None
    e_gamma: float | None = None
    wall_time_s: float | None = None
    diagnostics: SolveDiagnostics | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


class Rates(BaseModel):
    cr_y: float | None = None
    cr_z: float | None = None
    cr_gamma: float | None = None


class ConvergenceReport(BaseModel):
    axis: Literal["dt", "dx"]
    preset: str | None = None
    settings: RunSettings
    records: list[RunRecord]
    rates: Rates = Field(default_factory=Rates)

    @model_validator(mode="after")
    def _records_decreasing(self):
        steps = [record.step for record in self.records]
        if any(a <= b for a, b in zip(steps, steps[1:])):
            raise ValueError("Records must be sorted by strictly decreasing step size")
        return self

    @property
    def failed(self) -> list[RunRecord]:
        return [record for record in self.records if record.failed]


class SolveReport(BaseModel):
    settings: RunSettings
    diagnostics: SolveDiagnostics
    errors: ErrorNorms | None = None
    x: list[float]
    y: list[float]
    z: list[float]
    gamma: list[float]
