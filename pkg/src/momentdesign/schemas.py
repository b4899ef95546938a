"""Request, problem and result file models shared by the service and the CLI."""

from __future__ import annotations

from typing import Annotated, Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Discriminator, Field, Tag, field_validator, model_validator

SCHEMA_VERSION = "1.0"


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")


class Term(Strict):
    exponents: list[int]
    coeff: float


class InlineSpace(Strict):
    n: int = Field(ge=1)
    inequalities: list[list[Term]] = Field(min_length=1)
    ball_radius: float | None = Field(default=None, gt=0)
    radius_hint: float | None = Field(default=None, gt=0)
    name: str = "custom"

    @model_validator(mode="after")
    def _dimensions(self):
        for j, poly in enumerate(self.inequalities):
            for k, term in enumerate(poly):
                if len(term.exponents) != self.n:
                    raise ValueError(
                        f"inequalities[{j}][{k}]: exponents {term.exponents} have length != n = {self.n}"
                    )
                if any(e < 0 for e in term.exponents):
                    raise ValueError(f"inequalities[{j}][{k}]: negative exponent")
        return self


class PresetSpace(Strict):
    preset: str


def _space_kind(value) -> str:
    if isinstance(value, PresetSpace) or (isinstance(value, dict) and "preset" in value):
        return "preset"
    return "inline"


DesignSpace = Annotated[
    Union[Annotated[InlineSpace, Tag("inline")], Annotated[PresetSpace, Tag("preset")]],
    Discriminator(_space_kind),
]


class Regression(Strict):
    d: int = Field(ge=0)
    basis_matrix: list[list[float]] | None = None


class RecoverySettings(Strict):
    method: Literal["nie", "christoffel_min", "christoffel_trace"] = "nie"
    r: int = Field(default=1, ge=1)
    rank_tol: float = Field(default=1e-6, gt=0, lt=1)
    r_cap: int = Field(default=5, ge=1)
    random_objective: bool = False
    # custom lifting objective f_r, strictly positive on the design space
    objective: list[Term] | None = None
    polish: bool = True


class FixedMoment(Strict):
    exponents: list[int]
    value: float


class CertifySettings(Strict):
    samples: int = Field(default=2000, ge=1)
    sos: bool = True
    resolution: int = Field(default=100, ge=2)


class SolverSettings(Strict):
    feas_tol: float = Field(default=1e-8, gt=0)
    gap_tol: float = Field(default=1e-11, gt=0)
    max_iter: int = Field(default=200, ge=1)


class OutputPaths(Strict):
    result: str = "result.json"
    levelset: str = "levelset.csv"
    sdp: str = "relaxation.dat-s"


class Problem(Strict):
    schema_version: str = SCHEMA_VERSION
    design_space: DesignSpace
    regression: Regression
    criterion: str = "D"
    delta: int = Field(default=1, ge=0)
    recovery: RecoverySettings = RecoverySettings()
    fixed_moments: list[FixedMoment] = []
    seed: int = 0
    certify: CertifySettings = CertifySettings()
    solver: SolverSettings = SolverSettings()
    output: OutputPaths = OutputPaths()

    @field_validator("criterion")
    @classmethod
    def _criterion(cls, v: str) -> str:
        key = v.strip().upper()
        if key not in {"D", "A", "E"}:
            raise ValueError(f"criterion must be D, A or E, got {v!r}")
        return key

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v: str) -> str:
        if v.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
            raise ValueError(f"unsupported schema_version {v!r}; this build reads {SCHEMA_VERSION}")
        return v


class Moments(Strict):
    n: int
    order: int
    entries: list[dict[str, Any]]


class SolveSection(Strict):
    status: str
    rho_delta: float | None
    y_star: Moments | None
    y_lifted: Moments | None
    duals: dict[str, Any]
    diagnostics: dict[str, Any]


class DesignModel(Strict):
    points: list[list[float]]
    weights: list[float]
    residual: float | None
    ranks: list[int] | None
    method: str
    r: int | None
    polished: bool = False


class RecoverySection(Strict):
    design: DesignModel | None
    flat: bool
    degraded: bool
    r: int
    ranks: list[int] | None
    method: str
    attempts: list[dict[str, Any]]
    check: dict[str, Any] | None = None


class CertificateSection(Strict):
    report: dict[str, Any]
    sos: dict[str, Any] | None = None
    sos_error: str | None = None


class LevelsetSection(Strict):
    path: str | None
    resolution: int
    nodes: int
    inside: int
    min_pstar_inside: float | None


class ErrorInfo(Strict):
    type: str
    message: str
    location: str | None = None


class Result(Strict):
    schema_version: str = SCHEMA_VERSION
    problem: Problem
    solve: SolveSection | None = None
    recovery: RecoverySection | None = None
    certificate: CertificateSection | None = None
    levelset: LevelsetSection | None = None
    timing: dict[str, float] = {}
    exit_code: int | None = None
    error: ErrorInfo | None = None


class LevelsetResponse(Strict):
    result: Result
    csv: str | None = None


def _payload_kind(value) -> str:
    if isinstance(value, Result) or (isinstance(value, dict) and "problem" in value):
        return "result"
    return "problem"


# A result file from an earlier stage, or a bare problem file.
Payload = Annotated[
    Union[Annotated[Result, Tag("result")], Annotated[Problem, Tag("problem")]],
    Discriminator(_payload_kind),
]
