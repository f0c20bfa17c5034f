"""
Pydantic schemas for parameters, generator settings and experiment configs.
"""
from typing import Dict, List, Literal, Optional, Any

from pydantic import BaseModel, Field, validator, root_validator

from bcomd.config import settings


class RegularityMeasures(BaseModel):
    """Path length of the comparator sequence and temporal variation of the losses"""

    P_T: float = Field(..., ge=0)
    V_T: float = Field(..., ge=0)


class ManualParams(BaseModel):
    eta: float = Field(..., gt=0)
    mu: float = Field(..., ge=0)
    gamma: float = Field(..., ge=0)
    omega: float = Field(0.0, ge=0)


class BcomdParams(BaseModel):
    n: int = Field(..., ge=2)
    T: int = Field(..., ge=1)
    rho: float = Field(1.0, gt=0, le=1)
    M: Optional[float] = None
    c_T: Optional[float] = None
    eta: float = Field(..., gt=0)
    mu: float = Field(..., ge=0)
    gamma: float = Field(..., ge=0)
    omega: float = Field(0.0, ge=0)
    mode: Literal["theorem1", "manual", "exp3"] = "manual"

    class Config:
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def check_truncation(cls, values):
        if values["gamma"] * values["n"] > 1.0 + settings.NORMALIZATION_TOL:
            raise ValueError(f"gamma * n must be <= 1, got {values['gamma'] * values['n']}")
        return values

    @property
    def ignores_constraints(self) -> bool:
        return self.mode == "exp3"


class TraceGenConfig(BaseModel):
    n: int = Field(25, ge=2)
    T: Optional[int] = Field(None, ge=1)
    window: int = Field(settings.TRACE_WINDOWS["long"], ge=1)
    shift: int = Field(5, ge=0)
    repetitions: Optional[int] = Field(6, ge=0)
    noise_std: float = Field(0.1, ge=0)
    rho_target: float = Field(0.0, ge=0)
    clip_mode: Literal["clip"] = "clip"
    index_base: Literal[0, 1] = 1
    allow_infeasible: bool = False

    @validator("shift")
    def shift_below_n(cls, v, values):
        if "n" in values and v >= values["n"]:
            raise ValueError(f"shift must be smaller than n={values['n']}")
        return v

    @property
    def horizon(self) -> int:
        if self.T is not None:
            return self.T
        reps = self.repetitions if self.repetitions is not None else 0
        return self.window * (reps + 1)

    @classmethod
    def preset(cls, name: str, **overrides) -> "TraceGenConfig":
        if name not in settings.TRACE_WINDOWS:
            raise ValueError(f"unknown trace preset: {name}")
        return cls(window=settings.TRACE_WINDOWS[name], **overrides)


class FixtureSpec(BaseModel):
    kind: Literal["vt_small_pt_large", "vt_large_pt_small"]
    T: int = Field(..., ge=2)
    n: int = Field(3, ge=2)
    rho: float = Field(0.5, gt=0, le=1)


class TraceSource(BaseModel):
    path: Optional[str] = None
    generator: Optional[TraceGenConfig] = None
    fixture: Optional[FixtureSpec] = None
    seed: int = 0

    @root_validator(skip_on_failure=True)
    def exactly_one(cls, values):
        given = [k for k in ("path", "generator", "fixture") if values.get(k) is not None]
        if len(given) != 1:
            raise ValueError(f"trace source needs exactly one of path/generator/fixture, got {given}")
        return values


class PolicySpec(BaseModel):
    kind: Literal["bcomd-theorem1", "bcomd-manual", "mbcomd", "exp3"]
    regularity: Optional[RegularityMeasures] = None
    manual: Optional[ManualParams] = None
    preset: Optional[str] = None
    exp3_eta: Optional[float] = Field(None, gt=0)
    cap_grid: bool = False
    expert_stabilizer: bool = True

    @root_validator(skip_on_failure=True)
    def complete_for_mode(cls, values):
        kind = values["kind"]
        if kind == "bcomd-manual" and values.get("manual") is None and values.get("preset") is None:
            raise ValueError("bcomd-manual needs manual parameters or a preset name")
        preset = values.get("preset")
        if preset is not None and preset not in settings.MANUAL_PRESETS:
            raise ValueError(f"unknown preset: {preset}")
        return values

    def label(self) -> str:
        if self.kind == "bcomd-manual" and self.manual is not None:
            m = self.manual
            return f"{self.kind}[eta={m.eta:g},mu={m.mu:g},gamma={m.gamma:g},omega={m.omega:g}]"
        if self.preset:
            return f"{self.kind}[{self.preset}]"
        return self.kind


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    trace: TraceSource
    policy: PolicySpec
    rho: float = Field(1.0, gt=0, le=1)
    seeds: List[int] = Field(default_factory=lambda: list(range(settings.DEFAULT_SEEDS)))
    out_dir: str = settings.RESULTS_DIR
    emit_distributions: bool = False
    jobs: int = Field(1, ge=1)
    # None relaxes infeasible comparator slots for every policy but bcomd-theorem1
    relax_comparator: Optional[bool] = None

    @validator("seeds")
    def at_least_one_seed(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        return v

    @property
    def relax(self) -> bool:
        if self.relax_comparator is None:
            return self.policy.kind != "bcomd-theorem1"
        return self.relax_comparator


class RunSummary(BaseModel):
    name: str
    policy: str
    seed: int
    T: int
    final_regret: float
    final_expected_regret: float
    final_violation: float
    max_lambda: float
    P_T: float
    V_T: float
    rho_hat: float
    wall_clock: float
    csv_path: Optional[str] = None
    status: str = "ok"
    error: Optional[str] = None
    extra: Dict[str, Any] = Field(default_factory=dict)
