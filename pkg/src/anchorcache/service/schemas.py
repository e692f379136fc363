"""Pydantic request/response models for the HTTP surface.

EngineSettings mirrors the CLI flags one-to-one; ScheduleDoc mirrors the
schedule JSON file format. Structural validation happens here (field types,
ranges that pydantic can express); cross-field invariants are enforced by the
core and surfaced as 422s with a field path.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class PromptSeed(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int


class ScheduleDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d_model: int = Field(ge=1)
    prompts: list[PromptSeed] = Field(min_length=1)
    boundaries: list[int] = Field(default_factory=list)
    total_frames: int = Field(ge=1)


class EngineSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    strategy: Literal["baseline", "flush", "anchor"] = "anchor"
    rope_mode: Literal["tri", "bounded", "unbounded"] = "tri"
    sink: int = Field(default=3, ge=0)
    junction: int = Field(default=3, ge=0)
    window: int = Field(default=9, ge=1)
    p_max: int = Field(default=21, ge=1)
    rope_base: float = Field(default=10000.0, gt=1.0)
    n_heads: int = Field(default=4, ge=1)
    tokens_per_frame: int = Field(default=4, ge=1)
    weight_seed: int = 0
    noise_seed: int = 0
    checked: bool = False


class BreachInfo(BaseModel):
    invariant: str
    frame: int
    detail: str = ""


class RunRequest(BaseModel):
    schedule: ScheduleDoc
    settings: EngineSettings = EngineSettings()


class RunResponse(BaseModel):
    ok: bool
    header: dict
    frames: list[dict] = []
    breach: Optional[BreachInfo] = None


class CheckRequest(BaseModel):
    jsonl: str


class CheckItem(BaseModel):
    name: str
    passed: bool
    violations: int
    first_frame: Optional[int] = None
    first_line: Optional[int] = None
    detail: str = ""


class CheckResponse(BaseModel):
    passed: bool
    checks: list[CheckItem]


class CompareRequest(BaseModel):
    schedule: ScheduleDoc
    settings: EngineSettings = EngineSettings()
    strategies: list[Literal["baseline", "flush", "anchor"]] = Field(min_length=2)
    probe_offsets: list[int] = Field(default_factory=lambda: [5])


class CompareResponse(BaseModel):
    report: dict


class SessionCreateRequest(BaseModel):
    schedule: ScheduleDoc
    settings: EngineSettings = EngineSettings()


class SessionInfo(BaseModel):
    session_id: str
    t: int
    total_frames: int
    done: bool


class StepRequest(BaseModel):
    steps: int = Field(default=1, ge=1)


class StepResponse(BaseModel):
    frames: list[dict]
    t: int
    done: bool
    breach: Optional[BreachInfo] = None


class SnapshotResponse(BaseModel):
    snapshot: dict


class RestoreRequest(BaseModel):
    snapshot: dict


class HealthResponse(BaseModel):
    status: str
    version: str
