"""Wire models for the /api/v1 JSON API.

Pose wire format: {"p": [x, y, z], "q": [x, y, z, w]}, meters, w-last.
"""

from __future__ import annotations

import math

from pydantic import BaseModel, Field, field_validator

from ..geometry import Pose


class PoseModel(BaseModel):
    p: list[float] = Field(..., min_length=3, max_length=3)
    q: list[float] = Field(..., min_length=4, max_length=4)

    @field_validator("p", "q")
    @classmethod
    def finite(cls, v):
        if not all(math.isfinite(x) for x in v):
            raise ValueError("pose components must be finite")
        return v

    @field_validator("q")
    @classmethod
    def unit(cls, v):
        n = math.sqrt(sum(x * x for x in v))
        if abs(n - 1.0) > 1e-3:
            raise ValueError("quaternion must be unit length")
        return v

    def to_pose(self) -> Pose:
        return Pose(self.p, self.q)

    @staticmethod
    def from_pose(pose: Pose) -> "PoseModel":
        d = pose.to_dict()
        return PoseModel(p=d["p"], q=d["q"])


class CreateSessionRequest(BaseModel):
    dataset: str | None = None      # assembly id or index within the served dataset
    seed: int | None = None         # procedural session when no dataset is given
    scene_seed: int = 0
    completion: str | None = None   # override the server default


class ObjectDescriptor(BaseModel):
    id: str
    mesh_url: str
    pose: PoseModel
    gt_start: PoseModel


class KitDescriptor(BaseModel):
    mesh_url: str
    pose: PoseModel


class SessionDescriptor(BaseModel):
    session_id: str
    revision: int
    objects: list[ObjectDescriptor]
    kit: KitDescriptor
    bounds: list[list[float]]
    completion: str


class ScenePayload(BaseModel):
    revision: int
    objects: list[ObjectDescriptor]
    kit: KitDescriptor
    bounds: list[list[float]]


class GoalItem(BaseModel):
    object_id: str
    pose: PoseModel


class GoalsRequest(BaseModel):
    goals: list[GoalItem] = Field(..., min_length=1)


class SnappedGoal(BaseModel):
    object_id: str
    pose: PoseModel
    position_score: float
    plan_id: str


class GoalsResponse(BaseModel):
    snapped: list[SnappedGoal]
    plan_ids: list[str]
    revision: int


class PlanStatus(BaseModel):
    status: str  # queued | running | done | failed
    reason: str | None = None
    resulting_revision: int | None = None


class ErrorPayload(BaseModel):
    code: str
    message: str
