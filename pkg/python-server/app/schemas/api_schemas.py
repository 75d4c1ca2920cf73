"""
Pydantic schemas for the policy bridge.

These define the JSON text frames exchanged over the websocket and the
mock server's health response.
"""

from enum import Enum
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, conlist, model_validator

Numbers6 = conlist(float, min_length=6, max_length=6)
Numbers7 = conlist(float, min_length=7, max_length=7)


class Proprio(BaseModel):
    """Proprioceptive state: pose is xyz + wxyz, twist and wrench are linear then angular."""

    model_config = ConfigDict(allow_inf_nan=False)

    pose: Numbers7
    twist: Numbers6
    wrench: Numbers6
    gripper: float


class ObservationMessage(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False)

    type: Literal["observation"] = "observation"
    seq: int
    timestamp: float
    proprio: Proprio
    images: Optional[Dict[str, str]] = None


class ActionChunkMessage(BaseModel):
    """Actions are [dx, dy, dz, droll, dpitch, dyaw, gripper]."""

    model_config = ConfigDict(allow_inf_nan=False)

    type: Literal["action_chunk"] = "action_chunk"
    seq: int
    actions: List[Numbers7]
    horizon: int = Field(ge=1)

    @model_validator(mode="after")
    def _horizon_matches(self) -> "ActionChunkMessage":
        if self.horizon != len(self.actions):
            raise ValueError(
                f"horizon {self.horizon} does not match {len(self.actions)} actions"
            )
        return self


class ErrorCode(str, Enum):
    BAD_REQUEST = "BadRequest"
    OVERLOADED = "Overloaded"
    INTERNAL = "Internal"


class ErrorMessage(BaseModel):
    type: Literal["error"] = "error"
    seq: int
    code: ErrorCode
    detail: str


class HealthResponse(BaseModel):
    status: str = "ok"
    policy_kind: str
    waypoints: int
    connections: int
    max_connections: int
