"""Request and response models for the HTTP service."""
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field


class TermRequest(BaseModel):
    text: str


class TermResponse(BaseModel):
    canonical: str
    nodes: int


class ContextModel(BaseModel):
    time: int
    point: Optional[Tuple[int, int]] = None
    owners: List[str] = []
    events: List[str] = []


class HoldsRequest(BaseModel):
    text: str
    context: ContextModel


class HoldsResponse(BaseModel):
    truth: str


class FilterRequest(BaseModel):
    text: str
    time: int
    owner: Optional[str] = None


class SnapshotRequest(BaseModel):
    model: List[str]
    time: int


class OwnedBox(BaseModel):
    owner: str
    box: Tuple[int, int, int, int]


class SnapshotResponse(BaseModel):
    time: int
    boxes: List[OwnedBox]


class CoverageRequest(BaseModel):
    snapshot: SnapshotResponse
    owner: str
    area: Tuple[int, int, int, int]


class CoverageResponse(BaseModel):
    covered: int
    total: int
    value: float


class OverlapRequest(BaseModel):
    a: Tuple[int, int, int, int]
    b: Tuple[int, int, int, int]


class ProfileModel(BaseModel):
    id: str
    capabilities: List[str]
    availability: List[Tuple[int, int]]
    location: Tuple[int, int]
    device: str


class IncidentModel(BaseModel):
    event_id: str
    location: Tuple[int, int]
    required_capability: str
    time: int


class MatchRequest(BaseModel):
    incident: IncidentModel
    profiles: List[ProfileModel]


class AssignRequest(BaseModel):
    incidents: List[IncidentModel]
    profiles: List[ProfileModel]


class RenderRequest(BaseModel):
    commands: str = Field(description="command list in the cmd/overlay line format")


class BindingModel(BaseModel):
    device: Optional[str] = None
    type: str
    attributes: List[Tuple[str, str]]
    overlays: List[List[Tuple[str, str]]] = []
    extras: List[Tuple[str, str]] = []


class LinesRequest(BaseModel):
    lines: List[str]


class LinesResponse(BaseModel):
    replies: List[str]


class CheckRequest(BaseModel):
    at: int


class CheckResponse(BaseModel):
    triggered: List[str]
    xml: str


class StatusResponse(BaseModel):
    running: bool
    now: Optional[int] = None
    queued: int = 0
    pending_groups: int = 0
    events_in: int = 0
    malformed: int = 0
    rejected: int = 0
    weather_cells: int = 0
    weather_skipped: int = 0
    coalesced_groups: int = 0
    rules_fired: int = 0
    commands_out: int = 0
