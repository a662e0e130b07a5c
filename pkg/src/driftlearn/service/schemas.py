"""Request/response models for the HTTP service."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SessionCreateRequest(BaseModel):
    """Flat config overrides plus the seed for this session's weights."""

    config: dict = Field(default_factory=dict)
    seed: int = 0


class SessionInfo(BaseModel):
    session_id: str
    seed: int
    features: int
    n_classes: int
    depth: int
    width: int
    batches_seen: int


class SessionList(BaseModel):
    sessions: list[SessionInfo]


class PredictRequest(BaseModel):
    sensors: Optional[list[list[float]]] = None
    images: Optional[list] = None


class PredictResponse(BaseModel):
    probabilities: list[list[float]]
    predictions: list[int]


class TrainRequest(BaseModel):
    labels: list[int]


class BatchMetrics(BaseModel):
    batch: int
    size: int
    accuracy: float
    cumulative_accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    depth: int
    width: int
    drift_state: str
    grown: int
    pruned: int
    layer_added: bool
    replayed: int


class RunRequest(BaseModel):
    config: dict = Field(default_factory=dict)
    toggles: list[str] = Field(default_factory=list)


class RunStatus(BaseModel):
    run_id: str
    status: str
    summary: Optional[dict] = None
    report: Optional[dict] = None
    error: Optional[str] = None


class DatasetRequest(BaseModel):
    config: dict = Field(default_factory=dict)
    path: str


class DatasetResponse(BaseModel):
    path: str
    rows: int
