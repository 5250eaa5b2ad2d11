"""Request/response models for the HTTP service.

Paths in requests refer to the filesystem the service runs on; the bundled
CLI talks to an in-process app by default, so they are ordinary local paths.
"""

from __future__ import annotations

from typing import Optional, Union

from pydantic import BaseModel, Field

from .synth import GeneratorConfig
from .trainer import TrainConfig


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    out_dir: str
    generator: GeneratorConfig = GeneratorConfig()
    n_per_class: Union[int, list[int]] = 700
    n_test_per_class: Optional[Union[int, list[int]]] = None
    noise: float = Field(default=0.0, ge=0.0, lt=1.0)
    noise_seed: Optional[int] = None  # defaults to the generator seed


class SynthResponse(BaseModel):
    manifest_path: str
    mask_path: Optional[str]
    n_train: int
    n_test: int
    n_flipped: int


class TrainRequest(BaseModel):
    manifest_path: str
    out_dir: str
    mask_path: Optional[str] = None  # sidecar for an already-corrupted manifest
    noise: float = Field(default=0.0, ge=0.0, lt=1.0)  # inject into a clean manifest here
    noise_seed: Optional[int] = None  # defaults to config.seed
    config: TrainConfig = TrainConfig()
    tags: dict = {}


class TrainResponse(BaseModel):
    out_dir: str
    config_hash: str
    checkpoint_path: str
    epochs: int
    final: dict


class EvaluateRequest(BaseModel):
    checkpoint_path: str
    manifest_path: str
    split: str = "test"


class EvaluateResponse(BaseModel):
    split: str
    n: int
    accuracy: float
    per_class_accuracy: list[Optional[float]]
    confusion: list[list[int]]
    ccc_valence: Optional[float]
    ccc_arousal: Optional[float]


class AuditRequest(BaseModel):
    audit_path: str
    mask_path: Optional[str] = None


class AuditResponse(BaseModel):
    n_decisions: int
    n_applied: int
    n_examined: int
    n_corrected: int
    n_flipped: Optional[int]
    n_corrected_to_truth: Optional[int]
    precision: Optional[float]
    recall: Optional[float]
    per_class: Optional[list[dict]]


class ReportRequest(BaseModel):
    roots: Union[str, list[str]]
    csv_path: Optional[str] = None


class ReportResponse(BaseModel):
    table: str
    csv_path: Optional[str]
