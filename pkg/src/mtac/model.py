"""Shared backbone and the target-branch heads.

The backbone maps raw inputs (feature vectors, or 32x32 grayscale images in
image mode) to a shared representation consumed by all heads. The confidence
head produces a per-sample score in (0, 1); the classifier head produces
class logits; the VA head regresses valence/arousal through tanh.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

CHECKPOINT_SCHEMA = "mtac-checkpoint-v1"

# keeps the confidence score strictly inside (0, 1) under float saturation
ALPHA_CLAMP = 1e-6


class MlpBackbone(nn.Module):
    def __init__(self, input_dim: int, feature_dim: int = 64, hidden_dim: int = 128):
        super().__init__()
        self.input_dim = input_dim
        self.feature_dim = feature_dim
        self.fc1 = nn.Linear(input_dim, hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, feature_dim)
        self.act = nn.LeakyReLU(0.01)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"expected N x {self.input_dim} input, got {tuple(x.shape)}")
        return self.fc2(self.act(self.fc1(x)))


class ConvBackbone(nn.Module):
    """Three conv blocks over 1x32x32 inputs, then a linear projection."""

    def __init__(self, feature_dim: int = 64):
        super().__init__()
        self.feature_dim = feature_dim
        blocks = []
        channels = [1, 16, 32, 64]
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            blocks += [nn.Conv2d(c_in, c_out, 3, padding=1), nn.LeakyReLU(0.01), nn.MaxPool2d(2)]
        self.blocks = nn.Sequential(*blocks)
        self.head = nn.Linear(64 * 4 * 4, feature_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1:] != (1, 32, 32):
            raise ValueError(f"expected N x 1 x 32 x 32 input, got {tuple(x.shape)}")
        h = self.blocks(x)
        return self.head(h.flatten(1))


class ConfidenceHead(nn.Module):
    def __init__(self, feature_dim: int, bias: bool = True):
        super().__init__()
        self.fc = nn.Linear(feature_dim, 1, bias=bias)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        a = torch.sigmoid(self.fc(features)).squeeze(1)
        return a.clamp(ALPHA_CLAMP, 1.0 - ALPHA_CLAMP)


class ClassifierHead(nn.Module):
    def __init__(self, feature_dim: int, num_classes: int):
        super().__init__()
        self.fc = nn.Linear(feature_dim, num_classes)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.fc(features)


class VAHead(nn.Module):
    def __init__(self, feature_dim: int):
        super().__init__()
        self.fc = nn.Linear(feature_dim, 2)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.fc(features))


def predict_classes(logits: torch.Tensor) -> np.ndarray:
    """Argmax with ties broken toward the lowest class index."""
    return np.argmax(logits.detach().cpu().numpy(), axis=1)


def build_backbone(mode: str, input_dim: int, feature_dim: int, hidden_dim: int = 128) -> nn.Module:
    if mode == "image":
        return ConvBackbone(feature_dim)
    return MlpBackbone(input_dim, feature_dim, hidden_dim)


def save_checkpoint(path: str | Path, payload: dict) -> None:
    """Write a versioned checkpoint container.

    ``payload`` holds named state dicts plus the config snapshot, counters,
    and memory-template state; this function only stamps the schema field.
    """
    payload = dict(payload)
    payload["schema"] = CHECKPOINT_SCHEMA
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"not a {CHECKPOINT_SCHEMA} checkpoint: {path}")
    return payload
