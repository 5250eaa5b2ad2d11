"""Ground-truth-known synthetic corpus generator and label-noise injector.

Each class gets an isotropic Gaussian feature cluster, a valence/arousal
anchor on a circumplex ring, and a multi-hot AU activation profile where
adjacent classes share one high-probability AU (so the co-occurrence graph
is non-trivial and relabeling has real structure to exploit). Label noise
flips the discrete label of an exact fraction of train samples to a
uniformly random different class; features, VA, and AU labels stay intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .manifest import (
    PROVENANCE_INJECTED,
    DatasetManifest,
    EmotionTaxonomy,
    Sample,
)

FLIPMASK_SCHEMA = "mtac-flipmask-v1"


class GeneratorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_classes: int = Field(default=7, ge=2)
    num_aus: int = Field(default=8, ge=1)
    feature_dim: int = Field(default=32, ge=1)
    cluster_separation: float = Field(default=1.0, ge=0.0)
    feature_noise: float = Field(default=1.0, ge=0.0)
    va_noise: float = Field(default=0.1, ge=0.0)
    au_flip_noise: float = Field(default=0.0, ge=0.0, le=1.0)  # chance of flipping each emitted AU bit
    va_radius: float = Field(default=0.8, gt=0.0, le=1.0)
    seed: int = 0
    va_anchors: Optional[list[tuple[float, float]]] = None  # default: circumplex ring
    au_profiles: Optional[list[list[float]]] = None  # default: overlapping multi-hot
    emit_va: bool = True
    emit_au: bool = True

    @field_validator("va_anchors")
    @classmethod
    def _anchors_in_square(cls, v):
        if v is not None:
            for a in v:
                if not (-1.0 <= a[0] <= 1.0 and -1.0 <= a[1] <= 1.0):
                    raise ValueError(f"VA anchor {a} outside the unit square")
        return v

    @field_validator("au_profiles")
    @classmethod
    def _profiles_are_probs(cls, v):
        if v is not None:
            for row in v:
                for p in row:
                    if not (0.0 <= p <= 1.0):
                        raise ValueError(f"AU profile probability {p} outside [0, 1]")
        return v

    def resolved_anchors(self) -> np.ndarray:
        if self.va_anchors is not None:
            if len(self.va_anchors) != self.num_classes:
                raise ValueError("va_anchors length must equal num_classes")
            return np.asarray(self.va_anchors, dtype=np.float64)
        angles = 2.0 * math.pi * np.arange(self.num_classes) / self.num_classes
        return self.va_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def resolved_profiles(self) -> np.ndarray:
        if self.au_profiles is not None:
            arr = np.asarray(self.au_profiles, dtype=np.float64)
            if arr.shape != (self.num_classes, self.num_aus):
                raise ValueError("au_profiles must be num_classes x num_aus")
            return arr
        # class c strongly activates AU (c mod M) and, more weakly, AU (c+1 mod M);
        # adjacent classes therefore share one AU, giving confusable structure
        prof = np.full((self.num_classes, self.num_aus), 0.05)
        for c in range(self.num_classes):
            prof[c, c % self.num_aus] = 0.9
            prof[c, (c + 1) % self.num_aus] = 0.6
        return prof


@dataclass
class FlipMask:
    """Ground truth of injected corruption: id -> (original, corrupted)."""

    flips: dict[str, tuple[int, int]]

    def __len__(self) -> int:
        return len(self.flips)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self.flips


def generate(config: GeneratorConfig, n_per_class, n_test_per_class=None) -> DatasetManifest:
    """Build a manifest with train and test splits from class-conditional draws."""
    n_per_class = np.broadcast_to(np.asarray(n_per_class, dtype=np.int64), (config.num_classes,))
    if n_test_per_class is None:
        n_test_per_class = np.maximum(1, n_per_class // 4)
    else:
        n_test_per_class = np.broadcast_to(np.asarray(n_test_per_class, dtype=np.int64), (config.num_classes,))
    if int(n_per_class.sum()) == 0:
        raise ValueError("corpus would contain zero train samples")

    rng = np.random.default_rng(config.seed)
    means = config.cluster_separation * rng.standard_normal((config.num_classes, config.feature_dim))
    anchors = config.resolved_anchors()
    profiles = config.resolved_profiles()

    records = []
    for split, counts in (("train", n_per_class), ("test", n_test_per_class)):
        for c in range(config.num_classes):
            for k in range(int(counts[c])):
                features = means[c] + config.feature_noise * rng.standard_normal(config.feature_dim)
                if config.emit_va:
                    va = np.clip(anchors[c] + config.va_noise * rng.standard_normal(2), -1.0, 1.0)
                    valence, arousal = float(va[0]), float(va[1])
                else:
                    valence = arousal = float("nan")
                au = None
                if config.emit_au:
                    au = (rng.random(config.num_aus) < profiles[c]).astype(np.int64)
                    if config.au_flip_noise > 0.0:
                        au ^= (rng.random(config.num_aus) < config.au_flip_noise).astype(np.int64)
                records.append(
                    Sample(
                        id=f"{split}-{c}-{k}",
                        split=split,
                        emotion=c,
                        valence=valence,
                        arousal=arousal,
                        au=au,
                        features=features,
                    )
                )
    return DatasetManifest(
        records=records,
        taxonomy=EmotionTaxonomy.default(config.num_classes),
        au_count=config.num_aus,
        feature_dim=config.feature_dim,
        mode="feature",
    )


def inject_label_noise(manifest: DatasetManifest, ratio: float, seed: int) -> tuple[DatasetManifest, FlipMask]:
    """Flip exactly floor(ratio * N_train) discrete labels, uniformly chosen.

    Each flipped sample gets a uniformly random *different* class. Only the
    discrete label is corrupted; VA and AU labels are untouched. Returns a
    new manifest (records are copied) plus the flip mask.
    """
    if not (0.0 <= ratio < 1.0):
        raise ValueError(f"noise ratio must lie in [0, 1), got {ratio}")
    rng = np.random.default_rng([seed, 997])
    train = manifest.train_records
    n_flips = int(ratio * len(train))
    flip_rows = set(rng.choice(len(train), size=n_flips, replace=False).tolist()) if n_flips else set()

    c = manifest.taxonomy.num_classes
    flips = {}
    new_records = []
    train_row = 0
    for r in manifest.records:
        rec = Sample(**{**r.__dict__})
        if r.split == "train":
            if train_row in flip_rows:
                original = rec.emotion
                corrupted = int((original + 1 + rng.integers(0, c - 1)) % c)
                rec.emotion = corrupted
                rec.label_provenance = PROVENANCE_INJECTED
                rec.flip_truth = original
                flips[rec.id] = (original, corrupted)
            train_row += 1
        new_records.append(rec)
    corrupted_manifest = DatasetManifest(
        records=new_records,
        taxonomy=manifest.taxonomy,
        au_count=manifest.au_count,
        feature_dim=manifest.feature_dim,
        mode=manifest.mode,
    )
    return corrupted_manifest, FlipMask(flips=flips)


def write_flip_mask(mask: FlipMask, path: str | Path) -> None:
    lines = [f"#schema={FLIPMASK_SCHEMA}"]
    for sid, (original, corrupted) in mask.flips.items():
        lines.append(f"{sid}\t{original}\t{corrupted}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_flip_mask(path: str | Path) -> FlipMask:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(f"#schema={FLIPMASK_SCHEMA}"):
        raise ValueError(f"not a {FLIPMASK_SCHEMA} file: {path}")
    flips = {}
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        sid, original, corrupted = line.split("\t")
        flips[sid] = (int(original), int(corrupted))
    return FlipMask(flips=flips)
