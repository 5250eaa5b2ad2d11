"""Per-class semantic centers, the memory template, and relabeling.

Centers are confidence-weighted sums of semantic logits divided by the
class count in the batch (count normalization, not weight normalization).
The template mixes each incoming center in with coefficient exp(-tau * h),
so it stabilizes as batches accumulate; a column is first set directly to
the first center observed for its class. Relabeling reassigns a gated
sample to the class of its nearest template column under cosine distance,
only when the original class is strictly not the nearest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class BatchCenters:
    centers: np.ndarray  # C x M; row j is the class-j center
    counts: np.ndarray  # length C, per-class batch counts
    present: np.ndarray  # length C bool, counts >= 1


def batch_centers(semantics, alphas, labels, num_classes: int) -> BatchCenters:
    s = np.asarray(semantics, dtype=np.float64)
    a = np.asarray(alphas, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.ndim != 2 or s.shape[0] != a.shape[0] or s.shape[0] != y.shape[0]:
        raise ValueError("semantics, alphas, labels must agree on the batch dimension")
    if s.shape[0] < 1:
        raise ValueError("empty batch")
    m = s.shape[1]
    centers = np.zeros((num_classes, m), dtype=np.float64)
    counts = np.zeros(num_classes, dtype=np.int64)
    np.add.at(centers, y, a[:, None] * s)
    np.add.at(counts, y, 1)
    present = counts >= 1
    centers[present] /= counts[present, None]
    return BatchCenters(centers=centers, counts=counts, present=present)


class MemoryTemplate:
    """Running per-class semantic centers with exponentially decaying updates."""

    def __init__(self, num_classes: int, num_aus: int, tau: float = 0.9):
        if not (0.0 < tau <= 1.0):
            raise ValueError(f"tau must lie in (0, 1], got {tau}")
        self.tau = tau
        self.columns = np.zeros((num_classes, num_aus), dtype=np.float64)
        self.initialized = np.zeros(num_classes, dtype=bool)
        self.batches_consumed = 0

    def update(self, centers: BatchCenters, h: Optional[int] = None) -> None:
        """Mix in one batch's centers; ``h`` defaults to the internal counter + 1."""
        if h is None:
            h = self.batches_consumed + 1
        if h < 1:
            raise ValueError(f"batch index must be >= 1, got {h}")
        coeff = math.exp(-self.tau * h)
        for j in np.flatnonzero(centers.present):
            if self.initialized[j]:
                self.columns[j] = (1.0 - coeff) * self.columns[j] + coeff * centers.centers[j]
            else:
                # anchor to the first observed center instead of mixing with zeros
                self.columns[j] = centers.centers[j]
                self.initialized[j] = True
        self.batches_consumed = h

    def reset_batch_counter(self) -> None:
        self.batches_consumed = 0

    def state(self) -> dict:
        return {
            "columns": self.columns.copy(),
            "initialized": self.initialized.copy(),
            "batches_consumed": self.batches_consumed,
            "tau": self.tau,
        }

    @classmethod
    def from_state(cls, state: dict) -> "MemoryTemplate":
        t = cls(state["columns"].shape[0], state["columns"].shape[1], state["tau"])
        t.columns = np.array(state["columns"], dtype=np.float64)
        t.initialized = np.array(state["initialized"], dtype=bool)
        t.batches_consumed = int(state["batches_consumed"])
        return t


def cosine_distance(s, t) -> float:
    """1 - cosine similarity, in [0, 2]; a zero vector yields 1 (uninformative)."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    ns = np.linalg.norm(s)
    nt = np.linalg.norm(t)
    if ns == 0.0 or nt == 0.0:
        return 1.0
    return float(1.0 - (t @ s) / (nt * ns))


@dataclass
class RelabelDecision:
    sample_id: str
    original: int
    new_label: int
    distances: list  # length C; None for uninitialized template columns
    applied: bool
    reason: str
    alpha: float
    zero_vector: bool = False


@dataclass
class GateConfig:
    """Eligibility gate: only samples in the lowest alpha quantile are examined."""

    quantile: float = 0.2

    def __post_init__(self):
        if not (0.0 < self.quantile <= 1.0):
            raise ValueError(f"gate quantile must lie in (0, 1], got {self.quantile}")


def relabel(
    semantics,
    alphas,
    labels,
    sample_ids: list[str],
    template: MemoryTemplate,
    gate: GateConfig,
) -> list[RelabelDecision]:
    """Evaluate the gated samples of a batch against the template columns.

    A decision is recorded for every sample that passes the alpha gate; it is
    applied only when some other initialized column is strictly nearer than
    the original class column (ties keep the original label).
    """
    s = np.asarray(semantics, dtype=np.float64)
    a = np.asarray(alphas, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    threshold = np.quantile(a, gate.quantile)
    decisions = []
    for i in range(s.shape[0]):
        if a[i] > threshold:
            continue
        org = int(y[i])
        if not template.initialized[org]:
            decisions.append(
                RelabelDecision(sample_ids[i], org, org, [None] * len(template.initialized), False, "org-template-uninitialized", float(a[i]))
            )
            continue
        zero_vec = bool(np.linalg.norm(s[i]) == 0.0)
        dists: list = [None] * len(template.initialized)
        best_j, best_d = org, None
        for j in np.flatnonzero(template.initialized):
            d = cosine_distance(s[i], template.columns[j])
            zero_vec = zero_vec or bool(np.linalg.norm(template.columns[j]) == 0.0)
            dists[j] = d
            if best_d is None or d < best_d:
                best_d, best_j = d, int(j)
        if best_j != org and best_d < dists[org]:
            decisions.append(RelabelDecision(sample_ids[i], org, best_j, dists, True, "applied", float(a[i]), zero_vec))
        else:
            decisions.append(RelabelDecision(sample_ids[i], org, org, dists, False, "original-nearest", float(a[i]), zero_vec))
    return decisions
