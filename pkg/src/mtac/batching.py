"""Deterministic batch iteration over a manifest's train split.

The shuffle for an epoch depends only on (seed, epoch), so any epoch can be
replayed independently. The global batch index h is 1-based and increments
by one per emitted batch across epochs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .manifest import DatasetManifest, Sample


@dataclass
class Batch:
    samples: list[Sample]
    epoch_index: int
    batch_index: int  # global, 1-based, strictly increasing over the run

    def __len__(self) -> int:
        return len(self.samples)


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffled index order for one epoch, a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


class BatchPlan:
    """Partitions a fixed set of records into shuffled batches per epoch."""

    def __init__(self, records: list[Sample], batch_size: int, seed: int):
        if not records:
            raise ValueError("cannot iterate batches over an empty record set")
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        if batch_size > len(records):
            raise ValueError(f"batch_size {batch_size} exceeds dataset size {len(records)}")
        self.records = records
        self.batch_size = batch_size
        self.seed = seed
        self.batches_per_epoch = (len(records) + batch_size - 1) // batch_size

    def epoch_batches(self, epoch: int) -> Iterator[Batch]:
        order = epoch_permutation(len(self.records), self.seed, epoch)
        base = epoch * self.batches_per_epoch
        for i in range(self.batches_per_epoch):
            idx = order[i * self.batch_size : (i + 1) * self.batch_size]
            yield Batch(
                samples=[self.records[j] for j in idx],
                epoch_index=epoch,
                batch_index=base + i + 1,
            )


def iterate_batches(
    manifest: DatasetManifest,
    batch_size: int,
    seed: int,
    num_epochs: int = 1,
    split: str = "train",
) -> Iterator[Batch]:
    plan = BatchPlan(manifest.split_records(split), batch_size, seed)
    for epoch in range(num_epochs):
        yield from plan.epoch_batches(epoch)
