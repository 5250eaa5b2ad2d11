"""AU branch: co-occurrence adjacency, graph convolution, semantic logits.

The graph has one node per AU. Edges are conditional co-occurrence
probabilities counted from the training labels: A[p, q] = P(AU_p | AU_q),
which is asymmetric in general. The row-normalized matrix drives a two-layer
graph convolution over per-sample node features projected from the (gradient
stopped) backbone output; the per-AU pre-sigmoid logits are the sample's
semantic representation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

ROW_SUM_TOL = 1e-9
LEAKY_SLOPE = 0.01

EDGE_MODES = ("data", "random", "fixed")


@dataclass
class CoOccurrenceCounts:
    pair_counts: np.ndarray  # M x M, symmetric, diagonal equals marginals
    marginal_counts: np.ndarray  # length M
    source_size: int


@dataclass
class AUAdjacency:
    conditional: np.ndarray  # M x M, [p, q] = P(AU_p | AU_q)
    normalized: np.ndarray  # row-stochastic


def build_cooccurrence(au_labels) -> CoOccurrenceCounts:
    z = np.asarray(au_labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise ValueError("au_labels must be a non-empty N x M binary matrix")
    if not np.isin(z, (0, 1)).all():
        raise ValueError("au_labels must be 0/1")
    pair = z.T @ z
    return CoOccurrenceCounts(pair_counts=pair, marginal_counts=np.diag(pair).copy(), source_size=z.shape[0])


def row_normalize(a: np.ndarray) -> np.ndarray:
    """Rows rescaled to sum to one; all-zero rows fall back to uniform."""
    a = np.asarray(a, dtype=np.float64)
    sums = a.sum(axis=1, keepdims=True)
    out = np.where(sums > 0, a / np.where(sums == 0, 1.0, sums), 1.0 / a.shape[1])
    return out


def conditional_adjacency(counts: CoOccurrenceCounts) -> AUAdjacency:
    pair = counts.pair_counts
    occ = counts.marginal_counts
    m = occ.shape[0]
    a = np.zeros((m, m), dtype=np.float64)
    for q in range(m):
        if occ[q] > 0:
            a[:, q] = pair[:, q] / occ[q]
        else:
            # never-observed AU: keep only the self edge
            a[q, q] = 1.0
    return AUAdjacency(conditional=a, normalized=row_normalize(a))


def random_adjacency(m: int, rng: np.random.Generator) -> AUAdjacency:
    a = rng.uniform(0.0, 1.0, size=(m, m))
    return AUAdjacency(conditional=a, normalized=row_normalize(a))


def fixed_adjacency(m: int) -> AUAdjacency:
    a = np.ones((m, m), dtype=np.float64)
    return AUAdjacency(conditional=a, normalized=row_normalize(a))


def make_adjacency(mode: str, au_labels, m: int, rng: np.random.Generator | None = None) -> AUAdjacency:
    if mode == "data":
        return conditional_adjacency(build_cooccurrence(au_labels))
    if mode == "random":
        if rng is None:
            raise ValueError("random edge mode needs an rng")
        return random_adjacency(m, rng)
    if mode == "fixed":
        return fixed_adjacency(m)
    raise ValueError(f"unknown edge mode {mode!r}; expected one of {EDGE_MODES}")


class GCNStack(nn.Module):
    """Projection to per-AU node features, two graph-conv layers, per-AU outputs."""

    def __init__(self, feature_dim: int, num_aus: int, channels: int = 64):
        super().__init__()
        self.num_aus = num_aus
        self.channels = channels
        self.project = nn.Linear(feature_dim, num_aus * channels)
        self.gc1 = nn.Linear(channels, channels, bias=False)
        self.gc2 = nn.Linear(channels, channels, bias=False)
        self.out_weight = nn.Parameter(torch.empty(num_aus, channels))
        self.out_bias = nn.Parameter(torch.zeros(num_aus))
        nn.init.kaiming_uniform_(self.out_weight, a=5 ** 0.5)

    def forward(self, features: torch.Tensor, adjacency: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.project(features).reshape(features.shape[0], self.num_aus, self.channels)
        x = torch.nn.functional.leaky_relu(adjacency @ self.gc1(x), LEAKY_SLOPE)
        x = torch.nn.functional.leaky_relu(adjacency @ self.gc2(x), LEAKY_SLOPE)
        s = (x * self.out_weight).sum(dim=2) + self.out_bias
        return s, torch.sigmoid(s)


def semantic_forward(
    features: torch.Tensor,
    stack: GCNStack,
    adjacency,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-sample AU logits s and probabilities p from gradient-stopped features.

    Gradients flow to the stack's parameters but never into ``features``;
    the input is detached here so the AU branch cannot move the backbone.
    """
    adj = np.asarray(adjacency.normalized if isinstance(adjacency, AUAdjacency) else adjacency, dtype=np.float64)
    row_sums = adj.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
        raise ValueError("adjacency rows must sum to 1 (pass the normalized matrix)")
    adj_t = torch.as_tensor(adj, dtype=features.dtype, device=features.device)
    return stack(features.detach(), adj_t)


def export_adjacency(adjacency: AUAdjacency, path: str | Path, comments: list[str] | None = None) -> None:
    """Plain-text M x M dump with 12-significant-digit entries for audit."""
    lines = [f"# {c}" for c in (comments or [])]
    for row in adjacency.normalized:
        lines.append(" ".join(f"{v:.12g}" for v in row))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
