"""Objective functions and their scheduling weights.

Everything here is a pure function of torch tensors (dtype-agnostic), with
gradients available for every parameter-bearing input. Conventions:

- the confidence score alpha scales the logits inside the softmax, so a low
  alpha flattens the predicted distribution of a suspect sample;
- the per-class CCC terms are computed over the samples of each class in the
  current batch, and classes with fewer than two samples are skipped;
- the AU binary cross-entropy is summed over AUs and averaged over the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import torch

CCC_EPS = 1e-8
BCE_EPS = 1e-7


@dataclass
class ClassWeights:
    """Per-class balance weights: gamma_j = 1 - N_j / N."""

    gamma: np.ndarray  # length-C float64
    source_counts: np.ndarray  # length-C int64
    population: int

    def gamma_fractions(self) -> list[Fraction]:
        """Exact rational values; their sum is C - 1 identically."""
        return [Fraction(self.population - int(c), self.population) for c in self.source_counts]

    def as_tensor(self, dtype=torch.float32) -> torch.Tensor:
        return torch.as_tensor(self.gamma, dtype=dtype)


def class_weights(counts) -> ClassWeights:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 1:
        raise ValueError("counts must be a 1-D vector")
    if np.any(counts < 0):
        raise ValueError("class counts cannot be negative")
    population = int(counts.sum())
    if population == 0:
        raise ValueError("cannot derive class weights from all-zero counts")
    gamma = 1.0 - counts / population
    return ClassWeights(gamma=gamma, source_counts=counts, population=population)


def confidence_weighted_ce(
    logits: torch.Tensor,
    labels: torch.Tensor,
    alphas: torch.Tensor,
    class_gamma: torch.Tensor | None = None,
) -> torch.Tensor:
    """Cross-entropy over alpha-scaled logits, averaged over the batch.

    ``class_gamma`` optionally weights each sample's term by the balance
    weight of its class (used when the VA branch is disabled and category
    balancing moves into the classifier loss).
    """
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ValueError(f"logits {tuple(logits.shape)} do not match labels {tuple(labels.shape)}")
    if torch.isnan(logits).any():
        raise ValueError("NaN logits")
    if torch.any(alphas <= 0) or torch.any(alphas > 1):
        raise ValueError("confidence scores must lie in (0, 1]")
    scaled = alphas.unsqueeze(1) * logits
    log_probs = torch.log_softmax(scaled, dim=1)
    per_sample = -log_probs[torch.arange(labels.shape[0]), labels]
    if class_gamma is not None:
        per_sample = per_sample * class_gamma[labels]
    return per_sample.mean()


def ccc(y: torch.Tensor, y_hat: torch.Tensor, eps: float = CCC_EPS) -> torch.Tensor:
    """Concordance correlation coefficient with population (1/K) statistics."""
    if y.ndim != 1 or y_hat.shape != y.shape:
        raise ValueError("ccc expects two 1-D tensors of equal length")
    k = y.shape[0]
    if k < 2:
        raise ValueError(f"ccc is degenerate for fewer than 2 points (got {k})")
    mu_y = y.mean()
    mu_hat = y_hat.mean()
    var_y = ((y - mu_y) ** 2).mean()
    var_hat = ((y_hat - mu_hat) ** 2).mean()
    cov = ((y - mu_y) * (y_hat - mu_hat)).mean()
    return 2.0 * cov / (var_y + var_hat + (mu_y - mu_hat) ** 2 + eps)


def weighted_ccc_loss(
    va_pred: torch.Tensor,
    va_label: torch.Tensor,
    labels: torch.Tensor,
    gamma: torch.Tensor,
) -> torch.Tensor:
    """Sum over classes of gamma_j * (1 - mean of the valence/arousal CCCs).

    Classes with fewer than 2 samples in the batch contribute 0 (a single
    point has no trend).
    """
    if va_pred.shape != va_label.shape or va_pred.ndim != 2 or va_pred.shape[1] != 2:
        raise ValueError("va_pred and va_label must both be N x 2")
    total = va_pred.new_zeros(())
    for j in torch.unique(labels).tolist():
        mask = labels == j
        if int(mask.sum()) < 2:
            continue
        rho_v = ccc(va_label[mask, 0], va_pred[mask, 0])
        rho_a = ccc(va_label[mask, 1], va_pred[mask, 1])
        total = total + gamma[j] * (1.0 - (rho_v + rho_a) / 2.0)
    return total


def weighted_au_bce(
    au_pred: torch.Tensor,
    au_label: torch.Tensor,
    alphas: torch.Tensor,
    eps: float = BCE_EPS,
) -> torch.Tensor:
    """Confidence-weighted binary CE, summed over AUs, averaged over the batch."""
    if au_pred.shape != au_label.shape:
        raise ValueError("au_pred and au_label shapes differ")
    binary = (au_label == 0) | (au_label == 1)
    if not bool(binary.all()):
        raise ValueError("AU labels must be 0/1")
    p = au_pred.clamp(eps, 1.0 - eps)
    z = au_label.to(p.dtype)
    per_sample = -(z * torch.log(p) + (1.0 - z) * torch.log(1.0 - p)).sum(dim=1)
    return (alphas * per_sample).mean()


def ramp_weights(beta: float, ramp_epochs: int) -> tuple[float, float]:
    """Epoch-dependent loss mixing pair (lambda1, lambda2).

    lambda1 ramps up from exp(-1) to 1 at beta = ramp_epochs and stays there;
    lambda2 is 1 until then and decays toward exp(-1) afterwards.
    """
    if ramp_epochs < 1:
        raise ValueError(f"ramp threshold must be >= 1, got {ramp_epochs}")
    if beta < 0:
        raise ValueError(f"epoch index must be non-negative, got {beta}")
    h = float(ramp_epochs)
    lam1 = math.exp(-((1.0 - beta / h) ** 2)) if beta <= h else 1.0
    lam2 = 1.0 if beta <= h else math.exp(-((1.0 - h / beta) ** 2))
    return lam1, lam2


def total_loss(l_wce, l_w3c, l_wau, beta: float, ramp_epochs: int):
    """lambda1 * (classifier + VA losses) + lambda2 * AU loss. Disabled branches pass 0."""
    lam1, lam2 = ramp_weights(beta, ramp_epochs)
    return lam1 * (l_wce + l_w3c) + lam2 * l_wau
