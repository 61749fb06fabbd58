"""Torch expression of the training objective.

Mirrors the NumPy routines in ``losses`` op for op (same masking, same
log-sum-exp stabilization, same degenerate-vector rule) so the two agree to
double-precision roundoff; the agreement is pinned by tests. Gradients flow
through autograd into the backbone weights.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .losses import NORM_FLOOR, RegularizationConfig


def pairwise_cosine_distances_t(vectors: torch.Tensor) -> torch.Tensor:
    norms = vectors.norm(dim=1)
    valid = norms >= NORM_FLOOR
    safe = torch.where(valid, norms, torch.ones_like(norms))
    sim = (vectors @ vectors.T) / (safe[:, None] * safe[None, :])
    sim = torch.where(valid[:, None] & valid[None, :], sim, torch.zeros_like(sim))
    distances = 1.0 - sim
    return distances.masked_fill(torch.eye(len(vectors), dtype=torch.bool, device=vectors.device), 0.0)


def snn_loss_t(vectors: torch.Tensor, labels: torch.Tensor, temperature: float) -> torch.Tensor:
    """Soft nearest neighbor loss over a batch of embedding rows.

    Anchors without a same-label partner are excluded from the mean; a batch
    with no eligible anchor (or a single sample) contributes zero.
    """
    n = vectors.shape[0]
    if n < 2:
        return vectors.sum() * 0.0
    off_diagonal = ~torch.eye(n, dtype=torch.bool, device=vectors.device)
    positives = (labels[:, None] == labels[None, :]) & off_diagonal
    eligible = positives.any(dim=1)
    if not bool(eligible.any()):
        return vectors.sum() * 0.0
    logits = -pairwise_cosine_distances_t(vectors) / temperature
    neg_inf = torch.finfo(logits.dtype).min
    log_all = torch.logsumexp(logits.masked_fill(~off_diagonal, neg_inf), dim=1)
    log_pos = torch.logsumexp(logits.masked_fill(~positives, neg_inf), dim=1)
    return (log_all - log_pos)[eligible].mean()


def combined_objective(
    logits: torch.Tensor,
    embeddings: torch.Tensor,
    labels: torch.Tensor,
    cfg: RegularizationConfig,
) -> torch.Tensor:
    """Mean cross-entropy plus the weighted contrastive term.

    With ``alpha == 0`` the contrastive term is never evaluated, so the
    objective is bit-identical to a plain cross-entropy pipeline.
    """
    loss = F.cross_entropy(logits, labels)
    if cfg.alpha > 0:
        loss = loss + cfg.alpha * snn_loss_t(embeddings, labels, cfg.temperature)
    return loss
