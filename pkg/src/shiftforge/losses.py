"""Contrastive regularization objective on embedding batches.

The regularizer is a soft nearest neighbor loss over cosine distances: for
each anchor it takes the negative log of the exponential-weight mass on
same-label partners relative to the mass on all partners,

    l_i = -log( sum_{j != i, y_j = y_i} exp(-d(v_i, v_j)/T)
              / sum_{k != i}            exp(-d(v_i, v_k)/T) )

averaged over anchors that have at least one same-label partner. Anchors
without one are excluded from both the sum and the divisor, which matches
the plain 1/N mean whenever every anchor is eligible. The training
objective adds this term, weighted by ``alpha``, to the mean cross-entropy.

This module is pure NumPy and double precision. It carries three routes to
the same numbers: a stabilized implementation (the one to use), a naive
double-loop reference for oracle testing, and closed-form analytic
gradients verified against central finite differences by ``grad_check``.
The mirrored torch implementation used during training lives in
``torch_losses``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class RegularizationConfig:
    """Weight and temperature of the contrastive term."""

    alpha: float = 0.2
    temperature: float = 2.0
    distance: str = "cosine"

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.distance != "cosine":
            raise ValueError(f"unsupported distance '{self.distance}'")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "temperature": self.temperature,
            "distance": self.distance,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "RegularizationConfig":
        return cls(
            alpha=float(row.get("alpha", 0.2)),
            temperature=float(row.get("temperature", 2.0)),
            distance=row.get("distance", "cosine"),
        )


@dataclass(frozen=True)
class EmbeddingBatch:
    """Per-sample embedding vectors paired with integer class labels."""

    vectors: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        labels = np.asarray(self.labels)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValueError(f"vectors must be N x D with N, D >= 1, got {vectors.shape}")
        if labels.shape != (vectors.shape[0],):
            raise ValueError(
                f"labels must align with vectors: {labels.shape} vs N={vectors.shape[0]}"
            )
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class PredictionBatch:
    """Model outputs as N x C logits (default) or probability rows."""

    scores: np.ndarray
    labels: np.ndarray
    from_logits: bool = True

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels)
        if scores.ndim != 2:
            raise ValueError(f"scores must be N x C, got {scores.shape}")
        if labels.shape != (scores.shape[0],):
            raise ValueError("labels must align with score rows")
        if not self.from_logits:
            sums = scores.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-6):
                bad = int(np.argmax(np.abs(sums - 1.0)))
                raise ValueError(
                    f"probability row {bad} sums to {sums[bad]:.8f}, expected 1 within 1e-6"
                )
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v), in [0, 2]; degenerate near-zero vectors map to 1."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"expected two vectors of equal dimension, got {u.shape} and {v.shape}")
    nu = math.sqrt(float(u @ u))
    nv = math.sqrt(float(v @ v))
    if nu < NORM_FLOOR or nv < NORM_FLOOR:
        return 1.0
    return 1.0 - float(u @ v) / (nu * nv)


def pairwise_cosine_distances(vectors: np.ndarray) -> np.ndarray:
    """Symmetric N x N cosine-distance matrix with a zero diagonal.

    Rows whose norm falls below the floor are at distance 1 from everything,
    mirroring the scalar routine.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    valid = norms >= NORM_FLOOR
    safe = np.where(valid, norms, 1.0)
    sim = (vectors @ vectors.T) / np.outer(safe, safe)
    sim = np.where(np.outer(valid, valid), sim, 0.0)
    distances = 1.0 - sim
    np.fill_diagonal(distances, 0.0)
    return distances


def _masked_logsumexp(row_values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp restricted to ``mask``; empty rows give -inf."""
    x = np.where(mask, row_values, -np.inf)
    high = x.max(axis=1)
    shift = np.where(np.isfinite(high), high, 0.0)
    z = np.exp(x - shift[:, None])
    z[~mask] = 0.0
    total = z.sum(axis=1)
    with np.errstate(divide="ignore"):
        return shift + np.log(total)


def _pair_masks(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = labels.shape[0]
    off_diagonal = ~np.eye(n, dtype=bool)
    positives = (labels[:, None] == labels[None, :]) & off_diagonal
    return off_diagonal, positives


def snn_loss(batch: EmbeddingBatch, temperature: float) -> float:
    """Stabilized soft nearest neighbor loss; always finite and >= 0.

    A single-sample batch returns 0 with a warning since no pairs exist;
    a batch with no eligible anchor (every anchor label is unique) returns 0.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if batch.size == 1:
        warnings.warn("soft nearest neighbor loss over one sample has no pairs; returning 0")
        return 0.0
    off_diagonal, positives = _pair_masks(batch.labels)
    eligible = positives.any(axis=1)
    if not eligible.any():
        return 0.0
    logits = -pairwise_cosine_distances(batch.vectors) / temperature
    log_all = _masked_logsumexp(logits[eligible], off_diagonal[eligible])
    log_pos = _masked_logsumexp(logits[eligible], positives[eligible])
    return float(np.mean(log_all - log_pos))


def snn_loss_reference(batch: EmbeddingBatch, temperature: float) -> float:
    """Naive double-loop evaluation of the same quantity, no stabilization.

    Kept deliberately independent of the vectorized path: scalar distances,
    ``math.exp`` sums, direct ratio. Oracle for equivalence tests.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = batch.size
    if n == 1:
        return 0.0
    vectors, labels = batch.vectors, batch.labels
    total = 0.0
    eligible = 0
    for i in range(n):
        if not any(labels[j] == labels[i] for j in range(n) if j != i):
            continue
        numerator = 0.0
        denominator = 0.0
        for j in range(n):
            if j == i:
                continue
            weight = math.exp(-cosine_distance(vectors[i], vectors[j]) / temperature)
            denominator += weight
            if labels[j] == labels[i]:
                numerator += weight
        total += -math.log(numerator / denominator)
        eligible += 1
    if eligible == 0:
        return 0.0
    return total / eligible


def snn_loss_and_grad(batch: EmbeddingBatch, temperature: float) -> tuple[float, np.ndarray]:
    """Loss value and its closed-form gradient with respect to each vector.

    Derivation: with w_ij = exp(-d_ij/T), P_i the positive mass and A_i the
    total mass of anchor i, the loss contributes (1/M)(1/A_i - [y_j=y_i]/P_i)
    per ordered pair weight. Distances are symmetric, so the sensitivities of
    the (i,j) and (j,i) weights combine on each unordered pair before the
    cosine-distance chain rule

        dd(p,q)/dv_p = -v_q/(|v_p||v_q|) + cos(p,q) v_p/|v_p|^2

    maps pair sensitivities onto the vectors. Pairs involving a degenerate
    near-zero vector have constant distance and therefore zero gradient.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    vectors = batch.vectors
    n = batch.size
    if n == 1:
        warnings.warn("soft nearest neighbor loss over one sample has no pairs; returning 0")
        return 0.0, np.zeros_like(vectors)
    off_diagonal, positives = _pair_masks(batch.labels)
    eligible = positives.any(axis=1)
    count = int(eligible.sum())
    if count == 0:
        return 0.0, np.zeros_like(vectors)

    norms_raw = np.linalg.norm(vectors, axis=1)
    valid = norms_raw >= NORM_FLOOR
    norms = np.where(valid, norms_raw, 1.0)
    similarity = (vectors @ vectors.T) / np.outer(norms, norms)
    similarity = np.where(np.outer(valid, valid), similarity, 0.0)
    distances = 1.0 - similarity
    np.fill_diagonal(distances, 0.0)

    logits = -distances / temperature
    log_all = _masked_logsumexp(logits, off_diagonal)
    log_pos = _masked_logsumexp(logits, positives)
    value = float(np.mean((log_all - log_pos)[eligible]))

    weights = np.exp(logits)
    np.fill_diagonal(weights, 0.0)
    total_mass = np.exp(log_all)
    positive_mass = np.exp(log_pos)

    # Per ordered pair (i, k): d loss / d w_ik for eligible anchors i.
    coeff = np.zeros((n, n))
    rows = np.flatnonzero(eligible)
    coeff[rows] = (
        1.0 / total_mass[rows, None] - positives[rows] / positive_mass[rows, None]
    ) / count
    coeff[:, :] *= off_diagonal

    # Symmetric sensitivity to each unordered pair distance.
    pair_sens = -(weights / temperature) * (coeff + coeff.T)
    pair_sens *= np.outer(valid, valid)

    scaled = pair_sens / np.outer(norms, norms)
    grad = -(scaled @ vectors)
    grad += ((pair_sens * similarity).sum(axis=1) / norms**2)[:, None] * vectors
    grad[~valid] = 0.0
    return value, grad


def cross_entropy(pred: PredictionBatch) -> float:
    """Mean cross-entropy of the batch, from logits or probability rows."""
    n = pred.scores.shape[0]
    picked = pred.scores[np.arange(n), pred.labels]
    if pred.from_logits:
        shift = pred.scores.max(axis=1)
        log_norm = shift + np.log(np.exp(pred.scores - shift[:, None]).sum(axis=1))
        per_sample = log_norm - picked
    else:
        with np.errstate(divide="ignore"):
            per_sample = -np.log(picked)
    return float(np.mean(per_sample))


def _check_alignment(pred: PredictionBatch, emb: EmbeddingBatch) -> None:
    if pred.scores.shape[0] != emb.size or not np.array_equal(pred.labels, emb.labels):
        raise ValueError("prediction and embedding batches must share size and labels")


def combined_loss(pred: PredictionBatch, emb: EmbeddingBatch, cfg: RegularizationConfig) -> float:
    """Mean cross-entropy plus ``alpha`` times the contrastive term.

    With ``alpha == 0`` the contrastive term is skipped entirely, so the
    result equals the mean cross-entropy exactly.
    """
    _check_alignment(pred, emb)
    value = cross_entropy(pred)
    if cfg.alpha > 0:
        value += cfg.alpha * snn_loss(emb, cfg.temperature)
    return value


def combined_loss_and_grad(
    pred: PredictionBatch, emb: EmbeddingBatch, cfg: RegularizationConfig
) -> tuple[float, np.ndarray]:
    """Combined loss and its gradient with respect to the embeddings.

    The cross-entropy term does not depend on the embedding input here, so
    the embedding gradient is ``alpha`` times the contrastive gradient.
    """
    _check_alignment(pred, emb)
    value = cross_entropy(pred)
    if cfg.alpha > 0:
        reg_value, reg_grad = snn_loss_and_grad(emb, cfg.temperature)
        return value + cfg.alpha * reg_value, cfg.alpha * reg_grad
    return value, np.zeros_like(emb.vectors)


def grad_check(fn, batch: EmbeddingBatch, epsilon: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps an EmbeddingBatch to ``(value, gradient)``. Every embedding
    coordinate is perturbed by +/- epsilon; per-coordinate absolute errors
    are scaled by the larger of the two gradients' magnitudes, so an exactly
    zero analytic and numeric gradient yields error 0.
    """
    _, analytic = fn(batch)
    numeric = np.zeros_like(analytic)
    base = batch.vectors
    for index in np.ndindex(base.shape):
        forward = base.copy()
        forward[index] += epsilon
        backward = base.copy()
        backward[index] -= epsilon
        f_plus, _ = fn(EmbeddingBatch(forward, batch.labels))
        f_minus, _ = fn(EmbeddingBatch(backward, batch.labels))
        numeric[index] = (f_plus - f_minus) / (2.0 * epsilon)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), NORM_FLOOR)
    return float(np.abs(analytic - numeric).max() / scale)
