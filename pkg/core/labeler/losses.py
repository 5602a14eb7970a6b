"""
Semantic-weighted NT-Xent and cross-entropy with analytic gradients.

For anchor i with positive i+, the contrastive term is

    -log( exp(sim(z_i, z_i+)/tau) / sum_{j != i} w_ij exp(sim(z_i, z_j)/tau) )

where the negatives are the other anchors in the batch and w_ij is the
same-class down-weight when both labels are known and equal, else 1. With
`standard_denominator` the positive term joins the denominator.
"""
from typing import Optional, Tuple

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from core.utils.error_handling import ValidationError

UNLABELED = -1


def l2_normalize(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError("zero-norm embedding cannot be normalized", field="embeddings")
    return z / norms[:, None], norms


def _normalize_backward(u: np.ndarray, norms: np.ndarray, du: np.ndarray) -> np.ndarray:
    return (du - u * np.sum(u * du, axis=1, keepdims=True)) / norms[:, None]


def negative_weights(n: int, labels: Optional[np.ndarray], same_class_weight: float) -> np.ndarray:
    """w_ij for the anchor-anchor negatives; the diagonal is never a negative."""
    weights = np.ones((n, n), dtype=np.float64)
    if labels is not None:
        labels = np.asarray(labels)
        known = labels >= 0
        same = (labels[:, None] == labels[None, :]) & known[:, None] & known[None, :]
        weights[same] = same_class_weight
    np.fill_diagonal(weights, 0.0)
    return weights


def ntxent_loss(anchors: np.ndarray, positives: np.ndarray, labels: Optional[np.ndarray] = None,
                tau: float = 0.5, same_class_weight: float = 0.0,
                standard_denominator: bool = False) -> Tuple[float, Tuple[np.ndarray, np.ndarray]]:
    """
    Contrastive loss over a batch of (anchor, positive) embedding pairs.

    Args:
        anchors: (n, d) raw embeddings z_i
        positives: (n, d) raw embeddings z_i+
        labels: Optional (n,) class indices, -1 for unlabeled samples
        tau: Temperature
        same_class_weight: w_ij for negatives sharing the anchor's known label
        standard_denominator: Add the positive term to the denominator

    Returns:
        (loss, (d_anchors, d_positives)). Anchors whose weighted denominator is
        empty are left out of the mean; if none remain the loss is 0.
    """
    n = len(anchors)
    if n < 2 or positives.shape != anchors.shape:
        raise ValidationError("NT-Xent needs at least 2 (anchor, positive) pairs of equal shape", field="embeddings")

    u, u_norms = l2_normalize(anchors)
    p, p_norms = l2_normalize(positives)

    sims = (u @ u.T) / tau
    pos = np.sum(u * p, axis=1) / tau
    weights = negative_weights(n, labels, same_class_weight)

    extended = np.concatenate([sims, pos[:, None]], axis=1)
    ext_weights = np.concatenate([weights, np.full((n, 1), 1.0 if standard_denominator else 0.0)], axis=1)
    active = ext_weights.sum(axis=1) > 0.0
    count = int(active.sum())
    if count == 0:
        return 0.0, (np.zeros_like(anchors), np.zeros_like(positives))

    log_denominator = np.zeros(n)
    log_denominator[active] = logsumexp(extended[active], axis=1, b=ext_weights[active])
    loss = float(np.sum(log_denominator[active] - pos[active]) / count)

    # dL/dS_ij and dL/dpos_i, zero for inactive anchors
    coeff = np.where(active[:, None], ext_weights * np.exp(extended - log_denominator[:, None]), 0.0) / count
    g_sims = coeff[:, :n]
    g_pos = np.where(active, coeff[:, n] - 1.0 / count, 0.0)

    du = (g_sims @ u + g_sims.T @ u + g_pos[:, None] * p) / tau
    dp = (g_pos[:, None] * u) / tau
    return loss, (_normalize_backward(u, u_norms, du), _normalize_backward(p, p_norms, dp))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    n = len(logits)
    if n == 0:
        return 0.0, np.zeros_like(logits)
    labels = np.asarray(labels, dtype=int)
    log_probs = log_softmax(logits, axis=1)
    loss = float(-np.mean(log_probs[np.arange(n), labels]))
    grad = softmax(logits, axis=1)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
