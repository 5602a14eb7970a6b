"""
Training, prediction and persistence for the contrastive pseudo-labeler.

The combined objective is lam * L_C + (1 - lam) * L_CE. L_C runs on both the
labeled and unlabeled pools; L_CE only on labeled samples (label >= 0).
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from core.config import LabelerDefaults
from core.frames.seeding import spawn_rng
from core.frames.weights import read_weights, write_weights
from core.labeler.augment import augment_batch
from core.labeler.losses import UNLABELED, cross_entropy, ntxent_loss
from core.labeler.network import PARAMETER_ORDER, EmbeddingNetwork
from core.models.main import PseudoLabelRecord
from core.models.settings import ContrastiveConfig
from core.utils.error_handling import FrameFormatError, TrainingDivergedError, ValidationError

logger = logging.getLogger(__name__)


@dataclass
class LossParts:
    total: float
    contrastive: float
    cross_entropy: float


@dataclass
class TrainingHistory:
    epoch_losses: List[float] = field(default_factory=list)
    contrastive: List[float] = field(default_factory=list)
    cross_entropy: List[float] = field(default_factory=list)

    def record(self, parts: Sequence[LossParts]) -> None:
        self.epoch_losses.append(float(np.mean([p.total for p in parts])))
        self.contrastive.append(float(np.mean([p.contrastive for p in parts])))
        self.cross_entropy.append(float(np.mean([p.cross_entropy for p in parts])))


def loss_and_gradients(net: EmbeddingNetwork, view_a: np.ndarray, view_b: np.ndarray,
                       labels: np.ndarray, config: ContrastiveConfig
                       ) -> Tuple[LossParts, Dict[str, np.ndarray]]:
    """
    Combined loss and parameter gradients for one batch of paired views.

    Cross-entropy uses the first view's logits of labeled rows. The contrastive
    term is skipped when lam == 0 or the batch holds a single pair.
    """
    labels = np.asarray(labels, dtype=int)
    cache_a = net.forward(view_a)
    cache_b = net.forward(view_b)

    d_za = np.zeros_like(cache_a.embedding)
    d_zb = np.zeros_like(cache_b.embedding)
    d_logits_a = np.zeros_like(cache_a.logits)
    contrastive = 0.0
    ce = 0.0

    if config.lam > 0.0 and len(labels) >= 2:
        contrastive, (g_a, g_b) = ntxent_loss(
            cache_a.embedding, cache_b.embedding, labels,
            tau=config.tau,
            same_class_weight=config.same_class_negative_weight,
            standard_denominator=config.standard_denominator
        )
        d_za = config.lam * g_a
        d_zb = config.lam * g_b

    labeled = labels != UNLABELED
    if config.lam < 1.0 and labeled.any():
        ce, g_logits = cross_entropy(cache_a.logits[labeled], labels[labeled])
        d_logits_a[labeled] = (1.0 - config.lam) * g_logits

    grads_a = net.backward(cache_a, d_za, d_logits_a)
    grads_b = net.backward(cache_b, d_zb, np.zeros_like(cache_b.logits))
    grads = {name: grads_a[name] + grads_b[name] for name in PARAMETER_ORDER}

    total = config.lam * contrastive + (1.0 - config.lam) * ce
    return LossParts(total, contrastive, ce), grads


def fit(net: EmbeddingNetwork, crops: np.ndarray, labels: np.ndarray, config: ContrastiveConfig,
        epochs: int, seed: int, epoch_offset: int = 0, history: Optional[TrainingHistory] = None,
        client: Optional[int] = None) -> EmbeddingNetwork:
    """
    Mini-batch SGD for `epochs` epochs on a copy of `net`.

    Epoch e draws its shuffles and augmentations from spawn_rng(seed, 1,
    epoch_offset + e), so any caller that agrees on the global epoch number
    sees the same random stream.

    Raises:
        TrainingDivergedError on a non-finite loss or parameter
    """
    net = net.copy()
    n = len(crops)
    for local_epoch in range(epochs):
        global_epoch = epoch_offset + local_epoch
        rng = spawn_rng(seed, 1, global_epoch)
        order = rng.permutation(n)
        parts = []

        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            view_a = augment_batch(crops[batch], rng, config.augmentation)
            view_b = augment_batch(crops[batch], rng, config.augmentation)
            loss, grads = loss_and_gradients(net, view_a, view_b, labels[batch], config)

            if not np.isfinite(loss.total):
                raise TrainingDivergedError(f"Non-finite loss {loss.total}", epoch=global_epoch, client=client)
            for name in PARAMETER_ORDER:
                net.params[name] -= config.learning_rate * grads[name]
            parts.append(loss)

        if not net.is_finite():
            raise TrainingDivergedError("Non-finite parameters after update", epoch=global_epoch, client=client)
        if history is not None:
            history.record(parts)
            logger.debug(f"epoch {global_epoch}: loss={history.epoch_losses[-1]:.5f}")
    return net


def prepare_training_set(labeled_crops: np.ndarray, labeled_y: Sequence[int],
                         unlabeled_crops: Optional[np.ndarray], num_classes: int,
                         require_all_classes: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Stack both pools; unlabeled rows carry label -1."""
    labeled_y = np.asarray(labeled_y, dtype=int)
    if len(labeled_y) and (labeled_y.min() < 0 or labeled_y.max() >= num_classes):
        raise ValidationError(f"Labels must lie in [0, {num_classes})", field="labels")
    if require_all_classes:
        missing = sorted(set(range(num_classes)) - set(labeled_y.tolist()))
        if missing:
            raise ValidationError(f"empty class: no labeled samples for classes {missing}", field="labels")

    pools, labels = [], []
    if len(labeled_y):
        pools.append(np.asarray(labeled_crops, dtype=np.float64))
        labels.append(labeled_y)
    if unlabeled_crops is not None and len(unlabeled_crops):
        pools.append(np.asarray(unlabeled_crops, dtype=np.float64))
        labels.append(np.full(len(unlabeled_crops), UNLABELED, dtype=int))
    if not pools:
        raise ValidationError("No training crops supplied", field="crops")
    return np.concatenate(pools), np.concatenate(labels)


def train(labeled_crops: np.ndarray, labeled_y: Sequence[int], unlabeled_crops: Optional[np.ndarray],
          config: ContrastiveConfig, seed: int, num_classes: int,
          history: Optional[TrainingHistory] = None) -> EmbeddingNetwork:
    """
    Train a fresh network; a pure function of (data, config, seed).

    Args:
        labeled_crops: (n_l, H, W) crops with known classes
        labeled_y: (n_l,) class indices
        unlabeled_crops: (n_u, H, W) crops without labels, may be None
        config: Loss and optimizer settings
        seed: Global seed
        num_classes: Size of the action taxonomy

    Raises:
        ValidationError when a class has no labeled sample (unless lam == 1)
        TrainingDivergedError on non-finite loss
    """
    crops, labels = prepare_training_set(labeled_crops, labeled_y, unlabeled_crops, num_classes,
                                         require_all_classes=config.lam < 1.0)
    net = EmbeddingNetwork.initialize(num_classes, seed, input_dim=int(np.prod(crops.shape[1:])))
    logger.info(f"🧠 Training labeler on {int((labels >= 0).sum())} labeled + "
                f"{int((labels < 0).sum())} unlabeled crops for {config.epochs} epochs")
    net = fit(net, crops, labels, config, config.epochs, seed, history=history)
    if history is not None and history.epoch_losses:
        logger.info(f"✅ Training finished, final loss {history.epoch_losses[-1]:.4f}")
    return net


def top_k_pairs(probabilities: np.ndarray, k: int) -> List[Tuple[int, float]]:
    """Descending (class, probability) pairs; ties keep class order."""
    order = np.argsort(-probabilities, kind="stable")[:k]
    return [(int(c), float(probabilities[c])) for c in order]


def predict_probabilities(net: EmbeddingNetwork, crops: np.ndarray) -> np.ndarray:
    return softmax(net.logits(np.asarray(crops, dtype=np.float64)), axis=1)


def predict(net: EmbeddingNetwork, crop: np.ndarray, top_k: int = LabelerDefaults.TOP_K,
            frame_index: int = 0) -> PseudoLabelRecord:
    probabilities = predict_probabilities(net, np.asarray(crop)[None, ...])[0]
    return PseudoLabelRecord(frame_index=frame_index, probabilities=probabilities.tolist(),
                             top_k=top_k_pairs(probabilities, top_k))


def predict_batch(net: EmbeddingNetwork, crops: np.ndarray, top_k: int = LabelerDefaults.TOP_K,
                  start_index: int = 0, frame_indices: Optional[Sequence[int]] = None) -> List[PseudoLabelRecord]:
    """Records numbered from `start_index`, or by the source `frame_indices` of the crops when given."""
    if frame_indices is None:
        frame_indices = range(start_index, start_index + len(crops))
    elif len(frame_indices) != len(crops):
        raise ValidationError(f"{len(frame_indices)} frame indices for {len(crops)} crops", field="frame_indices")
    if len(crops) == 0:
        return []
    probabilities = predict_probabilities(net, crops)
    return [
        PseudoLabelRecord(frame_index=int(index), probabilities=row.tolist(), top_k=top_k_pairs(row, top_k))
        for index, row in zip(frame_indices, probabilities)
    ]


def evaluate_accuracy(net: EmbeddingNetwork, crops: np.ndarray, labels: Sequence[int]) -> float:
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        return 0.0
    predicted = np.argmax(net.logits(np.asarray(crops, dtype=np.float64)), axis=1)
    return float(np.mean(predicted == labels))


def save_model(path: Path, net: EmbeddingNetwork, seed: int, config: ContrastiveConfig) -> None:
    header = {
        "kind": "labeler",
        "layers": list(PARAMETER_ORDER),
        "num_classes": net.num_classes,
        "seed": seed,
        "config": config.model_dump(mode="json", by_alias=True),
    }
    write_weights(path, header, net.arrays())
    logger.info(f"💾 Saved labeler weights to {path}")


def load_model(path: Path) -> Tuple[EmbeddingNetwork, Dict]:
    header, arrays = read_weights(path)
    if header.get("kind") != "labeler" or len(arrays) != len(PARAMETER_ORDER):
        raise FrameFormatError(f"{path} is not a labeler weights file", path=str(path))
    return EmbeddingNetwork(dict(zip(PARAMETER_ORDER, arrays))), header
