"""
Embedding network: flatten -> affine(D, 128) -> ReLU -> affine(128, 64) = z,
plus a linear classifier head on z. All parameters are float64.
"""
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from core.config import LabelerDefaults
from core.frames.seeding import spawn_rng

PARAMETER_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activation: np.ndarray
    hidden: np.ndarray
    embedding: np.ndarray
    logits: np.ndarray


class EmbeddingNetwork:
    def __init__(self, params: Dict[str, np.ndarray]):
        missing = [name for name in PARAMETER_ORDER if name not in params]
        if missing:
            raise ValueError(f"Missing parameters {missing}")
        self.params = {name: np.asarray(params[name], dtype=np.float64) for name in PARAMETER_ORDER}

    @classmethod
    def initialize(cls, num_classes: int, seed: int,
                   input_dim: int = LabelerDefaults.INPUT_DIM,
                   hidden_dim: int = LabelerDefaults.HIDDEN_DIM,
                   embedding_dim: int = LabelerDefaults.EMBEDDING_DIM) -> "EmbeddingNetwork":
        """He init for the ReLU layer, Xavier for the linear ones, zero biases."""
        rng = spawn_rng(seed, 0)
        return cls({
            "W1": rng.normal(0.0, np.sqrt(2.0 / input_dim), (input_dim, hidden_dim)),
            "b1": np.zeros(hidden_dim),
            "W2": rng.normal(0.0, np.sqrt(2.0 / (hidden_dim + embedding_dim)), (hidden_dim, embedding_dim)),
            "b2": np.zeros(embedding_dim),
            "W3": rng.normal(0.0, np.sqrt(2.0 / (embedding_dim + num_classes)), (embedding_dim, num_classes)),
            "b3": np.zeros(num_classes),
        })

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.params["W2"].shape[1]

    @property
    def num_classes(self) -> int:
        return self.params["W3"].shape[1]

    def copy(self) -> "EmbeddingNetwork":
        return EmbeddingNetwork({name: value.copy() for name, value in self.params.items()})

    def arrays(self) -> List[np.ndarray]:
        return [self.params[name] for name in PARAMETER_ORDER]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.params[name].ravel() for name in PARAMETER_ORDER])

    def with_vector(self, vector: np.ndarray) -> "EmbeddingNetwork":
        """Same architecture, parameters taken from a flat vector (layer-major)."""
        params, offset = {}, 0
        for name in PARAMETER_ORDER:
            shape = self.params[name].shape
            size = self.params[name].size
            params[name] = np.array(vector[offset:offset + size], dtype=np.float64).reshape(shape)
            offset += size
        if offset != len(vector):
            raise ValueError(f"Vector of length {len(vector)} does not match {offset} parameters")
        return EmbeddingNetwork(params)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(value)) for value in self.params.values())

    def forward(self, x: np.ndarray) -> ForwardCache:
        inputs = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        pre = inputs @ self.params["W1"] + self.params["b1"]
        hidden = np.maximum(pre, 0.0)
        z = hidden @ self.params["W2"] + self.params["b2"]
        logits = z @ self.params["W3"] + self.params["b3"]
        return ForwardCache(inputs, pre, hidden, z, logits)

    def backward(self, cache: ForwardCache, d_embedding: np.ndarray,
                 d_logits: np.ndarray) -> Dict[str, np.ndarray]:
        """Parameter gradients given upstream gradients on z and on the logits."""
        grads = {
            "W3": cache.embedding.T @ d_logits,
            "b3": d_logits.sum(axis=0),
        }
        dz = d_embedding + d_logits @ self.params["W3"].T
        grads["W2"] = cache.hidden.T @ dz
        grads["b2"] = dz.sum(axis=0)
        dh = (dz @ self.params["W2"].T) * (cache.pre_activation > 0)
        grads["W1"] = cache.inputs.T @ dh
        grads["b1"] = dh.sum(axis=0)
        return grads

    def embed(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x).embedding

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x).logits

    def shapes(self) -> List[Tuple[int, ...]]:
        return [self.params[name].shape for name in PARAMETER_ORDER]
