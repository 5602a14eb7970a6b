"""Server-side aggregation of client weight vectors."""
from typing import Callable, Sequence

import numpy as np

from core.utils.error_handling import ValidationError

# Replaceable aggregation port: (client weight vectors, client sizes) -> global vector
Aggregator = Callable[[Sequence[np.ndarray], Sequence[int]], np.ndarray]


def fedavg(client_weights: Sequence[np.ndarray], sizes: Sequence[int]) -> np.ndarray:
    """
    Dataset-size weighted mean of client weights, accumulated in float64 in
    client-index order.

    Evaluated as w_0 + sum_i (|D_i| / sum_j |D_j|) * (w_i - w_0), which equals
    the weighted mean and returns identical inputs unchanged.
    """
    if not client_weights:
        raise ValidationError("fedavg needs at least one client", field="client_weights")
    if len(client_weights) != len(sizes):
        raise ValidationError("One size per client is required", field="sizes")
    if any(s <= 0 for s in sizes):
        raise ValidationError("Client sizes must be positive", field="sizes")

    reference = np.asarray(client_weights[0], dtype=np.float64)
    for w in client_weights[1:]:
        if np.shape(w) != reference.shape:
            raise ValidationError(f"Weight dimension mismatch: {np.shape(w)} vs {reference.shape}",
                                  field="client_weights")

    total = float(sum(sizes))
    result = reference.copy()
    for w, size in zip(client_weights, sizes):
        result += (size / total) * (np.asarray(w, dtype=np.float64) - reference)
    return result
