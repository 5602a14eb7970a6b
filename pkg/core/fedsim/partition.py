"""Non-IID client partitions drawn from per-class Dirichlet proportions."""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from core.config import FederatedDefaults
from core.frames.seeding import spawn_rng
from core.utils.error_handling import ValidationError

logger = logging.getLogger(__name__)

# spawn_rng key reserved for partitioning
_PARTITION_STREAM = 2


@dataclass(frozen=True)
class ClientPartition:
    client_id: int
    indices: Tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.indices)


def _split_once(labels: np.ndarray, num_clients: int, alpha: float,
                rng: np.random.Generator) -> List[List[int]]:
    client_indices: List[List[int]] = [[] for _ in range(num_clients)]
    for c in np.unique(labels):
        idx_c = np.flatnonzero(labels == c)
        rng.shuffle(idx_c)
        n_c = len(idx_c)
        proportions = rng.dirichlet([alpha] * num_clients)
        splits = np.floor(proportions * n_c).astype(int)

        # Hand out the rounding remainder by largest fractional part
        remainder = n_c - int(splits.sum())
        if remainder > 0:
            order = np.argsort(-(proportions * n_c - splits), kind="stable")
            splits[order[:remainder]] += 1

        start = 0
        for client, take in enumerate(splits):
            client_indices[client].extend(int(i) for i in idx_c[start:start + take])
            start += take
    return client_indices


def dirichlet_partition(labels: Sequence[int], num_clients: int, alpha: float, seed: int,
                        max_retries: int = FederatedDefaults.MAX_PARTITION_RETRIES) -> List[ClientPartition]:
    """
    Split sample indices across clients with Dirichlet(alpha) class proportions.

    Draws are repeated until every client holds at least one sample. Each
    partition's indices are sorted ascending.

    Raises:
        ValidationError for invalid arguments, fewer samples than clients, or
        when no valid draw appears within `max_retries` attempts
    """
    labels = np.asarray(labels)
    if num_clients < 1:
        raise ValidationError("num_clients must be >= 1", field="num_clients")
    if alpha <= 0:
        raise ValidationError("alpha must be > 0", field="alpha")
    if len(labels) < num_clients:
        raise ValidationError(f"{len(labels)} samples cannot cover {num_clients} clients", field="num_clients")

    if num_clients == 1:
        return [ClientPartition(0, tuple(range(len(labels))))]

    for attempt in range(max_retries):
        split = _split_once(labels, num_clients, alpha, spawn_rng(seed, _PARTITION_STREAM, attempt))
        if all(split):
            if attempt:
                logger.debug(f"Partition accepted after {attempt + 1} draws")
            return [ClientPartition(client, tuple(sorted(indices))) for client, indices in enumerate(split)]

    raise ValidationError(
        f"No Dirichlet({alpha}) draw gave every one of {num_clients} clients a sample in {max_retries} attempts",
        field="alpha")
