"""
In-process FedAvg rounds over simulated clients.

Every round broadcasts the global weights, lets each client run local SGD,
then aggregates at a barrier. Clients of a round share the round's epoch
random streams, so scheduling never changes the result.
"""
import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.fedsim.aggregation import Aggregator, fedavg
from core.fedsim.partition import ClientPartition
from core.labeler.network import EmbeddingNetwork
from core.labeler.trainer import fit
from core.models.main import TimingRow
from core.models.settings import ContrastiveConfig, FederatedConfig
from core.utils.error_handling import TrainingDivergedError, ValidationError

logger = logging.getLogger(__name__)


@dataclass
class RoundState:
    round: int
    global_weights: np.ndarray
    client_weights: List[np.ndarray] = field(default_factory=list)
    client_sizes: List[int] = field(default_factory=list)


@dataclass
class FederatedResult:
    model: EmbeddingNetwork
    rounds: List[RoundState]
    timings: List[TimingRow]


def _validate_partitions(partitions: Sequence[ClientPartition], n: int) -> None:
    if not partitions:
        raise ValidationError("At least one client partition is required", field="partitions")
    seen = set()
    for partition in partitions:
        if partition.size == 0:
            raise ValidationError(f"Client {partition.client_id} has no samples", field="partitions")
        if seen.intersection(partition.indices):
            raise ValidationError("Client partitions overlap", field="partitions")
        if min(partition.indices) < 0 or max(partition.indices) >= n:
            raise ValidationError(f"Client {partition.client_id} indexes outside the dataset", field="partitions")
        seen.update(partition.indices)


def run_rounds(crops: np.ndarray, labels: np.ndarray, partitions: Sequence[ClientPartition],
               rounds: int, local_epochs: int, config: ContrastiveConfig, seed: int, num_classes: int,
               federated: Optional[FederatedConfig] = None, aggregator: Aggregator = fedavg,
               initial: Optional[EmbeddingNetwork] = None) -> FederatedResult:
    """
    Federated training of the labeler.

    Args:
        crops: (n, H, W) training crops of all clients
        labels: (n,) class indices, -1 for unlabeled crops
        partitions: Disjoint client index sets
        rounds: Communication rounds
        local_epochs: Local SGD epochs per round
        config: Loss and optimizer settings
        seed: Global seed
        num_classes: Taxonomy size
        federated: Worker count and simulated link speeds
        aggregator: Aggregation port, FedAvg by default
        initial: Starting global model; a fresh seeded network when None

    Returns:
        FederatedResult with the final global model, per-round states and timing rows

    Raises:
        TrainingDivergedError when a client or the aggregate becomes non-finite
    """
    federated = federated or FederatedConfig()
    crops = np.asarray(crops, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    _validate_partitions(partitions, len(labels))

    global_net = initial or EmbeddingNetwork.initialize(num_classes, seed, input_dim=int(np.prod(crops.shape[1:])))
    client_data = [(crops[list(p.indices)], labels[list(p.indices)]) for p in partitions]
    sizes = [p.size for p in partitions]
    payload_bytes = global_net.to_vector().nbytes

    states: List[RoundState] = []
    timings: List[TimingRow] = []

    def local_update(args: Tuple[int, ClientPartition], round_index: int, start_net: EmbeddingNetwork):
        position, partition = args
        x, y = client_data[position]
        started = time.perf_counter()
        local = fit(start_net, x, y, config, local_epochs, seed,
                    epoch_offset=round_index * local_epochs, client=partition.client_id)
        return local.to_vector(), (time.perf_counter() - started) * 1000.0

    for round_index in range(rounds):
        start_net = global_net
        jobs = list(enumerate(partitions))
        if federated.max_workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=min(federated.max_workers, len(jobs))) as pool:
                results = list(pool.map(lambda job: local_update(job, round_index, start_net), jobs))
        else:
            results = [local_update(job, round_index, start_net) for job in jobs]

        client_vectors = [vector for vector, _ in results]
        aggregate = aggregator(client_vectors, sizes)
        if not np.all(np.isfinite(aggregate)):
            raise TrainingDivergedError("Aggregated weights are non-finite", epoch=round_index * local_epochs)
        global_net = global_net.with_vector(aggregate)
        states.append(RoundState(round_index, aggregate, client_vectors, list(sizes)))

        comm_ms = payload_bytes / federated.downlink_bytes_per_ms + payload_bytes / federated.uplink_bytes_per_ms
        finish = [compute_ms + comm_ms for _, compute_ms in results]
        for (position, partition), (_, compute_ms), done in zip(jobs, results, finish):
            timings.append(TimingRow(round=round_index, client=partition.client_id, compute_ms=compute_ms,
                                     comm_ms=comm_ms, wait_ms=max(finish) - done))
        logger.info(f"🔁 Round {round_index + 1}/{rounds} aggregated from {len(partitions)} client(s)")

    return FederatedResult(model=global_net, rounds=states, timings=timings)


def write_timings_csv(path: Path, rows: Sequence[TimingRow]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["round", "client", "compute_ms", "comm_ms", "wait_ms"])
        for row in rows:
            writer.writerow([row.round, row.client, f"{row.compute_ms:.3f}", f"{row.comm_ms:.3f}",
                             f"{row.wait_ms:.3f}"])
