"""
Deterministic random streams.

Every stochastic step derives its generator from the global seed plus a
stage-specific key, so results never depend on call order between stages.
"""
import numpy as np

from core.utils.error_handling import ConfigurationError

MAX_SEED = 2 ** 64 - 1


def validate_seed(seed: int) -> int:
    if not 0 <= int(seed) <= MAX_SEED:
        raise ConfigurationError(f"Seed {seed} must be a 64-bit unsigned integer", field="seed")
    return int(seed)


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for `seed` and an integer key path, e.g. spawn_rng(seed, 1, epoch)."""
    sequence = np.random.SeedSequence(validate_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(sequence))
