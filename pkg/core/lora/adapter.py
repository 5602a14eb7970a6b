"""
Low-rank adapters: W~ = W + alpha * A @ B with A (d_out x r) and B (r x d_in).

A starts Gaussian and B starts at zero, so a fresh adapter leaves W unchanged.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Tuple

import numpy as np

from core.config import LoraDefaults
from core.frames.seeding import spawn_rng
from core.frames.weights import read_weights, write_weights
from core.utils.error_handling import FrameFormatError, ValidationError

logger = logging.getLogger(__name__)

# spawn_rng key reserved for adapter initialization
_ADAPTER_STREAM = 3


@dataclass(frozen=True)
class LoraAdapter:
    A: np.ndarray
    B: np.ndarray
    alpha: float = LoraDefaults.ALPHA
    seed: Optional[int] = None

    def __post_init__(self):
        if self.A.ndim != 2 or self.B.ndim != 2 or self.A.shape[1] != self.B.shape[0]:
            raise ValidationError(f"Adapter shapes do not compose: A{self.A.shape} B{self.B.shape}", field="adapter")

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def d_out(self) -> int:
        return self.A.shape[0]

    @property
    def d_in(self) -> int:
        return self.B.shape[1]

    def delta(self) -> np.ndarray:
        return self.alpha * (self.A @ self.B)


@dataclass
class FlopCounter:
    """Multiply and add operations performed by `forward`."""
    flops: int = 0
    calls: int = field(default=0)

    def add(self, count: int) -> None:
        self.flops += int(count)


class ParamBudget(NamedTuple):
    adapter_params: int
    full_params: int
    ratio: float


def init_adapter(d: int, r: int = LoraDefaults.RANK, seed: int = 0, d_in: Optional[int] = None,
                 alpha: float = LoraDefaults.ALPHA, init_std: float = LoraDefaults.INIT_STD) -> LoraAdapter:
    """
    Fresh adapter for a d x d_in base matrix (square when d_in is None).

    Raises:
        ValidationError unless 1 <= r < min(d, d_in)
    """
    d_in = d if d_in is None else d_in
    if not 1 <= r < min(d, d_in):
        raise ValidationError(f"invalid rank r={r} for a {d}x{d_in} matrix (need 1 <= r < {min(d, d_in)})",
                              field="rank")
    rng = spawn_rng(seed, _ADAPTER_STREAM)
    return LoraAdapter(A=rng.normal(0.0, init_std, (d, r)), B=np.zeros((r, d_in)), alpha=alpha, seed=seed)


def _check_shapes(W: np.ndarray, adapter: LoraAdapter) -> None:
    if W.ndim != 2 or W.shape != (adapter.d_out, adapter.d_in):
        raise ValidationError(
            f"shape mismatch: base {W.shape} vs adapter {(adapter.d_out, adapter.d_in)}", field="W")


def merge(W: np.ndarray, adapter: LoraAdapter) -> np.ndarray:
    """W + alpha * A @ B as a new matrix; W is not modified."""
    W = np.asarray(W, dtype=np.float64)
    _check_shapes(W, adapter)
    return W + adapter.delta()


def forward(W: np.ndarray, adapter: LoraAdapter, x: np.ndarray,
            counter: Optional[FlopCounter] = None) -> np.ndarray:
    """W @ x + alpha * A @ (B @ x) without forming A @ B."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_shapes(W, adapter)
    if x.shape != (adapter.d_in,):
        raise ValidationError(f"shape mismatch: x {x.shape} vs d_in {adapter.d_in}", field="x")

    base = W @ x
    low_rank = adapter.B @ x
    out = base + adapter.alpha * (adapter.A @ low_rank)

    if counter is not None:
        d_out, d_in, r = adapter.d_out, adapter.d_in, adapter.rank
        counter.add(2 * d_out * d_in)   # W x
        counter.add(2 * r * d_in)       # B x
        counter.add(2 * d_out * r)      # A (B x)
        counter.add(2 * d_out)          # scale and add
        counter.calls += 1
    return out


def param_budget(d: int, r: int) -> ParamBudget:
    """Trainable adapter parameters against a full d x d update."""
    adapter_params = 2 * d * r
    full_params = d * d
    return ParamBudget(adapter_params, full_params, adapter_params / full_params)


def save_adapter(path: Path, adapter: LoraAdapter) -> None:
    header = {"kind": "lora_adapter", "d_out": adapter.d_out, "d_in": adapter.d_in,
              "r": adapter.rank, "alpha": adapter.alpha, "seed": adapter.seed}
    write_weights(path, header, [adapter.A, adapter.B])


def load_adapter(path: Path) -> LoraAdapter:
    header, arrays = read_weights(path)
    if header.get("kind") != "lora_adapter" or len(arrays) != 2:
        raise FrameFormatError(f"{path} is not a LoRA adapter file", path=str(path))
    return LoraAdapter(A=arrays[0], B=arrays[1], alpha=float(header["alpha"]), seed=header.get("seed"))


def save_matrix(path: Path, W: np.ndarray, **meta) -> None:
    write_weights(path, {"kind": "matrix", **meta}, [np.asarray(W, dtype=np.float64)])


def load_matrix(path: Path) -> Tuple[np.ndarray, dict]:
    """Base matrix from a matrix file; labeler files yield their first layer."""
    header, arrays = read_weights(path)
    if not arrays or arrays[0].ndim != 2:
        raise FrameFormatError(f"{path} holds no 2-D weight matrix", path=str(path))
    return arrays[0], header
