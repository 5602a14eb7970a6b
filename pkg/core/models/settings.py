"""
Validated per-stage configuration blocks and the top-level PipelineConfig.

Defaults come from core/config.py. A pipeline run is fully described by one
PipelineConfig, loaded from a TOML or JSON file and overridden by CLI flags.
"""
import json
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from core.config import (
    CaptionDefaults,
    CaptureDefaults,
    FederatedDefaults,
    FilterDefaults,
    LabelerDefaults,
    LlmDefaults,
    LoraDefaults,
    SyntheticDefaults,
)
from core.utils.error_handling import ConfigurationError

logger = logging.getLogger(__name__)

SYNTHETIC_PATTERNS = ("translating", "oscillating", "expanding", "static")


class FilterConfig(BaseModel):
    window_size: int = Field(FilterDefaults.WINDOW_SIZE, ge=3, description="w, frames per window")
    sigma: float = Field(FilterDefaults.SIGMA, gt=0.0, lt=1.0, description="σ, relative significance threshold")
    min_significant: int = Field(FilterDefaults.MIN_SIGNIFICANT, ge=1, description="N")
    activity_floor: float = Field(FilterDefaults.ACTIVITY_FLOOR, ge=0.0, description="Mean-diff floor for static windows")
    invert_rule: bool = Field(FilterDefaults.INVERT_RULE, description="Drop windows with C(S) >= N instead of keeping them")

    @model_validator(mode='after')
    def n_fits_window(self):
        if self.min_significant > self.window_size - 1:
            raise ValueError(
                f"min_significant ({self.min_significant}) must be <= window_size - 1 ({self.window_size - 1})"
            )
        return self


class CoherenceConfig(BaseModel):
    epsilon: Optional[float] = Field(None, gt=0.0, description="Absolute ε in pixels; None = fraction of diagonal")
    epsilon_fraction: float = Field(CaptureDefaults.EPSILON_DIAGONAL_FRACTION, gt=0.0)
    min_confidence: float = Field(CaptureDefaults.MIN_CONFIDENCE, ge=0.0, le=1.0)

    def resolve_epsilon(self, width: int, height: int) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return self.epsilon_fraction * math.hypot(width, height)


class CaptureConfig(BaseModel):
    coherence: CoherenceConfig = Field(default_factory=CoherenceConfig)
    blob_threshold: float = Field(CaptureDefaults.BLOB_THRESHOLD, gt=0.0)
    blob_min_area: int = Field(CaptureDefaults.BLOB_MIN_AREA, ge=1)
    background_frames: int = Field(CaptureDefaults.BACKGROUND_FRAMES, ge=1)
    crop_margin: float = Field(CaptureDefaults.CROP_MARGIN, ge=0.0)
    crop_size: Tuple[int, int] = Field(CaptureDefaults.CROP_SIZE, description="(H, W)")


class AugmentationConfig(BaseModel):
    noise_std: float = Field(LabelerDefaults.NOISE_STD, ge=0.0)
    hflip_prob: float = Field(LabelerDefaults.HFLIP_PROB, ge=0.0, le=1.0)
    crop_scale_min: float = Field(LabelerDefaults.CROP_SCALE_MIN, gt=0.0, le=1.0)


class ContrastiveConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    tau: float = Field(LabelerDefaults.TAU, gt=0.0, description="Temperature τ")
    lam: float = Field(LabelerDefaults.LAMBDA, ge=0.0, le=1.0, alias="lambda",
                       description="λ, weight of the contrastive term")
    same_class_negative_weight: float = Field(LabelerDefaults.SAME_CLASS_NEGATIVE_WEIGHT, ge=0.0)
    batch_size: int = Field(LabelerDefaults.BATCH_SIZE, ge=2)
    learning_rate: float = Field(LabelerDefaults.LEARNING_RATE, gt=0.0)
    epochs: int = Field(LabelerDefaults.EPOCHS, ge=1)
    augmentation: AugmentationConfig = Field(default_factory=AugmentationConfig)
    standard_denominator: bool = Field(LabelerDefaults.STANDARD_DENOMINATOR)
    top_k: int = Field(LabelerDefaults.TOP_K, ge=1)


class FederatedConfig(BaseModel):
    num_clients: int = Field(FederatedDefaults.NUM_CLIENTS, ge=1)
    alpha: float = Field(FederatedDefaults.DIRICHLET_ALPHA, gt=0.0)
    rounds: int = Field(FederatedDefaults.ROUNDS, ge=1)
    local_epochs: int = Field(FederatedDefaults.LOCAL_EPOCHS, ge=1)
    max_workers: int = Field(FederatedDefaults.MAX_CLIENT_WORKERS, ge=1)
    uplink_bytes_per_ms: float = Field(FederatedDefaults.UPLINK_BYTES_PER_MS, gt=0.0)
    downlink_bytes_per_ms: float = Field(FederatedDefaults.DOWNLINK_BYTES_PER_MS, gt=0.0)


class ConsistencyRules(BaseModel):
    min_run: int = Field(CaptionDefaults.MIN_RUN, ge=2, description="L, context run length")
    window: int = Field(CaptionDefaults.SMOOTHING_WINDOW, ge=1, description="m, odd smoothing window")
    incompatible: List[Tuple[str, str]] = Field(default_factory=list, description="Unordered action pairs")
    p_min: float = Field(CaptionDefaults.P_MIN, ge=0.0, le=1.0)

    @field_validator('window')
    @classmethod
    def window_is_odd(cls, v):
        if v % 2 == 0:
            raise ValueError("smoothing window must be odd")
        return v

    @property
    def incompatible_pairs(self) -> FrozenSet[FrozenSet[str]]:
        return frozenset(frozenset(pair) for pair in self.incompatible)

    def is_incompatible(self, a: str, b: str) -> bool:
        return a != b and frozenset((a, b)) in self.incompatible_pairs

    @classmethod
    def from_file(cls, path: Path) -> "ConsistencyRules":
        """Load a rules file {min_run, window, incompatible:[[a,b],...], p_min}."""
        try:
            return cls.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, PydanticValidationError) as e:
            raise ConfigurationError(f"Invalid consistency rules file {path}: {e}", field=str(path)) from e

    @classmethod
    def default(cls) -> "ConsistencyRules":
        return cls.from_file(Path(__file__).resolve().parent.parent / "data" / CaptionDefaults.RULES_FILE)


class CaptionConfig(BaseModel):
    top_k: int = Field(CaptionDefaults.TOP_K, ge=1)
    fps: float = Field(CaptionDefaults.FPS, gt=0.0)
    rules: Optional[ConsistencyRules] = Field(None, description="Inline rules; None = shipped rules file")
    rules_file: Optional[str] = None
    system_template_file: Optional[str] = None
    runtime_template_file: Optional[str] = None

    def resolve_rules(self) -> ConsistencyRules:
        if self.rules is not None:
            return self.rules
        if self.rules_file:
            return ConsistencyRules.from_file(Path(self.rules_file))
        return ConsistencyRules.default()


class LlmConfig(BaseModel):
    endpoint: str = Field(LlmDefaults.ENDPOINT, description="OpenAI-compatible chat-completions URL")
    model: str = Field(LlmDefaults.MODEL)
    api_key_env: str = Field(LlmDefaults.API_KEY_ENV, description="Name of the env var holding the key")
    temperature: float = Field(LlmDefaults.TEMPERATURE, ge=0.0)
    max_tokens: int = Field(LlmDefaults.MAX_TOKENS, gt=0)
    timeout_ms: int = Field(LlmDefaults.TIMEOUT_MS, gt=0)
    max_retries: int = Field(LlmDefaults.MAX_RETRIES, ge=0)
    backoff_base_ms: float = Field(LlmDefaults.BACKOFF_BASE_MS, ge=0.0)
    mode: Literal["http", "mock", "replay"] = Field("mock")
    fixtures_dir: Optional[str] = Field(None, description="Replay source directory")
    record_dir: Optional[str] = Field(None, description="Write request/response fixtures here")

    @model_validator(mode='after')
    def replay_needs_fixtures(self):
        if self.mode == "replay" and not self.fixtures_dir:
            raise ValueError("mode 'replay' requires fixtures_dir")
        return self


class LoraSettings(BaseModel):
    rank: int = Field(LoraDefaults.RANK, ge=1)
    alpha: float = Field(LoraDefaults.ALPHA)
    init_std: float = Field(LoraDefaults.INIT_STD, gt=0.0)


class SyntheticSpec(BaseModel):
    frame_size: int = Field(SyntheticDefaults.FRAME_SIZE, ge=16)
    frames_per_clip: int = Field(SyntheticDefaults.FRAMES_PER_CLIP, ge=8)
    clips_per_class: int = Field(SyntheticDefaults.CLIPS_PER_CLASS, ge=1)
    classes: List[str] = Field(default_factory=lambda: list(SyntheticDefaults.CLASSES))
    noise_clips: Optional[int] = Field(None, ge=0, description="Defaults to clips_per_class")
    static_clips: Optional[int] = Field(None, ge=0, description="Defaults to clips_per_class")
    spike_probability: float = Field(SyntheticDefaults.SPIKE_PROBABILITY, ge=0.0, le=1.0)
    spike_amplitude: float = Field(SyntheticDefaults.SPIKE_AMPLITUDE, ge=0.0, le=1.0)
    sensor_noise_std: float = Field(SyntheticDefaults.SENSOR_NOISE_STD, ge=0.0)
    labeled_fraction: float = Field(SyntheticDefaults.LABELED_FRACTION, gt=0.0, le=1.0)
    fps: float = Field(SyntheticDefaults.FPS, gt=0.0)
    maxval: int = Field(SyntheticDefaults.MAXVAL)
    seed: int = Field(0, ge=0)

    @field_validator('classes')
    @classmethod
    def distinguishable_classes(cls, v):
        if len(v) < 3:
            raise ValueError("At least 3 synthetic classes are required")
        unknown = [c for c in v if c not in SYNTHETIC_PATTERNS]
        if unknown:
            raise ValueError(f"Unknown synthetic patterns {unknown}; valid: {list(SYNTHETIC_PATTERNS)}")
        if len(set(v)) != len(v):
            raise ValueError("Duplicate synthetic classes are not allowed")
        return v

    @field_validator('maxval')
    @classmethod
    def supported_depth(cls, v):
        if v not in (255, 65535):
            raise ValueError("maxval must be 255 or 65535")
        return v

    @property
    def resolved_noise_clips(self) -> int:
        return self.clips_per_class if self.noise_clips is None else self.noise_clips

    @property
    def resolved_static_clips(self) -> int:
        return self.clips_per_class if self.static_clips is None else self.static_clips


class PipelineConfig(BaseModel):
    seed: int = Field(0, ge=0, description="Global seed")
    taxonomy: List[str] = Field(default_factory=lambda: list(CaptionDefaults.TAXONOMY))
    filter: FilterConfig = Field(default_factory=FilterConfig)
    capture: CaptureConfig = Field(default_factory=CaptureConfig)
    labeler: ContrastiveConfig = Field(default_factory=ContrastiveConfig)
    federated: FederatedConfig = Field(default_factory=FederatedConfig)
    use_federated: bool = Field(False, description="Train the labeler with fed-sim instead of centrally")
    captioner: CaptionConfig = Field(default_factory=CaptionConfig)
    llm: LlmConfig = Field(default_factory=LlmConfig)
    lora: LoraSettings = Field(default_factory=LoraSettings)
    synthetic: SyntheticSpec = Field(default_factory=SyntheticSpec)

    @field_validator('taxonomy')
    @classmethod
    def unique_taxonomy(cls, v):
        if not v:
            raise ValueError("taxonomy cannot be empty")
        if len(set(v)) != len(v):
            raise ValueError("taxonomy names must be unique")
        return v

    @classmethod
    def from_file(cls, path: Optional[Path], overrides: Optional[Dict[str, Any]] = None) -> "PipelineConfig":
        """
        Load a TOML or JSON config file and apply dotted-key overrides.

        Args:
            path: Config file (.toml or .json); None starts from defaults
            overrides: e.g. {"filter.sigma": 0.4, "seed": 7}; None values are ignored

        Raises:
            ConfigurationError on unreadable files or invalid values
        """
        data: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            try:
                if path.suffix == ".toml":
                    data = tomllib.loads(path.read_text(encoding="utf-8"))
                elif path.suffix == ".json":
                    data = json.loads(path.read_text(encoding="utf-8"))
                else:
                    raise ConfigurationError(f"Unsupported config format '{path.suffix}'", field=str(path))
            except (OSError, json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
                raise ConfigurationError(f"Cannot read config {path}: {e}", field=str(path)) from e

        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            node = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node.setdefault(key, {})
            node[leaf] = value

        try:
            config = cls.model_validate(data)
        except PydanticValidationError as e:
            raise ConfigurationError(f"Invalid configuration: {e}") from e

        logger.debug(f"Loaded pipeline config (seed={config.seed}, taxonomy={len(config.taxonomy)} actions)")
        return config
