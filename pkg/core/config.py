"""
Configuration constants for the low-resolution behavior captioning pipeline.

This file holds the default values every stage falls back to when a config file
or command-line flag does not override them. Runtime (validated) configuration
lives in core/models/settings.py and reads its defaults from here.
"""
import logging
from enum import IntEnum


# Frame container
class FrameDefaults:
    """Frame container and normalization settings"""
    MIN_FRAME_SIDE = 8
    MANIFEST_NAME = "manifest.json"
    FRAMES_DIR = "frames"
    FRAME_NAME_DIGITS = 6
    MAX_MAXVAL = 65535  # P5 samples above 255 are stored as big-endian 16-bit
    DEFAULT_MAXVAL = 65535  # computed frames (crops) are stored at 16 bit


# Window-based sensitivity filtering
class FilterDefaults:
    """Sliding-window filter settings"""
    WINDOW_SIZE = 8
    SIGMA = 0.5
    MIN_SIGNIFICANT = 2  # N
    ACTIVITY_FLOOR = 0.005  # mean abs diff below which a window is static
    INVERT_RULE = False
    STRIDE = 1


# Action capture
class CaptureDefaults:
    """Detector, coherence and cropping settings"""
    EPSILON_DIAGONAL_FRACTION = 0.2  # ε default = 0.2 × frame diagonal
    MIN_CONFIDENCE = 0.25
    BLOB_THRESHOLD = 0.1
    BLOB_MIN_AREA = 4  # pixels; smaller components are sensor specks
    BACKGROUND_FRAMES = 15
    CROP_MARGIN = 0.10
    CROP_SIZE = (32, 32)  # (H, W)


# Contrastive labeler
class LabelerDefaults:
    """Embedding network and training hyperparameters"""
    INPUT_DIM = 32 * 32
    HIDDEN_DIM = 128
    EMBEDDING_DIM = 64

    TAU = 0.5
    LAMBDA = 0.5
    SAME_CLASS_NEGATIVE_WEIGHT = 0.0
    BATCH_SIZE = 32
    LEARNING_RATE = 0.01
    EPOCHS = 50
    STANDARD_DENOMINATOR = False

    # Augmentation
    NOISE_STD = 0.02
    HFLIP_PROB = 0.5
    CROP_SCALE_MIN = 0.8

    TOP_K = 3
    SOFTMAX_TOLERANCE = 1e-9


# Federated simulation
class FederatedDefaults:
    """Client partitioning and FedAvg round settings"""
    NUM_CLIENTS = 4
    DIRICHLET_ALPHA = 1.0
    ROUNDS = 20
    LOCAL_EPOCHS = 1
    MAX_PARTITION_RETRIES = 100
    MAX_CLIENT_WORKERS = 4

    # Simulated transport for the timing breakdown
    UPLINK_BYTES_PER_MS = 1250.0  # ~10 Mbit/s
    DOWNLINK_BYTES_PER_MS = 2500.0


# Captioner
class CaptionDefaults:
    """Consistency checking and prompt settings"""
    TOP_K = 3
    P_MIN = 0.4
    MIN_RUN = 4  # L
    SMOOTHING_WINDOW = 5  # m, odd
    FPS = 10.0
    RULES_FILE = "consistency_rules.json"

    # Default action taxonomy: the 16 activities of the depth-camera home testbed
    TAXONOMY = [
        "Sitting",
        "Other actions",
        "Standing",
        "Walking",
        "Eating/Medication",
        "Grooming/Hair styling",
        "Exercising",
        "Handling objects",
        "Interacting/Socializing",
        "Sleeping/Lying down",
        "Transitioning (Sit/Stand)",
        "Using mobile phone",
        "Drinking",
        "Cleaning",
        "Dressing/Undressing",
        "Rubbing/Washing hands",
    ]


# LLM client
class LlmDefaults:
    """Chat-completion client settings"""
    ENDPOINT = "http://localhost:8080/v1/chat/completions"
    MODEL = "llama-3.1-70b-instruct"
    API_KEY_ENV = "LLM_API_KEY"
    TEMPERATURE = 0.0
    MAX_TOKENS = 512
    TIMEOUT_MS = 60_000
    MAX_RETRIES = 3
    BACKOFF_BASE_MS = 500
    BACKOFF_MULTIPLIER = 2.0
    RETRYABLE_STATUS = (429, 500, 502, 503, 504)


# LoRA
class LoraDefaults:
    """Low-rank adapter settings"""
    RANK = 8
    ALPHA = 1.0
    INIT_STD = 0.02


# Synthetic data
class SyntheticDefaults:
    """Desk-scale synthetic dataset generator settings"""
    FRAME_SIZE = 32
    FRAMES_PER_CLIP = 24
    CLIPS_PER_CLASS = 20
    CLASSES = ["translating", "oscillating", "expanding"]
    LABELED_FRACTION = 0.25
    SPIKE_PROBABILITY = 0.05
    SPIKE_AMPLITUDE = 0.25
    SENSOR_NOISE_STD = 0.002
    FPS = 10.0
    MAXVAL = 255

    # Synthetic motion pattern -> taxonomy action name
    CLASS_ACTIONS = {
        "translating": "Walking",
        "oscillating": "Exercising",
        "expanding": "Transitioning (Sit/Stand)",
        "static": "Sitting",
    }


# Process exit codes
class ExitCode(IntEnum):
    """Exit codes of the command line"""
    SUCCESS = 0
    CONFIG_ERROR = 2
    STAGE_FAILURE = 3
    EXTERNAL_SERVICE_FAILURE = 4


# API Server Configuration
class ServerConfig:
    """FastAPI server configuration"""
    DEFAULT_HOST = "0.0.0.0"
    DEFAULT_PORT = 8000
    API_TITLE = "Low-Res Behavior Captioning API"
    API_VERSION = "1.0.0"
    FIXTURES_ROOT_ENV = "CAPTION_FIXTURES_ROOT"  # replay fixture directories must lie below this root
    DEFAULT_FIXTURES_ROOT = "fixtures"


# Logging Configuration
class LoggingConfig:
    """Logging configuration"""
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    DEFAULT_LOG_LEVEL = "INFO"


def configure_logging(level: str = LoggingConfig.DEFAULT_LOG_LEVEL) -> None:
    """Configure root logging once for an entry point."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LoggingConfig.LOG_FORMAT
    )


# Export all config classes for easy importing
__all__ = [
    'FrameDefaults',
    'FilterDefaults',
    'CaptureDefaults',
    'LabelerDefaults',
    'FederatedDefaults',
    'CaptionDefaults',
    'LlmDefaults',
    'LoraDefaults',
    'SyntheticDefaults',
    'ExitCode',
    'ServerConfig',
    'LoggingConfig',
    'configure_logging'
]
