"""Stochastic views of a crop: horizontal flip, crop-and-resize, Gaussian noise."""
import numpy as np

from core.action_capture.cropping import resample_region
from core.models.settings import AugmentationConfig


def hflip(crop: np.ndarray) -> np.ndarray:
    return crop[:, ::-1]


def random_resized_crop(crop: np.ndarray, scale_min: float, rng: np.random.Generator) -> np.ndarray:
    """Resample a random sub-window with side fraction in [scale_min, 1] back to full size."""
    height, width = crop.shape
    scale = rng.uniform(scale_min, 1.0)
    x0 = rng.uniform(0.0, width * (1.0 - scale))
    y0 = rng.uniform(0.0, height * (1.0 - scale))
    region = (x0, y0, x0 + width * scale, y0 + height * scale)
    return resample_region(crop, region, (height, width))


def augment(crop: np.ndarray, rng: np.random.Generator, config: AugmentationConfig) -> np.ndarray:
    """
    One augmented view; flip, then crop-and-resize, then clamped noise.

    Random draws happen in a fixed order whether or not an augmentation is
    active, so a given rng state always yields the same view.
    """
    view = np.asarray(crop, dtype=np.float64)
    if rng.random() < config.hflip_prob:
        view = hflip(view)
    view = random_resized_crop(view, config.crop_scale_min, rng)
    noise = rng.normal(0.0, 1.0, view.shape)
    if config.noise_std > 0.0:
        view = np.clip(view + config.noise_std * noise, 0.0, 1.0)
    return view


def augment_batch(crops: np.ndarray, rng: np.random.Generator, config: AugmentationConfig) -> np.ndarray:
    return np.stack([augment(crop, rng, config) for crop in crops])
