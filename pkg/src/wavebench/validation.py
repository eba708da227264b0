"""Input validation helpers used at the public API boundaries."""

import numpy as np

from .errors import InputError, ParameterError, ShapeError


def check_positive(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ParameterError(f"{name} must be positive and finite, got {value}")
    return value


def check_non_negative(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise ParameterError(f"{name} must be non-negative and finite, got {value}")
    return value


def check_power_of_two(value, name: str) -> int:
    value = int(value)
    if value < 2 or value & (value - 1):
        raise ParameterError(f"{name} must be a power of two >= 2, got {value}")
    return value


def check_image(image, name: str = "image") -> np.ndarray:
    """Coerce to a float64 (H, W) or (H, W, C) array and require finiteness."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim not in (2, 3) or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be (H, W) or (H, W, C), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def check_frames(frames, name: str = "frames") -> np.ndarray:
    """Stack a video into a float array of shape (T, H, W[, C]), T >= 1.

    Accepts a sequence of frames or an already stacked array; float32 input
    is preserved, everything else is promoted to float64.
    """
    if isinstance(frames, np.ndarray):
        arr = frames
    else:
        try:
            arr = np.stack([np.asarray(f) for f in frames])
        except (TypeError, ValueError) as exc:
            raise ShapeError(f"{name}: frames do not stack: {exc}") from None
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if arr.ndim not in (3, 4) or arr.shape[0] < 1:
        raise InputError(
            f"{name} must be a non-empty stack of (H, W) or (H, W, C) frames, "
            f"got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what} must share a shape, got {a.shape} vs {b.shape}")
