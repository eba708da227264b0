"""Bilinear sampling shared by the renderer and the restoration baselines.

Hand-rolled rather than delegated to an image library: the warp must be an
exact piecewise-bilinear function of the sample coordinates (library remap
routines quantize coordinates to fixed point), and the registration gradient
needs the matching analytic derivative.
"""

import numpy as np

from .errors import ShapeError


def bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample `image` at fractional coordinates with border replication.

    Parameters
    ----------
    image : (H, W) or (H, W, C) array
    x, y : broadcast-compatible arrays of column / row coordinates

    Returns
    -------
    Array of shape x.shape (plus a trailing channel axis for 3-d input).
    Coordinates outside the image clamp to the border pixel.
    """
    if image.ndim not in (2, 3):
        raise ShapeError(f"expected 2-d or 3-d image, got shape {image.shape}")
    h, w = image.shape[:2]
    dt = image.dtype if image.dtype.kind == "f" else np.dtype(np.float64)
    x = np.asarray(x, dtype=dt)
    y = np.asarray(y, dtype=dt)
    cx = np.clip(x, 0.0, w - 1.0)
    cy = np.clip(y, 0.0, h - 1.0)
    x0f = np.floor(cx)
    y0f = np.floor(cy)
    x0 = x0f.astype(np.intp)
    y0 = y0f.astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    # subtract the floored floats, not the int indices: float32 - intp would
    # silently promote the whole interpolation to float64
    fx = cx - x0f
    fy = cy - y0f
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = (1.0 - fx) * image[y0, x0] + fx * image[y0, x1]
    bot = (1.0 - fx) * image[y1, x0] + fx * image[y1, x1]
    return (1.0 - fy) * top + fy * bot


def bilinear_sample_grad(image: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Sample a 2-d image and return (value, d/dx, d/dy).

    The derivative is that of the clamped bilinear interpolant, so it is zero
    wherever a coordinate falls outside [0, size-1].
    """
    if image.ndim != 2:
        raise ShapeError(f"gradient sampling needs a 2-d image, got {image.shape}")
    h, w = image.shape
    dt = image.dtype if image.dtype.kind == "f" else np.dtype(np.float64)
    x = np.asarray(x, dtype=dt)
    y = np.asarray(y, dtype=dt)
    cx = np.clip(x, 0.0, w - 1.0)
    cy = np.clip(y, 0.0, h - 1.0)
    x0f = np.floor(cx)
    y0f = np.floor(cy)
    x0 = x0f.astype(np.intp)
    y0 = y0f.astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = cx - x0f
    fy = cy - y0f
    v00 = image[y0, x0]
    v01 = image[y0, x1]
    v10 = image[y1, x0]
    v11 = image[y1, x1]
    top = (1.0 - fx) * v00 + fx * v01
    bot = (1.0 - fx) * v10 + fx * v11
    value = (1.0 - fy) * top + fy * bot
    # Clamp derivative: zero once the raw coordinate leaves the image.
    in_x = (x > 0.0) & (x < w - 1.0)
    in_y = (y > 0.0) & (y < h - 1.0)
    dvdx = ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10)) * in_x
    dvdy = (bot - top) * in_y
    return value, dvdx, dvdy


def resample_bilinear(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a 2-d field to a new resolution, aligning pixel centers."""
    h, w = values.shape
    if (h, w) == (out_h, out_w):
        return values
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    return bilinear_sample(values, xs[None, :], ys[:, None])
