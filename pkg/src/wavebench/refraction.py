"""Refraction of view rays at a wavy interface, and the image-space
displacement field it induces.

The renderer traces each pixel's view ray through the surface toward a flat
background plane at a fixed optical distance.  With the default indices
(1.33 against 1.0) grazing surface slopes can exceed the critical angle, so
total internal reflection is detected, flagged and kept finite rather than
propagated as NaN.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParameterError
from .validation import check_positive

VIEW_RAY = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class RefractionParams:
    """Interface and severity parameters.

    n1 / n2 is the index ratio seen by the view ray as it crosses the
    surface; `distance` is the optical depth to the background expressed as
    a fraction of the image width, so displacements come out in image
    fractions.  `alpha` blends the surface normals toward flat (0 disables
    all distortion) and `distance_scale` stretches the optical depth; both
    are the knobs the severity calibration turns.  `max_slope` caps the
    refracted ray's slope so near-grazing and reflected rays still land at
    a finite displacement.
    """

    n1: float = 1.33
    n2: float = 1.0
    distance: float = 1.0
    alpha: float = 1.0
    distance_scale: float = 1.0
    max_slope: float = 4.0

    def __post_init__(self):
        check_positive(self.n1, "n1")
        check_positive(self.n2, "n2")
        check_positive(self.distance, "distance")
        check_positive(self.distance_scale, "distance_scale")
        check_positive(self.max_slope, "max_slope")
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must be in [0, 1], got {self.alpha}")

    @property
    def ratio(self) -> float:
        return self.n1 / self.n2


def refract(v1: np.ndarray, normals: np.ndarray, ratio: float):
    """Refract unit rays v1 across unit normals with index ratio n1/n2.

    v2 = r (N x (-N x v1)) - N sqrt(1 - r^2 |N x v1|^2)

    The formula assumes the normal opposes the incident ray; inputs may
    orient normals either way, the sign is fixed internally.  Where the
    radicand goes negative the ray is totally reflected: the radicand is
    clamped to zero and the pixel flagged in the returned mask.

    Returns (v2, tir_mask); v2 is unit-length wherever the mask is False.
    """
    v1 = np.asarray(v1, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    if v1.shape[-1] != 3 or normals.shape[-1] != 3:
        raise InputError("rays and normals must have a trailing axis of 3")
    ratio = float(ratio)
    check_positive(ratio, "ratio")
    v1 = np.broadcast_to(v1, normals.shape)
    # orient each normal against its ray so the formula's sign convention holds
    cos_in = np.sum(normals * v1, axis=-1, keepdims=True)
    n = np.where(cos_in > 0.0, -normals, normals)
    n_dot_v1 = np.sum(n * v1, axis=-1, keepdims=True)
    tangential = v1 - n * n_dot_v1  # equals N x (-N x v1)
    sin2_in = np.sum(tangential * tangential, axis=-1, keepdims=True)
    radicand = 1.0 - ratio * ratio * sin2_in
    tir = radicand[..., 0] < 0.0
    v2 = ratio * tangential - n * np.sqrt(np.maximum(radicand, 0.0))
    return v2, tir


@dataclass
class DisplacementField:
    """Per-pixel background offsets in image-fraction units.

    offsets[..., 0] is the x (column) shift, offsets[..., 1] the y (row)
    shift; `tir` marks pixels whose ray was totally reflected (their offset
    is the capped-slope fallback, finite by construction).
    """

    offsets: np.ndarray
    tir: np.ndarray


def blend_normals(normals: np.ndarray, alpha: float) -> np.ndarray:
    """Interpolate unit normals toward flat: alpha=0 gives (0,0,1) exactly.

    Float32 input stays float32; calibration leans on that for throughput.
    """
    normals = np.asarray(normals)
    if normals.dtype not in (np.float32, np.float64):
        normals = normals.astype(np.float64)
    if normals.shape[-1] != 3:
        raise InputError("normals must have a trailing axis of 3")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0.0:
        flat = np.zeros_like(normals)
        flat[..., 2] = 1.0
        return flat
    if alpha == 1.0:
        return normals
    blended = normals * normals.dtype.type(alpha)
    blended[..., 2] += normals.dtype.type(1.0 - alpha)
    norm = np.sqrt(np.sum(blended * blended, axis=-1, keepdims=True))
    blended /= norm
    return blended


def displacement_field(normals: np.ndarray, params: RefractionParams) -> DisplacementField:
    """Trace straight-down view rays through the surface to the background.

    The refracted direction's slope (transverse over longitudinal component)
    times the scaled optical distance gives the sampling offset.  Slopes are
    capped at params.max_slope: beyond it (TIR, near-grazing exits) the
    offset saturates instead of diverging.

    For the fixed view ray (0, 0, 1) the refraction reduces to a componentwise
    closed form; it matches refract() to roundoff (see the equivalence test)
    while touching far less memory, which the calibration loop depends on.
    """
    blended = blend_normals(normals, params.alpha)
    dtype = blended.dtype
    nx = blended[..., 0]
    ny = blended[..., 1]
    nz = blended[..., 2]
    ratio = dtype.type(params.ratio)
    # v2 = ratio * t + n * sqrt(max(1 - ratio^2 sin^2, 0)) with t = v1 - n*nz
    sin2 = nx * nx + ny * ny
    radicand = dtype.type(1.0) - ratio * ratio * sin2
    tir = radicand < 0.0
    root = np.sqrt(np.maximum(radicand, dtype.type(0.0)))
    trans_factor = root - ratio * nz  # v2_xy = n_xy * trans_factor
    v2x = nx * trans_factor
    v2y = ny * trans_factor
    v2z = ratio * sin2 + nz * root
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_z = dtype.type(1.0) / v2z
    slope_x = v2x * inv_z
    slope_y = v2y * inv_z
    max_slope = dtype.type(params.max_slope)
    usable = (v2z > 0.0) & np.isfinite(slope_x) & np.isfinite(slope_y)
    if not np.all(usable):
        # degenerate rays (grazing or reflected): keep the transverse direction
        with np.errstate(divide="ignore", invalid="ignore"):
            trans_inv = max_slope / np.hypot(v2x, v2y)
        fallback_scale = np.where(np.isfinite(trans_inv), trans_inv, dtype.type(0.0))
        slope_x = np.where(usable, slope_x, v2x * fallback_scale)
        slope_y = np.where(usable, slope_y, v2y * fallback_scale)
    mag = np.hypot(slope_x, slope_y)
    over = mag > max_slope
    if np.any(over):
        shrink = np.where(over, max_slope / np.where(mag > 0.0, mag, dtype.type(1.0)), dtype.type(1.0))
        slope_x = slope_x * shrink
        slope_y = slope_y * shrink
    distance = dtype.type(params.distance * params.distance_scale)
    offsets = np.stack([slope_x * distance, slope_y * distance], axis=-1)
    return DisplacementField(offsets=offsets, tir=tir)
