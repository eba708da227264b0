"""Rendering distorted sequences and the on-disk dataset format.

A sequence is a ground-truth image warped by the displacement field of a
wave profile at successive time stamps.  On disk a sequence directory holds
16-bit PNG frames, the ground truth, optional raw displacement fields and a
manifest with content hashes; the manifest is written last so its presence
marks the sequence complete.
"""

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import cv2
import numpy as np

from . import rng
from .errors import (
    DataIOError,
    FormatError,
    InputError,
    IntegrityError,
    ParameterError,
)
from .interp import bilinear_sample
from .refraction import RefractionParams, displacement_field
from .validation import check_image, check_positive

SEVERITY_TARGETS = {
    "low": 0.002,
    "mid": 0.006,
    "high": 0.018,
    "extreme": 0.054,
}

LEVEL_ORDER = ("low", "mid", "high", "extreme")

_FIELD_MAGIC = b"RFB1"
_PNG_SCALE = 65535.0


@dataclass(frozen=True)
class SeverityLevel:
    """A named distortion strength: target pooled std of displacement
    components, in image-fraction units."""

    name: str
    target_std: float

    def __post_init__(self):
        check_positive(self.target_std, "target_std")


def severity_level(name: str) -> SeverityLevel:
    if name not in SEVERITY_TARGETS:
        raise ParameterError(f"unknown severity level {name!r}; expected one of {LEVEL_ORDER}")
    return SeverityLevel(name, SEVERITY_TARGETS[name])


@dataclass
class Background:
    """A ground-truth image in [0, 1], float64, shape (S, S, 3)."""

    image: np.ndarray
    background_id: str


@dataclass
class VideoSequence:
    """An in-memory distorted sequence plus everything needed to score it."""

    frames: list
    ground_truth: Background
    manifest: dict
    displacements: list = field(default=None)


# ---------------------------------------------------------------------------
# Backgrounds
# ---------------------------------------------------------------------------


def ingest_background(path: str, size: int = 512) -> Background:
    """Load an image file, downscale by pixel-area averaging, map to [0, 1]."""
    data = _read_bytes(path)
    raw = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_COLOR)
    if raw is None:
        raise FormatError(f"could not decode image: {path}")
    img = raw.astype(np.float64) / 255.0
    img = img[..., ::-1]  # BGR -> RGB
    if img.shape[:2] != (size, size):
        interp = cv2.INTER_AREA if min(img.shape[:2]) >= size else cv2.INTER_LINEAR
        img = cv2.resize(img, (size, size), interpolation=interp)
    stem = os.path.splitext(os.path.basename(path))[0]
    return Background(image=np.clip(img, 0.0, 1.0), background_id=stem)


def synthetic_background(index: int, size: int = 512, seed: int = 0) -> Background:
    """Procedural textured background: smooth color base, soft blobs,
    rectangles and a stripe layer, deterministic in (seed, index)."""
    g = rng.stream(seed, "background", index)
    base = g.uniform(0.2, 0.8, size=(8, 8, 3))
    img = cv2.resize(base, (size, size), interpolation=cv2.INTER_CUBIC)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    for _ in range(6):
        cx, cy = g.uniform(0.0, size, size=2)
        sigma = size * g.uniform(0.05, 0.2)
        color = g.uniform(-0.5, 0.5, size=3)
        bump = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma**2))
        img += bump[..., None] * color
    for _ in range(4):
        x0, x1 = np.sort(g.integers(0, size, size=2))
        y0, y1 = np.sort(g.integers(0, size, size=2))
        color = g.uniform(0.0, 1.0, size=3)
        mix = g.uniform(0.3, 0.8)
        img[y0 : y1 + 1, x0 : x1 + 1] *= 1.0 - mix
        img[y0 : y1 + 1, x0 : x1 + 1] += mix * color
    for _ in range(2):
        angle = g.uniform(0.0, np.pi)
        cycles = g.uniform(6.0, 24.0)
        amp = g.uniform(0.04, 0.12)
        phase = g.uniform(0.0, 2.0 * np.pi)
        stripes = np.sin(2.0 * np.pi * cycles / size * (xs * np.cos(angle) + ys * np.sin(angle)) + phase)
        img += amp * stripes[..., None] * g.uniform(0.3, 1.0, size=3)
    # multi-octave texture: every patch must carry alignment signal, flat
    # regions would leave warps unobservable
    for cells, amp in ((16, 0.10), (48, 0.06), (128, 0.04)):
        noise = g.uniform(-1.0, 1.0, size=(cells, cells, 3))
        img += amp * cv2.resize(noise, (size, size), interpolation=cv2.INTER_CUBIC)
    return Background(image=np.clip(img, 0.0, 1.0), background_id=f"bg{index:03d}")


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_frame(ground_truth: np.ndarray, displacement) -> np.ndarray:
    """Warp the ground truth by sampling at pixel + offset * image_width.

    Offsets are image fractions; borders replicate, so every output pixel is
    defined even under extreme displacement.
    """
    img = check_image(ground_truth, "ground_truth")
    offsets = displacement.offsets
    if offsets.shape[:2] != img.shape[:2]:
        raise InputError(
            f"displacement shape {offsets.shape[:2]} does not match image {img.shape[:2]}"
        )
    size = img.shape[1]
    ys, xs = np.mgrid[0 : img.shape[0], 0 : img.shape[1]].astype(np.float64)
    return bilinear_sample(img, xs + offsets[..., 0] * size, ys + offsets[..., 1] * size)


def render_sequence(
    background: Background,
    profile,
    params: RefractionParams,
    level: SeverityLevel,
    frame_count: int,
    time_scale: float = 1.0,
    keep_displacements: bool = False,
    manifest_extra: dict | None = None,
) -> VideoSequence:
    """Render `frame_count` frames at times i * frame_dt * time_scale.

    `params` must already carry the calibrated alpha / distance_scale for
    the requested severity level; the level is recorded in the manifest.
    """
    if frame_count < 1:
        raise ParameterError(f"frame_count must be >= 1, got {frame_count}")
    check_positive(time_scale, "time_scale")
    img = check_image(background.image, "background")
    size = img.shape[1]
    frames = []
    displacements = [] if keep_displacements else None
    for i in range(frame_count):
        t = i * profile.frame_dt * time_scale
        normals = profile.normal_field(t, size)
        disp = displacement_field(normals, params)
        frames.append(render_frame(img, disp).astype(np.float32))
        if keep_displacements:
            displacements.append(disp)
    manifest = {
        "schema_version": 1,
        "wave_type": profile.wave_type,
        "level": level.name,
        "target_std": level.target_std,
        "profile_index": profile.profile_index,
        "background_id": background.background_id,
        "frame_count": frame_count,
        "resolution": size,
        "frame_dt": profile.frame_dt,
        "time_scale": float(time_scale),
        "refraction": {
            "n1": params.n1,
            "n2": params.n2,
            "distance": params.distance,
            "alpha": params.alpha,
            "distance_scale": params.distance_scale,
            "max_slope": params.max_slope,
        },
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    return VideoSequence(frames=frames, ground_truth=background, manifest=manifest,
                         displacements=displacements)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def encode_png16(image: np.ndarray) -> bytes:
    """Encode a [0, 1] float image as 16-bit PNG bytes (lossless up to the
    1/65535 quantization step)."""
    img = check_image(image, "image")
    if img.ndim == 2:
        img = img[..., None].repeat(3, axis=-1)
    quant = np.rint(np.clip(img, 0.0, 1.0) * _PNG_SCALE).astype(np.uint16)
    ok, buf = cv2.imencode(".png", quant[..., ::-1])  # RGB -> BGR
    if not ok:
        raise FormatError("PNG encoding failed")
    return buf.tobytes()


def decode_png16(data: bytes) -> np.ndarray:
    raw = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError("could not decode PNG data")
    if raw.dtype != np.uint16:
        raise FormatError(f"expected 16-bit PNG payload, got dtype {raw.dtype}")
    if raw.ndim == 3:
        raw = raw[..., :3][..., ::-1]  # BGR(A) -> RGB
    return raw.astype(np.float64) / _PNG_SCALE


def encode_field(values: np.ndarray) -> bytes:
    """Serialize a float32 (H, W, C) array: magic, LE uint32 h/w/c, raw data."""
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise InputError(f"field must be (H, W[, C]), got shape {values.shape}")
    h, w, c = arr.shape
    header = _FIELD_MAGIC + np.array([h, w, c], dtype="<u4").tobytes()
    return header + arr.astype("<f4").tobytes()


def decode_field(data: bytes) -> np.ndarray:
    if len(data) < 16 or data[:4] != _FIELD_MAGIC:
        raise FormatError("not a raw field blob (bad magic)")
    h, w, c = (int(v) for v in np.frombuffer(data[4:16], dtype="<u4"))
    expected = 16 + h * w * c * 4
    if len(data) != expected:
        raise IntegrityError(f"field blob has {len(data)} bytes, expected {expected}")
    return np.frombuffer(data[16:], dtype="<f4").reshape(h, w, c).copy()


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as handle:
            return handle.read()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from None


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_sequence(sequence: VideoSequence, directory: str, save_displacements: bool = False) -> dict:
    """Write a sequence directory; returns the manifest actually stored.

    Every payload file is hashed into the manifest, and the manifest itself
    is written last, atomically, so a directory with a manifest is complete.
    """
    os.makedirs(directory, exist_ok=True)
    files = {}

    def put(name: str, data: bytes):
        _atomic_write(os.path.join(directory, name), data)
        files[name] = _sha256(data)

    put("gt.png", encode_png16(sequence.ground_truth.image))
    for i, frame in enumerate(sequence.frames):
        put(f"frame_{i:03d}.png", encode_png16(frame))
    if save_displacements:
        if sequence.displacements is None:
            raise InputError("sequence holds no displacement fields to save")
        for i, disp in enumerate(sequence.displacements):
            stacked = np.concatenate(
                [disp.offsets.astype(np.float32), disp.tir[..., None].astype(np.float32)], axis=-1
            )
            put(f"disp/frame_{i:03d}.rfb", encode_field(stacked))
    manifest = dict(sequence.manifest)
    manifest["files"] = files
    _atomic_write(
        os.path.join(directory, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8"),
    )
    return manifest


def read_manifest(directory: str) -> dict:
    path = os.path.join(directory, "manifest.json")
    data = _read_bytes(path)
    try:
        manifest = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {path}: {exc}") from None
    if not isinstance(manifest, dict) or manifest.get("schema_version") != 1:
        raise FormatError(f"unsupported manifest schema in {path}")
    return manifest


def read_sequence(directory: str, load_displacements: bool = False) -> VideoSequence:
    """Load a sequence directory, verifying every file hash from the manifest."""
    manifest = read_manifest(directory)
    files = manifest.get("files", {})

    def fetch(name: str) -> bytes:
        if name not in files:
            raise DataIOError(f"{name} is not listed in the manifest of {directory}")
        data = _read_bytes(os.path.join(directory, name))
        if _sha256(data) != files[name]:
            raise IntegrityError(f"checksum mismatch for {name} in {directory}")
        return data

    gt = decode_png16(fetch("gt.png"))
    frames = [
        decode_png16(fetch(f"frame_{i:03d}.png")).astype(np.float32)
        for i in range(int(manifest["frame_count"]))
    ]
    displacements = None
    if load_displacements:
        from .refraction import DisplacementField

        displacements = []
        for i in range(int(manifest["frame_count"])):
            stacked = decode_field(fetch(f"disp/frame_{i:03d}.rfb"))
            displacements.append(
                DisplacementField(offsets=stacked[..., :2].astype(np.float64),
                                  tir=stacked[..., 2] > 0.5)
            )
    background = Background(image=gt, background_id=str(manifest["background_id"]))
    return VideoSequence(frames=frames, ground_truth=background, manifest=manifest,
                         displacements=displacements)
