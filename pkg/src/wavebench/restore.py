"""Restoration baselines with a scikit-learn estimator surface.

All three baselines are non-learned: fit() consumes only the distorted
sequence itself.  FirstFrame and PixelAverage produce a single image;
GridRegistration estimates a per-frame control grid of backward warps that
pulls every frame toward a shared latent image, then applies those warps to
the original frames.
"""

import math

import cv2
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import rng
from .errors import InputError, OptimizationError, ShapeError
from .interp import bilinear_sample, bilinear_sample_grad
from .validation import check_frames

RESTORER_NAMES = ("first_frame", "pixel_average", "grid_registration")

_LUMA = np.array([0.299, 0.587, 0.114])


def _to_gray(frames: np.ndarray) -> np.ndarray:
    if frames.ndim == 3:
        return frames.astype(np.float64)
    if frames.shape[-1] == 1:
        return frames[..., 0].astype(np.float64)
    if frames.shape[-1] == 3:
        return frames.astype(np.float64) @ _LUMA
    raise InputError(f"expected 1- or 3-channel frames, got shape {frames.shape}")


class FirstFrame(BaseEstimator):
    """Restore a sequence by its first frame."""

    multi_frame = False

    def fit(self, X, y=None):
        frames = check_frames(X, "X")
        self.prediction_ = np.asarray(frames[0], dtype=np.float64).copy()
        self.n_frames_in_ = int(frames.shape[0])
        return self

    def predict(self, X=None):
        check_is_fitted(self, "prediction_")
        return self.prediction_.copy()


class PixelAverage(BaseEstimator):
    """Restore a sequence by its per-pixel temporal mean."""

    multi_frame = False

    def fit(self, X, y=None):
        frames = check_frames(X, "X")
        self.prediction_ = frames.mean(axis=0, dtype=np.float64)
        self.n_frames_in_ = int(frames.shape[0])
        return self

    def predict(self, X=None):
        check_is_fitted(self, "prediction_")
        return self.prediction_.copy()


# ---------------------------------------------------------------------------
# Grid registration
# ---------------------------------------------------------------------------


def upsample_matrix(size: int, nodes: int, spacing: float) -> np.ndarray:
    """(size, nodes) linear-interpolation weights from control nodes to pixels.

    Node a sits at pixel (a + 0.5) * spacing - 0.5; pixels outside the node
    range extend the edge value.
    """
    pos = (np.arange(nodes) + 0.5) * spacing - 0.5
    coords = np.arange(size, dtype=np.float64)
    weights = np.zeros((size, nodes))
    if nodes == 1:
        weights[:, 0] = 1.0
        return weights
    seg = np.clip(np.searchsorted(pos, coords) - 1, 0, nodes - 2)
    frac = np.clip((coords - pos[seg]) / (pos[seg + 1] - pos[seg]), 0.0, 1.0)
    rows = np.arange(size)
    weights[rows, seg] = 1.0 - frac
    weights[rows, seg + 1] += frac
    return weights


def sample_pairs(n_frames: int, per_frame: int, generator: np.random.Generator):
    """Draw `per_frame` distinct partner frames for every frame index.

    Partners are assigned by cyclic shifts shared across frames: each frame i
    is paired with (i + s) mod n_frames for `per_frame` distinct shifts s drawn
    uniformly from 1..n_frames-1.  Per frame that is a uniform draw of distinct
    partners, and the structure lets the objective replace scatter/gather with
    contiguous slice arithmetic.
    """
    per_frame = min(per_frame, n_frames - 1)
    if per_frame < 1:
        raise InputError("pair sampling needs at least 2 frames")
    shifts = generator.choice(n_frames - 1, size=per_frame, replace=False) + 1
    first = np.repeat(np.arange(n_frames), per_frame)
    second = (first.reshape(n_frames, per_frame) + shifts[None, :]) % n_frames
    return first, second.reshape(-1)


def _scatter_add(target: np.ndarray, idx: np.ndarray, values: np.ndarray, sign: float,
                 buffer: np.ndarray | None = None) -> None:
    """target[idx[k]] += sign * values[k], summing duplicate indices.

    Sort-and-reduce keeps this a single vectorized pass; ufunc.at would walk
    the arrays elementwise and dominates the optimizer's runtime otherwise.
    `buffer` (same shape as values) avoids a large reallocation per call.
    """
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    if buffer is None:
        permuted = values[order]
    else:
        permuted = buffer[: values.shape[0]]
        np.take(values, order, axis=0, out=permuted)
    sums = np.add.reduceat(permuted, starts, axis=0)
    target[sorted_idx[starts]] += sign * sums


def _cyclic_shifts(first: np.ndarray, second: np.ndarray, n_frames: int):
    """Shift list when the pairs follow the sample_pairs cyclic layout, else None."""
    if first.size == 0 or first.size % n_frames:
        return None
    per = first.size // n_frames
    if not np.array_equal(first, np.repeat(np.arange(n_frames), per)):
        return None
    rel = (second.reshape(n_frames, per) - np.arange(n_frames)[:, None]) % n_frames
    if (rel == rel[0]).all() and (rel[0] > 0).all():
        return [int(s) for s in rel[0]]
    return None


def registration_objective(
    working: np.ndarray,
    grids: np.ndarray,
    pairs,
    *,
    spacing: float,
    charbonnier_eps: float = 1e-3,
    smoothness_weight: float = 0.1,
    magnitude_weight: float = 0.01,
    drift_weight: float = 1.0,
    frame_block: int = 32,
):
    """Loss and analytic gradient of the shared-latent registration model.

    Parameters
    ----------
    working : (T, S, S) float array of grayscale frames
    grids : (T, gh, gw, 2) control-point offsets in working pixels;
        channel 0 shifts columns (x), channel 1 shifts rows (y)
    pairs : (first, second) index arrays of compared frame pairs
    spacing : control-point spacing in working pixels

    The loss is the mean Charbonnier photometric error between warped frame
    pairs, plus quadratic penalties on offset magnitude, on the interior
    Laplacian of each grid (smoothness) and on the per-frame mean offset
    (drift, which pins the translation gauge).

    Returns (loss, gradient) with gradient.shape == grids.shape.
    """
    n_frames, size, size_w = working.shape
    if size != size_w:
        raise ShapeError(f"working frames must be square, got {working.shape}")
    t_g, gh, gw, two = grids.shape
    if t_g != n_frames or two != 2:
        raise ShapeError(f"grids shape {grids.shape} does not match {n_frames} frames")
    first, second = (np.asarray(p, dtype=np.intp) for p in pairs)
    if first.shape != second.shape or first.size == 0:
        raise InputError("pair arrays must be non-empty and equal-length")

    # all pixel-sized temporaries follow the frame dtype, so float32 input
    # runs the whole photometric pass in float32
    dt = working.dtype if working.dtype.kind == "f" else np.dtype(np.float64)
    row_w = upsample_matrix(size, gh, spacing).astype(dt)
    col_w = upsample_matrix(size, gw, spacing).astype(dt)
    dense = np.einsum("ya,tabc,xb->tyxc", row_w, grids.astype(dt), col_w, optimize=True)
    base = np.arange(size, dtype=dt)
    px = base[None, None, :] + dense[..., 0]
    py = base[None, :, None] + dense[..., 1]

    warped = np.empty(working.shape, dtype=dt)
    grad_x = np.empty_like(warped)
    grad_y = np.empty_like(warped)
    for t in range(n_frames):
        warped[t], grad_x[t], grad_y[t] = bilinear_sample_grad(working[t], px[t], py[t])

    # photometric term
    eps = dt.type(charbonnier_eps)
    scale = 1.0 / (first.size * size * size)
    loss = 0.0
    d_warped = np.zeros_like(warped)
    shifts = _cyclic_shifts(first, second, n_frames)
    if shifts is not None:
        # cyclic-shift pair structure (the sample_pairs layout): everything
        # reduces to contiguous slice arithmetic, no gather or scatter
        diff = np.empty_like(warped)
        root = np.empty_like(warped)
        for s in shifts:
            np.subtract(warped[: n_frames - s], warped[s:], out=diff[: n_frames - s])
            np.subtract(warped[n_frames - s :], warped[:s], out=diff[n_frames - s :])
            np.multiply(diff, diff, out=root)
            root += eps * eps
            np.sqrt(root, out=root)
            loss += float(root.sum(dtype=np.float64)) - warped.size * float(eps)
            np.divide(diff, root, out=diff)  # Charbonnier influence d/d(diff)
            d_warped += diff
            d_warped[s:] -= diff[: n_frames - s]
            d_warped[:s] -= diff[n_frames - s :]
    else:
        # arbitrary pair lists stream in chunks to bound the temporaries
        chunk = int(min(first.size, max(1, frame_block * 8)))
        buf_a = np.empty((chunk, size, size), dtype=dt)
        buf_b = np.empty_like(buf_a)
        buf_c = np.empty_like(buf_a)
        for start in range(0, first.size, chunk):
            stop = min(start + chunk, first.size)
            n = stop - start
            diff, root, perm = buf_a[:n], buf_b[:n], buf_c[:n]
            np.take(warped, first[start:stop], axis=0, out=diff)
            np.take(warped, second[start:stop], axis=0, out=root)
            np.subtract(diff, root, out=diff)
            np.multiply(diff, diff, out=root)
            root += eps * eps
            np.sqrt(root, out=root)
            loss += float(root.sum(dtype=np.float64)) - float(n) * size * size * float(eps)
            np.divide(diff, root, out=diff)
            _scatter_add(d_warped, first[start:stop], diff, 1.0, buffer=perm)
            _scatter_add(d_warped, second[start:stop], diff, -1.0, buffer=perm)
    loss *= scale
    d_warped *= scale

    grad = np.empty_like(grids)
    grad[..., 0] = np.einsum("ya,tyx,xb->tab", row_w, d_warped * grad_x, col_w, optimize=True)
    grad[..., 1] = np.einsum("ya,tyx,xb->tab", row_w, d_warped * grad_y, col_w, optimize=True)

    if magnitude_weight:
        loss += magnitude_weight * float(np.mean(grids * grids))
        grad += (2.0 * magnitude_weight / grids.size) * grids
    if smoothness_weight and gh >= 3 and gw >= 3:
        lap = (
            grids[:, 2:, 1:-1]
            + grids[:, :-2, 1:-1]
            + grids[:, 1:-1, 2:]
            + grids[:, 1:-1, :-2]
            - 4.0 * grids[:, 1:-1, 1:-1]
        )
        loss += smoothness_weight * float(np.mean(lap * lap))
        res = np.zeros_like(grids)
        res[:, 1:-1, 1:-1] = (2.0 * smoothness_weight / lap.size) * lap
        grad -= 4.0 * res
        grad[:, :-1] += res[:, 1:]
        grad[:, 1:] += res[:, :-1]
        grad[:, :, :-1] += res[:, :, 1:]
        grad[:, :, 1:] += res[:, :, :-1]
    if drift_weight:
        mean_off = grids.mean(axis=(1, 2))  # (T, 2)
        loss += drift_weight * float(np.mean(np.sum(mean_off * mean_off, axis=1)))
        grad += (2.0 * drift_weight / (n_frames * gh * gw)) * mean_off[:, None, None, :]
    return loss, grad


class GridRegistration(BaseEstimator):
    """Joint non-rigid registration of a sequence to a shared latent image.

    Each frame gets a coarse grid of 2-d offsets (one node per
    `grid_spacing` x `grid_spacing` working pixels).  Offsets are linearly
    upsampled to a dense backward warp, frames are warped, and random frame
    pairs are compared under a Charbonnier penalty; Adam minimizes the
    objective of registration_objective(), coarse to fine over an image
    pyramid so shifts of several pixels stay inside the photometric capture
    range.  predict() upsamples the fitted grids bicubically to the input
    resolution and warps the original frames, so restored output keeps full
    detail.

    Raises OptimizationError (with the loss trace attached) when the logged
    loss rises for `divergence_patience` consecutive checkpoints.
    """

    multi_frame = True

    def __init__(
        self,
        grid_spacing=16,
        working_size=256,
        pairs_per_frame=12,
        iterations=300,
        step_size=0.5,
        final_step_fraction=0.05,
        charbonnier_eps=1e-3,
        smoothness_weight=0.1,
        magnitude_weight=0.001,
        drift_weight=0.05,
        smoothing_sigma=1.0,
        pyramid_levels=3,
        log_every=10,
        divergence_patience=5,
        seed=0,
    ):
        self.grid_spacing = grid_spacing
        self.working_size = working_size
        self.pairs_per_frame = pairs_per_frame
        self.iterations = iterations
        self.step_size = step_size
        self.final_step_fraction = final_step_fraction
        self.charbonnier_eps = charbonnier_eps
        self.smoothness_weight = smoothness_weight
        self.magnitude_weight = magnitude_weight
        self.drift_weight = drift_weight
        self.smoothing_sigma = smoothing_sigma
        self.pyramid_levels = pyramid_levels
        self.log_every = log_every
        self.divergence_patience = divergence_patience
        self.seed = seed

    def _working_frames(self, frames: np.ndarray) -> np.ndarray:
        gray = _to_gray(frames)
        ws = int(self.working_size)
        if gray.shape[1:] == (ws, ws):
            return gray
        interp = cv2.INTER_AREA if min(gray.shape[1:]) >= ws else cv2.INTER_LINEAR
        return np.stack([cv2.resize(f, (ws, ws), interpolation=interp) for f in gray])

    def fit(self, X, y=None):
        frames = check_frames(X, "X")
        if frames.shape[0] < 2:
            raise InputError("grid registration needs at least 2 frames")
        # float32 halves the memory traffic of the optimizer's hot loop;
        # grids and Adam state stay float64
        work = self._working_frames(frames).astype(np.float32)
        n_frames = work.shape[0]
        ws = int(self.working_size)
        spacing = float(self.grid_spacing)
        nodes = max(2, math.ceil(ws / spacing))
        grids = np.zeros((n_frames, nodes, nodes, 2))

        # coarse-to-fine: start on downscaled frames where large shifts fall
        # inside the bilinear gradient's capture range, then refine; offsets
        # are kept in full working-resolution pixels throughout
        schedule = []
        for level in range(max(1, int(self.pyramid_levels)) - 1, -1, -1):
            size = int(round(ws / 2.0**level))
            if size < 16 or size < 2 * nodes:
                continue
            iters = int(self.iterations) if level == 0 else max(1, int(self.iterations) // 2)
            schedule.append((size, iters))
        if not schedule:
            schedule = [(ws, int(self.iterations))]

        pair_gen = rng.stream(self.seed, "registration", "pairs")
        beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
        trace = []
        for size, iterations in schedule:
            factor = size / ws
            if size == ws:
                scaled = work
            else:
                scaled = np.stack(
                    [cv2.resize(f, (size, size), interpolation=cv2.INTER_AREA) for f in work]
                )
            if self.smoothing_sigma:
                # sub-pixel photometric signal is cleaner on slightly blurred
                # frames; the fitted warp is applied to the originals either way
                sigma = float(self.smoothing_sigma)
                scaled = np.stack([cv2.GaussianBlur(f, (0, 0), sigma) for f in scaled])
            moment = np.zeros_like(grids)
            second_moment = np.zeros_like(grids)
            window = 0.0
            streak = 0
            last_checkpoint = None
            for it in range(1, iterations + 1):
                pairs = sample_pairs(n_frames, int(self.pairs_per_frame), pair_gen)
                loss, grad = registration_objective(
                    scaled,
                    grids * factor,
                    pairs,
                    spacing=spacing * factor,
                    charbonnier_eps=self.charbonnier_eps,
                    smoothness_weight=self.smoothness_weight,
                    magnitude_weight=self.magnitude_weight,
                    drift_weight=self.drift_weight,
                )
                grad *= factor
                moment = beta1 * moment + (1.0 - beta1) * grad
                second_moment = beta2 * second_moment + (1.0 - beta2) * grad * grad
                m_hat = moment / (1.0 - beta1**it)
                v_hat = second_moment / (1.0 - beta2**it)
                # geometric step decay: the update magnitude sets the precision
                # floor, so finish well below a pixel
                lr = self.step_size * float(self.final_step_fraction) ** (it / iterations)
                grids -= lr * m_hat / (np.sqrt(v_hat) + adam_eps)
                window += loss
                if it % int(self.log_every) == 0:
                    checkpoint = window / int(self.log_every)
                    window = 0.0
                    # a >2% rise counts as divergence evidence; noise from pair
                    # resampling stays well under that once past the first steps
                    if last_checkpoint is not None and checkpoint > last_checkpoint * 1.02:
                        streak += 1
                    else:
                        streak = 0
                    last_checkpoint = checkpoint
                    trace.append(checkpoint)
                    if streak >= int(self.divergence_patience):
                        raise OptimizationError(
                            f"registration diverged: loss rose for {streak} consecutive "
                            f"checkpoints (last {checkpoint:.6g})",
                            trace=trace,
                        )
        self.grids_ = grids
        self.loss_trace_ = trace
        self.n_frames_in_ = n_frames
        self.frame_shape_ = tuple(frames.shape[1:])
        self.working_size_ = ws
        return self

    def predict(self, X):
        """Warp the original frames by the fitted grids, upsampled bicubically."""
        check_is_fitted(self, "grids_")
        frames = check_frames(X, "X")
        if frames.shape[0] != self.n_frames_in_ or tuple(frames.shape[1:]) != self.frame_shape_:
            raise ShapeError(
                f"predict input {frames.shape} does not match the fitted sequence "
                f"({self.n_frames_in_},) + {self.frame_shape_}"
            )
        height, width = frames.shape[1:3]
        scale_x = width / self.working_size_
        scale_y = height / self.working_size_
        ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
        out = np.empty(frames.shape, dtype=np.float64)
        for t in range(frames.shape[0]):
            dense = cv2.resize(self.grids_[t], (width, height), interpolation=cv2.INTER_CUBIC)
            out[t] = bilinear_sample(
                np.asarray(frames[t], dtype=np.float64),
                xs + dense[..., 0] * scale_x,
                ys + dense[..., 1] * scale_y,
            )
        return out

    def dense_offsets(self, index: int) -> np.ndarray:
        """Fitted dense offset field for one frame, in working pixels."""
        check_is_fitted(self, "grids_")
        ws = self.working_size_
        spacing = float(self.grid_spacing)
        weights = upsample_matrix(ws, self.grids_.shape[1], spacing)
        return np.einsum("ya,abc,xb->yxc", weights, self.grids_[index],
                         upsample_matrix(ws, self.grids_.shape[2], spacing), optimize=True)


def make_restorer(name: str, params: dict | None = None, seed: int = 0):
    """Instantiate a baseline by its benchmark name."""
    if name == "first_frame":
        return FirstFrame()
    if name == "pixel_average":
        return PixelAverage()
    if name == "grid_registration":
        return GridRegistration(**dict(params or {}), seed=seed)
    raise InputError(f"unknown restoration method {name!r}; expected one of {RESTORER_NAMES}")
