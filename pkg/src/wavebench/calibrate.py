"""Severity and playback-speed calibration.

Severity: a single knob s >= 0 is mapped to the refraction parameters
(alpha = min(s, 1), distance_scale = max(s, 1)) and searched until the
pooled standard deviation of displacement components over a set of profiles
hits the level target.  The pooled std is monotone in s, zero at s = 0 and
unbounded as s grows, so a bracket always exists; inside the bracket the
search interpolates (false position) with a midpoint guard, which needs
far fewer simulator evaluations than plain bisection.

Speed: wave families evolve at different intrinsic rates, so each family's
clock is scaled by a multiplier chosen to match the mean per-frame
displacement change of a reference family (the reference itself keeps
multiplier 1 by definition).
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CalibrationError
from .refraction import RefractionParams, displacement_field
from .render import SeverityLevel
from .validation import check_positive


@dataclass(frozen=True)
class CalibrationEntry:
    """Frozen result of calibrating one (wave_type, level) cell."""

    wave_type: str
    level: str
    knob: float
    alpha: float
    distance_scale: float
    achieved_std: float
    target_std: float
    evaluations: int
    time_scale: float = 1.0
    achieved_rate: float = float("nan")
    reference_rate: float = float("nan")

    def apply(self, params: RefractionParams) -> RefractionParams:
        return replace(params, alpha=self.alpha, distance_scale=self.distance_scale)

    def to_dict(self) -> dict:
        return {
            "wave_type": self.wave_type,
            "level": self.level,
            "knob": self.knob,
            "alpha": self.alpha,
            "distance_scale": self.distance_scale,
            "achieved_std": self.achieved_std,
            "target_std": self.target_std,
            "evaluations": self.evaluations,
            "time_scale": self.time_scale,
            "achieved_rate": None if math.isnan(self.achieved_rate) else self.achieved_rate,
            "reference_rate": None if math.isnan(self.reference_rate) else self.reference_rate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationEntry":
        data = dict(data)
        for key in ("achieved_rate", "reference_rate"):
            if data.get(key) is None:
                data[key] = float("nan")
        return cls(**data)


def knob_params(base: RefractionParams, knob: float) -> RefractionParams:
    """Map the scalar severity knob onto (alpha, distance_scale)."""
    if knob < 0.0:
        raise CalibrationError(f"severity knob must be >= 0, got {knob}")
    return replace(base, alpha=min(knob, 1.0), distance_scale=max(knob, 1.0))


def collect_normals(profiles, size: int, frame_count: int, time_scale: float = 1.0):
    """Precompute float32 normal stacks, one (F, size, size, 3) per profile.

    Calibration re-evaluates displacements many times per bisection; the
    normals do not depend on the knob, so they are computed once.
    """
    stacks = []
    for profile in profiles:
        frames = [
            profile.normal_field(i * profile.frame_dt * time_scale, size).astype(np.float32)
            for i in range(frame_count)
        ]
        stacks.append(np.stack(frames))
    return stacks


def pooled_std(normal_stacks, params: RefractionParams) -> float:
    """Std of all displacement components pooled over profiles, frames, pixels."""
    total = 0.0
    total_sq = 0.0
    count = 0
    for stack in normal_stacks:
        comps = displacement_field(stack, params).offsets
        total += float(comps.sum(dtype=np.float64))
        total_sq += float(np.square(comps, dtype=np.float64).sum())
        count += comps.size
    if count == 0:
        raise CalibrationError("no displacement samples to pool")
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    return math.sqrt(var)


def calibrate_amplitude(
    profiles,
    level: SeverityLevel,
    base: RefractionParams,
    *,
    size: int,
    frame_count: int,
    tolerance: float = 0.02,
    max_iterations: int = 60,
    normal_stacks=None,
    eval_cache: dict | None = None,
) -> CalibrationEntry:
    """Search the severity knob until pooled std is within
    tolerance * target of the level target.

    `normal_stacks` / `eval_cache` let callers calibrating several levels of
    the same wave family share work; both are built on demand otherwise.
    """
    check_positive(tolerance, "tolerance")
    if normal_stacks is None:
        normal_stacks = collect_normals(profiles, size, frame_count)
    cache = eval_cache if eval_cache is not None else {}
    evaluations = 0

    def measure(knob: float) -> float:
        nonlocal evaluations
        key = float(knob)
        if key not in cache:
            cache[key] = pooled_std(normal_stacks, knob_params(base, knob))
            evaluations += 1
        return cache[key]

    target = level.target_std
    # alpha = 0 blends to flat normals, so the knob origin is exactly zero std
    lo, std_lo = 0.0, 0.0
    hi = 1.0
    std_hi = measure(hi)
    grow = 0
    while std_hi < target:
        grow += 1
        if grow > 16:
            raise CalibrationError(
                f"{level.name}: cannot bracket target std {target:.4g}; "
                f"std at knob {hi:.4g} is only {std_hi:.4g}"
            )
        lo, std_lo = hi, std_hi
        hi *= 2.0
        std_hi = measure(hi)
    best_knob, best_std = hi, std_hi
    for _ in range(max_iterations):
        if abs(best_std - target) <= tolerance * target:
            break
        span = hi - lo
        if std_hi > std_lo:
            guess = lo + (target - std_lo) * span / (std_hi - std_lo)
        else:
            guess = lo + 0.5 * span
        # keep the step strictly interior so the bracket always shrinks
        if not lo + 1e-3 * span < guess < hi - 1e-3 * span:
            guess = lo + 0.5 * span
        std = measure(guess)
        if abs(std - target) < abs(best_std - target):
            best_knob, best_std = guess, std
        if std < target:
            lo, std_lo = guess, std
        else:
            hi, std_hi = guess, std
    else:
        raise CalibrationError(
            f"{level.name}: knob search did not converge; best std {best_std:.5g} "
            f"vs target {target:.5g} (tolerance {tolerance:.0%})"
        )
    params = knob_params(base, best_knob)
    return CalibrationEntry(
        wave_type=profiles[0].wave_type,
        level=level.name,
        knob=best_knob,
        alpha=params.alpha,
        distance_scale=params.distance_scale,
        achieved_std=best_std,
        target_std=target,
        evaluations=evaluations,
    )


def calibrate_levels(
    profiles,
    levels,
    base: RefractionParams,
    *,
    size: int,
    frame_count: int,
    tolerance: float = 0.02,
    max_iterations: int = 60,
) -> dict:
    """Calibrate several severity levels of one family, sharing the normals
    and the knob -> std evaluations across levels."""
    normal_stacks = collect_normals(profiles, size, frame_count)
    cache: dict = {}
    return {
        level.name: calibrate_amplitude(
            profiles,
            level,
            base,
            size=size,
            frame_count=frame_count,
            tolerance=tolerance,
            max_iterations=max_iterations,
            normal_stacks=normal_stacks,
            eval_cache=cache,
        )
        for level in levels
    }


# ---------------------------------------------------------------------------
# Playback-speed alignment
# ---------------------------------------------------------------------------


def displacement_rate(
    profiles,
    params: RefractionParams,
    *,
    size: int,
    frame_count: int,
    time_scale: float,
) -> float:
    """Mean over consecutive frame pairs of the mean per-pixel L2 change of
    the displacement vector, image fractions per frame."""
    if frame_count < 2:
        raise CalibrationError("rate measurement needs at least 2 frames")
    total = 0.0
    pairs = 0
    for profile in profiles:
        prev = None
        for i in range(frame_count):
            t = i * profile.frame_dt * time_scale
            normals = profile.normal_field(t, size).astype(np.float32)
            offsets = displacement_field(normals, params).offsets.astype(np.float64)
            if prev is not None:
                delta = offsets - prev
                total += float(np.mean(np.linalg.norm(delta, axis=-1)))
                pairs += 1
            prev = offsets
    return total / pairs


def calibrate_speed(
    profiles,
    reference_rate: float,
    params: RefractionParams,
    *,
    size: int,
    frame_count: int = 12,
    tolerance: float = 0.10,
    max_multiplier: float = 16.0,
    max_iterations: int = 40,
) -> tuple:
    """Search the time multiplier until this family's displacement rate
    matches the reference rate within tolerance.

    Returns (multiplier, achieved_rate).  Rates grow from zero with the
    multiplier over the searched range; families that cannot reach the
    reference rate below `max_multiplier` raise CalibrationError.
    """
    check_positive(reference_rate, "reference_rate")

    def measure(m: float) -> float:
        return displacement_rate(profiles, params, size=size, frame_count=frame_count, time_scale=m)

    lo, rate_lo = 0.0, 0.0
    hi = 1.0
    rate_hi = measure(hi)
    while rate_hi < reference_rate:
        if hi >= max_multiplier:
            raise CalibrationError(
                f"speed multiplier capped at {max_multiplier}: rate {rate_hi:.4g} "
                f"still below reference {reference_rate:.4g}"
            )
        lo, rate_lo = hi, rate_hi
        hi = min(hi * 2.0, max_multiplier)
        rate_hi = measure(hi)
    best_m, best_rate = hi, rate_hi
    for _ in range(max_iterations):
        if abs(best_rate - reference_rate) <= tolerance * reference_rate:
            return best_m, best_rate
        span = hi - lo
        if rate_hi > rate_lo:
            guess = lo + (reference_rate - rate_lo) * span / (rate_hi - rate_lo)
        else:
            guess = lo + 0.5 * span
        if not lo + 1e-3 * span < guess < hi - 1e-3 * span:
            guess = lo + 0.5 * span
        rate = measure(guess)
        if abs(rate - reference_rate) < abs(best_rate - reference_rate):
            best_m, best_rate = guess, rate
        if rate < reference_rate:
            lo, rate_lo = guess, rate
        else:
            hi, rate_hi = guess, rate
    raise CalibrationError(
        f"speed search did not converge; best rate {best_rate:.5g} "
        f"vs reference {reference_rate:.5g} (tolerance {tolerance:.0%})"
    )
