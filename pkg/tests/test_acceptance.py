"""Acceptance checks, one per criterion, each printing a [PASS]/[FAIL] line.

Run with `pytest tests/test_acceptance.py -v -s` to see every verdict line as
it completes.  Criterion 8 regenerates a small benchmark and fits the
registration baseline ten times; expect the module to take 20-30 minutes.
"""

import json
import math
import os
import time

import numpy as np
import scipy.ndimage as ndi

from oracles import direct_psnr, direct_ssim
from test_waves import brute_force_height, small_spectral
from wavebench import rng
from wavebench.calibrate import calibrate_levels, collect_normals, pooled_std
from wavebench.cli import EXIT_OK, main
from wavebench.config import DEFAULTS
from wavebench.interp import bilinear_sample
from wavebench.metrics import psnr, ssim
from wavebench.refraction import RefractionParams, refract
from wavebench.render import (
    LEVEL_ORDER,
    read_sequence,
    render_sequence,
    severity_level,
    synthetic_background,
    write_sequence,
)
from wavebench.restore import (
    FirstFrame,
    GridRegistration,
    PixelAverage,
    registration_objective,
    sample_pairs,
)
from wavebench.waves import (
    WAVE_TYPES,
    Grid,
    OceanParams,
    ShallowParams,
    ShallowState,
    make_profiles,
    ocean_height_raw,
    ocean_spectral_init,
    shallow_max_speed,
    shallow_step,
)

SEED = 0


def verdict(number, label, ok, detail):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] criterion {number}: {label} ({detail})", flush=True)
    assert ok, f"criterion {number}: {label} ({detail})"


def test_criterion_1_severity_calibration_hits_targets():
    t0 = time.time()
    base = RefractionParams()
    levels = [severity_level(name) for name in LEVEL_ORDER]
    targets = {"low": 0.002, "mid": 0.006, "high": 0.018, "extreme": 0.054}
    worst = 0.0
    for wave in WAVE_TYPES:
        profiles = make_profiles(wave, 10, SEED, DEFAULTS[wave], 1.0 / 30.0)
        entries = calibrate_levels(
            profiles, levels, base, size=128, frame_count=50, tolerance=0.005
        )
        # judge the knobs by an independent re-measurement, not by the
        # residual the search itself reports
        stacks = collect_normals(profiles, 128, 50)
        for level in levels:
            entry = entries[level.name]
            assert entry.target_std == targets[level.name]
            achieved = pooled_std(stacks, entry.apply(base))
            worst = max(worst, abs(achieved / entry.target_std - 1.0))
    elapsed = time.time() - t0
    verdict(
        1,
        "calibrated displacement std within 2% of all four targets",
        worst <= 0.02 and elapsed < 120.0,
        f"worst deviation {100.0 * worst:.3f}%, {elapsed:.0f}s for 4 wave families",
    )


def test_criterion_2_snell_law_and_tir_flagging():
    g = rng.stream(SEED, "acceptance", "snell")
    count = 10_000
    v1 = g.normal(size=(count, 3))
    v1 /= np.linalg.norm(v1, axis=1, keepdims=True)
    normals = g.normal(size=(count, 3))
    normals[:, 2] = np.abs(normals[:, 2]) + 0.05
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    n1, n2 = 1.33, 1.0
    ratio = n1 / n2

    t0 = time.time()
    v2, tir = refract(v1, normals, ratio)
    elapsed = time.time() - t0

    # orientation the implementation is defined against: normal facing the ray
    oriented = np.where(np.sum(normals * v1, axis=1, keepdims=True) > 0, -normals, normals)
    sin1 = np.linalg.norm(np.cross(v1, oriented), axis=1)
    expected_tir = ratio * sin1 > 1.0
    tir_ok = np.array_equal(tir, expected_tir)
    finite_ok = np.all(np.isfinite(v2))

    below = ~expected_tir
    # scalar law: n1 sin(theta1) = n2 sin(theta2)
    sin2 = np.linalg.norm(np.cross(v2[below], oriented[below]), axis=1)
    law_err = float(np.max(np.abs(n1 * sin1[below] - n2 * sin2)))
    # vector form: the tangential component of n*v is conserved
    tangential = n1 * np.cross(v1[below], oriented[below]) - n2 * np.cross(
        v2[below], oriented[below]
    )
    tangential_err = float(np.max(np.linalg.norm(tangential, axis=1)))
    verdict(
        2,
        "Snell law and tangential invariant on 10k rays, TIR flagged finite",
        law_err < 1e-9 and tangential_err < 1e-9 and tir_ok and finite_ok and elapsed < 1.0,
        f"law {law_err:.2e}, tangential {tangential_err:.2e}, "
        f"{int(expected_tir.sum())} TIR rays, {elapsed * 1e3:.0f}ms",
    )


def test_criterion_3_spectral_realness_and_dft_equivalence():
    spectral = small_spectral(n=8)
    dft_err = 0.0
    for t in (0.0, 0.41, 1.7):
        fast = ocean_height_raw(spectral, t)
        slow = brute_force_height(spectral, t)
        scale = max(1.0, float(np.max(np.abs(slow))))
        dft_err = max(dft_err, float(np.max(np.abs(fast - slow))) / scale)

    params = OceanParams(grid=Grid(256, 256, 50.0, 50.0), wind_speed=10.0, cutoff=2.0)
    big = ocean_spectral_init(params, rng.stream(SEED, "acceptance", "ocean"))
    imag_err = 0.0
    for t in np.linspace(0.0, 9.5, 20):
        raw = ocean_height_raw(big, float(t))
        imag_err = max(imag_err, float(np.max(np.abs(raw.imag))))
    verdict(
        3,
        "ocean synthesis matches direct DFT and stays real",
        dft_err < 1e-10 and imag_err < 1e-9,
        f"dft residual {dft_err:.2e}, imag residue {imag_err:.2e} at 256x256 x20 times",
    )


def test_criterion_4_shallow_water_mass_and_rest_state():
    grid = Grid(128, 128, 10.0, 10.0)
    params = ShallowParams()
    x, z = grid.coords()
    h = 1.0 + 0.08 * np.exp(-((x[None, :] - 5.0) ** 2 + (z[:, None] - 5.0) ** 2) / 1.5)
    state = ShallowState(params.rho * h, np.zeros_like(h), np.zeros_like(h))
    total0 = float(np.sum(state.rho_h))
    for _ in range(200):
        limit = params.cfl_number * grid.dx / shallow_max_speed(state, params)
        state = shallow_step(state, params, grid, 0.9 * limit)
    drift = abs(float(np.sum(state.rho_h)) - total0) / total0

    rest = ShallowState(
        np.full((128, 128), params.rho), np.zeros((128, 128)), np.zeros((128, 128))
    )
    stepped = shallow_step(rest, params, grid, 1e-3)
    rest_err = float(np.max(np.abs(stepped.rho_h - rest.rho_h)))
    rest_err = max(rest_err, float(np.max(np.abs(stepped.mom_x))))
    rest_err = max(rest_err, float(np.max(np.abs(stepped.mom_z))))
    verdict(
        4,
        "mass conserved over 200 periodic steps and rest state fixed",
        drift < 1e-6 and rest_err < 1e-12,
        f"relative mass drift {drift:.2e}, rest-state residual {rest_err:.2e}",
    )


def test_criterion_5_metrics_match_direct_references():
    g = rng.stream(SEED, "acceptance", "metrics")
    psnr_err = 0.0
    ssim_err = 0.0
    self_err = 0.0
    for _ in range(50):
        a = g.uniform(0.0, 1.0, size=(36, 36))
        b = np.clip(a + g.normal(0.0, 0.08, size=(36, 36)), 0.0, 1.0)
        psnr_err = max(psnr_err, abs(psnr(a, b) - direct_psnr(a, b)))
        ssim_err = max(ssim_err, abs(ssim(a, b) - direct_ssim(a, b)))
        self_err = max(self_err, abs(ssim(a, a.copy()) - 1.0))
    verdict(
        5,
        "PSNR and SSIM match independent direct implementations",
        psnr_err < 1e-9 and ssim_err < 1e-6 and self_err < 1e-9,
        f"psnr {psnr_err:.2e} dB, ssim {ssim_err:.2e}, self-ssim {self_err:.2e} on 50 pairs",
    )


def test_criterion_6_registration_gradient_matches_finite_differences():
    g = rng.stream(SEED, "acceptance", "gradcheck")
    worst = 0.0
    for _ in range(20):
        frames = g.uniform(0.2, 0.8, size=(3, 16, 16))
        frames = np.stack([ndi.gaussian_filter(f, 1.0) for f in frames])
        spacing = 6.0
        nodes = 3
        grids = 0.8 * g.normal(size=(3, nodes, nodes, 2))
        pairs = sample_pairs(3, 2, g)
        kwargs = dict(
            spacing=spacing,
            charbonnier_eps=1e-3,
            smoothness_weight=0.1,
            magnitude_weight=0.01,
            drift_weight=0.05,
        )
        _, grad = registration_objective(frames, grids, pairs, **kwargs)
        fd = np.zeros_like(grad)
        h = 1e-6
        for idx in np.ndindex(grids.shape):
            bumped = grids.copy()
            bumped[idx] += h
            up, _ = registration_objective(frames, bumped, pairs, **kwargs)
            bumped[idx] -= 2 * h
            down, _ = registration_objective(frames, bumped, pairs, **kwargs)
            fd[idx] = (up - down) / (2 * h)
        rel = float(np.max(np.abs(grad - fd))) / max(float(np.max(np.abs(fd))), 1e-12)
        worst = max(worst, rel)
    verdict(
        6,
        "analytic objective gradient matches central differences",
        worst < 1e-4,
        f"worst relative error {worst:.2e} over 20 random 16x16 instances",
    )


def test_criterion_7_planted_rigid_shift_recovered_at_nodes():
    worst = 0.0
    slowest = 0.0
    for seed, shift in ((21, (4.0, 0.0)), (22, (0.0, -4.0))):
        img = rng.stream(seed, "acceptance", "planted").uniform(0.0, 1.0, size=(256, 256))
        img = ndi.gaussian_filter(img, 1.5)
        img -= img.min()
        img /= img.max()
        ys, xs = np.mgrid[0:256, 0:256].astype(np.float64)
        frames = np.stack(
            [
                bilinear_sample(img, xs, ys),
                bilinear_sample(img, xs + shift[0], ys + shift[1]),
            ]
        )
        # rigid planted shift: a strong smoothness prior is the right model,
        # and the magnitude/drift gauge terms would only bias the answer
        est = GridRegistration(
            working_size=256,
            grid_spacing=16,
            iterations=900,
            pairs_per_frame=1,
            smoothness_weight=10.0,
            magnitude_weight=0.0,
            drift_weight=0.0,
            seed=3,
        )
        t0 = time.time()
        est.fit(frames)
        slowest = max(slowest, time.time() - t0)
        rel = est.grids_[0][1:-1, 1:-1] - est.grids_[1][1:-1, 1:-1]
        err = np.hypot(rel[..., 0] - shift[0], rel[..., 1] - shift[1])
        worst = max(worst, float(np.max(err)))
    verdict(
        7,
        "4-px planted shift recovered within 0.5 px at interior nodes",
        worst < 0.5 and slowest < 60.0,
        f"worst node error {worst:.3f} px, slowest fit {slowest:.1f}s at 256x256",
    )


def test_criterion_8_baseline_trends_on_generated_benchmark():
    t0 = time.time()
    base = RefractionParams()
    levels = [severity_level(name) for name in LEVEL_ORDER]
    profiles = make_profiles("ocean", 2, SEED, DEFAULTS["ocean"], 1.0 / 30.0)
    calibrated = calibrate_levels(profiles, levels, base, size=256, frame_count=8)

    average_beats_first = 0
    first_frame_monotone = 0
    registration_gains = 0
    for bg_id in range(5):
        background = synthetic_background(bg_id, size=256, seed=SEED)
        truth = background.image
        first_by_level = []
        average_low = []
        gains = []
        for level in levels:
            scores = []
            for profile in profiles:
                seq = render_sequence(
                    background, profile, calibrated[level.name].apply(base), level, 60
                )
                frames = np.stack(seq.frames)
                scores.append(psnr(FirstFrame().fit(frames).predict(), truth))
                if level.name == "low":
                    average_low.append(psnr(PixelAverage().fit(frames).predict(), truth))
                    distorted = float(np.mean([psnr(f, truth) for f in frames]))
                    registered = GridRegistration(seed=SEED).fit(frames)
                    restored = registered.predict(frames)
                    score = float(np.mean([psnr(r, truth) for r in restored]))
                    gains.append(score - distorted)
            first_by_level.append(float(np.mean(scores)))
        average_beats_first += float(np.mean(average_low)) > first_by_level[0]
        first_frame_monotone += all(
            hi > lo for hi, lo in zip(first_by_level, first_by_level[1:])
        )
        registration_gains += min(gains) >= 1.0
    elapsed = time.time() - t0
    verdict(
        8,
        "baseline quality trends reproduced on 5 backgrounds x 2 profiles",
        min(average_beats_first, first_frame_monotone, registration_gains) >= 4
        and elapsed < 1800.0,
        f"average>first {average_beats_first}/5, first-frame monotone "
        f"{first_frame_monotone}/5, registration gain>=1dB {registration_gains}/5, "
        f"{elapsed / 60.0:.1f} min",
    )


def test_criterion_9_determinism_and_quantization_round_trip(tmp_path):
    config = {
        "resolution": 48,
        "frame_count": 6,
        "profile_count": 1,
        "background_count": 1,
        "wave_types": ["sine"],
        "levels": ["low", "mid"],
        "benchmark_subset_size": 2,
        "calibration": {"frames": 6, "speed_frames": 4, "reference_wave": "sine"},
        "sine": {"grid_n": 48},
        "registration": {
            "working_size": 48,
            "iterations": 40,
            "pairs_per_frame": 3,
            "pyramid_levels": 2,
        },
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    reports = {}
    for run in ("one", "two"):
        out = str(tmp_path / run)
        for stage in ("calibrate", "generate", "restore", "evaluate"):
            code = main([stage, "--config", str(cfg_path), "--output", out])
            assert code == EXIT_OK, f"{stage} failed in run {run}"
        blobs = {}
        for name in ("metrics.csv", "aggregate.csv", "table_psnr.txt", "table_ssim.txt"):
            with open(os.path.join(out, "reports", name), "rb") as handle:
                blobs[name] = handle.read()
        reports[run] = blobs
    identical = reports["one"] == reports["two"]

    profile = make_profiles("sine", 1, SEED, {"grid_n": 48, "domain": 50.0}, 1.0 / 30.0)[0]
    level = severity_level("mid")
    params = RefractionParams(alpha=0.4, distance_scale=1.0)
    seq = render_sequence(
        synthetic_background(0, size=48, seed=SEED), profile, params, level, 4
    )
    seq_dir = str(tmp_path / "roundtrip")
    write_sequence(seq, seq_dir)
    back = read_sequence(seq_dir)
    quant = max(
        float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))
        for a, b in zip(seq.frames, back.frames)
    )
    bound = 1.0 / 65535.0
    verdict(
        9,
        "bit-identical reports across runs and 16-bit round trip in bound",
        identical and quant <= bound,
        f"reports identical: {identical}, max quantization error {quant * 65535.0:.3f}/65535",
    )
