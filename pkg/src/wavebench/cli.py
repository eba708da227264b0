"""Command-line pipeline: calibrate, generate, restore, evaluate, report.

Exit codes: 0 success, 2 usage, 3 configuration, 4 calibration failure,
5 missing or corrupt data, 6 numerical or optimization failure.

Every stage is resumable and deterministic: sequence directories with a
manifest and prediction directories with a meta file are skipped on re-runs,
and re-running any stage from scratch reproduces its outputs byte for byte
for a fixed config.  Worker processes only change wall time, never results.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__, rng
from .calibrate import CalibrationEntry, calibrate_levels, calibrate_speed, displacement_rate
from .config import load_config
from .errors import (
    CalibrationError,
    ConfigError,
    DataIOError,
    FormatError,
    IntegrityError,
    NumericalError,
    OptimizationError,
    ParameterError,
    StabilityError,
    StepSizeError,
    WavebenchError,
)
from .metrics import (
    aggregate_rows,
    cells_to_csv,
    evaluate_method,
    render_table_text,
    rows_from_csv,
    rows_to_csv,
)
from .refraction import RefractionParams
from .render import (
    _atomic_write,
    _read_bytes,
    _sha256,
    decode_png16,
    encode_field,
    encode_png16,
    ingest_background,
    read_sequence,
    render_sequence,
    severity_level,
    synthetic_background,
    write_sequence,
)
from .restore import RESTORER_NAMES, make_restorer
from .waves import make_profiles, make_profile

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CALIBRATION = 4
EXIT_IO = 5
EXIT_NUMERICAL = 6

_IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


def _exit_code(exc: WavebenchError) -> int:
    if isinstance(exc, (ConfigError, ParameterError)):
        return EXIT_CONFIG
    if isinstance(exc, CalibrationError):
        return EXIT_CALIBRATION
    if isinstance(exc, (DataIOError, IntegrityError, FormatError)):
        return EXIT_IO
    if isinstance(exc, (StepSizeError, StabilityError, OptimizationError, NumericalError)):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def _write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True).encode("utf-8"))


def _read_json(path: str, hint: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError:
        raise DataIOError(f"{path} not found; {hint}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from None


def _run_jobs(worker, payloads, workers: int):
    """Run payloads through `worker`, optionally in a process pool.

    Outputs are independent files, so scheduling cannot change results;
    the pool only buys wall time.
    """
    if workers <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, payloads))


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def cmd_calibrate(cfg: dict) -> int:
    out = cfg["output_root"]
    os.makedirs(out, exist_ok=True)
    base = RefractionParams(**cfg["refraction"])
    levels = [severity_level(name) for name in cfg["levels"]]
    cal = cfg["calibration"]
    size = cal["resolution"] or cfg["resolution"]
    frame_count = cal["frames"] or cfg["frame_count"]
    reference = cal["reference_wave"]
    wave_types = list(cfg["wave_types"])
    needs_reference = [w for w in wave_types if w != reference]
    if needs_reference and reference not in wave_types:
        raise CalibrationError(
            f"speed alignment needs the reference wave {reference!r} in wave_types "
            f"(or set calibration.reference_wave to one of {wave_types})"
        )
    ordered = ([reference] if reference in wave_types else []) + needs_reference
    entries: dict = {}
    reference_rates: dict = {}
    for wave in ordered:
        profiles = make_profiles(wave, cfg["profile_count"], cfg["seed"], cfg[wave], cfg["frame_dt"])
        by_level = calibrate_levels(
            profiles,
            levels,
            base,
            size=size,
            frame_count=frame_count,
            tolerance=cal["tolerance"],
            max_iterations=cal["max_iterations"],
        )
        for level in levels:
            entry = by_level[level.name]
            params = entry.apply(base)
            if wave == reference:
                rate = displacement_rate(
                    profiles, params, size=size, frame_count=cal["speed_frames"], time_scale=1.0
                )
                entry = replace(entry, time_scale=1.0, achieved_rate=rate, reference_rate=rate)
                reference_rates[level.name] = rate
            else:
                multiplier, rate = calibrate_speed(
                    profiles,
                    reference_rates[level.name],
                    params,
                    size=size,
                    frame_count=cal["speed_frames"],
                    tolerance=cal["speed_tolerance"],
                    max_multiplier=cal["speed_max_multiplier"],
                )
                entry = replace(
                    entry,
                    time_scale=multiplier,
                    achieved_rate=rate,
                    reference_rate=reference_rates[level.name],
                )
            entries[f"{wave}/{level.name}"] = entry
            print(
                f"{wave}/{level.name}: knob={entry.knob:.5g} std={entry.achieved_std:.5g} "
                f"(target {entry.target_std:g}) time_scale={entry.time_scale:.4g}"
            )
    payload = {
        "schema_version": 1,
        "config": cfg,
        "entries": {key: entry.to_dict() for key, entry in entries.items()},
    }
    path = os.path.join(out, "calibration.json")
    _write_json(path, payload)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _background_descriptors(cfg: dict) -> list:
    """Stable (id, kind, ref) descriptors; workers materialize the image."""
    directory = cfg["background_dir"]
    if directory is None:
        return [(f"bg{i:03d}", "synthetic", i) for i in range(cfg["background_count"])]
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise DataIOError(f"cannot list background_dir {directory}: {exc}") from None
    descriptors = []
    seen = set()
    for name in names:
        stem, ext = os.path.splitext(name)
        if ext.lower() not in _IMAGE_EXTENSIONS:
            continue
        if stem in seen:
            raise ConfigError(f"duplicate background id {stem!r} in {directory}")
        seen.add(stem)
        descriptors.append((stem, "file", os.path.join(directory, name)))
    if not descriptors:
        raise DataIOError(f"no images found in background_dir {directory}")
    return descriptors[: cfg["background_count"]]


def _materialize_background(cfg: dict, descriptor):
    bg_id, kind, ref = descriptor
    if kind == "synthetic":
        return synthetic_background(int(ref), cfg["resolution"], cfg["seed"])
    return ingest_background(ref, cfg["resolution"])


def _sequence_relpath(wave: str, level: str, bg_id: str, profile_seed: int) -> str:
    return f"{wave}/{level}/{bg_id}_{profile_seed:03d}"


def _generate_job(payload) -> tuple:
    cfg, entry_dict, wave, level_name, descriptor, profile_seed = payload
    rel = _sequence_relpath(wave, level_name, descriptor[0], profile_seed)
    directory = os.path.join(cfg["output_root"], rel)
    if os.path.exists(os.path.join(directory, "manifest.json")):
        return rel, "skipped"
    entry = CalibrationEntry.from_dict(entry_dict)
    background = _materialize_background(cfg, descriptor)
    profile = make_profile(wave, profile_seed, cfg["seed"], cfg[wave], cfg["frame_dt"])
    sequence = render_sequence(
        background,
        profile,
        entry.apply(RefractionParams(**cfg["refraction"])),
        severity_level(level_name),
        cfg["frame_count"],
        time_scale=entry.time_scale,
        keep_displacements=cfg["save_displacements"],
        manifest_extra={
            "seed": cfg["seed"],
            "profile_seed": profile_seed,
            "calibration": entry_dict,
            "generator_version": __version__,
        },
    )
    write_sequence(sequence, directory, save_displacements=cfg["save_displacements"])
    return rel, "written"


def cmd_generate(cfg: dict) -> int:
    out = cfg["output_root"]
    calibration = _read_json(
        os.path.join(out, "calibration.json"), "run `wavebench calibrate` first"
    )
    entries = calibration.get("entries", {})
    backgrounds = _background_descriptors(cfg)
    payloads = []
    index_entries = []
    for wave in cfg["wave_types"]:
        for level in cfg["levels"]:
            key = f"{wave}/{level}"
            if key not in entries:
                raise CalibrationError(f"calibration.json has no entry for {key}; re-run calibrate")
            for descriptor in backgrounds:
                for profile_seed in range(cfg["profile_count"]):
                    payloads.append((cfg, entries[key], wave, level, descriptor, profile_seed))
                    index_entries.append(
                        {
                            "path": _sequence_relpath(wave, level, descriptor[0], profile_seed),
                            "sequence_id": f"{descriptor[0]}_{profile_seed:03d}",
                            "wave_type": wave,
                            "level": level,
                            "background_id": descriptor[0],
                            "profile_seed": profile_seed,
                        }
                    )
    results = _run_jobs(_generate_job, payloads, cfg["workers"])
    written = sum(1 for _, status in results if status == "written")
    skipped = len(results) - written
    pairs = sorted({(e["background_id"], e["profile_seed"]) for e in index_entries})
    index = {
        "schema_version": 1,
        "config": cfg,
        "sequences": sorted(index_entries, key=lambda e: e["path"]),
        "benchmark_subset": [list(p) for p in pairs[: cfg["benchmark_subset_size"]]],
    }
    _write_json(os.path.join(out, "dataset_index.json"), index)
    print(f"generated {written} sequences ({skipped} already present) under {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# restore
# ---------------------------------------------------------------------------


def _prediction_dir(out: str, method: str, seq_rel: str) -> str:
    return os.path.join(out, "predictions", method, seq_rel)


def _restore_job(payload) -> tuple:
    cfg, seq_rel, method = payload
    out = cfg["output_root"]
    directory = _prediction_dir(out, method, seq_rel)
    if os.path.exists(os.path.join(directory, "meta.json")):
        return seq_rel, method, "skipped"
    sequence = read_sequence(os.path.join(out, seq_rel))
    frames = np.stack(sequence.frames)
    estimator = make_restorer(
        method,
        cfg["registration"] if method == "grid_registration" else None,
        seed=rng.stream_key(cfg["seed"], "restore", method, seq_rel),
    )
    estimator.fit(frames)
    os.makedirs(directory, exist_ok=True)
    files = {}

    def put(name: str, data: bytes):
        _atomic_write(os.path.join(directory, name), data)
        files[name] = _sha256(data)

    if estimator.multi_frame:
        predictions = estimator.predict(frames)
        for i in range(predictions.shape[0]):
            put(f"frame_{i:03d}.png", encode_png16(predictions[i]))
        if hasattr(estimator, "grids_"):
            for i in range(estimator.grids_.shape[0]):
                put(f"grids/frame_{i:03d}.rfb", encode_field(estimator.grids_[i].astype(np.float32)))
    else:
        put("pred.png", encode_png16(estimator.predict()))
    meta = {
        "schema_version": 1,
        "method": method,
        "multi_frame": bool(estimator.multi_frame),
        "sequence": seq_rel,
        "n_frames": int(frames.shape[0]),
        "files": files,
    }
    _atomic_write(
        os.path.join(directory, "meta.json"),
        json.dumps(meta, indent=2, sort_keys=True).encode("utf-8"),
    )
    return seq_rel, method, "written"


def _load_index(out: str) -> dict:
    return _read_json(os.path.join(out, "dataset_index.json"), "run `wavebench generate` first")


def cmd_restore(cfg: dict, methods=None) -> int:
    out = cfg["output_root"]
    index = _load_index(out)
    methods = list(methods or cfg["restoration"]["methods"])
    payloads = [
        (cfg, entry["path"], method)
        for entry in index["sequences"]
        for method in methods
    ]
    results = _run_jobs(_restore_job, payloads, cfg["workers"])
    written = sum(1 for *_, status in results if status == "written")
    print(f"restored {written} sequence/method cells ({len(results) - written} already present)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate / report
# ---------------------------------------------------------------------------


def _read_prediction(directory: str):
    meta_path = os.path.join(directory, "meta.json")
    meta = _read_json(meta_path, "prediction incomplete")
    files = meta.get("files", {})

    def fetch(name: str) -> bytes:
        data = _read_bytes(os.path.join(directory, name))
        if _sha256(data) != files.get(name):
            raise IntegrityError(f"checksum mismatch for {name} in {directory}")
        return data

    if meta["multi_frame"]:
        frames = [
            decode_png16(fetch(f"frame_{i:03d}.png")) for i in range(int(meta["n_frames"]))
        ]
        return frames, True
    return decode_png16(fetch("pred.png")), False


def _evaluate_job(payload) -> list:
    cfg, entry, methods = payload
    out = cfg["output_root"]
    sequence = read_sequence(os.path.join(out, entry["path"]))
    reference = sequence.ground_truth.image
    common = {
        "wave_type": entry["wave_type"],
        "level": entry["level"],
        "sequence_id": entry["sequence_id"],
    }
    rows = [
        evaluate_method(
            sequence.frames, reference, method="entire_video", multi_frame=True, **common
        )
    ]
    for method in methods:
        directory = _prediction_dir(out, method, entry["path"])
        if not os.path.exists(os.path.join(directory, "meta.json")):
            continue
        predictions, multi = _read_prediction(directory)
        rows.append(
            evaluate_method(predictions, reference, method=method, multi_frame=multi, **common)
        )
    return rows


def _write_reports(out: str, rows) -> str:
    reports = os.path.join(out, "reports")
    os.makedirs(reports, exist_ok=True)
    cells = aggregate_rows(rows)
    _atomic_write(os.path.join(reports, "metrics.csv"), rows_to_csv(rows).encode("utf-8"))
    _atomic_write(os.path.join(reports, "aggregate.csv"), cells_to_csv(cells).encode("utf-8"))
    psnr_table = render_table_text(cells, "psnr_db")
    ssim_table = render_table_text(cells, "ssim")
    _atomic_write(os.path.join(reports, "table_psnr.txt"), psnr_table.encode("utf-8"))
    _atomic_write(os.path.join(reports, "table_ssim.txt"), ssim_table.encode("utf-8"))
    return psnr_table


def cmd_evaluate(cfg: dict) -> int:
    out = cfg["output_root"]
    index = _load_index(out)
    methods = list(cfg["restoration"]["methods"])
    payloads = [(cfg, entry, methods) for entry in index["sequences"]]
    row_lists = _run_jobs(_evaluate_job, payloads, cfg["workers"])
    rows = [row for rows_ in row_lists for row in rows_]
    evaluated = {row.method for row in rows}
    for method in methods:
        if method not in evaluated:
            print(f"note: no predictions found for {method}; run `wavebench restore`", file=sys.stderr)
    table = _write_reports(out, rows)
    print(table, end="")
    print(f"wrote reports under {os.path.join(out, 'reports')}")
    return EXIT_OK


def cmd_report(cfg: dict) -> int:
    out = cfg["output_root"]
    path = os.path.join(out, "reports", "metrics.csv")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            rows = rows_from_csv(handle.read())
    except OSError:
        raise DataIOError(f"{path} not found; run `wavebench evaluate` first") from None
    table = _write_reports(out, rows)
    print(table, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavebench",
        description="Simulate refractive water distortion, restore it, and score baselines.",
    )
    parser.add_argument("--version", action="version", version=f"wavebench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="JSON run configuration file")
        sp.add_argument("--output", metavar="DIR", help="output root (overrides config/WAVEBENCH_OUTPUT)")
        sp.add_argument("--seed", type=int, help="master seed override")
        sp.add_argument("--workers", type=int, help="worker process count override")

    common(sub.add_parser("calibrate", help="fit severity and speed knobs, write calibration.json"))
    common(sub.add_parser("generate", help="render the distorted dataset tree"))
    restore = sub.add_parser("restore", help="run restoration baselines over the dataset")
    common(restore)
    restore.add_argument(
        "--method",
        action="append",
        choices=RESTORER_NAMES,
        help="baseline to run (repeatable; default: configured methods)",
    )
    common(sub.add_parser("evaluate", help="score predictions and write benchmark reports"))
    common(sub.add_parser("report", help="re-aggregate reports from metrics.csv"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(
            args.config,
            overrides={"output_root": args.output, "seed": args.seed, "workers": args.workers},
        )
        if args.command == "calibrate":
            return cmd_calibrate(cfg)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "restore":
            return cmd_restore(cfg, args.method)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "report":
            return cmd_report(cfg)
        parser.error(f"unknown command {args.command!r}")
        return EXIT_USAGE
    except WavebenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
