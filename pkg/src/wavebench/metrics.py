"""Image-quality metrics and benchmark-table aggregation.

PSNR uses a unit peak (images live in [0, 1]); identical images score
infinity, which downstream aggregation treats as a sentinel: it is excluded
from means and surfaced as a count instead.  SSIM follows the classic
Gaussian-window formulation (11 taps, sigma 1.5, K1=0.01, K2=0.03) on the
Rec. 601 luma of the inputs, averaged over fully valid windows only.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import AggregationError, InputError
from .validation import check_image, check_same_shape

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

LEVEL_ORDER = ("low", "mid", "high", "extreme")


def luma(image) -> np.ndarray:
    """Rec. 601 luma of an RGB image; grayscale passes through."""
    img = check_image(image, "image")
    if img.ndim == 2:
        return img
    if img.shape[-1] == 1:
        return img[..., 0]
    if img.shape[-1] == 3:
        return img @ np.asarray(LUMA_WEIGHTS)
    raise InputError(f"expected 1 or 3 channels, got shape {img.shape}")


def psnr(prediction, reference) -> float:
    """Peak signal-to-noise ratio in dB against a unit peak.

    Returns math.inf for bit-identical inputs; finite values are >= 0 for
    in-range images since the worst possible mean squared error is 1.
    """
    pred = check_image(prediction, "prediction")
    ref = check_image(reference, "reference")
    check_same_shape(pred, ref, "prediction and reference")
    mse = float(np.mean(np.square(pred - ref)))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_taps(window_size: int, sigma: float) -> np.ndarray:
    half = (window_size - 1) / 2.0
    x = np.arange(window_size) - half
    taps = np.exp(-0.5 * np.square(x / sigma))
    return taps / taps.sum()


def ssim(prediction, reference, window_size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over fully valid Gaussian windows.

    Color inputs are reduced to luma first.  The unit dynamic range gives
    stabilizers C1 = k1^2 and C2 = k2^2.  Anti-correlated structure can pull
    the score below zero; identical images score exactly 1.
    """
    x = luma(prediction)
    y = luma(reference)
    check_same_shape(x, y, "prediction and reference")
    if min(x.shape) < window_size:
        raise InputError(
            f"images must be at least {window_size} pixels on each side, got {x.shape}"
        )
    taps = _gaussian_taps(window_size, sigma)
    half = window_size // 2

    def smooth(arr):
        out = correlate1d(arr, taps, axis=0, mode="constant")
        out = correlate1d(out, taps, axis=1, mode="constant")
        return out[half:-half, half:-half]  # fully valid windows only

    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x * mu_x
    var_y = smooth(y * y) - mu_y * mu_y
    cov = smooth(x * y) - mu_x * mu_y
    c1 = k1 * k1
    c2 = k2 * k2
    score = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    return float(np.mean(score))


# ---------------------------------------------------------------------------
# Benchmark rows and aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricRow:
    """Scores of one method on one sequence."""

    method: str
    wave_type: str
    level: str
    sequence_id: str
    multi_frame: bool
    n_frames: int
    psnr_db: float
    ssim: float


def evaluate_method(
    predictions,
    reference,
    *,
    method: str,
    wave_type: str,
    level: str,
    sequence_id: str,
    multi_frame: bool,
) -> MetricRow:
    """Score one restoration output against the ground truth.

    Single-frame methods pass one image; multi-frame methods pass the whole
    restored stack, scored as the arithmetic mean of per-frame metrics (with
    infinite per-frame PSNRs excluded; all-infinite stays infinite).
    """
    ref = check_image(reference, "reference")
    if multi_frame:
        stack = [check_image(p, "prediction") for p in predictions]
        if not stack:
            raise InputError("multi-frame evaluation got an empty stack")
        psnr_values = [psnr(p, ref) for p in stack]
        finite = [v for v in psnr_values if math.isfinite(v)]
        psnr_db = sum(finite) / len(finite) if finite else math.inf
        ssim_value = sum(ssim(p, ref) for p in stack) / len(stack)
        n_frames = len(stack)
    else:
        pred = check_image(predictions, "prediction")
        psnr_db = psnr(pred, ref)
        ssim_value = ssim(pred, ref)
        n_frames = 1
    return MetricRow(
        method=method,
        wave_type=wave_type,
        level=level,
        sequence_id=sequence_id,
        multi_frame=bool(multi_frame),
        n_frames=n_frames,
        psnr_db=psnr_db,
        ssim=ssim_value,
    )


@dataclass(frozen=True)
class AggregateCell:
    """Mean scores of one method over the sequences of one benchmark cell."""

    method: str
    wave_type: str
    level: str
    multi_frame: bool
    n_sequences: int
    n_inf_psnr: int
    psnr_db: float
    ssim: float


def aggregate_rows(rows) -> list:
    """Collapse per-sequence rows into per-(method, wave, level) means.

    Infinite PSNR values are excluded from the mean and counted in
    n_inf_psnr; duplicate (method, wave, level, sequence) rows are an error.
    """
    rows = list(rows)
    if not rows:
        raise AggregationError("no rows to aggregate")
    seen = set()
    groups: dict = {}
    for row in rows:
        key = (row.method, row.wave_type, row.level, row.sequence_id)
        if key in seen:
            raise AggregationError(f"duplicate row for {key}")
        seen.add(key)
        groups.setdefault((row.method, row.wave_type, row.level, row.multi_frame), []).append(row)
    cells = []
    for (method, wave, level, multi), members in sorted(groups.items()):
        finite = [r.psnr_db for r in members if math.isfinite(r.psnr_db)]
        n_inf = sum(1 for r in members if math.isinf(r.psnr_db))
        cells.append(
            AggregateCell(
                method=method,
                wave_type=wave,
                level=level,
                multi_frame=multi,
                n_sequences=len(members),
                n_inf_psnr=n_inf,
                psnr_db=sum(finite) / len(finite) if finite else math.inf,
                ssim=sum(r.ssim for r in members) / len(members),
            )
        )
    return cells


def _level_rank(level: str) -> tuple:
    try:
        return (0, LEVEL_ORDER.index(level))
    except ValueError:
        return (1, 0)


def render_table_text(cells, metric: str = "psnr_db") -> str:
    """Aligned text table: methods as rows, (wave type, level) as columns.

    Multi-frame methods are starred; cells that dropped infinite values note
    the count.  Missing cells render as '-'.
    """
    if metric not in ("psnr_db", "ssim"):
        raise AggregationError(f"unknown metric {metric!r}")
    cells = list(cells)
    columns = sorted({(c.wave_type, c.level) for c in cells},
                     key=lambda wl: (wl[0], _level_rank(wl[1]), wl[1]))
    methods = sorted({(c.method, c.multi_frame) for c in cells})
    lookup = {(c.method, c.multi_frame, c.wave_type, c.level): c for c in cells}

    def fmt(cell) -> str:
        if cell is None:
            return "-"
        value = getattr(cell, metric)
        digits = 2 if metric == "psnr_db" else 4
        text = "inf" if math.isinf(value) else f"{value:.{digits}f}"
        if metric == "psnr_db" and cell.n_inf_psnr:
            text += f" (+{cell.n_inf_psnr} inf)"
        return text

    header = ["method"] + [f"{w}/{lv}" for w, lv in columns]
    body = []
    for method, multi in methods:
        name = method + ("*" if multi else "")
        body.append([name] + [fmt(lookup.get((method, multi, w, lv))) for w, lv in columns])
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    lines = []
    for line in [header, ["-" * w for w in widths]] + body:
        lines.append("  ".join(text.ljust(w) for text, w in zip(line, widths)).rstrip())
    lines.append("")
    lines.append("* methods restore every frame; scores are per-frame means")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CSV round trips
# ---------------------------------------------------------------------------

_ROW_FIELDS = ("method", "wave_type", "level", "sequence_id", "multi_frame",
               "n_frames", "psnr_db", "ssim")
_CELL_FIELDS = ("method", "wave_type", "level", "multi_frame", "n_sequences",
                "n_inf_psnr", "psnr_db", "ssim")


def _fmt_float(value: float) -> str:
    return "inf" if math.isinf(value) else repr(float(value))


def rows_to_csv(rows) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_ROW_FIELDS)
    for r in rows:
        writer.writerow([r.method, r.wave_type, r.level, r.sequence_id,
                         int(r.multi_frame), r.n_frames,
                         _fmt_float(r.psnr_db), _fmt_float(r.ssim)])
    return out.getvalue()


def rows_from_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != list(_ROW_FIELDS):
        raise AggregationError(f"unexpected metrics CSV header: {header}")
    rows = []
    for record in reader:
        if not record:
            continue
        if len(record) != len(_ROW_FIELDS):
            raise AggregationError(f"malformed metrics CSV record: {record}")
        rows.append(MetricRow(
            method=record[0], wave_type=record[1], level=record[2],
            sequence_id=record[3], multi_frame=bool(int(record[4])),
            n_frames=int(record[5]), psnr_db=float(record[6]), ssim=float(record[7]),
        ))
    return rows


def cells_to_csv(cells) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CELL_FIELDS)
    for c in cells:
        writer.writerow([c.method, c.wave_type, c.level, int(c.multi_frame),
                         c.n_sequences, c.n_inf_psnr,
                         _fmt_float(c.psnr_db), _fmt_float(c.ssim)])
    return out.getvalue()
