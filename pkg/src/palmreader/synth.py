"""Synthetic labeled palm corpus generation.

Renders stylized palms (light elliptical blob on a dark background) with
up to four line strokes drawn as quadratic Bezier bands. In annotated
mode each kind is drawn in its segmentation color; in raw mode all lines
are dark gray so only edge structure distinguishes them. Every image
ships with exact ground truth: control points, rendered pixels, and
analytic arc length / depth per line.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError
from .features import LINE_COLORS, LineKind
from .imaging import RasterImage, write_png


class HandCategory(enum.Enum):
    MALE_LEFT = "male_left"
    MALE_RIGHT = "male_right"
    FEMALE_LEFT = "female_left"
    FEMALE_RIGHT = "female_right"

    @property
    def label(self) -> str:
        return self.value

    @property
    def is_right(self) -> bool:
        return self in (HandCategory.MALE_RIGHT, HandCategory.FEMALE_RIGHT)

    @classmethod
    def from_label(cls, label: str) -> "HandCategory":
        for cat in cls:
            if cat.value == label:
                return cat
        raise ValueError(f"unknown hand category {label!r}")


_ALL_KINDS = frozenset(LineKind)

# raw-mode stroke color: dark gray, high contrast against the palm blob
_RAW_LINE_COLOR = (70, 70, 70)
_SKIN_BASE = np.array([206, 176, 150], dtype=np.float64)
_BACKGROUND_BASE = np.array([30, 28, 32], dtype=np.float64)

# palm ellipse in 256-unit layout coordinates
_PALM_CENTER = (128.0, 140.0)
_PALM_AXES = (90.0, 108.0)

# per-kind stroke layout, 256-unit left-hand coordinates:
# (start x/y ranges, end x/y ranges, signed sagitta-to-chord ratio range).
# Positive sagitta bows toward the +90 degree normal of start->end travel.
# Ranges keep strokes inside the palm and apart from each other. A shared
# per-image vertical shift (below) moves all four strokes together, so the
# per-kind marginal distributions of vertical position overlap between
# neighboring kinds even though strokes never collide within one image.
_LAYOUT = {
    LineKind.HEART: ((70, 80), (88, 96), (158, 190), (86, 96), (0.07, 0.13)),
    LineKind.HEAD: ((116, 126), (106, 116), (176, 198), (110, 120), (-0.14, -0.06)),
    LineKind.LIFE: ((82, 94), (108, 136), (88, 100), (176, 206), (-0.15, -0.06)),
    LineKind.FATE: ((126, 142), (196, 210), (124, 134), (140, 148), (-0.14, 0.14)),
}

# all strokes share one vertical offset drawn from this range
_BAND_SHIFT = 20.0

_KIND_ORDER = (LineKind.HEART, LineKind.HEAD, LineKind.LIFE, LineKind.FATE)


@dataclass(frozen=True)
class SynthConfig:
    image_size: int = 256
    lines_present: frozenset = _ALL_KINDS
    fate_line_probability: float = 0.7
    noise_sigma: float = 5.0
    jitter: float = 4.0
    seed: int = 7
    annotated: bool = True

    def __post_init__(self):
        if self.image_size < 64:
            raise ValueError(f"image_size must be >= 64, got {self.image_size}")
        if not 0.0 <= self.fate_line_probability <= 1.0:
            raise ValueError("fate_line_probability must be in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if not frozenset(self.lines_present) <= _ALL_KINDS:
            raise ValueError("lines_present must contain only LineKind values")
        object.__setattr__(self, "lines_present", frozenset(self.lines_present))


@dataclass(frozen=True)
class LineTruth:
    kind: LineKind
    control_points: np.ndarray  # (3, 2) float64, ideal pre-raster geometry
    pixels: np.ndarray  # (m, 2) int64 rendered (x, y) coordinates
    arc_length: float
    depth: float


@dataclass(frozen=True)
class GroundTruth:
    category: HandCategory
    image_size: int
    lines: tuple = field(default_factory=tuple)

    def __post_init__(self):
        kinds = [t.kind for t in self.lines]
        if len(kinds) != len(set(kinds)):
            raise ValueError("at most one truth line per kind")
        for t in self.lines:
            if t.pixels.size and (
                t.pixels.min() < 0 or t.pixels.max() >= self.image_size
            ):
                raise ValueError(f"{t.kind.label} truth pixels out of bounds")

    def line_for(self, kind: LineKind):
        for t in self.lines:
            if t.kind == kind:
                return t
        return None

    @property
    def present_kinds(self) -> frozenset:
        return frozenset(t.kind for t in self.lines)


def _bezier_samples(ctrl: np.ndarray, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0, p1, p2 = ctrl[0], ctrl[1], ctrl[2]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t * t * p2


def _bezier_point(ctrl: np.ndarray, t: float) -> np.ndarray:
    return (1 - t) ** 2 * ctrl[0] + 2 * (1 - t) * t * ctrl[1] + t * t * ctrl[2]


def _chain_length(ctrl: np.ndarray) -> float:
    """Arc length of the rendered centerline as an 8-connected pixel chain.

    Contour arc length everywhere in this package is the Euclidean sum
    over 8-connected pixel steps, so the comparable ground truth is the
    chain length of the curve, not its smooth length (which any pixel
    chain overshoots by up to ~8% at shallow slopes). A monotone piece
    of the chain measures max(|dx|,|dy|) + (sqrt(2)-1)*min(|dx|,|dy|);
    a quadratic Bezier splits into at most 3 monotone pieces at the
    roots of its (linear) derivative components.
    """
    cuts = {0.0, 1.0}
    for axis in range(2):
        a = ctrl[1][axis] - ctrl[0][axis]
        b = ctrl[2][axis] - ctrl[1][axis]
        if abs(a - b) > 1e-12:
            t = a / (a - b)
            if 0.0 < t < 1.0:
                cuts.add(float(t))
    knots = [_bezier_point(ctrl, t) for t in sorted(cuts)]
    total = 0.0
    for q0, q1 in zip(knots, knots[1:]):
        dx, dy = abs(q1[0] - q0[0]), abs(q1[1] - q0[1])
        total += max(dx, dy) + (math.sqrt(2) - 1.0) * min(dx, dy)
    return float(total)


def _polyline_depth(samples: np.ndarray) -> float:
    start, end = samples[0], samples[-1]
    chord = end - start
    norm = math.hypot(chord[0], chord[1])
    rel = samples - start
    if norm < 1e-12:
        return float(np.hypot(rel[:, 0], rel[:, 1]).max())
    return float(np.abs(rel[:, 0] * chord[1] - rel[:, 1] * chord[0]).max() / norm)


def _stamp_band(samples: np.ndarray, thickness: int, size: int) -> np.ndarray:
    """Round curve samples and dilate with a thickness x thickness square."""
    pts = np.round(samples).astype(np.int64)
    r0 = (thickness - 1) // 2
    offs = np.array(
        [(dx, dy) for dy in range(-r0, thickness - r0) for dx in range(-r0, thickness - r0)],
        dtype=np.int64,
    )
    band = (pts[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    keep = (band >= 0).all(axis=1) & (band < size).all(axis=1)
    return np.unique(band[keep], axis=0)


def generate_palm(cfg: SynthConfig, index: int):
    """Render one palm image. Deterministic in (cfg.seed, index)."""
    if index < 0:
        raise ValueError(f"index must be >= 0, got {index}")
    rng = np.random.default_rng([cfg.seed, index])
    size = cfg.image_size
    u = size / 256.0
    category = list(HandCategory)[index % 4]

    # global pose: scale and rotation about the palm center, small drift
    scale = rng.uniform(0.92, 1.02)
    theta = rng.uniform(-0.05, 0.05)
    center_shift = rng.uniform(-3.0, 3.0, size=2)
    skin_shift = rng.uniform(-10.0, 10.0, size=3)
    bg_shift = rng.uniform(-6.0, 6.0, size=3)
    band_shift = rng.uniform(-_BAND_SHIFT, _BAND_SHIFT)

    c0 = np.array(_PALM_CENTER) * u
    center = c0 + center_shift * u
    rot = np.array(
        [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    )

    def place(pt: np.ndarray) -> np.ndarray:
        return center + scale * (rot @ (pt * u - c0))

    # per-kind stroke geometry, drawn in fixed order so the random stream
    # does not depend on which lines end up present
    half_jitter = cfg.jitter / 2.0
    raw_geom = {}
    for kind in _KIND_ORDER:
        sx, sy, ex, ey, ratio = _LAYOUT[kind]
        start = np.array([rng.uniform(*sx), rng.uniform(*sy) + band_shift])
        end = np.array([rng.uniform(*ex), rng.uniform(*ey) + band_shift])
        sag_ratio = rng.uniform(*ratio)
        wobble = rng.uniform(-half_jitter, half_jitter, size=(3, 2))
        raw_geom[kind] = (start, end, sag_ratio, wobble)
    fate_draw = rng.uniform()

    present = set(cfg.lines_present)
    if LineKind.FATE in present and fate_draw >= cfg.fate_line_probability:
        present.discard(LineKind.FATE)

    thickness = max(1, round(3 * u))
    truths = []
    bands = []
    for kind in _KIND_ORDER:
        if kind not in present:
            continue
        start, end, sag_ratio, wobble = raw_geom[kind]
        if category.is_right:
            start = np.array([255.0 - start[0], start[1]])
            end = np.array([255.0 - end[0], end[1]])
            sag_ratio = -sag_ratio
        chordv = end - start
        chord_len = math.hypot(chordv[0], chordv[1])
        normal = np.array([chordv[1], -chordv[0]]) / chord_len
        mid = (start + end) / 2.0
        # B(0.5) sits halfway between the chord midpoint and the control
        # point, so doubling the offset puts the curve at the target sagitta
        ctrl_mid = mid + 2.0 * sag_ratio * chord_len * normal
        ctrl = np.stack([start, ctrl_mid, end]) + wobble
        ctrl = np.stack([place(p) for p in ctrl])

        n = max(48, int(4 * chord_len * u * scale))
        samples = _bezier_samples(ctrl, n)
        pixels = _stamp_band(samples, thickness, size)
        truths.append(
            LineTruth(
                kind=kind,
                control_points=ctrl,
                pixels=pixels,
                arc_length=_chain_length(ctrl),
                depth=_polyline_depth(samples),
            )
        )
        bands.append((kind, pixels))

    # raster: background, rotated ellipse blob, stroke bands, noise
    skin = np.clip(_SKIN_BASE + skin_shift, 0, 255)
    background = np.clip(_BACKGROUND_BASE + bg_shift, 0, 255)
    canvas = np.empty((size, size, 3), dtype=np.float64)
    canvas[:] = background

    ys, xs = np.mgrid[0:size, 0:size]
    dx = xs - center[0]
    dy = ys - center[1]
    rx = (math.cos(theta) * dx + math.sin(theta) * dy) / (_PALM_AXES[0] * u * scale)
    ry = (-math.sin(theta) * dx + math.cos(theta) * dy) / (_PALM_AXES[1] * u * scale)
    canvas[rx * rx + ry * ry <= 1.0] = skin

    for kind, pixels in bands:
        color = LINE_COLORS[kind] if cfg.annotated else _RAW_LINE_COLOR
        canvas[pixels[:, 1], pixels[:, 0]] = color

    if cfg.noise_sigma > 0:
        canvas = canvas + rng.normal(0.0, cfg.noise_sigma, size=canvas.shape)
    image = RasterImage(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8))
    return image, GroundTruth(category=category, image_size=size, lines=tuple(truths))


MANIFEST_NAME = "manifest.csv"

_MANIFEST_FIELDS = ["filename", "category"] + [
    f"{kind.label}_{col}" for kind in _KIND_ORDER for col in ("present", "arc", "depth")
]


def generate_corpus(cfg: SynthConfig, n: int, out_dir: str):
    """Write n palm PNGs plus manifest.csv; returns the manifest rows."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create corpus directory {out_dir}: {exc}") from exc

    rows = []
    for index in range(n):
        image, truth = generate_palm(cfg, index)
        filename = f"palm_{index:04}.png"
        try:
            write_png(image, os.path.join(out_dir, filename))
        except OSError as exc:
            raise DatasetError(f"cannot write {filename} in {out_dir}: {exc}") from exc
        row = {"filename": filename, "category": truth.category.label}
        for kind in _KIND_ORDER:
            t = truth.line_for(kind)
            row[f"{kind.label}_present"] = "1" if t else "0"
            row[f"{kind.label}_arc"] = f"{t.arc_length:.3f}" if t else "0.000"
            row[f"{kind.label}_depth"] = f"{t.depth:.3f}" if t else "0.000"
        rows.append(row)

    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    try:
        with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_MANIFEST_FIELDS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    except OSError as exc:
        raise DatasetError(f"cannot write manifest {manifest_path}: {exc}") from exc
    return rows


def read_manifest(path: str):
    """Load manifest rows, validating the column set."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) != set(_MANIFEST_FIELDS):
                raise DatasetError(f"manifest {path} has unexpected columns")
            rows = list(reader)
    except OSError as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc}") from exc
    if not rows:
        raise DatasetError(f"manifest {path} is empty")
    for row in rows:
        try:
            HandCategory.from_label(row["category"])
        except ValueError as exc:
            raise DatasetError(str(exc)) from exc
    return rows


def smoke_config(seed: int = 7) -> SynthConfig:
    """Noise-free fixture config: every line present, no pixel noise."""
    return SynthConfig(
        noise_sigma=0.0,
        fate_line_probability=1.0,
        seed=seed,
    )
