"""End-to-end orchestration: images in, datasets / readings out.

Two input modes exist on purpose. Annotated images carry per-kind colored
strokes, so HSV segmentation recovers each line with its label; that is
the training path. Raw photos have no labels, so inference runs edge
detection, classifies every candidate contour, and keeps the best
candidate per kind. Both paths reduce a contour to its midline before
measuring features, which keeps training and inference feature
distributions aligned.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DatasetError
from .features import (
    Contour,
    LineKind,
    PalmLine,
    annotate_lines,
    arc_length,
    build_feature_vector,
    depth,
    extract_contours,
    line_path,
)
from .imaging import (
    HsvRange,
    RasterImage,
    canny,
    gaussian_blur,
    hsv_mask,
    mask_cleanup,
    read_png,
    resize,
    to_grayscale,
)
from .ml import ForestModel, LabeledDataset, SvmModel, predict
from .reading import (
    CURVED_MIN,
    LONG_MIN,
    SHORT_MAX,
    RuleTable,
    TraitReport,
    default_rules_path,
    generate_report,
    load_rule_table,
)
from .synth import HandCategory, read_manifest

__all__ = [
    "DEFAULT_HSV_RANGES",
    "PipelineConfig",
    "AnalysisResult",
    "load_config",
    "save_config",
    "ingest_annotated_corpus",
    "analyze",
]

# segmentation boxes for the four annotation colors; generous margins so
# pixel noise on the rendered strokes stays inside the box
DEFAULT_HSV_RANGES: dict[LineKind, HsvRange] = {
    LineKind.HEART: HsvRange(350.0, 10.0, 0.5, 1.0, 0.35, 1.0, wraps_hue=True),
    LineKind.HEAD: HsvRange(90.0, 150.0, 0.45, 1.0, 0.25, 1.0),
    LineKind.LIFE: HsvRange(270.0, 330.0, 0.45, 1.0, 0.25, 1.0),
    LineKind.FATE: HsvRange(210.0, 270.0, 0.45, 1.0, 0.25, 1.0),
}

CONFIG_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the processing chain, loadable from one JSON file."""

    resize_target: int = 256
    blur_sigma: float = 1.4
    blur_ksize: int | None = None  # None derives an odd size from sigma
    canny_low: float = 50.0
    canny_high: float = 100.0
    hsv_ranges: dict[LineKind, HsvRange] = field(
        default_factory=lambda: dict(DEFAULT_HSV_RANGES)
    )
    min_component_size: int = 20
    min_contour_arc: float = 30.0
    # contours longer than this fraction of the image diagonal are not
    # lines; the palm/background silhouette loop lands well above it
    max_contour_arc_factor: float = 1.2
    candidate_cap: int = 8
    confidence_floor: float = 0.4
    short_max: float = SHORT_MAX
    long_min: float = LONG_MIN
    curved_min: float = CURVED_MIN
    forest_path: str | None = None
    svm_path: str | None = None
    rule_path: str | None = None

    def __post_init__(self):
        if self.resize_target < 16:
            raise ConfigError(f"resize_target must be >= 16, got {self.resize_target}")
        if self.blur_sigma <= 0:
            raise ConfigError("blur_sigma must be positive")
        if self.blur_ksize is not None and (self.blur_ksize < 3 or self.blur_ksize % 2 == 0):
            raise ConfigError("blur_ksize must be odd and >= 3")
        if not 0 <= self.canny_low <= self.canny_high:
            raise ConfigError("canny thresholds must satisfy 0 <= low <= high")
        if set(self.hsv_ranges) != set(LineKind):
            raise ConfigError("hsv_ranges must cover exactly the four line kinds")
        if self.min_component_size < 0:
            raise ConfigError("min_component_size must be >= 0")
        if self.min_contour_arc < 0:
            raise ConfigError("min_contour_arc must be >= 0")
        if self.max_contour_arc_factor <= 0:
            raise ConfigError("max_contour_arc_factor must be positive")
        if self.candidate_cap < 1:
            raise ConfigError("candidate_cap must be >= 1")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ConfigError("confidence_floor must be in [0, 1]")
        if not 0 < self.short_max < self.long_min:
            raise ConfigError("length thresholds must satisfy 0 < short_max < long_min")
        if not 0 < self.curved_min <= 0.5:
            raise ConfigError("curved_min must be in (0, 0.5]")

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.resize_target, self.resize_target))

    @property
    def max_contour_arc(self) -> float:
        return self.max_contour_arc_factor * self.diagonal

    def rules(self) -> RuleTable:
        return load_rule_table(self.rule_path or default_rules_path())

    def as_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "resize_target": self.resize_target,
            "blur_sigma": self.blur_sigma,
            "blur_ksize": self.blur_ksize,
            "canny_low": self.canny_low,
            "canny_high": self.canny_high,
            "hsv_ranges": {
                kind.label: {
                    "h_lo": r.h_lo,
                    "h_hi": r.h_hi,
                    "s_lo": r.s_lo,
                    "s_hi": r.s_hi,
                    "v_lo": r.v_lo,
                    "v_hi": r.v_hi,
                    "wraps_hue": r.wraps_hue,
                }
                for kind, r in self.hsv_ranges.items()
            },
            "min_component_size": self.min_component_size,
            "min_contour_arc": self.min_contour_arc,
            "max_contour_arc_factor": self.max_contour_arc_factor,
            "candidate_cap": self.candidate_cap,
            "confidence_floor": self.confidence_floor,
            "short_max": self.short_max,
            "long_min": self.long_min,
            "curved_min": self.curved_min,
            "forest_path": self.forest_path,
            "svm_path": self.svm_path,
            "rule_path": self.rule_path,
        }


_SCALAR_FIELDS = (
    "resize_target",
    "blur_sigma",
    "blur_ksize",
    "canny_low",
    "canny_high",
    "min_component_size",
    "min_contour_arc",
    "max_contour_arc_factor",
    "candidate_cap",
    "confidence_floor",
    "short_max",
    "long_min",
    "curved_min",
    "forest_path",
    "svm_path",
    "rule_path",
)


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    version = data.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}, expected {CONFIG_VERSION}")
    known = set(_SCALAR_FIELDS) | {"version", "hsv_ranges"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {name: data[name] for name in _SCALAR_FIELDS if name in data}
    if "hsv_ranges" in data:
        ranges = {}
        for label, box in data["hsv_ranges"].items():
            kind = LineKind.from_label(label)
            try:
                ranges[kind] = HsvRange(**box)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad hsv range for {label}: {exc}") from exc
        kwargs["hsv_ranges"] = ranges
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path) -> PipelineConfig:
    """Read, validate, and existence-check a JSON config file."""
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
    cfg = config_from_dict(data)
    for name in ("forest_path", "svm_path", "rule_path"):
        ref = getattr(cfg, name)
        if ref is not None and not Path(ref).exists():
            raise ConfigError(f"config {p}: {name} references missing file {ref}")
    return cfg


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.as_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class AnalysisResult:
    """One inference outcome: lines, reading, annotated image, timings."""

    request_id: str
    lines: tuple[PalmLine, ...]
    report: TraitReport
    annotated: RasterImage
    timings_ms: dict[str, float]
    model_name: str
    config: dict

    def __post_init__(self):
        kinds = [line.kind for line in self.lines]
        if len(kinds) != len(set(kinds)):
            raise ValueError("at most one line per kind")
        target = self.config.get("resize_target")
        if (self.annotated.height, self.annotated.width) != (target, target):
            raise ValueError("annotated image must match the resize target")


class _StageClock:
    def __init__(self):
        self.timings: dict[str, float] = {}
        self._t = time.perf_counter()

    def lap(self, stage: str) -> None:
        now = time.perf_counter()
        self.timings[stage] = (now - self._t) * 1000.0
        self._t = now


def _line_candidates(mask, cfg: PipelineConfig) -> list[tuple[Contour, np.ndarray, float]]:
    """Contours passing the arc filters, longest first, capped.

    Returns (contour, midline, midline arc) triples. The max-arc filter is
    applied to the traced loop, which separates palm-silhouette loops from
    stroke outlines far more reliably than any midline measure.
    """
    survivors = []
    for contour in extract_contours(mask):
        loop_arc = arc_length(contour)
        if loop_arc < cfg.min_contour_arc or loop_arc > cfg.max_contour_arc:
            continue
        survivors.append((loop_arc, contour))
    survivors.sort(key=lambda pair: -pair[0])  # stable: ties keep trace order
    out = []
    for loop_arc, contour in survivors[: cfg.candidate_cap]:
        mid = line_path(contour)
        out.append((contour, mid, arc_length(mid)))
    return out


def ingest_annotated_corpus(manifest_path, cfg: PipelineConfig) -> LabeledDataset:
    """Segment every annotated image per kind and build the labeled dataset.

    Rows follow manifest order, kinds in enum order within an image, so
    re-ingestion reproduces the dataset byte for byte.
    """
    manifest_path = Path(manifest_path)
    rows = read_manifest(str(manifest_path))
    base = manifest_path.parent
    feats, labels, ids = [], [], []
    for row in rows:
        img_path = base / row["filename"]
        if not img_path.is_file():
            raise FileNotFoundError(f"image listed in manifest not found: {img_path}")
        img = read_png(img_path)
        if (img.height, img.width) != (cfg.resize_target, cfg.resize_target):
            img = resize(img, cfg.resize_target, cfg.resize_target)
        for kind in LineKind:
            mask = mask_cleanup(hsv_mask(img, cfg.hsv_ranges[kind]), cfg.min_component_size)
            if not mask.bits.any():
                continue
            contours = extract_contours(mask)
            best = max(contours, key=arc_length)
            if arc_length(best) < cfg.min_contour_arc:
                continue
            mid = line_path(best)
            fv = build_feature_vector(mid, img.width, img.height)
            feats.append(fv.as_array())
            labels.append(int(kind))
            ids.append(f"{row['filename']}:{kind.label}")
    if not feats:
        raise DatasetError(f"ingest of {manifest_path} produced zero rows")
    return LabeledDataset(
        features=np.array(feats), labels=np.array(labels), ids=np.array(ids)
    )


def analyze(
    image_bytes: bytes,
    category: HandCategory,
    model,
    cfg: PipelineConfig,
    rules: RuleTable | None = None,
) -> AnalysisResult:
    """Run the full inference chain on one raw photo."""
    if not isinstance(model, (ForestModel, SvmModel)):
        raise TypeError(f"unsupported model type {type(model).__name__}")
    model_name = "random_forest" if isinstance(model, ForestModel) else "linear_svm"
    if rules is None:
        rules = cfg.rules()

    clock = _StageClock()
    img = read_png(image_bytes)
    clock.lap("decode")

    if (img.height, img.width) != (cfg.resize_target, cfg.resize_target):
        img = resize(img, cfg.resize_target, cfg.resize_target)
    clock.lap("resize")

    gray = to_grayscale(img)
    blurred = gaussian_blur(gray, cfg.blur_sigma, cfg.blur_ksize)
    clock.lap("blur")

    edges = mask_cleanup(canny(blurred, cfg.canny_low, cfg.canny_high), cfg.min_component_size)
    clock.lap("edges")

    candidates = _line_candidates(edges, cfg)
    clock.lap("contours")

    best: dict[LineKind, PalmLine] = {}
    for contour, mid, mid_arc in candidates:
        fv = build_feature_vector(mid, img.width, img.height)
        kind, confidence = predict(model, fv)
        if confidence < cfg.confidence_floor:
            continue
        if kind in best and best[kind].confidence >= confidence:
            continue
        best[kind] = PalmLine(
            kind=kind,
            contour=contour,
            arc_length=mid_arc,
            depth=depth(mid),
            confidence=confidence,
        )
    lines = tuple(best[kind] for kind in LineKind if kind in best)
    clock.lap("classify")

    report = generate_report(
        list(lines),
        category,
        rules,
        img_diagonal=float(np.hypot(img.width, img.height)),
        short_max=cfg.short_max,
        long_min=cfg.long_min,
        curved_min=cfg.curved_min,
    )
    clock.lap("report")

    annotated = annotate_lines(img, list(lines))
    clock.lap("annotate")

    return AnalysisResult(
        request_id=uuid.uuid4().hex,
        lines=lines,
        report=report,
        annotated=annotated,
        timings_ms=clock.timings,
        model_name=model_name,
        config=cfg.as_dict(),
    )
