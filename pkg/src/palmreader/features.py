"""Contour extraction and the geometric features palm lines are classified
on: arc length, chord depth (sagitta), position, and orientation. Also
renders the color-coded line overlay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .imaging import BinaryMask, RasterImage, label_components

__all__ = [
    "LineKind",
    "LINE_COLORS",
    "Contour",
    "PalmLine",
    "FeatureVector",
    "FEATURE_NAMES",
    "extract_contours",
    "principal_path",
    "arc_length",
    "depth",
    "build_feature_vector",
    "annotate_lines",
]


class LineKind(IntEnum):
    """The four major palm lines; enum order is the canonical tie-break order."""

    HEART = 0
    HEAD = 1
    LIFE = 2
    FATE = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "LineKind":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown line kind: {label!r}") from None


LINE_COLORS: dict[LineKind, tuple[int, int, int]] = {
    LineKind.HEART: (255, 0, 0),
    LineKind.HEAD: (0, 128, 0),
    LineKind.LIFE: (128, 0, 128),
    LineKind.FATE: (0, 0, 255),
}


@dataclass(frozen=True, eq=False)
class Contour:
    """Ordered pixel path; consecutive points are 8-neighbors.

    ``points`` is an (n, 2) integer array of (x, y) pairs, n >= 1.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValueError(f"points must be (n, 2) with n >= 1, got {pts.shape}")
        if pts.shape[0] > 1:
            steps = np.abs(np.diff(pts, axis=0)).max(axis=1)
            if not ((steps >= 1) & (steps <= 1)).all():
                raise ValueError("consecutive contour points must be 8-neighbors")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def first(self) -> np.ndarray:
        return self.points[0]

    @property
    def last(self) -> np.ndarray:
        return self.points[-1]

    def chord_length(self) -> float:
        return float(np.hypot(*(self.last - self.first)))


@dataclass(frozen=True, eq=False)
class PalmLine:
    """A detected line: its kind, path, geometry, and classifier confidence."""

    kind: LineKind
    contour: Contour
    arc_length: float
    depth: float
    confidence: float

    def __post_init__(self):
        if self.arc_length < 0 or self.depth < 0:
            raise ValueError("arc_length and depth must be non-negative")
        if self.depth > self.arc_length / 2 + 1e-9:
            raise ValueError("depth cannot exceed half the arc length")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must be in [0, 1]")

    @classmethod
    def from_contour(cls, kind: LineKind, contour: Contour, confidence: float) -> "PalmLine":
        return cls(kind, contour, arc_length(contour), depth(contour), confidence)


FEATURE_NAMES = (
    "arc_length_norm",
    "depth_ratio",
    "centroid_x_norm",
    "centroid_y_norm",
    "bbox_aspect",
    "orientation",
)

_BBOX_ASPECT_CAP = 10.0


@dataclass(frozen=True)
class FeatureVector:
    """Fixed 6-component descriptor of one contour, all components finite."""

    arc_length_norm: float
    depth_ratio: float
    centroid_x_norm: float
    centroid_y_norm: float
    bbox_aspect: float
    orientation: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError("feature components must be finite")

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.arc_length_norm,
            self.depth_ratio,
            self.centroid_x_norm,
            self.centroid_y_norm,
            self.bbox_aspect,
            self.orientation,
        )

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FeatureVector":
        if len(arr) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} components, got {len(arr)}")
        return cls(*(float(v) for v in arr))


# Moore neighborhood in clockwise screen order (y grows downward),
# starting at West. Offsets are (dx, dy).
_MOORE = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]
_MOORE_INDEX = {off: i for i, off in enumerate(_MOORE)}


def _trace_boundary(
    labels: np.ndarray, comp: int, start: tuple[int, int], size: int
) -> list[tuple[int, int]]:
    """Moore-neighbor border following, clockwise, from the component's
    topmost-leftmost pixel. Stops when the first move repeats."""
    h, w = labels.shape
    sy, sx = start

    def is_fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and labels[y, x] == comp

    contour = [(sx, sy)]
    px, py = sx, sy
    b_idx = 0  # backtrack starts at West, background for a topmost-leftmost start
    first_move = None
    limit = 8 * size + 8

    for _ in range(limit):
        found = None
        for k in range(1, 9):
            idx = (b_idx + k) % 8
            dx, dy = _MOORE[idx]
            if is_fg(px + dx, py + dy):
                found = idx
                break
        if found is None:
            break  # isolated pixel
        move = ((px, py), found)
        if move == first_move:
            break
        if first_move is None:
            first_move = move
        prev_idx = (found - 1) % 8
        bx, by = px + _MOORE[prev_idx][0], py + _MOORE[prev_idx][1]
        px, py = px + _MOORE[found][0], py + _MOORE[found][1]
        contour.append((px, py))
        b_idx = _MOORE_INDEX[(bx - px, by - py)]

    if len(contour) > 1 and contour[-1] == contour[0]:
        contour.pop()
    return contour


def extract_contours(mask: BinaryMask) -> list[Contour]:
    """One boundary contour per 8-connected component, sorted by descending
    point count (stable in discovery order)."""
    labels, n = label_components(mask.bits)
    if n == 0:
        return []
    sizes = np.bincount(labels.reshape(-1), minlength=n + 1)
    starts: dict[int, tuple[int, int]] = {}
    for y, x in zip(*np.nonzero(labels)):  # row-major, so first hit is topmost-leftmost
        comp = int(labels[y, x])
        if comp not in starts:
            starts[comp] = (int(y), int(x))
    contours = [
        Contour(np.array(_trace_boundary(labels, comp, starts[comp], int(sizes[comp]))))
        for comp in range(1, n + 1)
    ]
    contours.sort(key=len, reverse=True)
    return contours


_PAIR_SEARCH_CAP = 1500


def _as_points(path) -> np.ndarray:
    """Accept a Contour or a raw (n, 2) point array."""
    pts = path.points if isinstance(path, Contour) else np.asarray(path)
    return pts.astype(np.float64)


def _farthest_pair(pts: np.ndarray) -> tuple[int, int]:
    """Indices (i <= j) of the two farthest-separated points; contours above
    the search cap are scanned on a stride subsample."""
    n = pts.shape[0]
    stride = max(1, -(-n // _PAIR_SEARCH_CAP))
    idx = np.arange(0, n, stride)
    sub = pts[idx].astype(np.float64)
    d2 = ((sub[:, None, :] - sub[None, :, :]) ** 2).sum(axis=2)
    flat = int(np.argmax(d2))
    i, j = int(idx[flat // len(idx)]), int(idx[flat % len(idx)])
    return (i, j) if i <= j else (j, i)


def _is_closed(pts: np.ndarray) -> bool:
    return (
        pts.shape[0] > 2
        and max(abs(int(pts[-1][0]) - int(pts[0][0])), abs(int(pts[-1][1]) - int(pts[0][1]))) == 1
    )


def principal_path(contour: Contour) -> Contour:
    """Open path between the contour's two farthest-separated points.

    Boundary traces of elongated components are closed loops running up one
    side and down the other; cutting at the farthest pair recovers the
    underlying line path, which is what arc length and depth describe.
    Contours above {cap} points are searched on a subsample for the pair.
    """
    pts = contour.points
    if pts.shape[0] <= 2:
        return Contour(pts.copy())

    i, j = _farthest_pair(pts)
    if i == j:
        return Contour(pts[[0]].copy())

    forward = pts[i : j + 1]
    if _is_closed(pts):
        wrap = np.concatenate([pts[j:], pts[: i + 1]])
        if wrap.shape[0] > forward.shape[0]:
            return Contour(wrap)
    return Contour(forward)


principal_path.__doc__ = principal_path.__doc__.format(cap=_PAIR_SEARCH_CAP)


def line_path(contour: Contour) -> np.ndarray:
    """Reduce a traced contour to the open centerline path of the line it
    outlines, as float points.

    A boundary trace of a stroke band (or of the edge ring around one) is a
    closed loop: one run along each side joined by short end caps. Cutting
    the loop at its farthest pair and averaging the two complementary arcs
    point-by-point recovers the stroke centerline, which is what arc length
    and depth describe. Open traces pass through unchanged.
    """
    pts = contour.points
    if pts.shape[0] < 4 or not _is_closed(pts):
        return _as_points(principal_path(contour))

    i, j = _farthest_pair(pts)
    if i == j:
        return _as_points(pts[[0]])
    side_a = pts[i : j + 1].astype(np.float64)
    # complementary arc without the shared cut points, reversed so both
    # sides run the same way; pairing then crosses the band, which puts
    # the averaged endpoints at the end-cap centers
    side_b = np.concatenate([pts[j + 1 :], pts[:i]])[::-1].astype(np.float64)
    if side_b.shape[0] < 2:
        return _as_points(principal_path(contour))
    if side_b.shape[0] > side_a.shape[0]:
        side_a, side_b = side_b, side_a
    m = side_a.shape[0]
    frac = np.linspace(0.0, 1.0, m)
    src = np.linspace(0.0, 1.0, side_b.shape[0])
    resampled = np.stack(
        [np.interp(frac, src, side_b[:, 0]), np.interp(frac, src, side_b[:, 1])], axis=1
    )
    return (side_a + resampled) / 2.0


def arc_length(path) -> float:
    """Sum of Euclidean distances between consecutive points (open path).

    Accepts a Contour or a raw (n, 2) point array."""
    pts = _as_points(path)
    if pts.shape[0] < 2:
        return 0.0
    diffs = np.diff(pts, axis=0)
    return float(np.hypot(diffs[:, 0], diffs[:, 1]).sum())


def depth(path) -> float:
    """Maximum perpendicular distance from the path to its endpoint chord.

    Falls back to the maximum distance from the first point when the chord
    is degenerate. Accepts a Contour or a raw (n, 2) point array."""
    pts = _as_points(path)
    chord = pts[-1] - pts[0]
    rel = pts - pts[0]
    norm = np.hypot(chord[0], chord[1])
    if norm == 0.0:
        return float(np.hypot(rel[:, 0], rel[:, 1]).max())
    cross = np.abs(chord[0] * rel[:, 1] - chord[1] * rel[:, 0])
    return float(cross.max() / norm)


def build_feature_vector(path, img_w: int, img_h: int) -> FeatureVector:
    """Compute the 6 classification features of one contour or point path."""
    if img_w <= 0 or img_h <= 0:
        raise ValueError("image dimensions must be positive")
    pts = _as_points(path)
    diag = math.hypot(img_w, img_h)

    al = arc_length(pts)
    chord = float(np.hypot(*(pts[-1] - pts[0])))
    dr = depth(pts) / chord if chord > 0 else 0.0
    cx, cy = pts.mean(axis=0)

    span_x = float(pts[:, 0].max() - pts[:, 0].min()) + 1.0
    span_y = float(pts[:, 1].max() - pts[:, 1].min()) + 1.0
    aspect = min(span_x / span_y, _BBOX_ASPECT_CAP)

    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    theta = 0.5 * math.atan2(2.0 * cov[0, 1], cov[0, 0] - cov[1, 1])
    theta %= math.pi

    return FeatureVector(al / diag, dr, cx / img_w, cy / img_h, aspect, theta)


def annotate_lines(base: RasterImage, lines: list[PalmLine], thickness: int = 3) -> RasterImage:
    """Paint each line's contour, dilated to ``thickness``, in its kind's
    color over an RGB copy of ``base``."""
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    if base.channels == 1:
        canvas = np.repeat(base.pixels[:, :, None], 3, axis=2).copy()
    else:
        canvas = base.pixels.copy()
    h, w = canvas.shape[:2]
    r = (thickness - 1) // 2

    for line in lines:
        color = np.array(LINE_COLORS[line.kind], dtype=np.uint8)
        pts = line.contour.points
        if (pts[:, 0] < 0).any() or (pts[:, 0] >= w).any() or (pts[:, 1] < 0).any() or (pts[:, 1] >= h).any():
            raise ValueError(f"{line.kind.label} contour has points outside {w}x{h} image bounds")
        for x, y in pts:
            canvas[max(0, y - r) : y + r + 1, max(0, x - r) : x + r + 1] = color
    return RasterImage(canvas)
