"""Geometric shadow prediction from object positions and height ranges,
plus segment classification by majority voting and the tree/grass split."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .raster import BinaryMask, window_ratio
from .segmentation import SegmentMap
from .spectral import CLASS_ORDER, SpectralError, class_sort_key, otsu_threshold


class ShadowError(Exception):
    pass


@dataclass
class ShadowGeometry:
    """Sun/view angles; azimuths are degrees clockwise from north."""

    sun_elevation_deg: float
    sun_azimuth_deg: float
    view_elevation_deg: float = 90.0  # nadir
    view_azimuth_deg: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.sun_elevation_deg <= 90.0):
            raise ShadowError(
                f"sun elevation must be in (0, 90], got {self.sun_elevation_deg}"
            )

    def offset_coefficients(self):
        """(a, b): column and row shadow displacement per meter of height,
        in units of the pixel size.  The shadow points away from the sun."""
        elev = math.radians(self.sun_elevation_deg)
        az = math.radians(self.sun_azimuth_deg)
        inv_tan = 1.0 / math.tan(elev) if self.sun_elevation_deg < 90.0 else 0.0
        a = -math.sin(az) * inv_tan
        b = math.cos(az) * inv_tan
        return a, b


@dataclass
class HeightRanges:
    """Height sweep ranges (meters) per object kind."""

    high_intensity_building: tuple = (3.0, 300.0)
    low_intensity_building: tuple = (3.0, 50.0)
    tree: tuple = (3.0, 50.0)
    sweep_step: float | None = None  # None: one mark per pixel along the ray

    def __post_init__(self):
        for lo, hi in (self.high_intensity_building, self.low_intensity_building, self.tree):
            if not (0 < lo <= hi):
                raise ShadowError(f"invalid height range [{lo}, {hi}]")
        if self.sweep_step is not None and not (self.sweep_step > 0):
            raise ShadowError("sweep_step must be > 0")


@dataclass
class IntensityParams:
    window: int = 101
    ratio_threshold: float = 0.30

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ShadowError("intensity window must be odd")
        if not (0.0 < self.ratio_threshold < 1.0):
            raise ShadowError("ratio threshold must be in (0, 1)")


def classify_segments_majority(segmap: SegmentMap) -> list[str]:
    """Label each segment with its maximum-vote class from the MS class map.

    Ties break by the fixed class order (vegetation < soil < impervious <
    water)."""
    labels = []
    for rec in segmap.records:
        if not rec.class_votes or sum(rec.class_votes.values()) == 0:
            raise ShadowError("segment has no class votes; run segment_stats first")
        top = max(rec.class_votes.values())
        winners = sorted(
            (c for c, v in rec.class_votes.items() if v == top), key=class_sort_key
        )
        rec.label = winners[0]
        labels.append(rec.label)
    return labels


def tree_grass_split(segmap: SegmentMap, t_tree: float | None = None) -> list[str]:
    """Relabel vegetation segments as tree (profile deviation strictly above
    the threshold) or grass.  With no threshold given, one is derived by Otsu
    from the vegetation segments' values."""
    veg = [rec for rec in segmap.records if rec.label == "vegetation"]
    if not veg:
        return [rec.label for rec in segmap.records]
    if t_tree is None:
        try:
            t_tree = otsu_threshold([rec.mp_std for rec in veg])
        except SpectralError:
            t_tree = math.inf  # indistinguishable: treat everything as grass
    for rec in veg:
        rec.label = "tree" if rec.mp_std > t_tree else "grass"
    return [rec.label for rec in segmap.records]


def building_intensity_map(impervious_mask: BinaryMask, params: IntensityParams) -> BinaryMask:
    """1 where the local impervious-area ratio exceeds the threshold."""
    ratio = window_ratio(impervious_mask, params.window)
    return BinaryMask(impervious_mask.geometry,
                      (ratio.data[0] > params.ratio_threshold).astype(np.uint8))


OBJECT_KIND_NONE = 0
OBJECT_KIND_HIGH_BUILDING = 1
OBJECT_KIND_LOW_BUILDING = 2
OBJECT_KIND_TREE = 3


def _shift_or(acc: np.ndarray, mask: np.ndarray, drow: int, dcol: int):
    h, w = mask.shape
    if abs(drow) >= h or abs(dcol) >= w:
        return
    sr0, sr1 = max(0, -drow), min(h, h - drow)
    sc0, sc1 = max(0, -dcol), min(w, w - dcol)
    acc[sr0 + drow:sr1 + drow, sc0 + dcol:sc1 + dcol] |= mask[sr0:sr1, sc0:sc1]


def potential_shadow_mask(object_kind_map: np.ndarray, geom: ShadowGeometry,
                          ranges: HeightRanges, grid) -> BinaryMask:
    """Union of projected shadow pixels over each object kind's height range.

    ``object_kind_map`` holds OBJECT_KIND_* codes on the PAN grid ``grid``.
    Out-of-bounds projections are dropped.
    """
    r = grid.pixel_size
    a, b = geom.offset_coefficients()
    h, w = object_kind_map.shape
    step_bound = r / max(abs(a), abs(b), 1.0)
    step = ranges.sweep_step
    if step is None:
        step = r * math.tan(math.radians(min(geom.sun_elevation_deg, 89.0)))
    step = min(step, step_bound)

    out = np.zeros((h, w), dtype=bool)
    kind_ranges = {
        OBJECT_KIND_HIGH_BUILDING: ranges.high_intensity_building,
        OBJECT_KIND_LOW_BUILDING: ranges.low_intensity_building,
        OBJECT_KIND_TREE: ranges.tree,
    }
    for kind, (h_min, h_max) in kind_ranges.items():
        mask = object_kind_map == kind
        if not mask.any():
            continue
        n_steps = max(1, int(math.ceil((h_max - h_min) / step)) + 1)
        heights = h_min + step * np.arange(n_steps)
        heights = np.minimum(heights, h_max)
        offsets = {
            (int(np.floor(b * hh / r + 0.5)), int(np.floor(a * hh / r + 0.5)))
            for hh in heights
        }
        for drow, dcol in sorted(offsets):
            _shift_or(out, mask, drow, dcol)
    return BinaryMask(grid, out.astype(np.uint8))


def segment_shadow_proportion(segmap: SegmentMap, shadow_mask: BinaryMask) -> SegmentMap:
    """Fill each record's shadow proportion from the potential shadow mask."""
    flat = segmap.labels.ravel()
    n = segmap.count
    counts = np.bincount(flat, minlength=n)
    hits = np.bincount(flat[shadow_mask.bits.ravel() == 1], minlength=n)
    p = hits / np.maximum(counts, 1)
    for s, rec in enumerate(segmap.records):
        rec.p_shadow = float(p[s])
    return segmap
