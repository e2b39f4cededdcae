"""Morphological profiles, K-Means object segmentation and per-segment
statistics on the panchromatic grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .raster import BinaryMask, RasterGrid, RasterError
from .spectral import CLASS_ORDER

# profile family: (shape, size); each contributes an opening and a closing band
SE_FAMILY = (
    ("hline", 4),
    ("vline", 4),
    ("square", 4),
    ("square", 6),
    ("square", 8),
)

KMEANS_TOL = 1e-6
KMEANS_MAX_ITER = 100


class SegmentationError(Exception):
    pass


@dataclass
class SegmentRecord:
    """Statistics of one 4-connected segment on the PAN grid."""

    pixel_count: int = 0
    area_m2: float = 0.0
    perimeter_px: int = 0
    w: float = 0.0          # hydraulic diameter 4*area/perimeter, meters
    p_pan: float = 0.0
    p_ms: float = 0.0
    p_lan: float = 0.0
    p_shadow: float = 0.0
    class_votes: dict = field(default_factory=dict)
    mp_std: float = 0.0
    label: str | None = None


@dataclass
class SegmentMap:
    labels: np.ndarray               # (h, w) int32 segment ids, 0..S-1
    records: list[SegmentRecord]
    geometry: object

    @property
    def count(self):
        return len(self.records)


def structuring_element(shape: str, size: int) -> np.ndarray:
    if size < 2:
        raise SegmentationError(f"structuring element size must be >= 2, got {size}")
    if shape == "hline":
        return np.ones((1, size), dtype=bool)
    if shape == "vline":
        return np.ones((size, 1), dtype=bool)
    if shape == "square":
        return np.ones((size, size), dtype=bool)
    raise SegmentationError(f"unknown structuring element shape {shape!r}")


def _origin_for(footprint: np.ndarray):
    # even-sized axes anchor at the top-left of the central 2x2
    return tuple(-1 if n % 2 == 0 and n > 1 else 0 for n in footprint.shape)


def morphological_profiles(pan: RasterGrid) -> RasterGrid:
    """10-band stack of grayscale openings and closings of the PAN image.

    Band order: opening then closing for each element of ``SE_FAMILY``.
    Borders are edge-replicated.
    """
    if pan.bands != 1:
        raise SegmentationError("morphological profiles expect a single-band raster")
    image = pan.data[0]
    bands = []
    names = []
    for shape, size in SE_FAMILY:
        fp = structuring_element(shape, size)
        origin = _origin_for(fp)
        opened = ndimage.grey_opening(image, footprint=fp, mode="nearest", origin=origin)
        closed = ndimage.grey_closing(image, footprint=fp, mode="nearest", origin=origin)
        bands.extend([opened, closed])
        names.extend([f"open_{shape}{size}", f"close_{shape}{size}"])
    return RasterGrid(pan.geometry, np.stack(bands).astype(np.float32), names)


def _standardize(features: np.ndarray) -> np.ndarray:
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[std == 0] = 1.0
    return (features - mean) / std


def _kmeans(features: np.ndarray, k: int, seed: int):
    n = features.shape[0]
    rng = np.random.default_rng(seed)
    centers = np.empty((k, features.shape[1]))
    centers[0] = features[rng.integers(n)]
    dist = np.sum((features - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        centers[i] = features[int(np.argmax(dist))]
        dist = np.minimum(dist, np.sum((features - centers[i]) ** 2, axis=1))

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        d2 = (np.sum(features ** 2, axis=1)[:, None]
              - 2.0 * features @ centers.T
              + np.sum(centers ** 2, axis=1)[None, :])
        assign = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        counts = np.bincount(assign, minlength=k)
        for c in range(k):
            if counts[c] == 0:
                far = int(np.argmax(np.min(d2, axis=1)))
                new_centers[c] = features[far]
            else:
                new_centers[c] = features[assign == c].mean(axis=0)
        movement = np.max(np.abs(new_centers - centers))
        centers = new_centers
        if movement < KMEANS_TOL:
            break
    d2 = (np.sum(features ** 2, axis=1)[:, None]
          - 2.0 * features @ centers.T
          + np.sum(centers ** 2, axis=1)[None, :])
    return np.argmin(d2, axis=1), centers


FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _connected_segments(cluster_img: np.ndarray) -> np.ndarray:
    """Split equal-cluster regions into 4-connected components with ids in
    raster-scan order of each component's first pixel."""
    h, w = cluster_img.shape
    combined = np.zeros((h, w), dtype=np.int64)
    offset = 0
    for cluster in np.unique(cluster_img):
        comp, n = ndimage.label(cluster_img == cluster, structure=FOUR_CONNECTED)
        mask = comp > 0
        combined[mask] = comp[mask] + offset
        offset += n
    flat = combined.ravel() - 1
    first = np.full(offset, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    remap = np.empty(offset, dtype=np.int32)
    remap[np.argsort(first, kind="stable")] = np.arange(offset, dtype=np.int32)
    return remap[flat].reshape(h, w)


def kmeans_segment(pan: RasterGrid, mps: RasterGrid, k: int = 8, seed: int = 0) -> SegmentMap:
    """Cluster (PAN, MPs) feature vectors and split clusters into 4-connected
    segments.  Deterministic for a fixed seed."""
    if pan.geometry != mps.geometry:
        raise SegmentationError("PAN and profile rasters must share one grid")
    if k < 1:
        raise SegmentationError(f"k must be >= 1, got {k}")
    h, w = pan.geometry.height, pan.geometry.width
    features = np.concatenate([pan.data, mps.data]).reshape(-1, h * w).T.astype(np.float64)
    features = _standardize(features)
    assign, _ = _kmeans(features, k, seed)
    labels = _connected_segments(assign.reshape(h, w))
    n_segments = int(labels.max()) + 1
    counts = np.bincount(labels.ravel(), minlength=n_segments)
    records = [SegmentRecord(pixel_count=int(c)) for c in counts]
    return SegmentMap(labels, records, pan.geometry)


def _perimeter_edges(labels: np.ndarray, n: int) -> np.ndarray:
    """Exposed pixel edges per segment (neighbor of another segment or border)."""
    per = np.zeros(n, dtype=np.int64)
    horiz = labels[:, 1:] != labels[:, :-1]
    vert = labels[1:, :] != labels[:-1, :]
    for side in (labels[:, 1:][horiz], labels[:, :-1][horiz],
                 labels[1:, :][vert], labels[:-1, :][vert],
                 labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]):
        per += np.bincount(side.ravel(), minlength=n)
    return per


def _segment_means(labels_flat, values_flat, counts):
    sums = np.bincount(labels_flat, weights=values_flat, minlength=counts.size)
    return sums / counts


def segment_stats(segmap: SegmentMap, pan: RasterGrid, mps: RasterGrid,
                  p_ms_field: RasterGrid, p_lan_field: RasterGrid,
                  ms_class_map: RasterGrid, class_names=CLASS_ORDER) -> SegmentMap:
    """Fill every per-segment statistic except the shadow proportion.

    All rasters must already live on the PAN grid; ``ms_class_map`` holds
    indices into ``class_names``.
    """
    for r in (pan, mps, p_ms_field, p_lan_field, ms_class_map):
        if r.geometry != segmap.geometry:
            raise SegmentationError("all rasters must live on the segment grid")
    labels = segmap.labels
    flat = labels.ravel()
    n = segmap.count
    counts = np.bincount(flat, minlength=n)
    perimeter = _perimeter_edges(labels, n)
    r_pan = segmap.geometry.pixel_size

    p_ms = _segment_means(flat, p_ms_field.data[0].ravel().astype(np.float64), counts)
    p_lan = _segment_means(flat, p_lan_field.data[0].ravel().astype(np.float64), counts)
    mp_std_px = mps.data.astype(np.float64).std(axis=0, ddof=0)
    mp_std = _segment_means(flat, mp_std_px.ravel(), counts)

    class_idx = ms_class_map.data[0].astype(np.int64)
    votes = np.zeros((n, len(class_names)), dtype=np.int64)
    for ci in range(len(class_names)):
        votes[:, ci] = np.bincount(flat[class_idx.ravel() == ci], minlength=n)

    for s, rec in enumerate(segmap.records):
        rec.pixel_count = int(counts[s])
        rec.area_m2 = float(counts[s]) * r_pan * r_pan
        rec.perimeter_px = int(perimeter[s])
        rec.w = 4.0 * rec.area_m2 / (rec.perimeter_px * r_pan)
        rec.p_ms = float(p_ms[s])
        rec.p_lan = float(p_lan[s])
        rec.mp_std = float(mp_std[s])
        rec.class_votes = {c: int(votes[s, ci]) for ci, c in enumerate(class_names)}
    return segmap


def pan_water_probability(segmap: SegmentMap, pan: RasterGrid, t_pan: float) -> SegmentMap:
    """Per segment, the fraction of PAN pixels darker than the threshold."""
    if not np.isfinite(t_pan):
        raise SegmentationError("t_pan must be finite")
    flat = segmap.labels.ravel()
    n = segmap.count
    counts = np.bincount(flat, minlength=n)
    if (counts == 0).any():
        raise SegmentationError("segment with no pixels")
    dark = np.bincount(flat[pan.data[0].ravel() < t_pan], minlength=n)
    p = dark / counts
    for s, rec in enumerate(segmap.records):
        rec.p_pan = float(p[s])
    return segmap


def paint_segments(segmap: SegmentMap, values, band_name="value") -> RasterGrid:
    """Raster whose pixels carry their segment's value."""
    values = np.asarray(values, dtype=np.float32)
    return RasterGrid(segmap.geometry, values[segmap.labels][np.newaxis], [band_name])


def segment_water_mask(segmap: SegmentMap, water_flags) -> BinaryMask:
    flags = np.asarray(water_flags, dtype=np.uint8)
    return BinaryMask(segmap.geometry, flags[segmap.labels])


def save_segment_stats(segmap: SegmentMap, path, class_names=CLASS_ORDER) -> None:
    """Full machine-readable per-segment record table (superset of the
    exported summary): one `field = values` block per segment."""
    lines = [f"classes = {', '.join(class_names)}", f"count = {segmap.count}"]
    for s, rec in enumerate(segmap.records):
        votes = " ".join(str(int(rec.class_votes.get(c, 0))) for c in class_names)
        lines.append(
            f"segment {s} = {int(rec.pixel_count)} {int(rec.perimeter_px)} "
            f"{float(rec.area_m2)!r} {float(rec.w)!r} {float(rec.p_pan)!r} "
            f"{float(rec.p_ms)!r} {float(rec.p_lan)!r} {float(rec.p_shadow)!r} "
            f"{float(rec.mp_std)!r} {rec.label or '-'} {votes}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_segment_stats(path, labels: np.ndarray, geometry) -> SegmentMap:
    entries = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                key, value = line.split("=", 1)
                entries[key.strip()] = value.strip()
    class_names = [c.strip() for c in entries["classes"].split(",")]
    count = int(entries["count"])
    records = []
    for s in range(count):
        parts = entries[f"segment {s}"].split()
        rec = SegmentRecord(
            pixel_count=int(parts[0]), perimeter_px=int(parts[1]),
            area_m2=float(parts[2]), w=float(parts[3]), p_pan=float(parts[4]),
            p_ms=float(parts[5]), p_lan=float(parts[6]), p_shadow=float(parts[7]),
            mp_std=float(parts[8]),
            label=None if parts[9] == "-" else parts[9],
            class_votes={c: int(v) for c, v in zip(class_names, parts[10:])},
        )
        records.append(rec)
    return SegmentMap(np.asarray(labels, dtype=np.int32), records, geometry)


def export_segment_table(segmap: SegmentMap, path) -> None:
    """One line per segment: id, pixel_count, w, p_pan, p_ms, p_lan, p_shadow,
    majority_class."""
    lines = []
    for s, rec in enumerate(segmap.records):
        lines.append(
            f"{s}, {rec.pixel_count}, {rec.w:.6f}, {rec.p_pan:.6f}, {rec.p_ms:.6f}, "
            f"{rec.p_lan:.6f}, {rec.p_shadow:.6f}, {rec.label or ''}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
