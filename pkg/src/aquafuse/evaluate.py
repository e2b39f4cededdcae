"""Stratified validation sampling, water/non-water confusion matrices and
producer's/user's/overall accuracy."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP

import numpy as np

from .spectral import class_sort_key


class EvalError(Exception):
    pass


def stratified_sample(class_labels: np.ndarray, counts: dict, seed: int):
    """Sample pixel positions per class, without replacement.

    ``class_labels`` is a (h, w) array of class names (or codes); ``counts``
    maps class to requested sample size.  Deterministic for a fixed seed:
    classes are visited in the fixed class order and positions drawn with
    numpy's seeded PCG64 generator.
    """
    class_labels = np.asarray(class_labels)
    flat = class_labels.ravel()
    rng = np.random.default_rng(seed)
    samples = []
    for cls in sorted(counts, key=class_sort_key):
        want = counts[cls]
        pool = np.flatnonzero(flat == cls)
        if pool.size < want:
            raise EvalError(
                f"stratum {cls!r} has {pool.size} pixels, cannot sample {want}"
            )
        chosen = rng.choice(pool, size=want, replace=False)
        for idx in chosen:
            row, col = divmod(int(idx), class_labels.shape[1])
            samples.append((row, col, cls))
    return samples


def _is_water(label):
    if isinstance(label, (bool, np.bool_)):
        return bool(label)
    if isinstance(label, (int, np.integer, float, np.floating)):
        return bool(label)
    return label == "water"


@dataclass
class ConfusionMatrix:
    """2x2 counts indexed (predicted, reference), 0 = non-water, 1 = water."""

    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())


def confusion_matrix(predicted, reference) -> ConfusionMatrix:
    """Tally predicted-vs-reference water labels; any non-water class label
    (vegetation, soil, impervious, ...) aggregates into non-water."""
    if len(predicted) != len(reference):
        raise EvalError(
            f"label list lengths differ: {len(predicted)} vs {len(reference)}"
        )
    counts = np.zeros((2, 2), dtype=np.int64)
    for p, r in zip(predicted, reference):
        counts[int(_is_water(p)), int(_is_water(r))] += 1
    return ConfusionMatrix(counts)


@dataclass
class AccuracyReport:
    pa: float  # water producer's accuracy, percent
    ua: float  # water user's accuracy, percent
    oa: float  # overall accuracy, percent

    def rounded(self, decimals=1):
        """Half-up rounding for display, matching 1-decimal table style."""
        q = Decimal(1).scaleb(-decimals)
        return tuple(
            float(Decimal(repr(float(v))).quantize(q, rounding=ROUND_HALF_UP))
            for v in (self.pa, self.ua, self.oa)
        )


def accuracy_metrics(m: ConfusionMatrix) -> AccuracyReport:
    c = m.counts
    ref_water = c[0, 1] + c[1, 1]
    pred_water = c[1, 0] + c[1, 1]
    total = m.total
    if ref_water == 0 or pred_water == 0 or total == 0:
        raise EvalError("zero denominator in accuracy metrics")
    return AccuracyReport(
        pa=100.0 * c[1, 1] / ref_water,
        ua=100.0 * c[1, 1] / pred_water,
        oa=100.0 * (c[0, 0] + c[1, 1]) / total,
    )


def format_report(m: ConfusionMatrix, title="classification") -> str:
    """Text table mirroring the usual confusion-matrix layout, plus one
    machine-readable line ``pa=...,ua=...,oa=...``."""
    rep = accuracy_metrics(m)
    pa, ua, oa = rep.rounded()
    c = m.counts
    lines = [
        f"Confusion matrix for {title}",
        "                       Reference",
        "                       non-water      water",
        f"Predicted  non-water   {c[0, 0]:9d}  {c[0, 1]:9d}",
        f"           water       {c[1, 0]:9d}  {c[1, 1]:9d}",
        f"PA(water) = {pa}%   UA(water) = {ua}%   OA = {oa}%",
        f"pa={pa},ua={ua},oa={oa}",
    ]
    return "\n".join(lines)
