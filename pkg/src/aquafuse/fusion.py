"""Two-stage graphical-model fusion of the per-segment PAN, MS and Landsat
water probabilities.

Stage one merges the PAN and MS beliefs into an intermediate node whose
conditional table shifts weight toward the MS result for large or
shadow-covered segments.  Stage two merges that with the Landsat belief,
which only participates for segments at least as large as the Landsat
detectability scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

WATER = True
NON_WATER = False
STATES = (NON_WATER, WATER)


class FusionError(Exception):
    pass


@dataclass
class FusionParams:
    n1: int = 2
    n2: int = 1
    r_ms: float = 3.2
    r_l: float = 30.0
    decision_threshold: float = 0.5

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise FusionError("n1 and n2 must be positive integers")
        if self.r_ms <= 0 or self.r_l <= 0:
            raise FusionError("resolutions must be positive")
        if not (0.0 < self.decision_threshold < 1.0):
            raise FusionError("decision threshold must be in (0, 1)")


def sigmoid(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def cpd_pm(pm, pan, ms, w: float, p_shadow: float, params: FusionParams) -> float:
    """P(intermediate state | PAN state, MS state) for a segment of size
    ``w`` meters with shadow proportion ``p_shadow``."""
    if pan == ms:
        return 1.0 if pm == pan else 0.0
    s = sigmoid((w / (params.n1 * params.r_ms) + p_shadow) / 2.0)
    return s if pm == ms else 1.0 - s


def cpd_w(w_state, pm, lan, w: float, params: FusionParams) -> float:
    """P(final state | intermediate state, Landsat state); the Landsat branch
    is gated off for segments below the Landsat detectability scale."""
    if pm == lan:
        return 1.0 if w_state == pm else 0.0
    scale = params.n2 * params.r_l
    s = sigmoid(w / scale) if w >= scale else 0.0
    return s if w_state == lan else 1.0 - s


def fuse_pm(p_pan: float, p_ms: float, w: float, p_shadow: float,
            params: FusionParams) -> float:
    """Marginal water probability of the PAN+MS stage, treating the two
    sources as independent binary variables."""
    total = 0.0
    for pan in STATES:
        p_a = p_pan if pan is WATER else 1.0 - p_pan
        for ms in STATES:
            p_b = p_ms if ms is WATER else 1.0 - p_ms
            total += cpd_pm(WATER, pan, ms, w, p_shadow, params) * p_a * p_b
    return total


def fuse_w(p_pm: float, p_lan: float, w: float, params: FusionParams) -> float:
    """Marginal water probability of the final stage."""
    total = 0.0
    for pm in STATES:
        p_a = p_pm if pm is WATER else 1.0 - p_pm
        for lan in STATES:
            p_b = p_lan if lan is WATER else 1.0 - p_lan
            total += cpd_w(WATER, pm, lan, w, params) * p_a * p_b
    return total


def decide(p_w: float, params: FusionParams) -> bool:
    """Water iff the fused probability strictly exceeds the threshold."""
    return p_w > params.decision_threshold


def fuse_all_segments(segmap, params: FusionParams):
    """Fuse every segment's probabilities; returns (p_w list, water flags)."""
    p_w = []
    flags = []
    for rec in segmap.records:
        pm = fuse_pm(rec.p_pan, rec.p_ms, rec.w, rec.p_shadow, params)
        pw = fuse_w(pm, rec.p_lan, rec.w, params)
        p_w.append(pw)
        flags.append(decide(pw, params))
    return p_w, flags
