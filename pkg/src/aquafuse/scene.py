"""Deterministic synthetic multi-sensor scene generator.

Renders a vector scene description (lakes, rivers, buildings, trees, dark
fields on a grass/soil background) into co-registered PAN, MS and multi-date
Landsat rasters plus ground-truth masks, by supersampling the geometry at
0.1 m and block-averaging into each sensor's grid.  Everything is seeded, so
the same scene file always produces bit-identical rasters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .raster import BinaryMask, GridGeometry, RasterGrid
from .shadow import ShadowGeometry

SUPERSAMPLE_M = 0.1
PAN_PIXEL_M = 0.8
MS_PIXEL_M = 3.2
LANDSAT_PIXEL_M = 30.0

PAN_BANDS = ("pan",)
MS_BANDS = ("blue", "green", "red", "nir")
LANDSAT_BANDS = ("coastal", "blue", "green", "red", "nir", "swir1", "swir2")

# rendered surface classes, in painting precedence order (codes are indices)
SURFACE_CLASSES = ("soil", "grass", "tree", "impervious", "asphalt", "dark_field", "water")
WATER_CLASSES = ("water",)

# surface class -> validation stratum
EVAL_CLASS_OF = {
    "grass": "vegetation",
    "tree": "vegetation",
    "soil": "soil",
    "dark_field": "soil",
    "impervious": "impervious",
    "asphalt": "impervious",
    "water": "water",
}

LANDSAT_DAYS = (16, 74, 135, 192, 230, 288, 340)


class SceneError(Exception):
    pass


@dataclass
class Feature:
    """One painted scene element.

    ``kind`` is a surface class; ``shape`` is ``rect`` (x0 y0 x1 y1),
    ``poly`` (x1 y1 x2 y2 ...), ``disk`` (cx cy radius) or ``line``
    (x0 y0 x1 y1 + width).  ``height`` is only meaningful for buildings and
    trees.  Coordinates are map meters with y growing north from 0.
    """

    kind: str
    shape: str
    params: tuple
    width: float = 0.0
    height: float = 0.0


@dataclass
class SceneSpec:
    extent: tuple = (240.0, 240.0)
    sun: ShadowGeometry = field(default_factory=lambda: ShadowGeometry(50.0, 225.0))
    shadow_factor: float = 0.35       # PAN and visible bands
    shadow_factor_nir: float = 0.8    # NIR and SWIR bands (diffuse skylight)
    seed: int = 7
    noise: dict = field(default_factory=lambda: {"pan": 0.02, "ms": 0.025, "landsat": 0.0})
    # class -> band -> mean reflectance (bands named across all sensors)
    spectra: dict = field(default_factory=dict)
    # class -> (sigma, cell size m) multiplicative brightness texture
    textures: dict = field(default_factory=dict)
    features: list = field(default_factory=list)
    landsat_days: tuple = LANDSAT_DAYS
    train_per_class: int = 60

    def validate(self):
        ex, ey = self.extent
        if ex <= 0 or ey <= 0:
            raise SceneError("extent must be positive")
        for axis in self.extent:
            for pixel in (PAN_PIXEL_M, MS_PIXEL_M, LANDSAT_PIXEL_M):
                if abs(axis / pixel - round(axis / pixel)) > 1e-9:
                    raise SceneError(
                        f"extent {axis} must be a whole number of {pixel} m pixels"
                    )
        for cls in SURFACE_CLASSES:
            if cls not in self.spectra:
                raise SceneError(f"spectral library misses class {cls!r}")
            for band in set(PAN_BANDS) | set(MS_BANDS) | set(LANDSAT_BANDS):
                if band not in self.spectra[cls]:
                    raise SceneError(f"class {cls!r} misses band {band!r}")
        for sensor, sigma in self.noise.items():
            if sigma < 0:
                raise SceneError(f"noise sigma for {sensor!r} must be >= 0")
        for factor in (self.shadow_factor, self.shadow_factor_nir):
            if not (0.0 < factor <= 1.0):
                raise SceneError("shadow factors must be in (0, 1]")
        for f in self.features:
            if f.kind not in SURFACE_CLASSES:
                raise SceneError(f"unknown feature class {f.kind!r}")
            if f.kind == "tree" and f.height <= 0:
                raise SceneError("tree feature needs a positive height")
            if f.height < 0:
                raise SceneError("feature height must be >= 0")
            if f.shape == "line" and f.width <= 0:
                raise SceneError("line feature needs a positive width")
        return self


@dataclass
class SceneBundle:
    pan: RasterGrid
    ms: RasterGrid
    landsat: list
    landsat_days: tuple
    truth: BinaryMask            # water truth on the PAN grid
    class_truth: RasterGrid      # validation-stratum indices on the PAN grid
    shadow_truth: BinaryMask     # rendered-shadow truth on the PAN grid
    train_sites: list            # (class, x, y) map-coordinate training sites


# ---------------------------------------------------------------------------
# scene file grammar
#
#   extent <x> <y>
#   sun <elevation_deg> <azimuth_deg>
#   shadow_factor <f>            (PAN + visible bands)
#   shadow_factor_nir <f>        (NIR + SWIR bands)
#   seed <n>
#   noise <pan|ms|landsat> <sigma>
#   texture <class> <sigma> <cell_m>
#   spectrum <class> <band>=<value> ...
#   feature <class> rect <x0> <y0> <x1> <y1> [height <h>]
#   feature <class> poly <x1> <y1> ... [height <h>]
#   feature <class> disk <cx> <cy> <radius> [height <h>]
#   feature <class> line <x0> <y0> <x1> <y1> width <w>
#   train_per_class <n>
#
# '#' starts a comment; features paint in file order over a soil background.

def parse_scene(text: str) -> SceneSpec:
    spec = SceneSpec()
    spec.spectra = {}
    spec.textures = {}
    spec.noise = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        try:
            if key == "extent":
                spec.extent = (float(parts[1]), float(parts[2]))
            elif key == "sun":
                spec.sun = ShadowGeometry(float(parts[1]), float(parts[2]))
            elif key == "shadow_factor":
                spec.shadow_factor = float(parts[1])
            elif key == "shadow_factor_nir":
                spec.shadow_factor_nir = float(parts[1])
            elif key == "seed":
                spec.seed = int(parts[1])
            elif key == "train_per_class":
                spec.train_per_class = int(parts[1])
            elif key == "noise":
                spec.noise[parts[1]] = float(parts[2])
            elif key == "texture":
                spec.textures[parts[1]] = (float(parts[2]), float(parts[3]))
            elif key == "spectrum":
                bands = {}
                for item in parts[2:]:
                    band, value = item.split("=")
                    bands[band] = float(value)
                spec.spectra[parts[1]] = bands
            elif key == "feature":
                spec.features.append(_parse_feature(parts[1:]))
            else:
                raise SceneError(f"unknown directive {key!r}")
        except (IndexError, ValueError) as exc:
            raise SceneError(f"scene line {lineno}: {raw.strip()!r}: {exc}") from exc
    return spec.validate()


# feature words map onto rendered surface classes
FEATURE_KIND_ALIASES = {
    "lake": "water",
    "river": "water",
    "building": "impervious",
}


def _parse_feature(parts) -> Feature:
    kind, shape = parts[0], parts[1]
    kind = FEATURE_KIND_ALIASES.get(kind, kind)
    rest = parts[2:]
    width = height = 0.0
    numbers = []
    i = 0
    while i < len(rest):
        if rest[i] == "height":
            height = float(rest[i + 1])
            i += 2
        elif rest[i] == "width":
            width = float(rest[i + 1])
            i += 2
        else:
            numbers.append(float(rest[i]))
            i += 1
    if shape == "rect" and len(numbers) != 4:
        raise SceneError("rect needs x0 y0 x1 y1")
    if shape == "disk" and len(numbers) != 3:
        raise SceneError("disk needs cx cy radius")
    if shape == "line" and len(numbers) != 4:
        raise SceneError("line needs x0 y0 x1 y1")
    if shape == "poly" and (len(numbers) < 6 or len(numbers) % 2):
        raise SceneError("poly needs at least 3 x y pairs")
    if shape not in ("rect", "disk", "line", "poly"):
        raise SceneError(f"unknown shape {shape!r}")
    return Feature(kind, shape, tuple(numbers), width, height)


def format_scene(spec: SceneSpec) -> str:
    lines = [
        f"extent {spec.extent[0]:g} {spec.extent[1]:g}",
        f"sun {spec.sun.sun_elevation_deg:g} {spec.sun.sun_azimuth_deg:g}",
        f"shadow_factor {spec.shadow_factor:g}",
        f"shadow_factor_nir {spec.shadow_factor_nir:g}",
        f"seed {spec.seed}",
        f"train_per_class {spec.train_per_class}",
    ]
    for sensor in sorted(spec.noise):
        lines.append(f"noise {sensor} {spec.noise[sensor]:g}")
    for cls in sorted(spec.textures):
        sigma, cell = spec.textures[cls]
        lines.append(f"texture {cls} {sigma:g} {cell:g}")
    for cls in SURFACE_CLASSES:
        if cls in spec.spectra:
            bands = " ".join(f"{b}={v:g}" for b, v in sorted(spec.spectra[cls].items()))
            lines.append(f"spectrum {cls} {bands}")
    for f in spec.features:
        coords = " ".join(f"{v:g}" for v in f.params)
        suffix = ""
        if f.width:
            suffix += f" width {f.width:g}"
        if f.height:
            suffix += f" height {f.height:g}"
        lines.append(f"feature {f.kind} {f.shape} {coords}{suffix}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# rasterization at the supersample grid

def _supersample_axes(spec: SceneSpec):
    ex, ey = spec.extent
    nx = int(round(ex / SUPERSAMPLE_M))
    ny = int(round(ey / SUPERSAMPLE_M))
    xs = (np.arange(nx) + 0.5) * SUPERSAMPLE_M
    ys = ey - (np.arange(ny) + 0.5) * SUPERSAMPLE_M  # row 0 is the north edge
    return xs, ys


def _feature_mask(f: Feature, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    gx = xs[np.newaxis, :]
    gy = ys[:, np.newaxis]
    if f.shape == "rect":
        x0, y0, x1, y1 = f.params
        return (gx >= x0) & (gx < x1) & (gy >= y0) & (gy < y1)
    if f.shape == "disk":
        cx, cy, radius = f.params
        return (gx - cx) ** 2 + (gy - cy) ** 2 <= radius ** 2
    if f.shape == "line":
        x0, y0, x1, y1 = f.params
        dx, dy = x1 - x0, y1 - y0
        length2 = dx * dx + dy * dy
        if length2 == 0:
            raise SceneError("degenerate line feature")
        t = np.clip(((gx - x0) * dx + (gy - y0) * dy) / length2, 0.0, 1.0)
        px = x0 + t * dx
        py = y0 + t * dy
        return (gx - px) ** 2 + (gy - py) ** 2 <= (f.width / 2.0) ** 2
    if f.shape == "poly":
        verts = np.array(f.params, dtype=np.float64).reshape(-1, 2)
        inside = np.zeros((ys.size, xs.size), dtype=bool)
        x2, y2 = verts[-1]
        for x1v, y1v in verts:
            crosses = (y1v > gy) != (y2 > gy)
            with np.errstate(divide="ignore", invalid="ignore"):
                xcut = (x2 - x1v) * (gy - y1v) / (y2 - y1v) + x1v
            inside ^= crosses & (gx < xcut)
            x2, y2 = x1v, y1v
        return inside
    raise SceneError(f"unknown shape {f.shape!r}")


def _paint_classes(spec: SceneSpec, xs, ys):
    """Supersampled surface-class codes plus the solid-object height map."""
    classes = np.full((ys.size, xs.size), SURFACE_CLASSES.index("soil"), dtype=np.int8)
    heights = np.zeros((ys.size, xs.size), dtype=np.float32)
    for f in spec.features:
        mask = _feature_mask(f, xs, ys)
        classes[mask] = SURFACE_CLASSES.index(f.kind)
        heights[mask] = f.height if f.kind in ("impervious", "tree") else 0.0
    return classes, heights


def _cast_shadows(spec: SceneSpec, heights: np.ndarray) -> np.ndarray:
    """Shadow mask at the supersample grid: sweep each object height from the
    ground up, shifting its footprint by the sun-projection offset."""
    a, b = spec.sun.offset_coefficients()  # meters east / south per meter height
    shadow = np.zeros(heights.shape, dtype=bool)
    slope = max(abs(a), abs(b))
    for h in np.unique(heights):
        if h <= 0:
            continue
        footprint = heights == h
        step = SUPERSAMPLE_M / slope if slope > 0 else h
        n_steps = int(math.ceil(h / step)) + 1
        sweep = np.minimum(step * np.arange(n_steps), h)
        offsets = {
            (int(math.floor(b * hh / SUPERSAMPLE_M + 0.5)),
             int(math.floor(a * hh / SUPERSAMPLE_M + 0.5)))
            for hh in sweep
        }
        for drow, dcol in sorted(offsets):
            _shift_into(shadow, footprint, drow, dcol)
    # objects are lit surfaces, not shadows of themselves
    shadow &= heights == 0
    return shadow


def _shift_into(acc, mask, drow, dcol):
    h, w = mask.shape
    if abs(drow) >= h or abs(dcol) >= w:
        return
    sr0, sr1 = max(0, -drow), min(h, h - drow)
    sc0, sc1 = max(0, -dcol), min(w, w - dcol)
    acc[sr0 + drow:sr1 + drow, sc0 + dcol:sc1 + dcol] |= mask[sr0:sr1, sc0:sc1]


def _texture_field(spec: SceneSpec, cls: str, shape, stream: int) -> np.ndarray:
    """Multiplicative brightness texture for one class, constant over cells of
    the configured size, clipped to stay positive."""
    if cls not in spec.textures:
        return None
    sigma, cell_m = spec.textures[cls]
    factor = max(1, int(round(cell_m / SUPERSAMPLE_M)))
    ch = (shape[0] + factor - 1) // factor
    cw = (shape[1] + factor - 1) // factor
    rng = np.random.default_rng([spec.seed, 1000 + stream])
    cells = 1.0 + rng.normal(0.0, sigma, size=(ch, cw))
    cells = np.clip(cells, 0.2, None)
    field_ = np.repeat(np.repeat(cells, factor, axis=0), factor, axis=1)
    return field_[:shape[0], :shape[1]].astype(np.float32)


def _block_mean(values: np.ndarray, factor: int) -> np.ndarray:
    h, w = values.shape
    return values.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


NIR_GROUP = ("nir", "swir1", "swir2")


def _render_sensor(spec: SceneSpec, classes, brightness, shadow, band_names, pixel_m,
                   sensor: str, sensor_id: int, date_idx: int = 0) -> RasterGrid:
    ex, ey = spec.extent
    factor = int(round(pixel_m / SUPERSAMPLE_M))
    width = int(round(ex / pixel_m))
    height = int(round(ey / pixel_m))
    geom = GridGeometry(width, height, pixel_m, origin_x=0.0, origin_y=ey)
    lut = np.array(
        [[spec.spectra[cls][band] for cls in SURFACE_CLASSES] for band in band_names],
        dtype=np.float32,
    )
    sigma = spec.noise.get(sensor, 0.0)
    bands = np.empty((len(band_names), height, width), dtype=np.float32)
    for bidx in range(len(band_names)):
        darken = (spec.shadow_factor_nir if band_names[bidx] in NIR_GROUP
                  else spec.shadow_factor)
        reflect = lut[bidx][classes] * brightness
        reflect[shadow] *= darken
        pixels = _block_mean(reflect.astype(np.float64), factor)
        if sigma > 0:
            rng = np.random.default_rng([spec.seed, sensor_id, bidx, date_idx])
            pixels = pixels + rng.normal(0.0, sigma, size=pixels.shape)
        bands[bidx] = pixels.astype(np.float32)
    return RasterGrid(geom, bands, list(band_names))


def _majority_code(classes: np.ndarray, factor: int, n_codes: int) -> np.ndarray:
    """Per-PAN-pixel majority class code (smallest code wins ties)."""
    counts = np.stack([
        _block_mean((classes == code).astype(np.float64), factor)
        for code in range(n_codes)
    ])
    return np.argmax(counts, axis=0).astype(np.int8)


# one archetypal surface per validation class provides the training exemplars
TRAIN_SURFACE_OF = {
    "vegetation": "grass",
    "soil": "soil",
    "impervious": "impervious",
    "water": "water",
}


def _pick_train_sites(spec: SceneSpec, surface_codes: np.ndarray,
                      shadow_pan: np.ndarray, geometry: GridGeometry):
    """Pure, unshadowed training sites per validation class, as map coords.

    A site is usable when its full 3.2 m MS footprint holds one archetypal
    surface and no shadow, so the sampled MS spectrum is a clean class
    exemplar (look-alike surfaces such as dark plastic film are deliberately
    not part of the training set).
    """
    factor = int(round(MS_PIXEL_M / PAN_PIXEL_M))
    h, w = surface_codes.shape
    hc, wc = h // factor, w // factor
    blocks = surface_codes[:hc * factor, :wc * factor].reshape(hc, factor, wc, factor)
    uniform = (blocks == blocks[:, :1, :, :1]).all(axis=(1, 3))
    shadow_blocks = shadow_pan[:hc * factor, :wc * factor].reshape(hc, factor, wc, factor)
    clean = uniform & ~shadow_blocks.any(axis=(1, 3))
    block_class = blocks[:, 0, :, 0]

    rng = np.random.default_rng([spec.seed, 77])
    sites = []
    strata = ("vegetation", "soil", "impervious", "water")
    for stratum in strata:
        scode = SURFACE_CLASSES.index(TRAIN_SURFACE_OF[stratum])
        pool = np.flatnonzero(clean & (block_class == scode))
        if pool.size < spec.train_per_class:
            raise SceneError(
                f"only {pool.size} clean training blocks for {stratum!r}, "
                f"need {spec.train_per_class}"
            )
        chosen = rng.choice(pool, size=spec.train_per_class, replace=False)
        for idx in np.sort(chosen):
            br, bc = divmod(int(idx), wc)
            row = br * factor + factor // 2
            col = bc * factor + factor // 2
            x, y = geometry.pixel_center(row, col)
            sites.append((stratum, float(x), float(y)))
    return sites


def generate_scene(spec: SceneSpec) -> SceneBundle:
    spec.validate()
    xs, ys = _supersample_axes(spec)
    classes, heights = _paint_classes(spec, xs, ys)
    shadow = _cast_shadows(spec, heights)

    brightness = np.ones(classes.shape, dtype=np.float32)
    for stream, cls in enumerate(sorted(spec.textures)):
        tex = _texture_field(spec, cls, classes.shape, stream)
        sel = classes == SURFACE_CLASSES.index(cls)
        brightness[sel] = tex[sel]
    pan = _render_sensor(spec, classes, brightness, shadow, PAN_BANDS, PAN_PIXEL_M,
                         "pan", 1)
    ms = _render_sensor(spec, classes, brightness, shadow, MS_BANDS, MS_PIXEL_M,
                        "ms", 2)
    landsat = [
        _render_sensor(spec, classes, brightness, shadow, LANDSAT_BANDS,
                       LANDSAT_PIXEL_M, "landsat", 3, date_idx=i)
        for i in range(len(spec.landsat_days))
    ]

    factor = int(round(PAN_PIXEL_M / SUPERSAMPLE_M))
    water_codes = [SURFACE_CLASSES.index(c) for c in WATER_CLASSES]
    water_ss = np.isin(classes, water_codes)
    truth_bits = (_block_mean(water_ss.astype(np.float64), factor) > 0.5)
    shadow_bits = (_block_mean(shadow.astype(np.float64), factor) > 0.5)

    majority = _majority_code(classes, factor, len(SURFACE_CLASSES))
    stratum_names = ("vegetation", "soil", "impervious", "water")
    stratum_of_code = np.array(
        [stratum_names.index(EVAL_CLASS_OF[c]) for c in SURFACE_CLASSES], dtype=np.int8
    )
    class_truth_codes = stratum_of_code[majority]

    class_truth = RasterGrid(
        pan.geometry, class_truth_codes.astype(np.float32)[np.newaxis], ["class_index"]
    )
    truth = BinaryMask(pan.geometry, truth_bits.astype(np.uint8))
    shadow_truth = BinaryMask(pan.geometry, shadow_bits.astype(np.uint8))
    sites = _pick_train_sites(spec, majority, shadow_bits, pan.geometry)
    return SceneBundle(pan, ms, landsat, tuple(spec.landsat_days), truth,
                       class_truth, shadow_truth, sites)


# ---------------------------------------------------------------------------
# default scene

DEFAULT_SCENE_TEXT = """\
# 240 x 240 m mixed scene: grass plain with a narrow river in the south,
# soil with a lake, plastic-film fields and buildings in the north.
extent 240 240
sun 50 180
shadow_factor 0.5
shadow_factor_nir 0.55
seed 7
train_per_class 60
noise pan 0.004
noise ms 0.030
noise landsat 0
texture grass 0.08 3.2
texture tree 0.22 0.8
texture water 0.10 3.2
spectrum water    pan=0.05  coastal=0.06 blue=0.06 green=0.05 red=0.04 nir=0.02 swir1=0.01 swir2=0.008
spectrum grass    pan=0.18  coastal=0.04 blue=0.04 green=0.08 red=0.05 nir=0.50 swir1=0.25 swir2=0.15
spectrum tree     pan=0.18  coastal=0.04 blue=0.04 green=0.08 red=0.05 nir=0.50 swir1=0.25 swir2=0.15
spectrum soil     pan=0.20  coastal=0.14 blue=0.15 green=0.18 red=0.20 nir=0.30 swir1=0.30 swir2=0.30
spectrum impervious pan=0.25 coastal=0.24 blue=0.25 green=0.25 red=0.25 nir=0.25 swir1=0.28 swir2=0.22
spectrum asphalt  pan=0.06  coastal=0.09 blue=0.09 green=0.09 red=0.09 nir=0.30 swir1=0.25 swir2=0.25
spectrum dark_field pan=0.05 coastal=0.10 blue=0.10 green=0.085 red=0.065 nir=0.03 swir1=0.20 swir2=0.20
feature grass rect 0 0 240 112
feature river line 0 88 240 100 width 2.4
feature tree disk 30 22 7 height 14
feature tree disk 72 30 8 height 18
feature tree disk 112 24 6 height 12
feature tree disk 158 32 7 height 16
feature tree disk 200 24 8 height 20
feature tree disk 58 30 7 height 15
feature lake rect 48 121.6 144 217.6
feature dark_field rect 176 160 224 208
feature building rect 4 140 24 156 height 30
feature building rect 4 180 24 196 height 30
feature building rect 150 116 170 132 height 30
feature asphalt rect 190 120 210 140
feature dark_field rect 4 160 24 176
feature dark_field rect 4 200 24 216
"""


def default_scene() -> SceneSpec:
    return parse_scene(DEFAULT_SCENE_TEXT)
