"""Pipeline orchestration: subcommands wiring the library modules end-to-end.

Every subcommand reads and writes named artifacts inside one output
directory, so `run-all` is exactly the composition of the individual steps:

    synth        scene rasters + truth + training sites
    train        Gaussian classifier fitted to the MS training sites
    classify-ms  per-pixel class posteriors + MS-only water map
    water-index  multi-date Landsat water index + its water map
    pca-fuse     PCA-sharpened baseline + its classifier water map
    segment      morphology, K-Means segments, per-segment statistics
    shadow       object kinds, potential shadow mask, shadow proportions
    fuse         per-segment probabilistic fusion -> PGM water map
    postclass    shadow relabeling + boundary unmixing -> final map
    evaluate     stratified accuracy reports for every water map present
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig, load_config
from .evaluate import EvalError, confusion_matrix, format_report, stratified_sample
from .fusion import FusionError, FusionParams, fuse_all_segments
from .postclass import PostClassError, PostClassParams, boundary_unmix, relabel_shadow_segments
from .raster import (BinaryMask, RasterError, RasterGrid, read_mask, read_raster,
                     resample_nearest, write_raster)
from .scene import DEFAULT_SCENE_TEXT, SceneError, generate_scene, parse_scene
from .segmentation import (SegmentationError, kmeans_segment, load_segment_stats,
                           morphological_profiles, pan_water_probability, paint_segments,
                           save_segment_stats, segment_stats, segment_water_mask)
from .shadow import (OBJECT_KIND_HIGH_BUILDING, OBJECT_KIND_LOW_BUILDING, OBJECT_KIND_TREE,
                     HeightRanges, IntensityParams, ShadowError, ShadowGeometry,
                     building_intensity_map, classify_segments_majority,
                     potential_shadow_mask, segment_shadow_proportion, tree_grass_split)
from .spectral import (SpectralError, classify_probabilities, fit_classifier,
                       landsat_water_index, load_classifier, otsu_threshold, pca_fuse,
                       save_classifier)

STRATA = ("vegetation", "soil", "impervious", "water")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_COMPUTE = 4


class ArtifactError(Exception):
    """A required input artifact is missing or unreadable."""


# ---------------------------------------------------------------------------
# artifact helpers

def _load_raster(out: Path, stem: str) -> RasterGrid:
    path = out / f"{stem}.hdr"
    if not path.exists():
        raise ArtifactError(f"missing artifact {path} (run the producing step first)")
    return read_raster(path)


def _load_mask(out: Path, stem: str) -> BinaryMask:
    path = out / f"{stem}.hdr"
    if not path.exists():
        raise ArtifactError(f"missing artifact {path} (run the producing step first)")
    return read_mask(path)


def _write(out: Path, stem: str, raster: RasterGrid) -> None:
    write_raster(raster, out / f"{stem}.hdr")


def _write_mask(out: Path, stem: str, mask: BinaryMask) -> None:
    write_raster(mask.as_raster(stem), out / f"{stem}.hdr")


def _landsat_stems(out: Path):
    stems = sorted(p.stem for p in out.glob("landsat_d*.hdr"))
    if not stems:
        raise ArtifactError(f"no landsat_d*.hdr artifacts in {out}")
    return stems


def _load_sites(out: Path):
    path = out / "train_sites.txt"
    if not path.exists():
        raise ArtifactError(f"missing artifact {path} (run synth first)")
    sites = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        cls, x, y = line.split()
        sites.append((cls, float(x), float(y)))
    return sites


def _sample_spectra(raster: RasterGrid, sites):
    spectra, labels = [], []
    for cls, x, y in sites:
        row, col = raster.geometry.locate(x, y)
        spectra.append(raster.data[:, int(row), int(col)])
        labels.append(cls)
    return np.array(spectra), np.array(labels)


def _load_segments(out: Path):
    labels = _load_raster(out, "segments")
    segmap = load_segment_stats(out / "segment_stats.txt",
                                labels.data[0].astype(np.int32), labels.geometry)
    return segmap


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(cfg: PipelineConfig, out: Path) -> None:
    if cfg.scene:
        scene_path = Path(cfg.scene)
        if not scene_path.exists():
            raise ArtifactError(f"scene file {scene_path} not found")
        text = scene_path.read_text()
    else:
        text = DEFAULT_SCENE_TEXT
    spec = parse_scene(text)
    bundle = generate_scene(spec)
    (out / "scene.txt").write_text(text)
    _write(out, "pan", bundle.pan)
    _write(out, "ms", bundle.ms)
    for day, raster in zip(bundle.landsat_days, bundle.landsat):
        _write(out, f"landsat_d{day:03d}", raster)
    _write_mask(out, "truth", bundle.truth)
    _write(out, "class_truth", bundle.class_truth)
    _write_mask(out, "shadow_truth", bundle.shadow_truth)
    lines = [f"{cls} {x!r} {y!r}" for cls, x, y in bundle.train_sites]
    (out / "train_sites.txt").write_text("\n".join(lines) + "\n")


def cmd_train(cfg: PipelineConfig, out: Path) -> None:
    ms = _load_raster(out, "ms")
    spectra, labels = _sample_spectra(ms, _load_sites(out))
    model = fit_classifier(spectra, labels)
    save_classifier(model, out / "classifier.txt")


def cmd_classify_ms(cfg: PipelineConfig, out: Path) -> None:
    ms = _load_raster(out, "ms")
    model = load_classifier(out / "classifier.txt")
    probs, class_map = classify_probabilities(model, ms)
    _write(out, "ms_prob", probs)
    _write(out, "ms_class", class_map)
    p_water = probs.band("p_water")
    _write_mask(out, "ms_water", BinaryMask(ms.geometry, (p_water > 0.5).astype(np.uint8)))


def cmd_water_index(cfg: PipelineConfig, out: Path) -> None:
    stack = [_load_raster(out, stem) for stem in _landsat_stems(out)]
    wi = landsat_water_index(stack)
    _write(out, "landsat_wi", wi)
    _write_mask(out, "landsat_water",
                BinaryMask(wi.geometry, (wi.data[0] > 0.5).astype(np.uint8)))


def cmd_pca_fuse(cfg: PipelineConfig, out: Path) -> None:
    ms = _load_raster(out, "ms")
    pan = _load_raster(out, "pan")
    fused = pca_fuse(ms, pan)
    _write(out, "pca_fused", fused)
    spectra, labels = _sample_spectra(fused, _load_sites(out))
    model = fit_classifier(spectra, labels)
    probs, _ = classify_probabilities(model, fused)
    _write(out, "pca_prob", probs)
    p_water = probs.band("p_water")
    _write_mask(out, "pca_water", BinaryMask(pan.geometry, (p_water > 0.5).astype(np.uint8)))


def cmd_segment(cfg: PipelineConfig, out: Path) -> None:
    pan = _load_raster(out, "pan")
    ms_prob = _load_raster(out, "ms_prob")
    ms_class = _load_raster(out, "ms_class")
    landsat_wi = _load_raster(out, "landsat_wi")

    p_ms_up = resample_nearest(ms_prob, pan.geometry)
    p_ms_field = RasterGrid(pan.geometry, p_ms_up.data[list(p_ms_up.band_names).index("p_water")][np.newaxis],
                            ["p_water"])
    class_up = resample_nearest(ms_class, pan.geometry)
    p_lan_up = resample_nearest(landsat_wi, pan.geometry)

    t_pan = cfg.t_pan if cfg.t_pan is not None else otsu_threshold(pan.data[0])
    (out / "t_pan.txt").write_text(f"t_pan = {t_pan!r}\n")
    _write_mask(out, "pan_water",
                BinaryMask(pan.geometry, (pan.data[0] < t_pan).astype(np.uint8)))

    mps = morphological_profiles(pan)
    segmap = kmeans_segment(pan, mps, k=cfg.kmeans_k, seed=cfg.seed)
    segment_stats(segmap, pan, mps, p_ms_field, p_lan_up, class_up)
    pan_water_probability(segmap, pan, t_pan)
    classify_segments_majority(segmap)
    tree_grass_split(segmap, t_tree=cfg.t_tree)

    _write(out, "segments",
           RasterGrid(pan.geometry, segmap.labels.astype(np.float32)[np.newaxis], ["segment"]))
    save_segment_stats(segmap, out / "segment_stats.txt")


def cmd_shadow(cfg: PipelineConfig, out: Path) -> None:
    segmap = _load_segments(out)
    tree_flags = np.array([rec.label == "tree" for rec in segmap.records])
    imp_flags = np.array([rec.label == "impervious" for rec in segmap.records])
    imp_mask = BinaryMask(segmap.geometry, imp_flags[segmap.labels].astype(np.uint8))
    intensity = building_intensity_map(
        imp_mask, IntensityParams(cfg.intensity_window, cfg.intensity_ratio))

    kinds = np.zeros(segmap.labels.shape, dtype=np.int32)
    kinds[tree_flags[segmap.labels]] = OBJECT_KIND_TREE
    imp_px = imp_flags[segmap.labels]
    kinds[imp_px & (intensity.bits == 1)] = OBJECT_KIND_HIGH_BUILDING
    kinds[imp_px & (intensity.bits == 0)] = OBJECT_KIND_LOW_BUILDING
    _write(out, "object_kinds",
           RasterGrid(segmap.geometry, kinds.astype(np.float32)[np.newaxis], ["kind"]))

    geom = ShadowGeometry(cfg.sun_elevation_deg, cfg.sun_azimuth_deg)
    ranges = HeightRanges(
        high_intensity_building=(cfg.height_high_min, cfg.height_high_max),
        low_intensity_building=(cfg.height_low_min, cfg.height_low_max),
        tree=(cfg.height_tree_min, cfg.height_tree_max),
        sweep_step=cfg.sweep_step_m,
    )
    shadow_mask = potential_shadow_mask(kinds, geom, ranges, segmap.geometry)
    _write_mask(out, "potential_shadow", shadow_mask)
    segment_shadow_proportion(segmap, shadow_mask)
    save_segment_stats(segmap, out / "segment_stats.txt")


def _fusion_params(cfg: PipelineConfig) -> FusionParams:
    return FusionParams(n1=cfg.n1, n2=cfg.n2, r_ms=cfg.r_ms, r_l=cfg.r_l,
                        decision_threshold=cfg.decision_threshold)


def cmd_fuse(cfg: PipelineConfig, out: Path) -> None:
    segmap = _load_segments(out)
    p_w, flags = fuse_all_segments(segmap, _fusion_params(cfg))
    lines = [f"{s} {p!r} {int(f)}" for s, (p, f) in enumerate(zip(p_w, flags))]
    (out / "fusion.txt").write_text("\n".join(lines) + "\n")
    _write(out, "pgm_prob", paint_segments(segmap, p_w, band_name="p_water"))
    _write_mask(out, "pgm_water", segment_water_mask(segmap, flags))


def _load_fusion(out: Path):
    path = out / "fusion.txt"
    if not path.exists():
        raise ArtifactError(f"missing artifact {path} (run fuse first)")
    p_w, flags = [], []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        _, p, f = line.split()
        p_w.append(float(p))
        flags.append(bool(int(f)))
    return p_w, flags


def _postclass_params(cfg: PipelineConfig) -> PostClassParams:
    return PostClassParams(
        shadow_relabel_threshold=cfg.shadow_relabel_threshold,
        boundary_band_px=cfg.boundary_band_px,
        unmix_window_px=cfg.unmix_window_px,
        water_fraction_threshold=cfg.water_fraction_threshold,
    )


def cmd_postclass(cfg: PipelineConfig, out: Path) -> None:
    segmap = _load_segments(out)
    _, flags = _load_fusion(out)
    params = _postclass_params(cfg)
    relabeled = relabel_shadow_segments(flags, segmap, params)
    mask = segment_water_mask(segmap, relabeled)
    ms = _load_raster(out, "ms")
    ms_up = resample_nearest(ms, segmap.geometry)
    final = boundary_unmix(mask, ms_up, params)
    _write_mask(out, "water_final", final)


PREDICTION_STEMS = ("water_final", "pgm_water", "ms_water", "pca_water",
                    "pan_water", "landsat_water")


def cmd_evaluate(cfg: PipelineConfig, out: Path) -> None:
    truth = _load_mask(out, "truth")
    class_truth = _load_raster(out, "class_truth")
    names = np.array(STRATA)[class_truth.data[0].astype(int)]
    counts = {"water": cfg.eval_water, "vegetation": cfg.eval_vegetation,
              "soil": cfg.eval_soil, "impervious": cfg.eval_impervious}
    counts = {cls: n for cls, n in counts.items() if n > 0}
    samples = stratified_sample(names, counts, seed=cfg.seed)
    truth_bits = truth.bits.astype(bool)

    found = False
    for stem in PREDICTION_STEMS:
        if not (out / f"{stem}.hdr").exists():
            continue
        found = True
        pred = read_raster(out / f"{stem}.hdr")
        if pred.geometry != truth.geometry:
            pred = resample_nearest(pred, truth.geometry)
        pred_bits = pred.data[0] > 0.5
        predicted = [bool(pred_bits[r, c]) for r, c, _ in samples]
        reference = [bool(truth_bits[r, c]) for r, c, _ in samples]
        report = format_report(confusion_matrix(predicted, reference), title=stem)
        (out / f"report_{stem}.txt").write_text(report + "\n")
    if not found:
        raise ArtifactError(f"no prediction artifacts in {out} (expected one of {PREDICTION_STEMS})")


RUN_ALL_ORDER = (
    ("synth", cmd_synth),
    ("train", cmd_train),
    ("classify-ms", cmd_classify_ms),
    ("water-index", cmd_water_index),
    ("pca-fuse", cmd_pca_fuse),
    ("segment", cmd_segment),
    ("shadow", cmd_shadow),
    ("fuse", cmd_fuse),
    ("postclass", cmd_postclass),
    ("evaluate", cmd_evaluate),
)


def cmd_run_all(cfg: PipelineConfig, out: Path) -> None:
    for _, step in RUN_ALL_ORDER:
        step(cfg, out)


COMMANDS = dict(RUN_ALL_ORDER) | {"run-all": cmd_run_all}


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquafuse",
        description="surface-water mapping by decision-level fusion of PAN/MS/Landsat imagery",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} step")
        p.add_argument("--config", default=None, help="pipeline config file (key = value)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="artifact directory")
    return parser


def run_command(name: str, cfg: PipelineConfig, out: Path) -> None:
    COMMANDS[name](cfg, out)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, SceneError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        run_command(args.command, cfg, out)
    except (ConfigError, SceneError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactError, RasterError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SpectralError, SegmentationError, ShadowError, FusionError,
            PostClassError, EvalError) as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
