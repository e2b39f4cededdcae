"""Flat `key = value` pipeline configuration with strict key checking."""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(Exception):
    pass


_AUTO = ("auto", "")


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline, with library defaults.

    ``t_pan``, ``t_tree`` and ``sweep_step_m`` accept the string ``auto`` in
    the file form, meaning "derive from the data" (stored here as None).
    """

    # scene / orchestration
    scene: str = ""                 # scene description file; "" = bundled default
    seed: int = 0                   # segmentation + validation sampling seed

    # segmentation
    kmeans_k: int = 8
    t_pan: float | None = None      # PAN water threshold; None = Otsu

    # shadow geometry and object analysis
    sun_elevation_deg: float = 50.0
    sun_azimuth_deg: float = 180.0
    t_tree: float | None = None     # tree/grass texture threshold; None = Otsu
    intensity_window: int = 101
    intensity_ratio: float = 0.30
    height_high_min: float = 3.0
    height_high_max: float = 300.0
    height_low_min: float = 3.0
    height_low_max: float = 50.0
    height_tree_min: float = 3.0
    height_tree_max: float = 50.0
    sweep_step_m: float | None = None

    # fusion
    n1: int = 2
    n2: int = 1
    r_ms: float = 3.2
    r_l: float = 30.0
    decision_threshold: float = 0.5

    # post-classification
    shadow_relabel_threshold: float = 0.85
    boundary_band_px: int = 4
    unmix_window_px: int = 33
    water_fraction_threshold: float = 0.5

    # evaluation (stratified sample sizes per validation class)
    eval_water: int = 300
    eval_vegetation: int = 100
    eval_soil: int = 100
    eval_impervious: int = 100


_OPTIONAL_FLOATS = ("t_pan", "t_tree", "sweep_step_m")


def _coerce(name: str, typ, text: str):
    if name in _OPTIONAL_FLOATS:
        if text.strip().lower() in _AUTO:
            return None
        return float(text)
    if typ == "int":
        return int(text)
    if typ == "float":
        return float(text)
    if typ == "bool":
        return _parse_bool(text)
    return text.strip()


def parse_config(text: str) -> PipelineConfig:
    """Parse `key = value` lines; '#' comments; unknown keys are rejected."""
    cfg = PipelineConfig()
    known = {f.name: f for f in fields(PipelineConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        f = known[key]
        base = {int: "int", float: "float", bool: "bool", str: "str"}.get(f.type if isinstance(f.type, type) else None)
        if base is None:
            # dataclass stores annotations as strings under future-import
            ann = str(f.type)
            base = "int" if ann == "int" else "float" if ann.startswith("float") else "bool" if ann == "bool" else "str"
        try:
            setattr(cfg, key, _coerce(key, base, value))
        except ValueError as exc:
            raise ConfigError(f"config line {lineno}: bad value for {key!r}: {exc}") from exc
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        if value is None:
            value = "auto"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
