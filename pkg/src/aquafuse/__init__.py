"""Decision-level fusion of PAN, MS and Landsat imagery for water mapping."""

from .raster import (
    BinaryMask,
    GridGeometry,
    RasterError,
    RasterGrid,
    read_mask,
    read_raster,
    resample_nearest,
    window_ratio,
    write_raster,
)
from .spectral import (
    CLASS_ORDER,
    ClassifierModel,
    PcaModel,
    classify_probabilities,
    fit_classifier,
    landsat_water_index,
    otsu_threshold,
    pca_fit,
    pca_fuse,
)
from .segmentation import (
    SegmentMap,
    SegmentRecord,
    kmeans_segment,
    morphological_profiles,
    pan_water_probability,
    segment_stats,
)
from .shadow import (
    HeightRanges,
    IntensityParams,
    ShadowGeometry,
    building_intensity_map,
    classify_segments_majority,
    potential_shadow_mask,
    segment_shadow_proportion,
    tree_grass_split,
)
from .fusion import FusionParams, cpd_pm, cpd_w, decide, fuse_all_segments, fuse_pm, fuse_w, sigmoid
from .postclass import PostClassParams, boundary_unmix, relabel_shadow_segments
from .evaluate import (
    AccuracyReport,
    ConfusionMatrix,
    accuracy_metrics,
    confusion_matrix,
    format_report,
    stratified_sample,
)

__version__ = "0.1.0"
