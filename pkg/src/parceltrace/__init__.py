"""parceltrace: field-boundary delineation toolkit.

Builds three-class semantic masks from instance annotations, pre-processes
imagery, consumes (or simulates) segmentation predictions, thins and
vectorizes detected boundaries, and scores them with buffered
precision/recall/F-score.
"""

__version__ = "0.1.0"

from .errors import CbtError, CodecError, ParcelTraceError, ValidationError  # noqa: F401
from .filters import FilterKind, apply_filter  # noqa: F401
from .losses import LossConfig, LossKind, OneHotTarget, finite_diff_check, loss_eval, loss_grad, softmax  # noqa: F401
from .maskgen import MaskConfig, build_semantic_mask, erode_fields  # noqa: F401
from .metrics import EvalConfig, EvalResult, buffer_reference, evaluate, select_buffers  # noqa: F401
from .raster import (  # noqa: F401
    CLASS_BACKGROUND,
    CLASS_BOUNDARY,
    CLASS_FIELD,
    BinaryRaster,
    ClassMask,
    GeoRef,
    GrayRaster,
    LabelRaster,
    ProbTensor,
    TileGrid,
    stitch,
    tile,
)
from .segment import argmax_classes, baseline_segment, ingest_predictions, synth_scene  # noqa: F401
from .shapefile import read_shapefile, write_geojson, write_shapefile  # noqa: F401
from .skeletonize import (  # noqa: F401
    PolylineSet,
    apply_georef,
    boundary_mask,
    thin,
    trace_polylines,
    write_boundary_png,
)
