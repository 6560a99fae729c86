"""evlume: event-camera low-light toolkit.

Simulation of photoreceptor-bandwidth trailing artifacts, trail
suppression, voxel-grid representations, and quality metrics, with
deterministic binary file formats and a command-line front end.
"""

from .events import (
    DensityMap,
    Event,
    EventStream,
    SensorGeometry,
    Violation,
    density_map,
    group_by_pixel,
    slice_time,
    validate,
)
from .ets import (
    EtsConfig,
    TrailChain,
    TrailSummary,
    detect_trails,
    suppress,
    suppress_with_summary,
    trail_statistics,
)
from .evio import (
    FormatError,
    read_config,
    read_events,
    read_pgm,
    read_voxel,
    read_weights,
    write_config,
    write_events,
    write_pgm,
    write_voxel,
    write_weights,
)
from .metrics import GrayImage, interval_histogram, loe, mse, ssim
from .sensor import (
    IlluminanceField,
    LightSource,
    PhotoreceptorParams,
    PixelState,
    SceneSpec,
    analytic_trail_times,
    cutoff_frequency,
    generate_events,
    illuminance_field,
    lowpass_update,
    photocurrent,
    scene_illuminance,
    tau_seconds,
)
from .voxel import (
    VoxelGrid,
    WeightTable,
    bin_axis_variance,
    ets_voxel_labels,
    voxelize_bilinear,
    voxelize_weighted,
)

__version__ = "0.1.0"

__all__ = [
    "DensityMap",
    "Event",
    "EventStream",
    "EtsConfig",
    "FormatError",
    "GrayImage",
    "IlluminanceField",
    "LightSource",
    "PhotoreceptorParams",
    "PixelState",
    "SceneSpec",
    "SensorGeometry",
    "TrailChain",
    "TrailSummary",
    "Violation",
    "VoxelGrid",
    "WeightTable",
    "analytic_trail_times",
    "bin_axis_variance",
    "cutoff_frequency",
    "density_map",
    "detect_trails",
    "ets_voxel_labels",
    "generate_events",
    "group_by_pixel",
    "illuminance_field",
    "interval_histogram",
    "loe",
    "lowpass_update",
    "mse",
    "photocurrent",
    "read_config",
    "read_events",
    "read_pgm",
    "read_voxel",
    "read_weights",
    "scene_illuminance",
    "slice_time",
    "ssim",
    "suppress",
    "suppress_with_summary",
    "tau_seconds",
    "trail_statistics",
    "validate",
    "voxelize_bilinear",
    "voxelize_weighted",
    "write_config",
    "write_events",
    "write_pgm",
    "write_voxel",
    "write_weights",
    "__version__",
]
