"""wavebench: physically modeled refractive video distortion, restoration
baselines, and a benchmark toolchain around them.

The simulator builds water-surface height fields (spectral ocean, sine,
shallow-water PDE, ripples), refracts view rays through them to get
image-space displacement fields calibrated to named severity levels, and
warps ground-truth backgrounds into distorted sequences.  Restoration
baselines (first frame, pixel average, grid registration) follow the
scikit-learn estimator protocol, and PSNR/SSIM reports aggregate into
benchmark tables via the command-line pipeline in `wavebench.cli`.
"""

__version__ = "0.1.0"

from .calibrate import (
    CalibrationEntry,
    calibrate_amplitude,
    calibrate_levels,
    calibrate_speed,
    displacement_rate,
    pooled_std,
)
from .errors import (
    AggregationError,
    CalibrationError,
    ConfigError,
    DataIOError,
    FormatError,
    InputError,
    IntegrityError,
    NumericalError,
    OptimizationError,
    ParameterError,
    ShapeError,
    StabilityError,
    StepSizeError,
    WavebenchError,
)
from .metrics import (
    AggregateCell,
    MetricRow,
    aggregate_rows,
    evaluate_method,
    luma,
    psnr,
    render_table_text,
    ssim,
)
from .refraction import (
    DisplacementField,
    RefractionParams,
    blend_normals,
    displacement_field,
    refract,
)
from .render import (
    Background,
    SEVERITY_TARGETS,
    SeverityLevel,
    VideoSequence,
    ingest_background,
    read_sequence,
    render_frame,
    render_sequence,
    severity_level,
    synthetic_background,
    write_sequence,
)
from .restore import (
    FirstFrame,
    GridRegistration,
    PixelAverage,
    RESTORER_NAMES,
    make_restorer,
    registration_objective,
)
from .waves import (
    Grid,
    HeightField,
    OceanParams,
    RippleParams,
    ShallowParams,
    ShallowState,
    SineParams,
    SpectralField,
    WAVE_TYPES,
    make_profile,
    make_profiles,
    normals_from_height,
    ocean_height,
    ocean_spectral_init,
    phillips_spectrum,
    ripple_height,
    shallow_step,
    sine_height,
)

__all__ = [name for name in dir() if not name.startswith("_")]
