"""Conditional preparation of sub-Poissonian light from simulated twin beams."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DomainError,
    InsufficientDataError,
    InsufficientSelectionError,
    InvalidPartitionError,
    ShapeError,
    TraceParseError,
    TwinBeamError,
    UnderflowError,
    UnphysicalModelError,
)
from .oracle import (  # noqa: E402
    Prediction,
    conditional_variance,
    narrow_limit_db,
    predict,
    predicted_selected_variance,
    predicted_success_rate,
    truncated_gaussian_variance,
)
from .selection import ConditionalResult, SelectionBand, multi_select, select, sweep_bandwidth  # noqa: E402
from .source import (  # noqa: E402
    CovarianceMatrix,
    TwinBeamModel,
    add_dark_noise,
    apply_loss,
    build_covariance,
    reference_model,
    quantize,
    sample_trace,
    shot_calibration_trace,
)
from .stats import NoiseLevel, Trace, TraceMeta, fano, from_db, gemellity, histogram, to_db, variance  # noqa: E402
