"""Local greedy coloring of regular graphs with a subcriticality certifier."""

__version__ = "0.1.0"

from .dynamics import (
    EulerStep,
    PaletteConfig,
    TuningParams,
    TypeDistribution,
    VertexType,
    branch_type_delta,
    cascade_growth,
    cascade_type_delta,
    default_tuning,
    drift,
    euler_step,
    expected_cascade_size,
    remainder_growth,
    size_biased_law,
    type_space,
)
from .certify import (
    DEFAULT_THRESHOLD,
    Certificate,
    IntegrationControl,
    StopTimeResult,
    Trajectory,
    certificate_roundtrip,
    certificate_to_json,
    certify,
    euler_ode_compare,
    find_stop_time,
    integrate,
    load_certificate,
    save_certificate,
    verify_certificate,
)
from .errors import (
    CertificateError,
    CertificateParseError,
    CertificateVerificationError,
    ComparisonFailureError,
    ConfigurationError,
    DegenerateDistributionError,
    GenerationError,
    InsufficientDataError,
    InternalConsistencyError,
    SupercriticalError,
    TreecolorError,
)

__all__ = [
    "EulerStep",
    "PaletteConfig",
    "TuningParams",
    "TypeDistribution",
    "VertexType",
    "branch_type_delta",
    "cascade_growth",
    "cascade_type_delta",
    "default_tuning",
    "drift",
    "euler_step",
    "expected_cascade_size",
    "remainder_growth",
    "size_biased_law",
    "type_space",
    "DEFAULT_THRESHOLD",
    "Certificate",
    "IntegrationControl",
    "StopTimeResult",
    "Trajectory",
    "certificate_roundtrip",
    "certificate_to_json",
    "certify",
    "euler_ode_compare",
    "find_stop_time",
    "integrate",
    "load_certificate",
    "save_certificate",
    "verify_certificate",
    "CertificateError",
    "CertificateParseError",
    "CertificateVerificationError",
    "ComparisonFailureError",
    "ConfigurationError",
    "DegenerateDistributionError",
    "GenerationError",
    "InsufficientDataError",
    "InternalConsistencyError",
    "SupercriticalError",
    "TreecolorError",
    "__version__",
]
