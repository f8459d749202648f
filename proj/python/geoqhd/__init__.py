"""Sequential hub discovery in correlation streams.

Thin wrapper over the C++ core: densities of the correlation summary
statistics, the GLR detector, composite distances with k-medoids, and the
detection and benchmark pipelines.
"""

from ._core import (
    ConfigError,
    DataError,
    Detector,
    DomainError,
    Error,
    IoError,
    StateError,
    benchmark,
    correlation_statistics,
    detect,
    effective_config,
    generate_block,
    global_cdf,
    global_density,
    glr_statistic,
    kmedoids,
    local_cdf,
    local_density,
    mle_J,
    p0,
    rho_for_j_magnitude,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Detector",
    "DomainError",
    "Error",
    "IoError",
    "StateError",
    "benchmark",
    "correlation_statistics",
    "detect",
    "effective_config",
    "generate_block",
    "global_cdf",
    "global_density",
    "glr_statistic",
    "kmedoids",
    "local_cdf",
    "local_density",
    "mle_J",
    "p0",
    "rho_for_j_magnitude",
]
