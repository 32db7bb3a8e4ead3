"""Radar BEV object detection with a depthwise-separable backbone.

Core package: dense tensor kernels, pillar encoder, backbone graph builder
and executor, detection heads, rotated-box NMS, cost analyzer, detection
metrics and a synthetic scene generator. A FastAPI service wraps the
package; the CLI is a thin client of that service.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, DsfecError, EvalInputError, WeightsError

__all__ = [
    "ConfigError",
    "DataError",
    "DsfecError",
    "EvalInputError",
    "WeightsError",
    "__version__",
]
