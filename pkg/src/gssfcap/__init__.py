"""Caption generators built on Gaussian-smoothed semantic features.

Three recurrent cells share one training/decoding/evaluation stack:

* ``lstm``  - plain LSTM initialised from visual features
* ``gst``   - hidden state revised each step by a semantic fusion
* ``gsscn`` - per-gate factored input and hidden contexts
"""

from gssfcap.errors import (
    ConfigError,
    ContractError,
    DomainError,
    GssfError,
    NumericError,
    ShapeError,
    TranslationError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DomainError",
    "GssfError",
    "NumericError",
    "ShapeError",
    "TranslationError",
    "ValidationError",
]
