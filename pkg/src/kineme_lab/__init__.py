"""kineme-lab: explainable multimodal trait prediction from behavioral windows.

Head motion is encoded as a learned vocabulary of kineme templates, facial
activity as dominant-AU bit vectors, and speech as averaged low-level
descriptors; recurrent predictors over the aligned window sequences support
feature, decision, and additive-attention fusion, with evaluation at chunk and
video level and behavioral explanation reports.
"""

from .errors import (
    ConfigurationError,
    InsufficientDataError,
    KinemeLabError,
    ParseError,
    SchemaError,
    ShapeError,
    TooShortError,
    TrainingDivergedError,
    UnsupportedFormatError,
    UnusableStreamError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "InsufficientDataError",
    "KinemeLabError",
    "ParseError",
    "SchemaError",
    "ShapeError",
    "TooShortError",
    "TrainingDivergedError",
    "UnsupportedFormatError",
    "UnusableStreamError",
    "__version__",
]
