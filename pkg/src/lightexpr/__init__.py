"""Joint expression and lighting translation for face images."""

__version__ = "0.1.0"

from .core import AttributeSpec, DatasetManifest, ManifestRecord, RatingRecord  # noqa: F401
from .errors import LightExprError  # noqa: F401

__all__ = ["AttributeSpec", "DatasetManifest", "LightExprError", "ManifestRecord", "RatingRecord", "__version__"]
