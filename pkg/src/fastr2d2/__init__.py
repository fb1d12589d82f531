"""Chart-based tree encoder with parser-guided pruning, trained jointly with a top-down split parser."""
from fastr2d2 import numerics  # noqa: F401  (sets float64 default)

__version__ = "0.1.0"
