"""Joint skill demand/supply trend forecasting with cross-view hierarchical graphs."""

from .config import ModelConfig

__version__ = "0.1.0"

__all__ = ["ModelConfig", "__version__"]
