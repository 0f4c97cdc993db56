"""
stimpute - Spatiotemporal Traffic Imputation

Gated temporal convolutions plus node-embedding attention for filling missing sensor readings
"""

__version__ = "0.1.0"
__author__ = "stimpute developers"
__email__ = "stimpute@users.noreply.github.com"

from .cli import main

__all__ = ["main", "__version__"]
