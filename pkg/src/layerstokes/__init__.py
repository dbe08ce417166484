"""Resolvent solver for the Stokes system in a periodic layer."""

from .symbols import LayerConfig, ModeSymbols, OffSectorError, ResolventParameter
from .fields import LayerField, LayerGrid

__version__ = "0.1.0"

__all__ = [
    "LayerConfig",
    "LayerField",
    "LayerGrid",
    "ModeSymbols",
    "OffSectorError",
    "ResolventParameter",
]
