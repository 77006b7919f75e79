"""FBMC-OQAM burst synthesis with virtual-symbol tail shortening."""

from .errors import ConfigError, DesignMismatchError, NumericalError
from .prototype import PrototypeFilter, orthogonality_report, phydyas_filter, rectangular_filter
from .tailshort import (
    CancellationDesign,
    VirtualSymbolBlock,
    apply_design,
    build_design,
    hard_truncate,
    load_design,
    save_design,
    shorten,
    shorten_many,
    windowed_truncate,
)
from .waveform import BurstConfig, ComplexSignal, demodulate, synthesize

__all__ = [
    "BurstConfig",
    "CancellationDesign",
    "ComplexSignal",
    "ConfigError",
    "DesignMismatchError",
    "NumericalError",
    "PrototypeFilter",
    "VirtualSymbolBlock",
    "apply_design",
    "build_design",
    "demodulate",
    "hard_truncate",
    "load_design",
    "orthogonality_report",
    "phydyas_filter",
    "rectangular_filter",
    "save_design",
    "shorten",
    "shorten_many",
    "synthesize",
    "windowed_truncate",
]
