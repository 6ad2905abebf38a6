"""Mimetic staggered-grid Maxwell simulator with impedance boundary damping."""

from .grid import (
    GAMMA0,
    GAMMA1,
    DisconnectedDomainError,
    DofMap,
    GridError,
    GridSpec,
    PartitionError,
    PartitionRule,
    build_grid,
    classify_boundary,
    load_mask,
)

__version__ = "0.1.0"
