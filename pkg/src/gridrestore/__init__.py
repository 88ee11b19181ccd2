"""Restoration planning for radial distribution grids after line faults."""
from .grid import (
    Branch,
    Bus,
    Configuration,
    FaultSet,
    Generator,
    Grid,
    GridError,
    GridParseError,
    apply_fault,
    is_radial,
    load_grid,
    parse_faults,
    parse_grid,
    serialize_grid,
    validate,
)
from .runner import RestorationPlan, emit_report, restore, run_scenario, run_suite

__version__ = "0.1.0"
