"""Simulation and homogenization harness for one-dimensional bubbly flows.

Modules
-------
core
    Parameters, constitutive laws, state containers and scaling checks.
micro
    Semi-implicit Lagrangian integrator of the N-bubble system.
extend
    Extended velocity, stress and density fields and their transport.
seed
    Quantile seeding of bubbles from macroscopic initial data.
macro
    Finite-volume solver of the averaged two-phase model.
homog
    Window averages, empirical measures and convergence studies.
"""
from .core import (
    Bubble,
    CollisionError,
    FluidSegment,
    InvalidStateError,
    MicroState,
    PhysParams,
    ScalingBounds,
    SolverError,
)
from .macro import MacroState
from .micro import MicroStepConfig
from .seed import MacroInitData

__version__ = "0.1.0"

__all__ = [
    "Bubble",
    "CollisionError",
    "FluidSegment",
    "InvalidStateError",
    "MacroInitData",
    "MacroState",
    "MicroState",
    "MicroStepConfig",
    "PhysParams",
    "ScalingBounds",
    "SolverError",
]
