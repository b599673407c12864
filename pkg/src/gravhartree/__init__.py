"""Multisoliton dynamics for the 3D gravitational Hartree equation."""

__version__ = "0.1.0"

from .groundstate import (GroundState, RadialGrid, evaluate_Q_3d,
                          newtonian_potential_radial, solve_ground_state)

__all__ = [
    "GroundState",
    "RadialGrid",
    "solve_ground_state",
    "newtonian_potential_radial",
    "evaluate_Q_3d",
]
