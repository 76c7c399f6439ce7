"""Factorized time evolution of a Landau electron in a slowly rotating magnetic field.

The propagator of the lab-frame Hamiltonian is split into a rotation, a
gauge transformation, cyclotron and axial phases, a magnetic translation and
slowly varying corrections, each checked against brute-force oracles on a
truncated Fock space.
"""
from .config import ConfigError, ScenarioConfig, load_config
from .geometry import (
    GreatCircleArc,
    PolarTriangle,
    PrecessingCone,
    SampledWaypoints,
    displacement_path,
    solid_angle,
    transport_frame,
)
from .hilbert import BasisConfig, PhysicalParams, build_operator_set
from .propagators import assemble_evolution, factorize

__version__ = "0.1.0"

__all__ = [
    "BasisConfig",
    "ConfigError",
    "GreatCircleArc",
    "PhysicalParams",
    "PolarTriangle",
    "PrecessingCone",
    "SampledWaypoints",
    "ScenarioConfig",
    "assemble_evolution",
    "build_operator_set",
    "displacement_path",
    "factorize",
    "load_config",
    "solid_angle",
    "transport_frame",
    "__version__",
]
