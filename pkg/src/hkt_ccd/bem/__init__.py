"""Quasi-static blade element momentum model of the rotor."""

from ._backend import BACKEND
from .solver import (
    BETZ_LIMIT,
    DEFAULT_V_REF,
    BatchLoads,
    BemError,
    RotorLoads,
    SectionLoads,
    cp_curve,
    cp_of_lambda,
    max_cp,
    rotor_batch,
    rotor_torque,
    section_residual,
    solve_section,
)

__all__ = [
    "BACKEND", "BETZ_LIMIT", "DEFAULT_V_REF", "BatchLoads", "BemError", "RotorLoads", "SectionLoads",
    "cp_curve", "cp_of_lambda", "max_cp", "rotor_batch", "rotor_torque",
    "section_residual", "solve_section",
]
