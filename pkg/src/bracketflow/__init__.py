"""Numerical experiments with double bracket flows on lattices."""

__version__ = "0.1.0"

from .integrate import IntegratorConfig, IntegrationError, InvariantBreach, StepLimitError
from .lattice import CouplingMatrix, Lattice, build_chain, locality_lower, locality_profile, locality_upper
from .pauli import PauliPolynomial, charge_decompose, charge_of_string, eigenoperator_check, z_field

__all__ = [
    "CouplingMatrix",
    "IntegrationError",
    "IntegratorConfig",
    "InvariantBreach",
    "Lattice",
    "PauliPolynomial",
    "StepLimitError",
    "build_chain",
    "charge_decompose",
    "charge_of_string",
    "eigenoperator_check",
    "locality_lower",
    "locality_profile",
    "locality_upper",
    "z_field",
]
