"""
A spectral solver and verification harness for tamed Navier-Stokes flow.
"""

from tamed._attractor import AttractorSample, EnsembleSpec
from tamed._integrators import SolverConfig, Trajectory, run
from tamed._report import CheckRecord, DiagnosticsReport, Status
from tamed._rhs import TamingParams, tamed_rhs
from tamed._spectral import ManufacturedBasis, SpectralField, TorusBasis

__all__ = [
    "AttractorSample",
    "CheckRecord",
    "DiagnosticsReport",
    "EnsembleSpec",
    "ManufacturedBasis",
    "SolverConfig",
    "SpectralField",
    "Status",
    "TamingParams",
    "TorusBasis",
    "Trajectory",
    "run",
    "tamed_rhs",
]
