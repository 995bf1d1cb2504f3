"""Numerical laboratory for strongly disordered, periodically driven lattices.

Submodules
----------
model        lattices, disorder, driving signals, instantaneous Hamiltonian
floquet      quasi-energy operator on lattice x harmonic blocks
propagate    time evolution, monodromy, Floquet spectra, dynamical moments
resolvent    restricted resolvents, resonances, good boxes and columns
probability  Monte Carlo comparisons against the probabilistic bounds
adiabatic    two-level avoided crossings and (g, nu) phase scans
cli          experiment runner with manifests and replay
"""

__version__ = "0.1.0"

from .errors import (AccuracyError, ConfigurationError, DomainError,
                     ResourceError, SingularityError)
from .model import (DensitySpec, DisorderRealization, LatticeSpec, ModelParams,
                    SampledDriving, SmoothDriving, SquareWaveDriving,
                    assemble_hamiltonian, driving_l2_norms, sample_potential)
