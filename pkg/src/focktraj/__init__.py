"""Quantum trajectories for finite-dimensional systems driven by Fock-state wave packets."""

from .errors import (InfeasibleRecordError, NumericalError, RecordError, ResolutionError,
                     ValidationError)
from .system_model import (BathChannel, FieldState, SystemOperators, WavePacket,
                           captured_photon_fraction, coherent_coefficients,
                           make_gaussian_wavepacket, residual_fraction, two_level_atom)
from .hierarchy import HierarchyState, init_hierarchy, reduced_state
from .integrator import (Detection, Engine, Scenario, TimeGrid, run_ensemble, run_trajectory,
                         solve_master_equation)
from .records import TrajectoryRecord

__version__ = "0.1.0"
