"""Electroluminescence of a quantum-well intersubband transition in a planar
microcavity: steady-state solver, time-domain oracle, transport and emission
observables, and analytic spectra."""

__version__ = "0.1.0"

from .constants import HBAR, KB, C_LIGHT
from .core import (Grids, Occupations, PhysicalParams, build_grids,
                   density_from_fermi_level, equilibrium_occupations,
                   fermi_dirac, solve_fermi_level, FermiLevelError)
from .contacts import (BiasPoint, MinibandSpec, RateTable, ReservoirParams,
                       contact_rate_table, default_contacts, elastic_rate,
                       in_rate, out_rate, total_rates)
from .steady import (AuxQuantities, NonConvergenceError, SolverConfig,
                     SteadyState, SweepResult, aux_quantities, newton_solve,
                     residual_components, thermal_state, voltage_sweep)
from .dynamics import (DynamicState, IntegrationError, IntegratorConfig,
                       integrate, population_flow_residual, relax_to_steady,
                       rhs, stationary_y)
from .observables import (ObservableSet, collect_observables,
                          electronic_current, free_space_rate, photon_rate,
                          population_difference, quantum_efficiency,
                          rabi_splitting, threshold_D0)
from .spectra import (SpectrumResult, anticrossing_map, default_omega_grid,
                      find_peaks, mode_spectrum, peak_separation,
                      polariton_roots, spectrum_S, spectrum_Z)
from .config import ConfigError, RunConfig, load_config
