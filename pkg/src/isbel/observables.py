"""Transport and emission scalars of a steady state.

This is the one layer where extensive quantities acquire their physical
units: currents and photon rates are per cm^2 with the twofold spin
degeneracy applied here and nowhere else.  The population difference D
feeding the coupling formulas stays per spin, matching the convention of
the steady-state algebra and of the Rabi calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .constants import C_LIGHT, COULOMB
from .contacts import RateTable
from .core import Grids, PhysicalParams
from .steady import SteadyState

SPIN = 2.0


@dataclass(frozen=True)
class ObservableSet:
    """Scalars reported per bias point.

    I: electron current (ps^-1 cm^-2); P: photon output (ps^-1 cm^-2);
    eta = P/I; D: per-spin population difference density (cm^-2);
    Omega_R = chi(q_res) sqrt(2 D) (ps^-1); splitting = 2 Omega_R (meV via
    splitting_meV); D0: strong-coupling threshold density (cm^-2);
    eta_freespace: free-space benchmark efficiency.
    """

    V: float
    I: float
    P: float
    eta: float
    D: float
    Omega_R: float
    splitting: float
    D0: float
    eta_freespace: float

    def as_dict(self):
        return asdict(self)


def electronic_current(state: SteadyState, rates: RateTable, grids: Grids):
    """Current through the device from both subband balances (ps^-1 cm^-2).

    The two returns are the extractor-side (lower subband) and
    injector-side (upper subband) expressions; they agree at a converged
    steady state with a self-consistent Fermi level.
    """
    i1 = SPIN * float(np.dot(grids.w_k,
                             rates.gout1 * state.n1 - rates.gin1 * (1.0 - state.n1)))
    i2 = SPIN * float(np.dot(grids.w_k,
                             rates.gin2 * (1.0 - state.n2) - rates.gout2 * state.n2))
    return i1, i2


def photon_rate(state: SteadyState, grids: Grids, params: PhysicalParams) -> float:
    """Photon output per unit area, 2 gamma times the mode-summed occupation."""
    return 2.0 * params.gamma_rate * grids.photon_total(state.na)


def quantum_efficiency(state: SteadyState, rates: RateTable, grids: Grids,
                       params: PhysicalParams) -> float:
    """Photons out per electron through, P/I; NaN when the current is not
    positive (the ratio is then meaningless)."""
    i1, _ = electronic_current(state, rates, grids)
    if i1 <= 0.0:
        return math.nan
    return photon_rate(state, grids, params) / i1


def population_difference(state: SteadyState, grids: Grids) -> float:
    """Per-spin population difference density D (cm^-2)."""
    return float(np.dot(grids.w_k, state.n1 - state.n2))


def rabi_splitting(state: SteadyState, grids: Grids, params: PhysicalParams):
    """(Omega_R, splitting): collective coupling at the resonant mode.

    Omega_R = chi(q_res) sqrt(2 D); the splitting 2 Omega_R is the
    large-coupling limit of the polariton doublet separation (the exact
    root-based value lives with the spectra).
    """
    d = max(population_difference(state, grids), 0.0)
    omega_r = params.coupling_chi(params.q_res) * math.sqrt(2.0 * d)
    return omega_r, 2.0 * omega_r


def threshold_D0(params: PhysicalParams, q=None) -> float:
    """Population difference (cm^-2) below which no polariton splitting can
    appear at resonance: (Gamma_S - Gamma_Z)^2 / (8 chi^2)."""
    chi = params.coupling_chi(params.q_res if q is None else q)
    return (params.gs_rate - params.gz_rate) ** 2 / (8.0 * chi**2)


def free_space_prefactor(params: PhysicalParams) -> float:
    """Spontaneous-emission rate scale (ps^-1) of the bare transition.

    The dipole is closed through a unit oscillator strength,
    d12^2 = hbar e^2 / (2 m* omega12), so the rate scales as omega12^2.
    """
    return (4.0 / 3.0) * COULOMB * params.omega12**2 * math.sqrt(params.eps_r) \
        / (params.mass * C_LIGHT**3)


def free_space_rate(state: SteadyState, rates: RateTable, grids: Grids,
                    params: PhysicalParams):
    """(P_fs, eta_fs): emission without the cavity, for the same populations."""
    pairs = SPIN * float(np.dot(grids.w_k, state.n2 * (1.0 - state.n1)))
    p_fs = free_space_prefactor(params) * pairs
    i1, _ = electronic_current(state, rates, grids)
    eta_fs = p_fs / i1 if i1 > 0.0 else math.nan
    return p_fs, eta_fs


def collect_observables(state: SteadyState, rates: RateTable, grids: Grids,
                        params: PhysicalParams) -> ObservableSet:
    i1, _ = electronic_current(state, rates, grids)
    p = photon_rate(state, grids, params)
    omega_r, splitting = rabi_splitting(state, grids, params)
    _, eta_fs = free_space_rate(state, rates, grids, params)
    return ObservableSet(
        V=state.V, I=i1, P=p,
        eta=p / i1 if i1 > 0.0 else math.nan,
        D=population_difference(state, grids),
        Omega_R=omega_r, splitting=splitting,
        D0=threshold_D0(params), eta_freespace=eta_fs,
    )
