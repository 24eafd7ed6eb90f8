"""Injector and extractor reservoirs: tunneling rates in and out of the well.

The default backend models each contact as a Gaussian-broadened miniband of
width sigma centered at an offset E0 that shifts rigidly with the applied
bias (down for the left contact, up for the right).  The out-tunneling rate
at electron energy hw_j(k) is the amplitude Gamma times the miniband weight
at that energy times the hole occupancy of the contact at its bias-shifted
chemical potential; in-rates follow from detailed balance, which holds to
machine precision for every energy and bias.

An alternative elastic backend sums discrete miniband levels with Lorentzian
energy broadening and the same detailed-balance structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import HBAR, KB
from .core import PhysicalParams, Grids, _logistic


@dataclass(frozen=True)
class ReservoirParams:
    """One contact: side ('left'|'right'), miniband offset E0 (meV), chemical
    potential mu (meV), tunneling amplitude Gamma_amp (ps^-1), Gaussian
    width sigma (meV)."""

    side: str
    E0: float
    mu: float
    Gamma_amp: float
    sigma: float

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        if not self.Gamma_amp > 0.0:
            raise ValueError("Gamma_amp must be positive")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")

    def bias_shift(self, V: float) -> float:
        """Rigid energy shift of this contact under bias (meV); the two
        reservoirs move symmetrically, left down and right up."""
        return -0.5 * V if self.side == "left" else +0.5 * V


def default_contacts(params: PhysicalParams, one_over_gamma_ps=0.4):
    """Standard symmetric contact pair tied to the transition energy."""
    kw = dict(E0=0.5 * params.E12, mu=params.E12 / 3.0,
              Gamma_amp=1.0 / one_over_gamma_ps, sigma=0.1 * params.E12)
    return ReservoirParams(side="left", **kw), ReservoirParams(side="right", **kw)


@dataclass(frozen=True)
class BiasPoint:
    """Applied voltage as the energy drop qV in meV (sign allowed)."""

    V: float = 0.0


def _gauss_weight(res: ReservoirParams, hw, shift):
    # miniband spectral weight at the electron energy; the center rides the bias
    return np.exp(-((res.E0 + shift - hw) ** 2) / (2.0 * res.sigma**2))


def out_rate(res: ReservoirParams, j, eps_kin, bias: BiasPoint, params: PhysicalParams):
    """Out-tunneling rate (ps^-1) from subband j at eps_kin into the contact.

    Gamma_amp * exp(-(E0 +- V/2 - hw_j)^2 / (2 sigma^2)) * (1 - f(hw_j; mu +- V/2)),
    upper signs for the right contact, lower for the left.
    """
    shift = res.bias_shift(bias.V)
    hw = params.subband_energy(eps_kin, j)
    mu_eff = res.mu + shift
    hole = _logistic(-(np.asarray(hw) - mu_eff) * params.beta)   # 1 - f, overflow-safe
    r = res.Gamma_amp * _gauss_weight(res, hw, shift) * hole
    r = np.asarray(r)
    return r if r.ndim else float(r)


def in_rate(res: ReservoirParams, j, eps_kin, bias: BiasPoint, params: PhysicalParams):
    """In-tunneling rate (ps^-1); equals out_rate * exp(beta (mu_eff - hw_j))."""
    shift = res.bias_shift(bias.V)
    hw = params.subband_energy(eps_kin, j)
    mu_eff = res.mu + shift
    occ = _logistic((np.asarray(hw) - mu_eff) * params.beta)     # f(hw; mu_eff)
    r = res.Gamma_amp * _gauss_weight(res, hw, shift) * occ
    r = np.asarray(r)
    return r if r.ndim else float(r)


@dataclass(frozen=True)
class RateTable:
    """Tunneling rates tabulated on the kinetic-energy grid (ps^-1)."""

    gin1: np.ndarray
    gout1: np.ndarray
    gin2: np.ndarray
    gout2: np.ndarray

    def __add__(self, other: "RateTable") -> "RateTable":
        return RateTable(self.gin1 + other.gin1, self.gout1 + other.gout1,
                         self.gin2 + other.gin2, self.gout2 + other.gout2)

    def scaled(self, factor: float) -> "RateTable":
        return RateTable(self.gin1 * factor, self.gout1 * factor,
                         self.gin2 * factor, self.gout2 * factor)

    @property
    def max_rate(self) -> float:
        return float(max(np.max(self.gin1 + self.gout1), np.max(self.gin2 + self.gout2)))


def contact_rate_table(res: ReservoirParams, bias: BiasPoint, grids: Grids,
                       params: PhysicalParams) -> RateTable:
    """Rates of a single contact over the energy grid."""
    eps = grids.eps_kin
    return RateTable(
        gin1=in_rate(res, 1, eps, bias, params),
        gout1=out_rate(res, 1, eps, bias, params),
        gin2=in_rate(res, 2, eps, bias, params),
        gout2=out_rate(res, 2, eps, bias, params),
    )


def total_rates(left: ReservoirParams, right: ReservoirParams, bias: BiasPoint,
                grids: Grids, params: PhysicalParams) -> RateTable:
    """Summed in/out rates of both contacts on the energy grid."""
    return contact_rate_table(left, bias, grids, params) + \
        contact_rate_table(right, bias, grids, params)


def out_rate_energy_derivative(res, j, eps_kin, bias, params):
    """Analytic d(out_rate)/d(eps_kin); reference for smoothness checks."""
    shift = res.bias_shift(bias.V)
    hw = params.subband_energy(eps_kin, j)
    mu_eff = res.mu + shift
    r = out_rate(res, j, eps_kin, bias, params)
    occ = _logistic((np.asarray(hw) - mu_eff) * params.beta)
    return r * ((res.E0 + shift - hw) / res.sigma**2 + params.beta * occ)


@dataclass(frozen=True)
class MinibandSpec:
    """Elastic-tunneling backend: discrete miniband levels with Lorentzian
    broadening.

    levels is a sequence of (E_level, V2, eta): level energy (meV, measured
    from the lower subband bottom; the in-plane dispersion follows the well's
    effective mass so only the offset matters), squared tunneling matrix
    element V2 (meV^2) and broadening eta (meV).  mu is the reservoir
    chemical potential (meV).
    """

    levels: tuple
    mu: float = 0.0

    def __post_init__(self):
        for lev in self.levels:
            if len(lev) != 3:
                raise ValueError("each level is (E_level, V2, eta)")
            if not lev[2] > 0.0:
                raise ValueError("broadening eta must be positive")


def elastic_rate(spec: MinibandSpec, j, eps_kin, direction, params: PhysicalParams):
    """Elastic tunneling rate (ps^-1) through Lorentzian-broadened levels.

    direction is 'in' or 'out'.  The energy delta is a normalized Lorentzian
    of width eta evaluated at the level/subband offset; occupation factors
    are taken at the well energy hw_j so that in/out detailed balance is
    exact for any level list.
    """
    if direction not in ("in", "out"):
        raise ValueError("direction must be 'in' or 'out'")
    hw = np.asarray(params.subband_energy(eps_kin, j), dtype=float)
    x = (hw - spec.mu) * params.beta
    factor = _logistic(x) if direction == "in" else _logistic(-x)
    total = np.zeros_like(hw)
    offset = 0.0 if j == 1 else params.E12
    for e_level, v2, eta in spec.levels:
        mismatch = e_level - offset   # k-independent with equal in-plane masses
        lorentz = eta / math.pi / (mismatch**2 + eta**2)
        total = total + (2.0 * math.pi / HBAR) * v2 * lorentz * factor
    return total if total.ndim else float(total)
