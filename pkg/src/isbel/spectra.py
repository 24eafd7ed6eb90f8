"""Electroluminescence spectra and polariton resonances.

The two-time photon correlator obeys, after the same truncation as the
populations dynamics, a closed 2x2 linear pair in its unilateral Fourier
transforms (S for photon-photon, Z for photon-polarization).  Solving the
pair with the stationary initial conditions S(0) = na and
Z(0) = (gamma na / (2 chi)) ((omega_c - omega12)/Gamma_Y - i) gives the
closed forms implemented here; the emitted intensity is Re S (arbitrary
units, positive Lorentzian of width Gamma_S in the decoupled limit).  The
spectrum is resonant at the two complex roots of

    (w - omega12 + i Gamma_Z)(w - omega_c + i Gamma_S) - 2 chi^2 D = 0,

with D the per-spin population difference density.  The spectral shape
depends on the drive only through (na, D): states with equal populations
emit identical spectra regardless of how the contacts produced them.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .core import Grids, PhysicalParams
from .steady import SteadyState


@dataclass(frozen=True)
class SpectrumResult:
    """Spectrum of one cavity mode: omega grid (ps^-1), complex S, the
    emitted intensity Re S (arb. units, negative lobes emitted as-is), and
    the two polariton roots ordered by real part."""

    omega: np.ndarray
    S: np.ndarray
    intensity: np.ndarray
    roots: tuple
    q: float


def default_omega_grid(params: PhysicalParams, points=2001, band=(0.5, 1.5)):
    """Frequency grid resolving the damping widths (ps^-1)."""
    return np.linspace(band[0] * params.omega12, band[1] * params.omega12, points)


def spectrum_kernel(omega, omega_c, chi, na, d, params: PhysicalParams):
    """Complex S(omega) for one mode with occupation na and population
    difference d (per spin, cm^-2)."""
    omega = np.asarray(omega, dtype=float)
    w12 = params.omega12
    gz, gs, gy, gam = params.gz_rate, params.gs_rate, params.gy_rate, params.gamma_rate
    pol = omega - w12 + 1j * gz
    cav = omega - omega_c + 1j * gs
    denom = pol * cav - 2.0 * chi**2 * d
    numer = 1j * na * (pol - gam * ((omega_c - w12) / gy - 1j))
    return numer / denom


def spectrum_S(omega, iq, state: SteadyState, grids: Grids, params: PhysicalParams):
    """Photon-photon correlator transform of cavity mode iq."""
    d = float(np.dot(grids.w_k, state.n1 - state.n2))
    return spectrum_kernel(omega, grids.omega_c[iq], grids.chi[iq],
                           state.na[iq], d, params)


def z_initial(omega_c, chi, na, params: PhysicalParams) -> complex:
    """Stationary photon-polarization sum feeding the two-time problem.

    Its imaginary part, -gamma na / (2 chi), is fixed by the stationarity
    of the photon occupation; the real part follows from the stationary
    polarization balance.
    """
    if chi == 0.0:
        raise ValueError("photon-polarization correlator undefined at chi = 0")
    return (params.gamma_rate * na / (2.0 * chi)) \
        * ((omega_c - params.omega12) / params.gy_rate - 1j)


def spectrum_Z(omega, iq, state: SteadyState, grids: Grids, params: PhysicalParams):
    """Photon-polarization correlator transform of cavity mode iq."""
    chi = grids.chi[iq]
    if chi == 0.0:
        raise ValueError("photon-polarization correlator undefined at chi = 0")
    d = float(np.dot(grids.w_k, state.n1 - state.n2))
    omega = np.asarray(omega, dtype=float)
    s = spectrum_kernel(omega, grids.omega_c[iq], grids.chi[iq], state.na[iq], d, params)
    z0 = z_initial(grids.omega_c[iq], chi, state.na[iq], params)
    pol = omega - params.omega12 + 1j * params.gz_rate
    return -(chi * s * d - 1j * z0) / pol


def back_substitute(omega, s, z, omega_c, chi, d, params: PhysicalParams):
    """Reconstruct the initial conditions from (S, Z); consistency oracle.

    Returns (na_check, z0_check) by inserting the transforms back into the
    pre-transform linear pair.
    """
    omega = np.asarray(omega, dtype=float)
    pol = omega - params.omega12 + 1j * params.gz_rate
    cav = omega - omega_c + 1j * params.gs_rate
    na_check = -1j * cav * s - 2j * chi * z
    z0_check = -1j * pol * z - 1j * chi * s * d
    return na_check, z0_check


def polariton_roots(omega_c, chi, d, params: PhysicalParams):
    """The two complex resonance frequencies, ordered by real part."""
    a = params.omega12 - 1j * params.gz_rate
    b = omega_c - 1j * params.gs_rate
    half_sum = 0.5 * (a + b)
    rad = cmath.sqrt(0.25 * (a - b) ** 2 + 2.0 * chi**2 * d)
    lo, hi = half_sum - rad, half_sum + rad
    if lo.real > hi.real:
        lo, hi = hi, lo
    return hi, lo


def find_peaks(omega, intensity, n=2):
    """Positions of the n strongest local maxima of |intensity|.

    Works on the signed intensity through its magnitude so that resonances
    are found regardless of the overall sign convention.  Returns a list of
    omega values sorted ascending (may be shorter than n).
    """
    y = np.abs(np.asarray(intensity, dtype=float))
    interior = (y[1:-1] >= y[:-2]) & (y[1:-1] > y[2:])
    idx = np.where(interior)[0] + 1
    if len(idx) == 0:
        return [float(omega[np.argmax(y)])]
    ranked = idx[np.argsort(y[idx])[::-1]][:n]
    return sorted(float(omega[i]) for i in ranked)


def peak_separation(omega, intensity) -> float:
    """Distance between the two dominant resonances (0 for a single peak)."""
    peaks = find_peaks(omega, intensity, n=2)
    return peaks[-1] - peaks[0] if len(peaks) == 2 else 0.0


def mode_spectrum(iq, state: SteadyState, grids: Grids, params: PhysicalParams,
                  omega=None) -> SpectrumResult:
    if omega is None:
        omega = default_omega_grid(params)
    d = float(np.dot(grids.w_k, state.n1 - state.n2))
    s = spectrum_kernel(omega, grids.omega_c[iq], grids.chi[iq],
                        state.na[iq], d, params)
    roots = polariton_roots(grids.omega_c[iq], grids.chi[iq], d, params)
    return SpectrumResult(omega=omega, S=s, intensity=s.real, roots=roots,
                          q=float(grids.q[iq]))


def anticrossing_map(state: SteadyState, grids: Grids, params: PhysicalParams,
                     omega=None, normalize=False):
    """Intensity(omega, mode) matrix plus per-mode peak positions.

    Returns (omega, intensity[nq, n_omega], peaks) where peaks[iq] is the
    list of dominant resonance frequencies of mode iq.  With normalize the
    map is scaled to unit global maximum.
    """
    if omega is None:
        omega = default_omega_grid(params)
    d = float(np.dot(grids.w_k, state.n1 - state.n2))
    intensity = np.empty((grids.nq, len(omega)))
    peaks = []
    for iq in range(grids.nq):
        s = spectrum_kernel(omega, grids.omega_c[iq], grids.chi[iq],
                            state.na[iq], d, params)
        intensity[iq] = s.real
        peaks.append(find_peaks(omega, s.real, n=2))
    if normalize:
        top = np.max(np.abs(intensity))
        if top > 0.0:
            intensity = intensity / top
    return omega, intensity, peaks
