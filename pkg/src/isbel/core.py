"""Device parameters, dispersions, light-matter coupling and Fermi statistics.

Everything downstream (contact rates, steady-state solver, dynamics, spectra)
consumes the types defined here.  All quantities are per unit area: electron
sums are carried as kinetic-energy quadratures with sheet-density weights
(cm^-2 per grid node, per spin) and photon sums as in-plane-wavevector
quadratures with 2D mode-count weights (cm^-2 per node).  The coupling
constant is normalized so that chi^2 times a sheet density is a squared
angular frequency; no operation ever takes a sample area.

Spin convention: occupation arrays and the population difference
D = sum_k w_k (n1 - n2) are per spin.  Sheet densities quoted to users carry
the twofold spin degeneracy; the factor 2 is applied in the observables
layer only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import HBAR, KB, C_LIGHT, M_ELECTRON, NM2_PER_CM2


class FermiLevelError(RuntimeError):
    """Fermi-level inversion did not converge (pathological inputs)."""


@dataclass(frozen=True)
class PhysicalParams:
    """Device constants.

    Damping-type fields (gamma, Gamma_*, tau_inv, rabi_cal_freq) are
    dimensionless fractions of the transition frequency omega12 = E12/hbar;
    the *_rate properties convert them to absolute ps^-1 values.

    Attributes
    ----------
    E12 : transition energy between the two subbands (meV)
    m_star : effective mass as a fraction of the bare electron mass
    eps_r : cavity spacer relative dielectric constant
    theta_res : internal propagation angle (degrees) of the cavity photon
        at the resonant in-plane wavevector, fixing the cavity geometry
    gamma : photon escape rate (units of omega12); 1/(2 gamma) is the
        photon lifetime
    Gamma_X, Gamma_Y : dephasing rates of the polarization-polarization and
        field-polarization correlations (units of omega12)
    Gamma_S, Gamma_Z : dampings of the two-time photon and polarization
        correlators entering the emission spectrum (units of omega12)
    tau_inv : nonradiative relaxation rate 1/tau (units of omega12)
    T : lattice temperature (K)
    rabi_cal_freq : calibrated vacuum Rabi frequency (units of omega12)
        reached at the calibration density
    rabi_cal_density : total electron sheet density (cm^-2, both spins,
        all in the lowest subband) at which the calibration holds
    """

    E12: float = 150.0
    m_star: float = 0.1
    eps_r: float = 10.0
    theta_res: float = 70.0
    gamma: float = 0.05
    Gamma_X: float = 0.1
    Gamma_Y: float = 0.1
    Gamma_S: float = 0.1
    Gamma_Z: float = 0.1
    tau_inv: float = 0.005
    T: float = 77.0
    rabi_cal_freq: float = 0.1
    rabi_cal_density: float = 5.0e11

    def __post_init__(self):
        positive = {
            "E12": self.E12, "m_star": self.m_star, "eps_r": self.eps_r,
            "gamma": self.gamma, "Gamma_X": self.Gamma_X,
            "Gamma_Y": self.Gamma_Y, "Gamma_S": self.Gamma_S,
            "Gamma_Z": self.Gamma_Z, "tau_inv": self.tau_inv, "T": self.T,
            "rabi_cal_density": self.rabi_cal_density,
        }
        for name, value in positive.items():
            if not value > 0.0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if not 0.0 < self.theta_res < 90.0:
            raise ValueError(f"theta_res must lie in (0, 90) degrees, got {self.theta_res}")
        if self.rabi_cal_freq < 0.0:
            raise ValueError(f"rabi_cal_freq must be nonnegative, got {self.rabi_cal_freq}")

    # --- derived scales -------------------------------------------------

    @property
    def omega12(self) -> float:
        """Transition angular frequency (ps^-1)."""
        return self.E12 / HBAR

    @property
    def gamma_rate(self) -> float:
        return self.gamma * self.omega12

    @property
    def gx_rate(self) -> float:
        return self.Gamma_X * self.omega12

    @property
    def gy_rate(self) -> float:
        return self.Gamma_Y * self.omega12

    @property
    def gs_rate(self) -> float:
        return self.Gamma_S * self.omega12

    @property
    def gz_rate(self) -> float:
        return self.Gamma_Z * self.omega12

    @property
    def relax_rate(self) -> float:
        """Nonradiative relaxation rate 1/tau (ps^-1)."""
        return self.tau_inv * self.omega12

    @property
    def beta(self) -> float:
        """Inverse thermal energy 1/(kB T) (meV^-1)."""
        return 1.0 / (KB * self.T)

    @property
    def mass(self) -> float:
        """Effective mass in meV ps^2 / nm^2."""
        return self.m_star * M_ELECTRON

    @property
    def dos(self) -> float:
        """2D density of states per spin, cm^-2 / meV."""
        return self.mass / (2.0 * math.pi * HBAR**2) * NM2_PER_CM2

    # --- cavity geometry ------------------------------------------------

    @property
    def q_z(self) -> float:
        """Quantized wavevector along the growth direction (nm^-1).

        Fixed by requiring that the cavity mode resonant with the
        transition propagates internally at theta_res.
        """
        theta = math.radians(self.theta_res)
        return self.omega12 * math.sqrt(self.eps_r) / C_LIGHT * math.cos(theta)

    @property
    def q_res(self) -> float:
        """In-plane wavevector where the cavity mode crosses omega12 (nm^-1)."""
        return self.q_z * math.tan(math.radians(self.theta_res))

    def cavity_dispersion(self, q):
        """Bare cavity photon angular frequency (ps^-1) at in-plane q (nm^-1)."""
        q = np.asarray(q, dtype=float)
        w = C_LIGHT / math.sqrt(self.eps_r) * np.sqrt(self.q_z**2 + q**2)
        return w if w.ndim else float(w)

    def q_of_omega(self, omega_c):
        """Inverse of the cavity dispersion (omega_c in ps^-1, above cutoff)."""
        omega_c = np.asarray(omega_c, dtype=float)
        arg = (omega_c * math.sqrt(self.eps_r) / C_LIGHT) ** 2 - self.q_z**2
        if np.any(arg < 0.0):
            raise ValueError("cavity frequency below the q=0 cutoff")
        q = np.sqrt(arg)
        return q if q.ndim else float(q)

    def tm_factor(self, q):
        """TM polarization selection factor q^2/(q_z^2 + q^2)."""
        q = np.asarray(q, dtype=float)
        f = q**2 / (self.q_z**2 + q**2)
        return f if f.ndim else float(f)

    def coupling_chi(self, q):
        """Light-matter coupling chi(q), per-unit-area normalized (ps^-1 cm).

        chi(q)^2 times a per-spin sheet density (cm^-2) is a squared angular
        frequency.  The overall prefactor is pinned by the Rabi calibration:
        chi(q_res) * sqrt(2 * D_cal) = rabi_cal_freq * omega12 where
        D_cal = rabi_cal_density / 2 is the per-spin population difference
        when the calibration density sits entirely in the lowest subband.
        """
        q = np.asarray(q, dtype=float)
        w12 = self.omega12
        shape = w12 * self.tm_factor(q) / (self.cavity_dispersion(q) * self.tm_factor(self.q_res))
        chi = self.rabi_cal_freq * w12 * np.sqrt(shape / self.rabi_cal_density)
        return chi if chi.ndim else float(chi)

    def subband_energy(self, eps_kin, j):
        """Single-particle energy (meV) at kinetic energy eps_kin in subband j."""
        if j == 1:
            offset = 0.0
        elif j == 2:
            offset = self.E12
        else:
            raise ValueError(f"subband index must be 1 or 2, got {j}")
        eps_kin = np.asarray(eps_kin, dtype=float)
        e = eps_kin + offset
        return e if e.ndim else float(e)

    def subband_frequency(self, eps_kin, j):
        """subband_energy / hbar, in ps^-1."""
        e = self.subband_energy(eps_kin, j)
        return e / HBAR


def _logistic(x):
    # 1/(1 + e^x), safe against overflow for large |x|
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x > 0.0
    ex = np.exp(-x[pos])
    out[pos] = ex / (1.0 + ex)
    out[~pos] = 1.0 / (1.0 + np.exp(x[~pos]))
    return out


def fermi_dirac(eps, mu, T):
    """Fermi-Dirac occupancy 1/(exp(beta (eps - mu)) + 1).

    eps, mu in meV; T in kelvin.  Accepts arrays; never overflows.
    """
    x = (np.asarray(eps, dtype=float) - mu) / (KB * T)
    f = _logistic(x)
    return f if f.ndim else float(f)


def density_from_fermi_level(eps_F, T, params: PhysicalParams) -> float:
    """Per-spin sheet density (cm^-2) of both subbands at Fermi level eps_F.

    Closed form of the 2D kinetic-energy integral over the two parabolic
    subbands (the lower-band bottom sits at zero, the upper at E12).
    """
    kT = KB * T
    x1 = np.logaddexp(0.0, eps_F / kT)            # ln(1 + e^x), overflow-safe
    x2 = np.logaddexp(0.0, (eps_F - params.E12) / kT)
    return params.dos * kT * float(x1 + x2)


def solve_fermi_level(total_density, T, params: PhysicalParams,
                      tol=1e-10, max_iter=100) -> float:
    """Invert the closed-form density for the self-consistent Fermi level.

    total_density is the per-spin sheet density (cm^-2) summed over both
    subbands.  Converges to |density error| / density < tol (Newton from an
    exact single-band seed; the map is monotone).  Returns -inf for zero
    density.
    """
    if total_density < 0.0:
        raise ValueError("density must be nonnegative")
    if total_density == 0.0:
        return -math.inf

    kT = KB * T
    # exact inversion ignoring the upper subband seeds Newton from above
    y = total_density / (params.dos * kT)
    if y > 30.0:
        eps_F = total_density / params.dos
    else:
        eps_F = kT * math.log(math.expm1(y))

    for _ in range(max_iter):
        n = density_from_fermi_level(eps_F, T, params)
        err = n - total_density
        if abs(err) <= tol * total_density:
            return eps_F
        slope = params.dos * (_logistic(-eps_F / kT) + _logistic(-(eps_F - params.E12) / kT))
        eps_F -= err / float(slope)
    raise FermiLevelError(
        f"no convergence after {max_iter} iterations at density {total_density:g} cm^-2")


def equilibrium_occupations(eps_F, T, eps_kin, params: PhysicalParams):
    """Local-equilibrium occupations (n1, n2) on the kinetic-energy grid."""
    eps_kin = np.asarray(eps_kin, dtype=float)
    if eps_F == -math.inf:
        z = np.zeros_like(eps_kin)
        return z, z.copy()
    n1 = fermi_dirac(eps_kin, eps_F, T)
    n2 = fermi_dirac(eps_kin + params.E12, eps_F, T)
    return n1, n2


@dataclass(frozen=True)
class Occupations:
    """Occupation snapshot: n1, n2 over the energy grid, na over photon modes."""

    n1: np.ndarray
    n2: np.ndarray
    na: np.ndarray

    def check_bounds(self, tol=0.0):
        """Raise if Pauli bounds or photon positivity are violated beyond tol."""
        if np.any(self.n1 < -tol) or np.any(self.n1 > 1.0 + tol):
            raise ValueError("n1 outside [0, 1]")
        if np.any(self.n2 < -tol) or np.any(self.n2 > 1.0 + tol):
            raise ValueError("n2 outside [0, 1]")
        if np.any(self.na < -tol):
            raise ValueError("na negative")


def _simpson_coeffs(n_nodes: int) -> np.ndarray:
    # composite Simpson over an even number of equal intervals
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("Simpson rule needs an odd node count")
    c = np.ones(n_nodes)
    c[1:-1:2] = 4.0
    c[2:-1:2] = 2.0
    return c / 3.0


@dataclass(frozen=True)
class Grids:
    """Discretized electron and photon grids with quadrature weights.

    eps_kin holds the kinetic-energy nodes (meV) of a uniform grid; w_k are
    per-spin sheet-density weights (cm^-2 per node) such that
    sum(w_k * f(eps)) approximates the 2D density-of-states integral.
    q holds the photon in-plane wavevectors (nm^-1) of a uniform grid whose
    cavity energies span the configured band around omega12; w_q are the 2D
    mode-count weights q dq / (2 pi) in cm^-2.  Composite-Simpson weighting
    keeps grid-doubling drifts of the reported observables well below the
    convergence budget.
    """

    eps_kin: np.ndarray
    w_k: np.ndarray
    q: np.ndarray
    w_q: np.ndarray
    omega_c: np.ndarray
    chi: np.ndarray
    q_z: float
    q_res: float
    eps_max: float

    @property
    def nk(self) -> int:
        return len(self.eps_kin)

    @property
    def nq(self) -> int:
        return len(self.q)

    @property
    def i_res(self) -> int:
        """Index of the photon node closest to the bare resonance."""
        return int(np.argmin(np.abs(self.q - self.q_res)))

    def density(self, occ) -> float:
        """Per-spin sheet density (cm^-2) of an occupation array."""
        return float(np.dot(self.w_k, occ))

    def photon_total(self, na) -> float:
        """Photon number per unit area (cm^-2) of a mode-occupation array."""
        return float(np.dot(self.w_q, na))


def build_grids(params: PhysicalParams, nk=40, nq=16, eps_max=None,
                omega_band=(0.6, 1.4)) -> Grids:
    """Build the electron/photon quadrature grids.

    nk and nq count grid cells (nodes = cells + 1); odd values are bumped to
    even so the Simpson weighting applies.  eps_max defaults to 1.6 * E12,
    wide enough to include the contact-miniband alignment window over the
    standard bias range; pass an explicit value for tighter runs (the
    steady-state solver flags occupied grid tops post solve).
    """
    if nk < 8:
        raise ValueError("nk must be at least 8")
    if nq < 4:
        raise ValueError("nq must be at least 4")
    nk += nk % 2
    nq += nq % 2
    if eps_max is None:
        eps_max = 1.6 * params.E12

    eps = np.linspace(0.0, eps_max, nk + 1)
    d_eps = eps[1] - eps[0]
    w_k = params.dos * d_eps * _simpson_coeffs(nk + 1)

    lo, hi = omega_band
    q_lo = params.q_of_omega(lo * params.omega12)
    q_hi = params.q_of_omega(hi * params.omega12)
    q = np.linspace(q_lo, q_hi, nq + 1)
    dq = q[1] - q[0]
    w_q = q * dq / (2.0 * math.pi) * _simpson_coeffs(nq + 1) * NM2_PER_CM2

    return Grids(
        eps_kin=eps, w_k=w_k, q=q, w_q=w_q,
        omega_c=params.cavity_dispersion(q),
        chi=params.coupling_chi(q),
        q_z=params.q_z, q_res=params.q_res, eps_max=float(eps_max),
    )
