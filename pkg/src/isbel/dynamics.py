"""Time-domain populations dynamics: the independent oracle for the
steady-state solver.

Three levels of description share one integrator:

* ``full`` keeps the photon populations, the two subband occupations, the
  field-polarization correlation Y(q, k), and the polarization-polarization
  correlation split into its singular diagonal part (per-mode deviation from
  the uncorrelated plasma value, real) and the smooth pair field X(q, k', k).
* ``adiabaticX`` replaces the polarization-polarization correlation by its
  instantaneous stationary value before evaluating dY/dt; its fixed points
  satisfy the steady-state algebraic system exactly.
* ``reduced`` follows pseudo-time along the negative residual of the
  algebraic system itself.

The correlation fields are intensive (per unit area, like the quadrature
weights); Kronecker deltas of the underlying mode algebra appear either as
the plasma/diagonal split or through quadrature-weight sums, never as
grid-resolution-dependent magnitudes.

Advance is classical fixed-step RK4; the default step is 1/bound where
bound estimates the largest system rate (cavity detunings plus collective
linewidth, tunneling, dephasings), safely inside the RK4 stability region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contacts import BiasPoint, RateTable, ReservoirParams, total_rates
from .core import Grids, PhysicalParams, equilibrium_occupations, solve_fermi_level
from .steady import (SteadyState, aux_quantities, make_residual,
                     photon_occupation_target, subband_imbalance, thermal_state)

MODES = ("full", "adiabaticX", "reduced")


class IntegrationError(RuntimeError):
    """Trajectory blew up; retry with a smaller time step."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float | None = None          # ps; None picks 1/(largest system rate)
    t_max: float = 600.0             # ps
    mode: str = "adiabaticX"
    stop_tol: float = 1e-10          # on the RMS of the state derivative (ps^-1)
    check_every: int = 100           # steps between stop/stability checks
    record_every: int = 0            # trajectory stride; 0 records endpoints only

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dt is not None and not self.dt > 0.0:
            raise ValueError("dt must be positive")


@dataclass
class DynamicState:
    """Populations plus correlation fields.

    y is the field-polarization correlation over (q, k).  x_diag is the real
    per-mode deviation of the polarization-polarization correlation diagonal
    from the plasma value 2 n2 (1 - n1); x_corr is the smooth pair field over
    (q, k', k).  Both are carried only in ``full`` mode (x_diag stays real
    along trajectories and is stored complex for uniformity).
    """

    na: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    y: np.ndarray | None = None
    x_diag: np.ndarray | None = None
    x_corr: np.ndarray | None = None

    @classmethod
    def thermal(cls, mu, grids: Grids, params: PhysicalParams, mode="adiabaticX",
                rates: RateTable | None = None) -> "DynamicState":
        """Equilibrium carriers at chemical potential mu, dark cavity."""
        n1, n2 = equilibrium_occupations(mu, params.T, grids.eps_kin, params)
        nq, nk = grids.nq, grids.nk
        state = cls(na=np.zeros(nq), n1=n1, n2=n2)
        if rates is not None:
            n1a, n2a, na = thermal_state(mu, grids, params, rates)
            state = cls(na=na, n1=n1a, n2=n2a)
        if mode in ("adiabaticX", "full"):
            state.y = np.zeros((nq, nk), dtype=complex)
        if mode == "full":
            state.x_diag = np.zeros((nq, nk), dtype=complex)
            state.x_corr = np.zeros((nq, nk, nk), dtype=complex)
        return state


class _System:
    """Flat-vector view of the dynamics for the RK4 driver."""

    def __init__(self, rates: RateTable, grids: Grids, params: PhysicalParams, mode):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.rates, self.grids, self.params, self.mode = rates, grids, params, mode
        nq, nk = grids.nq, grids.nk
        self.nq, self.nk = nq, nk
        sizes = [nq, nk, nk]
        if mode in ("adiabaticX", "full"):
            sizes += [2 * nq * nk]
        if mode == "full":
            sizes += [2 * nq * nk, 2 * nq * nk * nk]
        self.offsets = np.cumsum([0] + sizes)
        self.size = self.offsets[-1]
        if mode == "reduced":
            self._residual = make_residual(rates, grids, params)

    # --- packing ---------------------------------------------------------

    def _put_complex(self, vec, lo, arr):
        n = arr.size
        vec[lo:lo + n] = arr.real.ravel()
        vec[lo + n:lo + 2 * n] = arr.imag.ravel()

    def _get_complex(self, vec, lo, shape):
        n = int(np.prod(shape))
        return (vec[lo:lo + n] + 1j * vec[lo + n:lo + 2 * n]).reshape(shape)

    def pack(self, state: DynamicState) -> np.ndarray:
        vec = np.zeros(self.size)
        o = self.offsets
        vec[o[0]:o[1]] = state.na
        vec[o[1]:o[2]] = state.n1
        vec[o[2]:o[3]] = state.n2
        if self.mode in ("adiabaticX", "full"):
            self._put_complex(vec, o[3], np.asarray(state.y, dtype=complex))
        if self.mode == "full":
            self._put_complex(vec, o[4], np.asarray(state.x_diag, dtype=complex))
            self._put_complex(vec, o[5], np.asarray(state.x_corr, dtype=complex))
        return vec

    def unpack(self, vec) -> DynamicState:
        o = self.offsets
        nq, nk = self.nq, self.nk
        state = DynamicState(na=vec[o[0]:o[1]].copy(), n1=vec[o[1]:o[2]].copy(),
                             n2=vec[o[2]:o[3]].copy())
        if self.mode in ("adiabaticX", "full"):
            state.y = self._get_complex(vec, o[3], (nq, nk))
        if self.mode == "full":
            state.x_diag = self._get_complex(vec, o[4], (nq, nk))
            state.x_corr = self._get_complex(vec, o[5], (nq, nk, nk))
        return state

    # --- physics ----------------------------------------------------------

    def rhs(self, vec) -> np.ndarray:
        if self.mode == "reduced":
            return -self._residual(vec)

        g, p, r = self.grids, self.params, self.rates
        o = self.offsets
        na = vec[o[0]:o[1]]
        n1 = vec[o[1]:o[2]]
        n2 = vec[o[2]:o[3]]
        y = self._get_complex(vec, o[3], (self.nq, self.nk))

        eps_F = solve_fermi_level(g.density(n1 + n2), p.T, p)
        n10, n20 = equilibrium_occupations(eps_F, p.T, g.eps_kin, p)
        dk = n1 - n2
        fk = n2 * (1.0 - n1)
        d = float(np.dot(g.w_k, dk))

        chi, wq, wk = g.chi, g.w_q, g.w_k
        a_k = (wq * chi) @ y                    # field-weighted polarization per k
        z_q = y @ wk
        im_a = a_k.imag

        rlx = p.relax_rate
        dn1 = -(n1 - n10) * rlx - r.gout1 * n1 + r.gin1 * (1.0 - n1) - 2.0 * im_a
        dn2 = -(n2 - n20) * rlx - r.gout2 * n2 + r.gin2 * (1.0 - n2) + 2.0 * im_a
        dna = -2.0 * p.gamma_rate * na - 4.0 * chi * z_q.imag

        if self.mode == "adiabaticX":
            xsum = (2.0 * fk + (2.0 / p.gx_rate) * (1.0 - dk) * im_a)[None, :] \
                + (2.0j / p.gx_rate) * chi[:, None] * (dk[None, :] * np.conj(z_q)[:, None]
                                                       - y * d)
        else:
            x_diag = self._get_complex(vec, o[4], (self.nq, self.nk))
            x_corr = self._get_complex(vec, o[5], (self.nq, self.nk, self.nk))
            xsum = 2.0 * fk[None, :] + x_diag + np.einsum("j,qjk->qk", wk, x_corr)

        delta = g.omega_c - p.omega12
        dy = (1j * delta - p.gy_rate)[:, None] * y \
            + 1j * chi[:, None] * (na[:, None] * dk[None, :] - xsum)

        out = np.zeros_like(vec)
        out[o[0]:o[1]] = dna
        out[o[1]:o[2]] = dn1
        out[o[2]:o[3]] = dn2
        self._put_complex(out, o[3], dy)

        if self.mode == "full":
            dfk = dn2 * (1.0 - n1) - n2 * dn1
            dx_diag = -p.gx_rate * x_diag \
                + (2.0 * (1.0 - dk) * im_a - 2.0 * dfk)[None, :].astype(complex)
            dx_corr = np.empty_like(x_corr)
            for iq in range(self.nq):
                dx_corr[iq] = -p.gx_rate * x_corr[iq] + 2.0j * chi[iq] * (
                    np.outer(np.conj(y[iq]), dk) - np.outer(dk, y[iq]))
            self._put_complex(out, o[4], dx_diag)
            self._put_complex(out, o[5], dx_corr)
        return out

    def stability_bound(self, vec) -> float:
        """Largest rate in the linearized system; 1/bound is a safe RK4 step."""
        g, p, r = self.grids, self.params, self.rates
        if self.mode == "reduced":
            return 10.0   # residuals are scaled to occupancy units
        n1 = vec[self.offsets[1]:self.offsets[2]]
        n2 = vec[self.offsets[2]:self.offsets[3]]
        d = max(float(np.dot(g.w_k, n1 - n2)), 0.0)
        b_max = p.gy_rate + 2.0 * float(np.max(g.chi**2)) * d / p.gx_rate
        delta_max = float(np.max(np.abs(g.omega_c - p.omega12)))
        return max(delta_max + b_max, p.gx_rate, 2.0 * p.gamma_rate,
                   p.relax_rate + r.max_rate)


def rhs(state: DynamicState, rates: RateTable, grids: Grids,
        params: PhysicalParams, mode="adiabaticX") -> DynamicState:
    """Time derivative of a dynamic state (same layout as the input)."""
    system = _System(rates, grids, params, mode)
    return system.unpack(system.rhs(system.pack(state)))


@dataclass
class Trajectory:
    t: list = field(default_factory=list)
    photons: list = field(default_factory=list)      # photon number per area
    density1: list = field(default_factory=list)     # both spins, cm^-2
    density2: list = field(default_factory=list)
    y_max: list = field(default_factory=list)

    def append(self, t, vec, system: _System):
        g = system.grids
        o = system.offsets
        self.t.append(t)
        self.photons.append(g.photon_total(vec[o[0]:o[1]]))
        self.density1.append(2.0 * g.density(vec[o[1]:o[2]]))
        self.density2.append(2.0 * g.density(vec[o[2]:o[3]]))
        if system.mode == "reduced":
            self.y_max.append(0.0)
        else:
            y = system._get_complex(vec, o[3], (system.nq, system.nk))
            self.y_max.append(float(np.max(np.abs(y))))


def integrate(state0: DynamicState, rates: RateTable, grids: Grids,
              params: PhysicalParams, config: IntegratorConfig = IntegratorConfig()):
    """Fixed-step RK4 advance until t_max or a stationary state.

    Returns (trajectory, final_state, info); info carries the step count,
    final derivative norm, the time step used, and the worst Pauli-bound
    undershoot seen at check points.
    """
    system = _System(rates, grids, params, config.mode)
    x = system.pack(state0)
    dt = config.dt if config.dt is not None else 1.0 / system.stability_bound(x)

    traj = Trajectory()
    traj.append(0.0, x, system)
    n_steps = int(math.ceil(config.t_max / dt))
    norm = math.inf
    undershoot = 0.0
    scale0 = 1.0 + float(np.max(np.abs(x)))

    step = 0
    t = 0.0
    while step < n_steps:
        k1 = system.rhs(x)
        k2 = system.rhs(x + 0.5 * dt * k1)
        k3 = system.rhs(x + 0.5 * dt * k2)
        k4 = system.rhs(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        step += 1
        t = step * dt

        if config.record_every and step % config.record_every == 0:
            traj.append(t, x, system)
        if step % config.check_every == 0 or step == n_steps:
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e6 * scale0:
                raise IntegrationError(
                    f"trajectory unstable at t = {t:.3g} ps; reduce dt below {dt:.3g} ps")
            o = system.offsets
            pops = x[o[0]:o[3]]
            undershoot = max(undershoot, float(np.max(np.maximum(-pops, 0.0))))
            norm = float(np.sqrt(np.mean(system.rhs(x)**2)))
            if norm < config.stop_tol:
                break

    traj.append(t, x, system)
    info = {"steps": step, "t_final": t, "dt": dt, "rhs_norm": norm,
            "undershoot": undershoot, "converged": norm < config.stop_tol}
    return traj, system.unpack(x), info


def relax_to_steady(left: ReservoirParams, right: ReservoirParams, bias: BiasPoint,
                    grids: Grids, params: PhysicalParams,
                    config: IntegratorConfig = IntegratorConfig(),
                    init: DynamicState | None = None) -> SteadyState:
    """Integrate from thermal equilibrium to the driven stationary state.

    Raises IntegrationError when t_max is reached without meeting stop_tol
    (slow-manifold behavior at vanishing bias).
    """
    rates = total_rates(left, right, bias, grids, params)
    if init is None:
        init = DynamicState.thermal(left.mu, grids, params, mode=config.mode)
    _traj, final, info = integrate(init, rates, grids, params, config)
    if not info["converged"]:
        raise IntegrationError(
            f"no stationary state within t_max = {config.t_max} ps "
            f"(rhs norm {info['rhs_norm']:.3e}); the approach can be very slow "
            f"at vanishing bias")
    aux = aux_quantities(final.n1, final.n2, grids, params)
    return SteadyState(n1=final.n1, n2=final.n2, na=final.na, eps_F=aux.eps_F,
                       V=bias.V, converged=True, iterations=info["steps"],
                       residual_norm=info["rhs_norm"],
                       tail_occupation=float(max(final.n1[-1], final.n2[-1])))


def stationary_y(n1, n2, na, rates: RateTable, grids: Grids, params: PhysicalParams,
                 tol=1e-13, max_steps=200000):
    """Stationary field-polarization correlation at frozen populations.

    The Y subsystem is linear and damped; it is relaxed by the same RK4
    update used for trajectories until its derivative is negligible.
    """
    system = _System(rates, grids, params, "adiabaticX")
    vec = system.pack(DynamicState(na=np.asarray(na, float), n1=np.asarray(n1, float),
                                   n2=np.asarray(n2, float),
                                   y=np.zeros((grids.nq, grids.nk), dtype=complex)))
    o = system.offsets
    frozen = vec[:o[3]].copy()
    dt = 1.0 / system.stability_bound(vec)
    for step in range(max_steps):
        k1 = system.rhs(vec)
        k2 = system.rhs(vec + 0.5 * dt * k1)
        k3 = system.rhs(vec + 0.5 * dt * k2)
        k4 = system.rhs(vec + dt * k3)
        vec = vec + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        vec[:o[3]] = frozen
        if step % 50 == 0:
            dy = system.rhs(vec)[o[3]:]
            if float(np.max(np.abs(dy))) < tol * system.stability_bound(vec):
                break
    return system._get_complex(vec, o[3], (grids.nq, grids.nk))


def population_flow_residual(state: SteadyState, rates: RateTable, grids: Grids,
                             params: PhysicalParams) -> float:
    """Max |d/dt| of the populations at their stationary correlations.

    A converged algebraic solution must be a fixed point of this reduced
    flow; the return value is the largest population derivative (ps^-1).
    """
    y = stationary_y(state.n1, state.n2, state.na, rates, grids, params)
    system = _System(rates, grids, params, "adiabaticX")
    vec = system.pack(DynamicState(na=state.na, n1=state.n1, n2=state.n2, y=y))
    o = system.offsets
    deriv = system.rhs(vec)
    return float(np.max(np.abs(deriv[:o[3]])))
