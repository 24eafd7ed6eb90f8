"""Steady-state algebraic system for carrier and photon populations.

With the fast correlation variables eliminated adiabatically, the stationary
state of the driven well-cavity system satisfies a closed algebraic system in
(n1, n2, na): one photon equation per cavity mode, one carrier equation per
energy node, and one particle-conservation equation per energy node.  The
quantum-well Fermi level is not an unknown; it is recomputed from the current
total density inside every residual evaluation, which keeps the relaxation
term density-conserving and the Jacobian square.

The solver is a damped Newton iteration with a dense forward-difference
Jacobian, backtracking line search, and a pseudo-transient fallback for
stalled steps.  Voltage sweeps warm-start each bias point from the previous
solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contacts import BiasPoint, RateTable, total_rates
from .core import (Grids, PhysicalParams, equilibrium_occupations,
                   solve_fermi_level)


class NonConvergenceError(RuntimeError):
    """Newton iteration hit its cap or stalled; expected near zero bias."""

    def __init__(self, message, iterations=None, residual_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class SolverConfig:
    residual_tol: float = 1e-10      # on the RMS of the scaled residual
    max_iter: int = 200
    fd_step: float = 1e-7            # relative forward-difference step
    init_step: float = 1.0           # line-search starting step
    backtrack: float = 0.5
    min_step: float = 2.0**-20
    pt_steps: int = 400              # pseudo-transient fallback budget

    def __post_init__(self):
        if not self.residual_tol > 0.0:
            raise ValueError("residual_tol must be positive")


@dataclass(frozen=True)
class AuxQuantities:
    """Bilinear combinations entering the algebraic system.

    dk = n1 - n2 and fk = n2 (1 - n1) per node; d and f are their
    quadrature sums (per-spin densities, cm^-2).  bq is the collective
    linewidth Gamma_Y + 2 chi^2 d / Gamma_X per mode, delta_q the cavity
    detuning from the transition, gq = delta_q^2 + bq^2.  n10/n20 are the
    local-equilibrium occupations at the self-consistent Fermi level of the
    instantaneous density.
    """

    dk: np.ndarray
    fk: np.ndarray
    d: float
    f: float
    bq: np.ndarray
    delta_q: np.ndarray
    gq: np.ndarray
    eps_F: float
    n10: np.ndarray
    n20: np.ndarray


def aux_quantities(n1, n2, grids: Grids, params: PhysicalParams) -> AuxQuantities:
    dk = n1 - n2
    fk = n2 * (1.0 - n1)
    d = float(np.dot(grids.w_k, dk))
    f = float(np.dot(grids.w_k, fk))
    eps_F = solve_fermi_level(grids.density(n1 + n2), params.T, params)
    n10, n20 = equilibrium_occupations(eps_F, params.T, grids.eps_kin, params)
    bq = params.gy_rate + 2.0 * grids.chi**2 * d / params.gx_rate
    delta_q = grids.omega_c - params.omega12
    return AuxQuantities(dk=dk, fk=fk, d=d, f=f, bq=bq, delta_q=delta_q,
                         gq=delta_q**2 + bq**2, eps_F=eps_F, n10=n10, n20=n20)


def subband_imbalance(n1, n2, aux: AuxQuantities, rates: RateTable,
                      params: PhysicalParams):
    """Per-node loss imbalances (r1, r2): relaxation plus net out-tunneling."""
    rlx = params.relax_rate
    r1 = (n1 - aux.n10) * rlx + rates.gout1 * n1 - rates.gin1 * (1.0 - n1)
    r2 = (n2 - aux.n20) * rlx + rates.gout2 * n2 - rates.gin2 * (1.0 - n2)
    return r1, r2


def photon_occupation_target(r1, aux: AuxQuantities, grids: Grids,
                             params: PhysicalParams):
    """Mode occupations that solve the photon equation at given carrier state.

    The photon equation is linear in na; it is evaluated here in the form
    multiplied through by d, which stays regular as the population
    difference crosses zero.  Modes with chi = 0 decouple and get na = 0.
    """
    gam, gx, gy = params.gamma_rate, params.gx_rate, params.gy_rate
    chi2 = grids.chi**2
    sum1 = float(np.dot(grids.w_k, (1.0 - aux.dk) * r1))
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = aux.d * aux.bq * (gam + gx) + (aux.d * aux.delta_q**2 / gy
                                              + aux.gq * gx / (2.0 * chi2)) * gam
        rhs = 2.0 * aux.bq * aux.f * gx - aux.bq * sum1
        na = np.where(chi2 > 0.0, rhs / coef, 0.0)
    return na


def residual_components(n1, n2, na, rates: RateTable, grids: Grids,
                        params: PhysicalParams):
    """Scaled residuals (carrier, conservation, photon) of the algebraic system.

    Carrier and conservation families are divided by a fixed rate scale and
    the photon family is written as na minus its linear-solve target, so all
    components are occupancy-sized and the solver tolerance reads directly
    as an occupancy error.
    """
    aux = aux_quantities(n1, n2, grids, params)
    r1, r2 = subband_imbalance(n1, n2, aux, rates, params)

    gam, gx, gy = params.gamma_rate, params.gx_rate, params.gy_rate
    chi2 = grids.chi**2
    wq = grids.w_q

    kernel = wq * chi2 * aux.bq / aux.gq                    # per-mode coupling kernel
    coef_k = np.dot(wq, chi2 * aux.bq / aux.gq) / gx * (1.0 - aux.dk) + 0.5
    pump = np.dot(wq, chi2 * na / aux.gq
                  * (gy * aux.bq * (gam + gx) + aux.delta_q**2 * gam)) / (gx * gy)
    carrier = coef_k * r1 + aux.dk * pump - 2.0 * aux.fk * float(np.sum(kernel))

    conservation = r1 + r2

    na_target = photon_occupation_target(r1, aux, grids, params)
    photon = na - na_target

    scale = params.relax_rate + rates.max_rate
    return carrier / scale, conservation / scale, photon, aux


def pack_state(n1, n2, na):
    return np.concatenate([n1, n2, na])


def unpack_state(x, grids: Grids):
    nk = grids.nk
    return x[:nk], x[nk:2 * nk], x[2 * nk:]


def make_residual(rates: RateTable, grids: Grids, params: PhysicalParams):
    """Residual closure over the packed state vector [n1 | n2 | na]."""

    def fun(x):
        n1, n2, na = unpack_state(x, grids)
        carrier, conservation, photon, _ = residual_components(
            n1, n2, na, rates, grids, params)
        return np.concatenate([carrier, conservation, photon])

    return fun


def _safe_rms(fun, x):
    """Residual norm with unevaluable (unphysical) states mapped to +inf."""
    try:
        r = fun(x)
    except (ValueError, FloatingPointError, OverflowError):
        return None, math.inf
    if not np.all(np.isfinite(r)):
        return None, math.inf
    return r, _rms(r)


def balance_init(rates: RateTable, grids: Grids, params: PhysicalParams,
                 mu_seed: float, rounds=40):
    """Initializer from the photon-free per-node rate balance.

    Alternates the per-node stationary occupations of relaxation plus
    tunneling with the self-consistent Fermi level; lands near the driven
    solution even when it sits far from equilibrium.  Photon modes are then
    filled from the photon equation.
    """
    rlx = params.relax_rate
    eps_F = float(mu_seed)
    n1 = n2 = None
    for _ in range(rounds):
        n10, n20 = equilibrium_occupations(eps_F, params.T, grids.eps_kin, params)
        n1 = (rates.gin1 + rlx * n10) / (rates.gin1 + rates.gout1 + rlx)
        n2 = (rates.gin2 + rlx * n20) / (rates.gin2 + rates.gout2 + rlx)
        eps_F = solve_fermi_level(grids.density(n1 + n2), params.T, params)
    aux = aux_quantities(n1, n2, grids, params)
    r1, _ = subband_imbalance(n1, n2, aux, rates, params)
    na = np.maximum(photon_occupation_target(r1, aux, grids, params), 0.0)
    return n1, n2, na


def fd_jacobian(fun, x, r0=None, step=1e-7, scheme="forward"):
    """Dense finite-difference Jacobian of fun at x."""
    if r0 is None:
        r0 = fun(x)
    n = len(x)
    jac = np.empty((len(r0), n))
    for i in range(n):
        h = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xp[i] += h
        if scheme == "forward":
            jac[:, i] = (fun(xp) - r0) / h
        elif scheme == "central":
            xm = x.copy()
            xm[i] -= h
            jac[:, i] = (fun(xp) - fun(xm)) / (2.0 * h)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    return jac


def _rms(r):
    return float(np.sqrt(np.mean(r**2)))


@dataclass(frozen=True)
class SteadyState:
    """Converged populations with solve diagnostics."""

    n1: np.ndarray
    n2: np.ndarray
    na: np.ndarray
    eps_F: float
    V: float
    converged: bool = True
    iterations: int = 0
    residual_norm: float = 0.0
    tail_occupation: float = 0.0   # max occupation at the top energy node

    def check_bounds(self, tol=1e-9):
        ok = (np.all(self.n1 > -tol) and np.all(self.n1 < 1.0 + tol)
              and np.all(self.n2 > -tol) and np.all(self.n2 < 1.0 + tol)
              and np.all(self.na > -tol))
        return bool(ok)


def thermal_state(mu, grids: Grids, params: PhysicalParams,
                  rates: RateTable | None = None):
    """Equilibrium occupations at chemical potential mu, with the photon
    modes set from the photon equation (a thermal-quality initial state)."""
    n1, n2 = equilibrium_occupations(mu, params.T, grids.eps_kin, params)
    aux = aux_quantities(n1, n2, grids, params)
    if rates is None:
        r1 = (n1 - aux.n10) * params.relax_rate
    else:
        r1, _ = subband_imbalance(n1, n2, aux, rates, params)
    na = photon_occupation_target(r1, aux, grids, params)
    return n1, n2, np.maximum(na, 0.0)


def _pseudo_transient(fun, x, norm0, budget):
    """Follow dx/ds = -residual until the norm drops; rescues stalled Newton."""
    ds = 0.25
    norm = norm0
    for _ in range(budget):
        r = fun(x)
        trial = x - ds * r
        norm_t = _rms(fun(trial))
        if norm_t < norm:
            x, norm = trial, norm_t
            ds = min(ds * 1.3, 4.0)
            if norm < 0.3 * norm0:
                break
        else:
            ds *= 0.5
            if ds < 1e-8:
                break
    return x, norm


def newton_solve(init, rates: RateTable, grids: Grids, params: PhysicalParams,
                 config: SolverConfig = SolverConfig(), V=0.0,
                 trace=None) -> SteadyState:
    """Damped Newton solve of the steady-state system.

    init is (n1, n2, na) or a packed vector.  Raises NonConvergenceError on
    iteration cap or a stalled line search (never returns an unconverged
    state silently).  trace, if given, is called with a dict per iteration.
    """
    x = init if isinstance(init, np.ndarray) else pack_state(*init)
    x = np.array(x, dtype=float)
    fun = make_residual(rates, grids, params)

    r = fun(x)
    norm = _rms(r)
    for it in range(config.max_iter):
        if trace is not None:
            trace({"event": "newton_iter", "iter": it, "norm": norm})
        if norm < config.residual_tol:
            return _finish(x, grids, params, V, it, norm)

        jac = fd_jacobian(fun, x, r0=r, step=config.fd_step)
        try:
            dx = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(jac, -r, rcond=None)[0]

        step = config.init_step
        while step >= config.min_step:
            x_t = x + step * dx
            r_t = fun(x_t)
            norm_t = _rms(r_t)
            if norm_t < norm * (1.0 - 1e-4 * step):
                x, r, norm = x_t, r_t, norm_t
                break
            step *= config.backtrack
        else:
            stalled = norm
            x, norm = _pseudo_transient(fun, x, norm, config.pt_steps)
            r = fun(x)
            norm = _rms(r)
            if norm >= stalled * (1.0 - 1e-6):
                raise NonConvergenceError(
                    f"line search stalled at residual {norm:.3e}",
                    iterations=it, residual_norm=norm)

    if norm < config.residual_tol:
        return _finish(x, grids, params, V, config.max_iter, norm)
    raise NonConvergenceError(
        f"no convergence in {config.max_iter} iterations (residual {norm:.3e})",
        iterations=config.max_iter, residual_norm=norm)


def _finish(x, grids, params, V, iterations, norm) -> SteadyState:
    n1, n2, na = unpack_state(x, grids)
    aux = aux_quantities(n1, n2, grids, params)
    return SteadyState(
        n1=n1.copy(), n2=n2.copy(), na=na.copy(), eps_F=aux.eps_F, V=float(V),
        converged=True, iterations=iterations, residual_norm=norm,
        tail_occupation=float(max(n1[-1], n2[-1])),
    )


@dataclass
class SweepPoint:
    V: float
    state: SteadyState | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.state is not None


@dataclass
class SweepResult:
    points: list[SweepPoint] = field(default_factory=list)

    @property
    def states(self):
        return [p.state for p in self.points if p.ok]

    @property
    def n_failed(self) -> int:
        return sum(not p.ok for p in self.points)


def voltage_sweep(v_values, left, right, grids: Grids, params: PhysicalParams,
                  config: SolverConfig = SolverConfig(), trace=None) -> SweepResult:
    """Solve a sequence of bias points, warm-starting each from the last.

    The first point starts from thermal equilibrium at the contacts'
    chemical potential.  Failed points are recorded with their diagnostic
    and skipped; later points fall back to the last converged solution.
    """
    result = SweepResult()
    warm = None
    for V in v_values:
        rates = total_rates(left, right, BiasPoint(V), grids, params)
        if warm is None:
            init = thermal_state(left.mu, grids, params, rates)
        else:
            n1, n2, _ = unpack_state(warm, grids)
            aux = aux_quantities(n1, n2, grids, params)
            r1, _r2 = subband_imbalance(n1, n2, aux, rates, params)
            init = (n1, n2, np.maximum(
                photon_occupation_target(r1, aux, grids, params), 0.0))
        try:
            state = newton_solve(init, rates, grids, params, config, V=V, trace=trace)
        except NonConvergenceError as exc:
            result.points.append(SweepPoint(V=V, error=str(exc)))
            continue
        result.points.append(SweepPoint(V=V, state=state))
        warm = pack_state(state.n1, state.n2, state.na)
    return result
