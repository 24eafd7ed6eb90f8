"""Command-line front end: solve, sweep, spectrum, efficiency.

All outputs are plain CSV/JSON with '#'-prefixed metadata lines carrying the
package version and the hash of the fully resolved configuration, so reruns
with identical inputs are byte-identical and recipes stay diffable.  Exit
codes: 0 ok, 2 configuration error, 3 solver failure, 4 partial sweep or
study failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .constants import HBAR
from .contacts import BiasPoint, total_rates
from .core import build_grids
from .dynamics import IntegrationError, IntegratorConfig, relax_to_steady
from .observables import collect_observables, electronic_current
from .spectra import anticrossing_map, default_omega_grid, polariton_roots
from .steady import NonConvergenceError, newton_solve, thermal_state, voltage_sweep


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, (np.floating,)):
        return _fmt(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, meta: list[str], columns: list[str], rows):
    with open(path, "w", newline="") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _meta(cfg: RunConfig, **extra) -> list[str]:
    lines = [f"isbel v{__version__}", f"config_sha256={cfg.sha256()}"]
    lines += [f"{k}={_fmt(v)}" for k, v in extra.items()]
    return lines


def _make_trace(enabled: bool):
    if not enabled:
        return None

    def trace(record: dict):
        print(json.dumps(record, sort_keys=True), file=sys.stderr)

    return trace


def solve_at(V: float, cfg: RunConfig, grids, trace=None):
    """Single-point solve; falls back to a short continuation when the
    direct Newton from thermal equilibrium stalls."""
    rates = total_rates(cfg.left, cfg.right, BiasPoint(V), grids, cfg.physics)
    init = thermal_state(cfg.left.mu, grids, cfg.physics, rates)
    try:
        state = newton_solve(init, rates, grids, cfg.physics, cfg.solver,
                             V=V, trace=trace)
    except NonConvergenceError:
        ladder = [0.4 * V, 0.7 * V, V]
        result = voltage_sweep(ladder, cfg.left, cfg.right, grids, cfg.physics,
                               cfg.solver, trace=trace)
        last = result.points[-1]
        if not last.ok:
            raise NonConvergenceError(f"V = {V} meV: {last.error}")
        state = last.state
    return state, rates


def _write_state(path: Path, cfg, state, grids):
    rows = [("electron", e, n1, n2, "") for e, n1, n2
            in zip(grids.eps_kin, state.n1, state.n2)]
    rows += [("photon", q, "", "", na) for q, na in zip(grids.q, state.na)]
    write_csv(path, _meta(cfg, format="state-v1", V_meV=state.V,
                          eps_F_meV=state.eps_F),
              ["kind", "eps_kin_meV_or_q_nm^-1", "n1", "n2", "na"], rows)


def cmd_solve(cfg: RunConfig, args, outdir: Path, trace) -> int:
    if args.voltage is None:
        raise ConfigError("missing required value 'voltage' (pass --voltage, meV)")
    grids = cfg.grids_for(args.voltage)
    state, rates = solve_at(args.voltage, cfg, grids, trace)
    if state.tail_occupation > 1e-6:
        print(f"warning: occupation {state.tail_occupation:.2e} at the grid top; "
              f"raise eps_max", file=sys.stderr)

    _write_state(outdir / "state.csv", cfg, state, grids)
    obs = collect_observables(state, rates, grids, cfg.physics)
    payload = obs.as_dict()
    i1, i2 = electronic_current(state, rates, grids)
    payload.update(eps_F_meV=state.eps_F, I_subband2_form=i2,
                   iterations=state.iterations, residual_norm=state.residual_norm,
                   config_sha256=cfg.sha256(), version=__version__)
    (outdir / "observables.json").write_text(json.dumps(payload, indent=2,
                                                        sort_keys=True) + "\n")

    if args.dump_rates:
        write_csv(outdir / "rates.csv", _meta(cfg, V_meV=args.voltage),
                  ["eps_kin", "Gin1", "Gout1", "Gin2", "Gout2"],
                  zip(grids.eps_kin, rates.gin1, rates.gout1,
                      rates.gin2, rates.gout2))

    if args.oracle:
        icfg = IntegratorConfig()
        oracle = relax_to_steady(cfg.left, cfg.right, BiasPoint(args.voltage),
                                 grids, cfg.physics, icfg)
        gap = max(
            float(np.max(np.abs(oracle.n1 - state.n1))),
            float(np.max(np.abs(oracle.n2 - state.n2))),
            float(np.max(np.abs(oracle.na - state.na))),
        )
        print(f"oracle max |difference| = {gap:.3e}", file=sys.stderr)
    return 0


def cmd_sweep(cfg: RunConfig, args, outdir: Path, trace) -> int:
    v_start, v_stop, v_steps = cfg.sweep
    v_values = np.linspace(v_start, v_stop, v_steps)
    grids = cfg.grids_for(float(np.max(np.abs(v_values))))
    result = voltage_sweep(v_values, cfg.left, cfg.right, grids, cfg.physics,
                           cfg.solver, trace=trace)

    rows, iv, pvi, dens, split = [], [], [], [], []
    for point in result.points:
        if not point.ok:
            continue
        state = point.state
        rates = total_rates(cfg.left, cfg.right, BiasPoint(point.V), grids, cfg.physics)
        obs = collect_observables(state, rates, grids, cfg.physics)
        rows.append((obs.V, obs.I, obs.P, obs.eta, obs.D, obs.Omega_R,
                     obs.splitting, obs.eta_freespace))
        iv.append((obs.V, obs.I))
        pvi.append((obs.I, obs.P))
        dens.append((obs.V, 2.0 * grids.density(state.n1), 2.0 * grids.density(state.n2)))
        split.append((obs.V, obs.splitting * HBAR))
        if args.dump_states:
            _write_state(outdir / f"state_V{point.V:.6g}.csv", cfg, state, grids)

    meta = _meta(cfg, v_start=v_start, v_stop=v_stop, v_steps=v_steps)
    write_csv(outdir / "sweep.csv", meta,
              ["V", "I", "P", "eta", "D", "Omega_R", "splitting", "eta_freespace"],
              rows)
    write_csv(outdir / "iv.csv", meta, ["V_meV", "I_per_ps_cm2"], iv)
    write_csv(outdir / "photon_vs_current.csv", meta,
              ["I_per_ps_cm2", "P_per_ps_cm2"], pvi)
    write_csv(outdir / "densities.csv", meta,
              ["V_meV", "n1_density_cm^-2", "n2_density_cm^-2"], dens)
    write_csv(outdir / "splitting.csv", meta, ["V_meV", "splitting_meV"], split)

    if result.n_failed:
        write_csv(outdir / "failures.csv", meta, ["V_meV", "error"],
                  [(p.V, p.error) for p in result.points if not p.ok])
        print(f"{result.n_failed} of {len(result.points)} sweep points failed",
              file=sys.stderr)
        return 4
    return 0


def cmd_spectrum(cfg: RunConfig, args, outdir: Path, trace) -> int:
    if args.voltage is None:
        raise ConfigError("missing required value 'voltage' (pass --voltage, meV)")
    grids = cfg.grids_for(args.voltage)
    state, _rates = solve_at(args.voltage, cfg, grids, trace)

    omega = default_omega_grid(cfg.physics, points=cfg.spectrum_points,
                               band=cfg.spectrum_band)
    omega_grid, intensity, peaks = anticrossing_map(
        state, grids, cfg.physics, omega, normalize=args.normalize_spectrum)
    d = float(np.dot(grids.w_k, state.n1 - state.n2))

    meta = _meta(cfg, V_meV=args.voltage, omega_unit="meV")
    spec_rows, map_rows, peak_rows = [], [], []
    for iq in range(grids.nq):
        from .spectra import spectrum_kernel
        s = spectrum_kernel(omega_grid, grids.omega_c[iq], grids.chi[iq],
                            state.na[iq], d, cfg.physics)
        wc = grids.omega_c[iq] * HBAR
        spec_rows += [(grids.q[iq], wc, w * HBAR, v.real, v.imag)
                      for w, v in zip(omega_grid, s)]
        map_rows += [(w * HBAR, wc, y) for w, y in zip(omega_grid, intensity[iq])]
        hi, lo = polariton_roots(grids.omega_c[iq], grids.chi[iq], d, cfg.physics)
        ps = peaks[iq]
        peak_rows.append((grids.q[iq], wc, ps[0] * HBAR, ps[-1] * HBAR,
                          lo.real * HBAR, hi.real * HBAR))

    write_csv(outdir / "spectrum.csv", meta,
              ["q_nm^-1", "omega_c_meV", "omega_meV", "Re_S", "Im_S"], spec_rows)
    write_csv(outdir / "anticrossing_map.csv", meta,
              ["omega_meV", "omega_c_meV", "intensity"], map_rows)
    write_csv(outdir / "peaks.csv", meta,
              ["q_nm^-1", "omega_c_meV", "peak_lo_meV", "peak_hi_meV",
               "root_lo_meV", "root_hi_meV"], peak_rows)
    return 0


def _efficiency_point(kind, scale, cfg: RunConfig):
    if kind == "chi":
        physics = replace(cfg.physics,
                          rabi_cal_freq=cfg.physics.rabi_cal_freq * scale)
    else:
        physics = replace(cfg.physics, tau_inv=cfg.physics.tau_inv / scale)
    sub = replace(cfg, physics=physics)
    V = physics.E12
    grids = sub.grids_for(V)
    try:
        state, rates = solve_at(V, sub, grids)
    except (NonConvergenceError, IntegrationError) as exc:
        return (scale, None, str(exc))
    obs = collect_observables(state, rates, grids, physics)
    return (scale, obs, None)


def _loglog_slope(x, y):
    lx, ly = np.log10(x), np.log10(y)
    return float(np.polyfit(lx, ly, 1)[0])


def cmd_efficiency(cfg: RunConfig, args, outdir: Path, trace) -> int:
    jobs = max(args.jobs, 1)

    def run(kind, scales):
        if jobs == 1:
            return [_efficiency_point(kind, s, cfg) for s in scales]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda s: _efficiency_point(kind, s, cfg), scales))

    chi_res = run("chi", cfg.chi_scales)
    tau_res = run("tau", cfg.tau_scales)
    meta = _meta(cfg, V_meV=cfg.physics.E12)

    chi_ok = [(s, o) for s, o, err in chi_res if o is not None]
    tau_ok = [(s, o) for s, o, err in tau_res if o is not None]
    write_csv(outdir / "efficiency_chi.csv", meta,
              ["chi_scale", "Omega_R", "eta", "I", "P"],
              [(s, o.Omega_R, o.eta, o.I, o.P) for s, o in chi_ok])
    write_csv(outdir / "efficiency_tau.csv", meta,
              ["tau_scale", "eta", "I", "P"],
              [(s, o.eta, o.I, o.P) for s, o in tau_ok])

    summary = {"config_sha256": cfg.sha256(), "version": __version__}
    if len(chi_ok) >= 3:
        omega_r = np.array([o.Omega_R for _, o in chi_ok])
        eta = np.array([o.eta for _, o in chi_ok])
        window = omega_r <= 10.0 * omega_r.min()
        if np.sum(window) >= 2:
            summary["weak_coupling_slope"] = _loglog_slope(omega_r[window], eta[window])
        summary["top_slope"] = _loglog_slope(omega_r[-2:], eta[-2:])
    if len(tau_ok) >= 2:
        base = dict(tau_ok).get(1.0)
        twice = dict(tau_ok).get(2.0)
        if base is not None and twice is not None:
            summary["eta_ratio_tau_doubling"] = twice.eta / base.eta
    (outdir / "efficiency_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")

    failures = [(s, err) for s, o, err in chi_res + tau_res if o is None]
    if failures:
        write_csv(outdir / "failures.csv", meta, ["scale", "error"], failures)
        print(f"{len(failures)} study points failed", file=sys.stderr)
        return 4
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isbel",
        description="Intersubband microcavity electroluminescence simulator")
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--trace", action="store_true",
                        help="emit per-iteration solver diagnostics as JSON lines")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for independent study points")
    parser.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                        help="override a config value, e.g. physics.E12=100")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="single bias point")
    p_solve.add_argument("--voltage", type=float, help="applied bias qV in meV")
    p_solve.add_argument("--dump-rates", action="store_true")
    p_solve.add_argument("--oracle", action="store_true",
                         help="cross-check against time integration")
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="voltage sweep with warm starts")
    p_sweep.add_argument("--dump-states", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_spec = sub.add_parser("spectrum", help="emission spectra and anticrossing map")
    p_spec.add_argument("--voltage", type=float, help="applied bias qV in meV")
    p_spec.add_argument("--normalize-spectrum", action="store_true")
    p_spec.set_defaults(func=cmd_spectrum)

    p_eff = sub.add_parser("efficiency", help="efficiency vs coupling and lifetime")
    p_eff.set_defaults(func=cmd_efficiency)
    return parser


def _collect_overrides(pairs):
    overrides = {}
    for item in pairs:
        try:
            target, value = item.split("=", 1)
            section, key = target.split(".", 1)
        except ValueError:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}") from None
        overrides[(section.strip(), key.strip())] = value.strip()
    return overrides


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides=_collect_overrides(args.set))
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        return args.func(cfg, args, outdir, _make_trace(args.trace))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergenceError, IntegrationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
