"""Run configuration: INI parsing, validation, defaults, and hashing.

Flat key=value sections keep reproduction recipes diffable; every key has a
default tied to the physics section, unknown keys are rejected by name, and
the resolved configuration hashes into every output file header.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field

from .contacts import ReservoirParams
from .core import PhysicalParams, build_grids
from .steady import SolverConfig

_PHYSICS_KEYS = ("E12", "m_star", "eps_r", "theta_res", "gamma", "Gamma_X",
                 "Gamma_Y", "Gamma_S", "Gamma_Z", "tau_inv", "T",
                 "rabi_cal_freq", "rabi_cal_density")
_CONTACT_KEYS = tuple(f"{side}_{name}" for side in ("left", "right")
                      for name in ("E0", "mu", "Gamma_amp", "sigma"))
_SCHEMA = {
    "physics": _PHYSICS_KEYS,
    "contacts": _CONTACT_KEYS,
    "grids": ("nk", "nq", "eps_max", "omega_lo", "omega_hi"),
    "solver": ("residual_tol", "max_iter", "fd_step", "init_step",
               "backtrack", "min_step"),
    "sweep": ("v_start", "v_stop", "v_steps"),
    "spectrum": ("omega_lo", "omega_hi", "points"),
    "efficiency": ("chi_scales", "tau_scales"),
}
_INT_KEYS = {("grids", "nk"), ("grids", "nq"), ("solver", "max_iter"),
             ("sweep", "v_steps"), ("spectrum", "points")}
_LIST_KEYS = {("efficiency", "chi_scales"), ("efficiency", "tau_scales")}


class ConfigError(Exception):
    """Invalid or unknown configuration input; message names the key."""


def _parse_value(section, key, raw):
    raw = raw.strip()
    try:
        if (section, key) in _INT_KEYS:
            return int(raw)
        if (section, key) in _LIST_KEYS:
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse value {raw!r}") from None


@dataclass(frozen=True)
class RunConfig:
    physics: PhysicalParams
    left: ReservoirParams
    right: ReservoirParams
    solver: SolverConfig
    nk: int = 40
    nq: int = 16
    eps_max: float | None = None      # None: resolved from the bias range
    omega_band: tuple = (0.6, 1.4)
    sweep: tuple = (0.0, 0.0, 0)      # filled from physics when not configured
    spectrum_band: tuple = (0.5, 1.5)
    spectrum_points: int = 2001
    chi_scales: tuple = ()
    tau_scales: tuple = (0.5, 1.0, 2.0)
    resolved: dict = field(default_factory=dict, compare=False)

    def sha256(self) -> str:
        lines = [f"{sec}.{key}={self.resolved[sec][key]!r}"
                 for sec in sorted(self.resolved)
                 for key in sorted(self.resolved[sec])]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    def resolve_eps_max(self, v_max: float) -> float:
        """Energy-grid top covering thermal tails and the contact-miniband
        alignment window over biases up to v_max (meV)."""
        if self.eps_max is not None:
            return self.eps_max
        p = self.physics
        kT = 1.0 / p.beta
        mu_top = max(self.left.mu, self.right.mu) + 0.5 * abs(v_max)
        align = max(self.left.E0 + 0.5 * abs(v_max) + 5.0 * self.left.sigma,
                    self.right.E0 + 0.5 * abs(v_max) + 5.0 * self.right.sigma)
        return max(p.E12, mu_top + 10.0 * kT, align)

    def grids_for(self, v_max: float):
        return build_grids(self.physics, nk=self.nk, nq=self.nq,
                           eps_max=self.resolve_eps_max(v_max),
                           omega_band=self.omega_band)


def _defaults(physics: PhysicalParams) -> dict:
    e12 = physics.E12
    return {
        "contacts": {
            "left_E0": 0.5 * e12, "left_mu": e12 / 3.0,
            "left_Gamma_amp": 2.5, "left_sigma": 0.1 * e12,
            "right_E0": 0.5 * e12, "right_mu": e12 / 3.0,
            "right_Gamma_amp": 2.5, "right_sigma": 0.1 * e12,
        },
        "grids": {"nk": 40, "nq": 16, "eps_max": None,
                  "omega_lo": 0.6, "omega_hi": 1.4},
        "solver": {"residual_tol": 1e-10, "max_iter": 200, "fd_step": 1e-7,
                   "init_step": 1.0, "backtrack": 0.5, "min_step": 2.0**-20},
        "sweep": {"v_start": 0.3 * e12, "v_stop": 1.2 * e12, "v_steps": 19},
        "spectrum": {"omega_lo": 0.5, "omega_hi": 1.5, "points": 2001},
        "efficiency": {
            "chi_scales": (0.5, 0.707, 1.0, 1.414, 2.0, 2.83, 4.0, 5.66,
                           8.0, 11.3, 16.0, 22.6, 32.0),
            "tau_scales": (0.5, 1.0, 2.0),
        },
    }


def load_config(path=None, text=None, overrides=None) -> RunConfig:
    """Assemble a RunConfig from an INI file/text plus CLI overrides.

    overrides maps (section, key) to raw string values and wins over the
    file.  Unknown sections or keys raise ConfigError naming them; sweep
    bounds must be given together.
    """
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path!r}")
    elif text is not None:
        parser.read_file(io.StringIO(text))

    values: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            match = next((k for k in _SCHEMA[section] if k.lower() == key.lower()), None)
            if match is None:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            values.setdefault(section, {})[match] = _parse_value(section, match, raw)
    for (section, key), raw in (overrides or {}).items():
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown override [{section}] {key!r}")
        values.setdefault(section, {})[key] = _parse_value(section, key, str(raw))

    phys_kw = values.get("physics", {})
    try:
        physics = PhysicalParams(**phys_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[physics] {exc}") from None

    defaults = _defaults(physics)
    resolved = {"physics": {k: getattr(physics, k) for k in _PHYSICS_KEYS}}
    for section, spec_defaults in defaults.items():
        got = values.get(section, {})
        merged = dict(spec_defaults)
        merged.update(got)
        resolved[section] = merged

    sweep_given = values.get("sweep", {})
    if sweep_given and len(sweep_given) < 3:
        missing = next(k for k in ("v_start", "v_stop", "v_steps") if k not in sweep_given)
        raise ConfigError(f"missing required key {missing!r} in [sweep]")

    c = resolved["contacts"]
    try:
        left = ReservoirParams("left", c["left_E0"], c["left_mu"],
                               c["left_Gamma_amp"], c["left_sigma"])
        right = ReservoirParams("right", c["right_E0"], c["right_mu"],
                                c["right_Gamma_amp"], c["right_sigma"])
    except ValueError as exc:
        raise ConfigError(f"[contacts] {exc}") from None

    s = resolved["solver"]
    try:
        solver = SolverConfig(residual_tol=s["residual_tol"], max_iter=s["max_iter"],
                              fd_step=s["fd_step"], init_step=s["init_step"],
                              backtrack=s["backtrack"], min_step=s["min_step"])
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None

    g, sw, sp, eff = (resolved["grids"], resolved["sweep"],
                      resolved["spectrum"], resolved["efficiency"])
    if not g["nk"] >= 8:
        raise ConfigError("[grids] nk must be at least 8")
    if not g["nq"] >= 4:
        raise ConfigError("[grids] nq must be at least 4")
    if sw["v_steps"] < 1:
        raise ConfigError("[sweep] v_steps must be at least 1")
    if not math.isfinite(sw["v_start"]) or not math.isfinite(sw["v_stop"]):
        raise ConfigError("[sweep] bounds must be finite")

    return RunConfig(
        physics=physics, left=left, right=right, solver=solver,
        nk=g["nk"], nq=g["nq"], eps_max=g["eps_max"],
        omega_band=(g["omega_lo"], g["omega_hi"]),
        sweep=(sw["v_start"], sw["v_stop"], sw["v_steps"]),
        spectrum_band=(sp["omega_lo"], sp["omega_hi"]),
        spectrum_points=sp["points"],
        chi_scales=tuple(eff["chi_scales"]), tau_scales=tuple(eff["tau_scales"]),
        resolved=resolved,
    )
