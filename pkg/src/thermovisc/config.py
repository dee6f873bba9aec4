"""Plain-text configuration: `key = value` lines, `#` comments.

Unknown keys, type mismatches, and invariant violations are reported as
:class:`ConfigError` with the offending line number.  The resolved
configuration (all keys, defaults filled in) is echoed into every output
directory for reproducibility.

Loads come from named presets so that configs stay expression-free:

  none        all data zero
  demo        smooth body force, initial displacement/temperature bumps,
              slowly cooling external temperature
  positivity  demo mechanics, theta_0 = theta_c, external temperature
              theta_flat(t) = exp(-t) (the exponential-floor scenario)

Programmatic runs may replace any load callable on the built SimConfig.
"""

from __future__ import annotations

import math

import numpy as np

from .constitutive import MaterialModel
from .nonlinear_sim import SimConfig

__all__ = ["ConfigError", "parse_config", "build_material", "build_sim_config",
           "render_config", "DEFAULTS", "LOAD_PRESETS"]


class ConfigError(ValueError):
    """Configuration problem (CLI exit code 2)."""


def _parse_bool(s):
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s}")


# key -> (type, default)
DEFAULTS = {
    # material
    "theta_c": (float, 1.0),
    "C1": (float, 10.0),
    "p": (int, 4),
    "q": (int, 4),
    "kappa": (float, 1.0),
    "bump_amplitude": (float, 0.1),
    "bump_width": (float, 1.0),
    "beta0": (float, 0.0),
    "alpha": (float, 2.0),
    "Lambda": (float, 10.0),
    "kappa0": (float, 1.0),
    "eta_K": (float, 0.25),
    "eta_D": (float, 0.25),
    "c_H": (float, 1e-3),
    # grid
    "nx": (int, 32),
    "ny": (int, 32),
    # stepping and scaling
    "dt": (float, 1e-3),
    "T": (float, 0.5),
    "eps": (float, 0.1),
    "nu": (float, 0.01),
    "model": (str, "nonlinear"),
    "load_preset": (str, "demo"),
    "load_amplitude": (float, 1.0),
    "pg_tol": (float, 1e-9),
    "max_iters": (int, 500),
    "det_floor": (float, 1e-3),
    "heat_rtol": (float, 1e-10),
    # harness
    "seed": (int, 0),
    "validate_samples": (int, 10000),
    "dump_every": (int, 0),
}

_MATERIAL_KEYS = ("theta_c", "C1", "p", "q", "kappa", "bump_amplitude",
                  "bump_width", "beta0", "alpha", "Lambda", "kappa0",
                  "eta_K", "eta_D", "c_H")


def parse_config(text):
    """Parse and fully validate a config; returns the resolved key dict."""
    values = dict()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        typ = DEFAULTS[key][0]
        try:
            if typ is bool:
                values[key] = _parse_bool(val)
            else:
                values[key] = typ(val)
        except ValueError as exc:
            raise ConfigError(
                f"line {lineno}: cannot parse {key} = {val!r} as {typ.__name__} ({exc})"
            ) from exc
        values.setdefault("_lines", {})[key] = lineno
    lines = values.pop("_lines", {})
    resolved = {k: values.get(k, d[1]) for k, d in DEFAULTS.items()}

    if resolved["model"] not in ("nonlinear", "linear"):
        raise ConfigError(
            f"line {lines.get('model', '?')}: model must be 'nonlinear' or 'linear'")
    if resolved["load_preset"] not in LOAD_PRESETS:
        raise ConfigError(
            f"line {lines.get('load_preset', '?')}: unknown load preset "
            f"{resolved['load_preset']!r}; available: {sorted(LOAD_PRESETS)}")
    if resolved["nx"] < 4 or resolved["ny"] < 4:
        raise ConfigError("nx and ny must be at least 4")

    # constitutive/stepping invariants, reported with the config line
    try:
        build_material(resolved)
    except ValueError as exc:
        key = _blame_key(str(exc))
        raise ConfigError(f"line {lines.get(key, '?')}: {exc}") from exc
    try:
        _sim_kwargs_check(resolved)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return resolved


def _blame_key(msg):
    for key in _MATERIAL_KEYS:
        if msg.startswith(key) or f" {key} " in msg or msg.startswith(f"{key}_"):
            return key
    head = msg.split(" ", 1)[0]
    return head if head in DEFAULTS else "?"


def _sim_kwargs_check(resolved):
    SimConfig(dt=resolved["dt"], T=resolved["T"], eps=resolved["eps"],
              alpha=resolved["alpha"], nu=resolved["nu"],
              Lambda=resolved["Lambda"], nx=resolved["nx"], ny=resolved["ny"])


def build_material(resolved):
    return MaterialModel(**{k: resolved[k] for k in _MATERIAL_KEYS})


def build_sim_config(resolved, eps=None, alpha=None):
    """SimConfig with preset loads; eps/alpha may be overridden (sweeps)."""
    eff_eps = resolved["eps"] if eps is None else float(eps)
    eff_alpha = resolved["alpha"] if alpha is None else float(alpha)
    loads = make_loads(resolved, eff_eps, eff_alpha)
    return SimConfig(
        dt=resolved["dt"], T=resolved["T"],
        eps=eff_eps,
        alpha=eff_alpha,
        nu=resolved["nu"], Lambda=resolved["Lambda"],
        nx=resolved["nx"], ny=resolved["ny"],
        f=loads["f"], g=loads["g"], mu_flat=loads["mu_flat"],
        u0=loads["u0"], mu0=loads["mu0"],
        pg_tol=resolved["pg_tol"], max_iters=resolved["max_iters"],
        det_floor=resolved["det_floor"], heat_rtol=resolved["heat_rtol"],
    )


def render_config(resolved):
    lines = [f"{k} = {resolved[k]}" for k in sorted(DEFAULTS)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# load presets (module-level callables so sweep workers can pickle configs)
# ---------------------------------------------------------------------------

class ZeroVec:
    def __call__(self, t, x=None):
        x = t if x is None else x
        return np.zeros((np.asarray(x).shape[0], 2))


class ZeroScal:
    def __call__(self, t, x=None):
        x = t if x is None else x
        return np.zeros(np.asarray(x).shape[0])


class DemoBodyForce:
    """Smooth, time-periodic volume force; W^{1,1} in time."""

    def __init__(self, amplitude=1.0):
        self.amplitude = amplitude

    def __call__(self, t, x):
        return self.amplitude * 0.5 * np.column_stack([
            np.sin(np.pi * x[:, 1]) * np.sin(2.0 * np.pi * t),
            0.3 * np.cos(np.pi * x[:, 0]) * np.cos(2.0 * np.pi * t),
        ])


class DemoInitialDisplacement:
    """Smooth initial displacement vanishing on the clamped edge x1 = 0."""

    def __init__(self, amplitude=1.0):
        self.amplitude = amplitude

    def __call__(self, x):
        return self.amplitude * 0.3 * np.column_stack([
            x[:, 0] * x[:, 1] * (1.0 - x[:, 1]),
            -0.5 * x[:, 0] * (1.0 - 0.5 * x[:, 0]),
        ])


class DemoInitialTemperature:
    def __init__(self, amplitude=1.0):
        self.amplitude = amplitude

    def __call__(self, x):
        return self.amplitude * 0.5 * (x[:, 1] - 0.5)


class DemoExternalTemperature:
    """Slow linear cooling of the rescaled external temperature."""

    def __init__(self, amplitude=1.0):
        self.amplitude = amplitude

    def __call__(self, t, x):
        return np.full(np.asarray(x).shape[0], -0.5 * self.amplitude * t)


class FloorExternalTemperature:
    """theta_flat(t) = exp(-t), expressed as the rescaled deviation."""

    def __init__(self, theta_c, eps, alpha):
        self.theta_c = theta_c
        self.scale = eps**alpha

    def __call__(self, t, x):
        val = (math.exp(-t) - self.theta_c) / self.scale
        return np.full(np.asarray(x).shape[0], val)


def make_loads(resolved, eps=None, alpha=None):
    """Preset loads; the effective eps/alpha matter only for `positivity`."""
    preset = resolved["load_preset"]
    amp = resolved["load_amplitude"]
    eps = resolved["eps"] if eps is None else eps
    alpha = resolved["alpha"] if alpha is None else alpha
    zero_v, zero_s = ZeroVec(), ZeroScal()
    if preset == "none":
        return {"f": zero_v, "g": zero_v, "mu_flat": zero_s,
                "u0": zero_v, "mu0": zero_s}
    if preset == "demo":
        return {"f": DemoBodyForce(amp), "g": zero_v,
                "mu_flat": DemoExternalTemperature(amp),
                "u0": DemoInitialDisplacement(amp),
                "mu0": DemoInitialTemperature(amp)}
    if preset == "positivity":
        return {"f": DemoBodyForce(amp), "g": zero_v,
                "mu_flat": FloorExternalTemperature(resolved["theta_c"], eps, alpha),
                "u0": DemoInitialDisplacement(amp),
                "mu0": ZeroScal()}
    raise ConfigError(f"unknown load preset {preset!r}")


LOAD_PRESETS = ("none", "demo", "positivity")
