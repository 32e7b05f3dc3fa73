"""Run configuration: a flat TOML-compatible key = value format.

A deliberately small parser (sections, scalar and nested-array values) so
that diagnostics can carry exact line numbers, including both locations of
a duplicated key.

Model parameters are given either directly in units of gamma
(kappa, g, delta_A, delta_C, Gamma, N) or in physical megahertz
(gamma_MHz, kappa_MHz, g_MHz, deltaA_MHz, deltaC_MHz, Gamma_rel, N).
Mixing the two systems in one file is rejected.  Times suffixed _ms are
converted via t[1/gamma] = t[s] * 2*pi * gamma_MHz * 1e6 and therefore
require gamma_MHz.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import ModelParams

__all__ = ["RunConfig", "parse_config", "emit_config", "ms_to_sim_time"]

GAMMA_UNIT_KEYS = {"kappa", "g", "delta_A", "delta_C", "Gamma", "N"}
PHYSICAL_KEYS = {"gamma_MHz", "kappa_MHz", "g_MHz", "deltaA_MHz",
                 "deltaC_MHz", "Gamma_rel", "N"}

KNOWN_SECTIONS = {
    "params", "output", "steady", "phase_diagram", "simulate",
    "hysteresis", "pulse",
}

KNOWN_KEYS = {
    "params": GAMMA_UNIT_KEYS | PHYSICAL_KEYS,
    "output": {"dir", "heatmap", "seed"},
    "steady": {"eta", "lambda", "G", "scan", "scan_min", "scan_max",
               "scan_points", "scan_scale"},
    "phase_diagram": {"eta_min", "eta_max", "eta_points", "eta_scale",
                      "repump_param", "repump_min", "repump_max",
                      "repump_points", "repump_scale"},
    "simulate": {"initial", "seed_alpha", "t_end", "t_end_ms", "stride",
                 "log_spaced", "rtol", "atol",
                 "loss", "loss_rate_g", "loss_rate_e", "loss_rate_f",
                 "eta", "eta_kind", "eta_low", "eta_high", "eta_t_up",
                 "eta_t_down", "eta_t_up_ms", "eta_t_down_ms", "eta_cycles",
                 "eta_period", "eta_period_ms", "eta_duty", "eta_knots",
                 "lambda", "lambda_G", "lambda_kind", "lambda_low",
                 "lambda_high", "lambda_t_up", "lambda_t_down",
                 "lambda_t_up_ms", "lambda_t_down_ms", "lambda_cycles",
                 "lambda_period", "lambda_period_ms", "lambda_duty",
                 "lambda_knots",
                 "detect_low", "detect_high"},
    "hysteresis": {"target", "min", "max", "G_min", "G_max",
                   "t_up", "t_down", "t_up_ms", "t_down_ms", "cycles",
                   "fixed_eta", "fixed_lambda", "fixed_G", "loss",
                   "loss_rate_g", "loss_rate_e", "loss_rate_f",
                   "grid_points", "grid_scale", "stride"},
    "pulse": {"eta", "G_high", "lambda_high", "period", "period_ms", "duty",
              "periods", "t_end", "t_end_ms", "stride", "seed_alpha",
              "loss", "loss_rate_g", "loss_rate_e", "loss_rate_f",
              "detect_low", "detect_high"},
}


@dataclass
class RunConfig:
    params: ModelParams
    gamma_MHz: float | None
    sections: dict                 # section -> {key: value}
    key_lines: dict = field(default_factory=dict)  # (section, key) -> line no

    def section(self, name):
        return self.sections.get(name, {})

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section, key):
        try:
            return self.sections[section][key]
        except KeyError:
            raise ConfigError(f"missing required key '{key}' in [{section}]")

    def to_ms(self, t_sim):
        if self.gamma_MHz is None:
            raise ConfigError("physical-time output requires gamma_MHz")
        return t_sim / (2 * math.pi * self.gamma_MHz * 1e6) * 1e3


def ms_to_sim_time(t_ms: float, gamma_MHz: float) -> float:
    return t_ms * 1e-3 * (2 * math.pi * gamma_MHz * 1e6)


def _strip_comment(line):
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out)


def _parse_value(raw, lineno):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigError(f"line {lineno}: cannot parse value {raw!r} "
                          "(numbers, true/false, quoted strings and "
                          "[...] arrays are accepted)")


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a configuration file."""
    sections: dict = {}
    key_lines: dict = {}
    current = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = _strip_comment(rawline).strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().replace("-", "_")
            if current not in KNOWN_SECTIONS:
                raise ConfigError(
                    f"line {lineno}: unknown section [{current}] "
                    f"(known: {', '.join(sorted(KNOWN_SECTIONS))})")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS[current]:
            raise ConfigError(
                f"line {lineno}: unknown key '{key}' in [{current}]")
        if key in sections[current]:
            raise ConfigError(
                f"line {lineno}: duplicate key '{key}' in [{current}] "
                f"(first defined at line {key_lines[(current, key)]})")
        sections[current][key] = _parse_value(raw.strip(), lineno)
        key_lines[(current, key)] = lineno

    params, gamma_mhz = _build_params(sections)
    return RunConfig(params=params, gamma_MHz=gamma_mhz,
                     sections=sections, key_lines=key_lines)


def _build_params(sections):
    if "params" not in sections or not sections["params"]:
        raise ConfigError(
            "missing [params] section; required keys are either "
            f"{sorted(GAMMA_UNIT_KEYS - {'delta_C'})} (gamma units) or "
            f"{sorted(PHYSICAL_KEYS - {'deltaC_MHz'})} (physical MHz)")
    par = sections["params"]
    used_gamma = set(par) & (GAMMA_UNIT_KEYS - {"N"})
    used_phys = set(par) & (PHYSICAL_KEYS - {"N"})
    if used_gamma and used_phys:
        raise ConfigError(
            "mixing unit systems in [params] is rejected: "
            f"gamma-unit keys {sorted(used_gamma)} vs "
            f"physical keys {sorted(used_phys)}")
    if "N" not in par:
        raise ConfigError("missing required key 'N' in [params]")
    n_atoms = float(par["N"])

    if used_phys:
        for k in ("gamma_MHz", "kappa_MHz", "g_MHz", "deltaA_MHz",
                  "Gamma_rel"):
            if k not in par:
                raise ConfigError(f"missing required key '{k}' in [params] "
                                  "(physical unit system)")
        gamma_mhz = float(par["gamma_MHz"])
        if gamma_mhz <= 0:
            raise ConfigError("gamma_MHz must be positive")
        params = ModelParams(
            Gamma=float(par["Gamma_rel"]),
            kappa=float(par["kappa_MHz"]) / gamma_mhz,
            g=float(par["g_MHz"]) / gamma_mhz,
            delta_A=float(par["deltaA_MHz"]) / gamma_mhz,
            delta_C=float(par.get("deltaC_MHz", 0.0)) / gamma_mhz,
            n_atoms=n_atoms,
        )
        return params, gamma_mhz

    for k in ("kappa", "g", "delta_A", "Gamma"):
        if k not in par:
            raise ConfigError(f"missing required key '{k}' in [params] "
                              "(gamma unit system)")
    params = ModelParams(
        Gamma=float(par["Gamma"]),
        kappa=float(par["kappa"]),
        g=float(par["g"]),
        delta_A=float(par["delta_A"]),
        delta_C=float(par.get("delta_C", 0.0)),
        n_atoms=n_atoms,
    )
    return params, None


def emit_config(config: RunConfig) -> str:
    """Render a config back to text; parse(emit(c)) reproduces c."""
    lines = []
    for section in sorted(config.sections):
        lines.append(f"[{section}]")
        for key, value in config.sections[section].items():
            lines.append(f"{key} = {json.dumps(value)}")
        lines.append("")
    return "\n".join(lines)
