"""Experiment configuration: a sectioned key-value file plus command-line overrides.

The file format is INI (``configparser``).  The ``[experiment]`` section holds
the shared keys; every subcommand has its own section.  Values are written in
a canonical form (``repr`` for reals) so that writing a parsed file
reproduces it byte for byte.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .dynamics import make_dynamics
from .observables import MAX_DEGREE

SYSTEM_MANIFOLDS = {"cat": "torus2", "rotation": "circle"}
OBSERVABLES = ("cos1", "zero", "z1")
MAX_K = (MAX_DEGREE + 1) // 2

EXPERIMENT_DEFAULTS = {
    "system": "cat",
    "manifold": "",
    "k": 3,
    "observable": "cos1",
    "radius": 1.0,
    "seed": 0,
    "measure": "lebesgue",
    "n": 10000,
}

SECTION_DEFAULTS = {
    "embed": {},
    "bilip": {"probes": 100, "r0": 0.0, "min_finite": 0.99},
    "intersect": {"eps_sep": 0.2, "delta_emb": "1e-4", "pairs": 100000, "max_rate": 0.0},
    "immersion": {"alphas": 100, "points": 100, "min_fraction": 1.0, "trials": 100,
                  "max_residual": 1e-7},
    "svbound": {"m": 2, "rows": 1, "p": 1, "eps": 0.1, "draws": 100000, "instances": 1},
    "predict-error": {"probes": 64, "eps_min": 10 ** -2.5, "eps_max": 0.1, "cells": 8,
                      "min_slope": 0.9},
    "lyapunov": {"eps": "0.02,0.05,0.1", "m_grid": "10,30,100,300,1000", "transient": 100,
                 "check_eps": 0.05, "min_frequency": 0.95},
    "project": {"planes": 100, "points": 100, "samples": 10000},
    "accept": {"profile": "quick"},
}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {raw!r}") from exc
    return raw


def parse_list(raw) -> list[float]:
    if isinstance(raw, (int, float)):
        return [float(raw)]
    return [float(t) for t in str(raw).split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    system: str = "cat"
    manifold: str = ""
    k: int = 3
    observable: str = "cos1"
    radius: float = 1.0
    seed: int = 0
    measure: str = "lebesgue"
    n: int = 10000
    sections: dict = field(default_factory=lambda: {s: dict(v) for s, v in SECTION_DEFAULTS.items()})

    def __post_init__(self):
        if not self.manifold:
            self.manifold = SYSTEM_MANIFOLDS.get(self.system.split(":")[0], "")

    def section(self, name: str) -> dict:
        return self.sections[name]

    def validate(self) -> "ExperimentConfig":
        base = self.system.split(":")[0]
        if base not in SYSTEM_MANIFOLDS:
            raise ConfigError("system", f"unknown system {self.system!r}")
        try:
            make_dynamics(self.system)
        except (KeyError, ValueError) as exc:
            raise ConfigError("system", str(exc)) from exc
        if self.manifold != SYSTEM_MANIFOLDS[base]:
            raise ConfigError("manifold", f"{self.system!r} lives on {SYSTEM_MANIFOLDS[base]!r}, not {self.manifold!r}")
        if self.k < 1:
            raise ConfigError("k", f"k must be >= 1, got {self.k}")
        if self.k > MAX_K:
            raise ConfigError("k", f"k = {self.k} needs degree {2 * self.k - 1} > {MAX_DEGREE}")
        if self.observable not in OBSERVABLES:
            raise ConfigError("observable", f"unknown observable {self.observable!r}")
        if self.radius < 0:
            raise ConfigError("radius", "must be >= 0")
        if self.n < 1:
            raise ConfigError("n", "must be >= 1")
        name = self.measure.split(":")[0]
        if name not in ("lebesgue", "orbit", "cantor"):
            raise ConfigError("measure", f"unknown measure {self.measure!r}")
        for sec, keys in self.sections.items():
            if sec not in SECTION_DEFAULTS:
                raise ConfigError(sec, "unknown section")
            for key in keys:
                if key not in SECTION_DEFAULTS[sec]:
                    raise ConfigError(key, f"unknown key in [{sec}]")
        return self

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in EXPERIMENT_DEFAULTS}
        out["sections"] = {s: dict(v) for s, v in self.sections.items()}
        return out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {k: format_value(getattr(self, k)) for k in EXPERIMENT_DEFAULTS}
        for sec in SECTION_DEFAULTS:
            cp[sec] = {k: format_value(v) for k, v in self.sections[sec].items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        cfg = cls()
        for sec in cp.sections():
            if sec == "experiment":
                for key, raw in cp[sec].items():
                    if key not in EXPERIMENT_DEFAULTS:
                        raise ConfigError(key, "unknown key in [experiment]")
                    setattr(cfg, key, _coerce(key, raw, EXPERIMENT_DEFAULTS[key]))
            elif sec in SECTION_DEFAULTS:
                for key, raw in cp[sec].items():
                    if key not in SECTION_DEFAULTS[sec]:
                        raise ConfigError(key, f"unknown key in [{sec}]")
                    cfg.sections[sec][key] = _coerce(key, raw, SECTION_DEFAULTS[sec][key])
            else:
                raise ConfigError(sec, "unknown section")
        if not cfg.manifold:
            cfg.manifold = SYSTEM_MANIFOLDS.get(cfg.system.split(":")[0], "")
        return cfg

    def override(self, section: str | None, values: dict) -> "ExperimentConfig":
        """Apply string overrides (e.g. from command-line flags)."""
        for key, raw in values.items():
            if raw is None:
                continue
            if key in EXPERIMENT_DEFAULTS:
                setattr(self, key, _coerce(key, str(raw), EXPERIMENT_DEFAULTS[key]))
                if key == "system":
                    self.manifold = SYSTEM_MANIFOLDS.get(self.system.split(":")[0], "")
            elif section is not None and key in SECTION_DEFAULTS[section]:
                self.sections[section][key] = _coerce(key, str(raw), SECTION_DEFAULTS[section][key])
            else:
                raise ConfigError(key, "unknown option")
        return self
