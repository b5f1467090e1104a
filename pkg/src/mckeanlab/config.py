"""INI experiment configuration.

Every experiment reads a flat, sectioned key-value file::

    [run]
    subcommand = fp-solve
    seed = 0
    output_dir = fp-heat

    [model]
    sigma = constant(1)
    eps = 0

Values are kept as the strings that were read, so writing a config back out
reproduces it byte for byte (sections and keys in sorted order). Typed access
goes through :meth:`ExperimentConfig.get`. Tolerances have documented defaults
in :data:`DEFAULT_TOLERANCES`; entries in a ``[tolerances]`` section override
them and are listed in every report.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

SUBCOMMANDS = ("fp-solve", "particles-moderated", "verify-mild", "conditional", "picard", "girsanov-check",
               "convergence-study", "selftest")

# name -> (default, meaning)
DEFAULT_TOLERANCES = {
    "max_principle": (1e-8, "relative slack on sup_t |u(t)|_inf <= |u0|_inf"),
    "energy": (1e-6, "relative slack on the energy inequality"),
    "mass": (1e-6, "absolute drift of total mass"),
    "symbol": (1e-12, "relative slack on the grid supremum of the heat symbol"),
    "operator": (0.05, "relative slack on the discrete operator inequality"),
    "mild_gap": (0.05, "relative mild-map fixed-point gap of a solver trajectory"),
    "w1_particles": (0.02, "W1 between the particle marginal and the FP density"),
    "n_se": (3.0, "Monte Carlo standard errors allowed for statistical checks"),
    "picard_ratio": (0.8, "upper bound on the fitted Picard geometric ratio"),
}

_NOT_SET = object()


def _as_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _as_int(text: str) -> int:
    """Integers, also written as 1e5."""
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"not an integer: {text!r}") from None
        return int(value)


@dataclass
class ExperimentConfig:
    """Subcommand, seed, output directory and free-form sections of string values."""

    subcommand: str
    seed: int = 0
    output_dir: str = "."
    sections: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {self.subcommand!r}")
        self.seed = int(self.seed)
        self.sections = {s: {k: str(v) for k, v in kv.items()} for s, kv in self.sections.items()}

    # --- typed access -------------------------------------------------------------

    def get(self, section: str, key: str, default=_NOT_SET, type_=None):
        """Value of ``section.key`` converted to ``type_`` (default: the type of ``default``)."""
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            if default is _NOT_SET:
                raise KeyError(f"missing [{section}] {key}")
            return default
        type_ = type_ or (type(default) if default is not _NOT_SET and default is not None else str)
        if type_ is bool:
            return _as_bool(raw)
        if type_ is int:
            return _as_int(raw)
        return type_(raw)

    def get_list(self, section: str, key: str, default=None, type_=float) -> list:
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            if default is None:
                raise KeyError(f"missing [{section}] {key}")
            return list(default)
        return [type_(v) for v in raw.replace(";", ",").split(",") if v.strip()]

    def set(self, section: str, key: str, value) -> None:
        if isinstance(value, (list, tuple)):
            value = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        self.sections.setdefault(section, {})[key] = str(value)

    def with_value(self, section: str, key: str, value) -> "ExperimentConfig":
        out = self.copy()
        out.set(section, key, value)
        return out

    def copy(self) -> "ExperimentConfig":
        return ExperimentConfig(self.subcommand, self.seed, self.output_dir,
                                {s: dict(kv) for s, kv in self.sections.items()})

    # --- tolerances ---------------------------------------------------------------

    def tolerance(self, name: str) -> float:
        if name not in DEFAULT_TOLERANCES:
            raise KeyError(f"no documented tolerance {name!r}")
        return self.get("tolerances", name, DEFAULT_TOLERANCES[name][0], float)

    def tolerance_overrides(self) -> dict:
        return {k: float(v) for k, v in sorted(self.sections.get("tolerances", {}).items())}

    # --- serialization ------------------------------------------------------------

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser["run"] = {"subcommand": self.subcommand, "seed": str(self.seed), "output_dir": self.output_dir}
        for name in sorted(self.sections):
            if name == "run":
                continue
            parser[name] = dict(sorted(self.sections[name].items()))
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read_string(text)
        if not parser.has_section("run"):
            raise ValueError("config needs a [run] section")
        run = parser["run"]
        sections = {s: dict(parser[s]) for s in parser.sections() if s != "run"}
        return cls(run.get("subcommand"), int(run.get("seed", "0")), run.get("output_dir", "."), sections)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_ini(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())

    def as_dict(self) -> dict:
        return {"subcommand": self.subcommand, "seed": self.seed, "output_dir": self.output_dir,
                "sections": {s: dict(sorted(kv.items())) for s, kv in sorted(self.sections.items())},
                "tolerance_overrides": self.tolerance_overrides()}


def default_config(subcommand: str, seed: int = 0) -> ExperimentConfig:
    """Small, quick defaults for each subcommand."""
    sections = {
        "fp-solve": {
            "model": {"sigma": "constant(1)", "eps": "0", "r_max": "10"},
            "initial": {"law": "normal(0, 0.25)"},
            "grid": {"half_width": "8", "n_cells": "512", "dt": "1e-3", "T": "0.5"},
            "reference": {"kind": "heat"},
        },
        "particles-moderated": {
            "model": {"sigma": "sqrt_affine(1, 1)", "r_max": "4"},
            "initial": {"law": "normal(0, 0.25)"},
            "particles": {"N": "10000", "dt": "1e-2", "T": "0.5"},
            "reference": {"half_width": "8", "n_cells": "1024", "dt": "1e-3"},
        },
        "verify-mild": {
            "model": {"sigma": "sqrt_affine(1, 1)", "r_max": "1"},
            "mild": {"gammas": "0.5, 1, 2", "n_random": "20"},
            "grid": {"half_width": "8", "n_cells": "256", "dt": "5e-3", "T": "0.5"},
            "initial": {"law": "normal(0, 0.25)", "law_b": "normal(0.5, 0.4)"},
        },
        "conditional": {
            "coefficients": {"b": "tanh_y(0.5)", "sigma": "const(1)", "ell": "tanh", "gamma": "const(1)"},
            "initial": {"law": "correlated_normal(0.5)"},
            "particles": {"N": "20000", "dt": "1e-2", "T": "0.5", "record_stride": "10"},
            "estimator": {"kind": "nw"},
            "output": {"grid_lo": "-3", "grid_hi": "3", "grid_n": "61"},
        },
        "picard": {
            "coefficients": {"b": "zero", "sigma": "const(1)", "ell": "half_sin", "gamma": "const(1)"},
            "initial": {"law": "correlated_normal(0.5)"},
            "particles": {"N": "20000", "dt": "1e-2", "T": "1"},
            "picard": {"K": "8"},
        },
        "girsanov-check": {
            "coefficients": {"b": "tanh_y(0.8)", "sigma": "const(1)", "ell": "tanh", "gamma": "const(1)"},
            "initial": {"law": "correlated_normal(0.5)"},
            "particles": {"N": "20000", "dt": "1e-2", "T": "0.5", "record_stride": "10"},
            "estimator": {"kind": "nw"},
        },
        "convergence-study": {
            "study": {"experiment": "fp-solve", "axis": "h", "levels": "0.0625, 0.03125, 0.015625",
                      "seeds": "0", "metric": "l1_error", "couple_dt": "true"},
            "model": {"sigma": "constant(1)", "eps": "0", "r_max": "10"},
            "initial": {"law": "normal(0, 0.25)"},
            "grid": {"half_width": "8", "n_cells": "256", "dt": "4e-3", "T": "0.5"},
            "reference": {"kind": "heat"},
        },
        "selftest": {"selftest": {"scale": "smoke"}},
    }[subcommand]
    return ExperimentConfig(subcommand, seed, subcommand, sections)
