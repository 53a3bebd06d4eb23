"""Experiment configuration files.

Plain INI text: ``key = value`` pairs grouped in sections.  Every key has a
fixed home section; anything else is rejected by name.  Missing keys take
study-specific defaults, so a file holding only ``[study] kind = ...`` is a
complete experiment.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..newton import PREVIOUS_STEP, WARM_START_MODES
from ..porous import SCHEMES

STUDY_KINDS = ("porous-convergence", "porous-iterations", "sulfation-profile",
               "sulfation-front", "sulfation-iterations", "sulfation-2d")
PRECONDITIONER_MODES = ("none", "one-v-cycle", "mgm-to-convergence")
OUTPUT_FORMATS = ("csv", "json")
MIN_N = 8


class ConfigError(ValueError):
    """Malformed or invalid configuration; ``key`` and ``line`` locate it when known."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "porous-convergence"
    N: tuple = (32, 64, 128, 256, 512)
    dim: int = 1
    schemes: tuple = ("crank-nicholson", "implicit-euler")
    preconditioners: tuple = ("none", "one-v-cycle")
    # porous model
    m: float = 4.0
    domain_a: float = -6.0
    domain_b: float = 6.0
    t0: float = 1.0
    T: float = 20.0 / 32.0
    lam: float = 1.0
    warm_start: str = PREVIOUS_STEP
    guard_C: float = 1.0
    # sulfation model
    a: float = 1.0
    d: float = 1.0
    m_c: float = 100.09
    m_s: float = 64.06
    alpha: float = 0.01
    beta: float = 0.1
    c0: float = 1.0
    rho_s0: float = 1.0
    L: float = 1.0
    dt: Optional[float] = None
    snapshot_times: tuple = ()
    front_window: float = 0.5
    # solvers
    gmres_rtol: float = 1e-6
    newton_tol: float = 1e-6
    newton_max_iter: int = 30
    mgm_rtol: float = 1e-10
    # output
    format: str = "csv"
    out: str = "results"
    jobs: int = 1
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        if self.kind not in STUDY_KINDS:
            raise ConfigError(f"kind must be one of {', '.join(STUDY_KINDS)}", "kind")
        if not self.N:
            raise ConfigError("N needs at least one value", "N")
        for n in self.N:
            if n < MIN_N:
                raise ConfigError(f"N = {n} is below the minimum {MIN_N}", "N")
        if self.dim not in (1, 2):
            raise ConfigError("dim must be 1 or 2", "dim")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}", "schemes")
        for p in self.preconditioners:
            if p not in PRECONDITIONER_MODES:
                raise ConfigError(f"unknown preconditioner {p!r}", "preconditioners")
        if self.warm_start not in WARM_START_MODES:
            raise ConfigError(f"unknown warm start {self.warm_start!r}", "warm_start")
        if self.format not in OUTPUT_FORMATS:
            raise ConfigError("format must be csv or json", "format")
        positive = ("m", "T", "lam", "t0", "guard_C", "L", "gmres_rtol", "newton_tol",
                    "mgm_rtol", "m_c", "m_s")
        for key in positive:
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive", key)
        if self.kind.startswith("porous") and not self.m > 1:
            raise ConfigError("Barenblatt runs need m > 1", "m")
        if not self.domain_b > self.domain_a:
            raise ConfigError("domain_b must exceed domain_a", "domain_b")
        if self.a < 0:
            raise ConfigError("a must be non-negative", "a")
        if self.d < 0:
            raise ConfigError("d must be non-negative", "d")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive", "dt")
        for ts in self.snapshot_times:
            if not 0 <= ts <= self.T:
                raise ConfigError(f"snapshot time {ts} outside [0, T]", "snapshot_times")
        if not 0 < self.front_window <= 1:
            raise ConfigError("front_window must lie in (0, 1]", "front_window")
        if self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter must be at least 1", "newton_max_iter")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1", "jobs")
        return self


# home section of every key
SECTIONS = {
    "study": ("kind", "N", "dim", "schemes", "preconditioners", "T"),
    "porous": ("m", "domain_a", "domain_b", "t0", "lam", "warm_start", "guard_C"),
    "sulfation": ("a", "d", "m_c", "m_s", "alpha", "beta", "c0", "rho_s0", "L", "dt",
                  "snapshot_times", "front_window"),
    "solver": ("gmres_rtol", "newton_tol", "newton_max_iter", "mgm_rtol"),
    "output": ("format", "out", "jobs", "seed"),
}
_KEY_SECTION = {k: s for s, keys in SECTIONS.items() for k in keys}

# study-specific defaults layered over the dataclass defaults
KIND_DEFAULTS = {
    "porous-convergence": {},
    "porous-iterations": {"schemes": ("crank-nicholson",)},
    "sulfation-iterations": {"N": (64, 128, 256), "T": 1.0,
                             "preconditioners": ("none", "one-v-cycle", "mgm-to-convergence"),
                             "schemes": ("crank-nicholson",)},
    "sulfation-profile": {"N": (128,), "a": 1.0e4, "T": 0.25,
                          "snapshot_times": (0.05, 0.1, 0.15, 0.2, 0.25),
                          "schemes": ("crank-nicholson",), "preconditioners": ("one-v-cycle",)},
    "sulfation-front": {"N": (128,), "a": 1.0e4, "T": 0.25, "schemes": ("crank-nicholson",),
                        "preconditioners": ("one-v-cycle",)},
    "sulfation-2d": {"N": (32,), "dim": 2, "a": 10.0, "T": 1.0, "schemes": ("crank-nicholson",),
                     "preconditioners": ("none", "one-v-cycle")},
}

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(name: str, text: str):
    default = _FIELDS[name].default
    text = text.strip()
    try:
        if name == "N":
            return tuple(int(v) for v in _split_list(text))
        if name in ("schemes", "preconditioners"):
            return tuple(_split_list(text))
        if name == "snapshot_times":
            return tuple(float(v) for v in _split_list(text))
        if name == "dt":
            return None if text.lower() in ("", "h", "none") else float(text)
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}", name) from exc


def _split_list(text: str):
    return [v.strip() for v in text.replace(",", " ").split() if v.strip()]


def _format_value(value) -> str:
    if value is None:
        return "h"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("missing [section] header", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse {source}", line=lineno) from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], line=exc.lineno) from exc

    lines = _key_lines(text)
    raw = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", section, lines.get(section))
        for key, value in parser.items(section):
            if key not in _KEY_SECTION:
                raise ConfigError(f"unknown key {key!r} in [{section}]", key, lines.get(key))
            if _KEY_SECTION[key] != section:
                raise ConfigError(f"key {key!r} belongs in [{_KEY_SECTION[key]}]", key,
                                  lines.get(key))
            raw[key] = value
    kind = raw.get("kind", ExperimentConfig.kind).strip()
    if kind not in STUDY_KINDS:
        raise ConfigError(f"kind must be one of {', '.join(STUDY_KINDS)}", "kind",
                          lines.get("kind"))
    values = dict(KIND_DEFAULTS[kind])
    for key, text_value in raw.items():
        try:
            values[key] = _parse_value(key, text_value)
        except ConfigError as exc:
            raise ConfigError(str(exc), key, lines.get(key)) from None
    values["kind"] = kind
    try:
        return ExperimentConfig(**values).validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), exc.key, lines.get(exc.key)) from None


def _key_lines(text: str) -> dict:
    """First line number of every ``key =`` and ``[section]`` in ``text``."""
    found = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            found.setdefault(stripped[1:-1].strip(), lineno)
        elif "=" in stripped and not stripped.startswith(("#", ";")):
            found.setdefault(stripped.split("=", 1)[0].strip(), lineno)
    return found


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(), str(path))


def default_config(kind: str) -> ExperimentConfig:
    if kind not in STUDY_KINDS:
        raise ConfigError(f"kind must be one of {', '.join(STUDY_KINDS)}", "kind")
    return ExperimentConfig(kind=kind, **KIND_DEFAULTS[kind]).validate()


def emit_config(cfg: ExperimentConfig) -> str:
    """Full text form of ``cfg``; :func:`parse_config` reads it back unchanged."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, keys in SECTIONS.items():
        parser[section] = {k: _format_value(getattr(cfg, k)) for k in keys}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
