"""Plain-text experiment configuration.

The format is ``key = value`` lines under the section headers ``[kernel]``,
``[fluid]``, ``[grid]``, ``[forcing]``, ``[steady]``, ``[analysis]`` and
``[output]``.  Every key has a type and a domain; unknown sections or keys,
duplicate keys and out-of-domain values are errors.  :func:`render` writes
the effective configuration with every default filled in, and
``parse_config(render(spec)) == spec``.
"""

import configparser
import math
from dataclasses import dataclass, field

from .kernel import KernelParams

__all__ = [
    "KINDS",
    "SCHEMA",
    "ConfigError",
    "ExperimentSpec",
    "parse_config",
    "render",
    "load_config",
]

KINDS = ("kernel-check", "run-transient", "solve-steady", "decay-study", "convergence-study")
REQUIRED = object()
PROFILE_CHOICES = ("zero", "poly", "sines", "shear")


class ConfigError(ValueError):
    """Parse or validation failure; ``key`` is ``section.name`` when known."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line

    def record(self):
        return {"error": "config", "message": str(self), "key": self.key, "line": self.line}


@dataclass(frozen=True)
class Key:
    type: type
    default: object
    doc: str
    check: object = None  # callable(value) -> error text or None
    choices: tuple = ()


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _at_least(k):
    return lambda v: None if v >= k else f"must be >= {k}"


def _unit_open(v):
    return None if 0 < v < 1 else "must lie in (0,1)"


SCHEMA = {
    "kernel": {
        "beta": Key(float, REQUIRED, "singularity exponent, in [0,1)"),
        "delta": Key(float, REQUIRED, "exponential decay rate, >= 0"),
        "rho": Key(float, 1.0, "memory strength, >= 0"),
        "dt": Key(float, 0.01, "step of the kernel-check weight table", _positive),
        "n": Key(int, 128, "length of the kernel-check weight table", _at_least(1)),
        "soe_tol": Key(float, 1e-8, "relative tolerance of the exponential-sum fit", _unit_open),
        "soe_horizon": Key(float, 0.0, "kernel-check fit horizon; 0 means n*dt", _nonneg),
    },
    "fluid": {
        "mu": Key(float, 1.0, "Newtonian viscosity", _positive),
        "dt": Key(float, 0.01, "time step", _positive),
        "t_end": Key(float, 1.0, "final time", _nonneg),
        "history_mode": Key(str, "direct", "memory history evaluation", choices=("direct", "soe")),
        "memory": Key(bool, True, "include the memory term"),
        "advection": Key(bool, True, "include the nonlinear advection term"),
        "initial": Key(str, "zero", "initial velocity profile", choices=("zero", "poly", "sines")),
        "initial_amplitude": Key(float, 1.0, "initial velocity amplitude"),
        "cadence": Key(int, 1, "steps between diagnostic records", _at_least(1)),
    },
    "grid": {
        "nx": Key(int, 32, "cells in x", _at_least(4)),
        "ny": Key(int, 32, "cells in y", _at_least(4)),
        "lx": Key(float, 1.0, "domain width", _positive),
        "ly": Key(float, 1.0, "domain height", _positive),
    },
    "forcing": {
        "variant": Key(str, "steady", "body force form", choices=("zero", "steady", "decaying", "manufactured")),
        "profile": Key(str, "shear", "steady force profile", choices=PROFILE_CHOICES),
        "amplitude": Key(float, 1.0, "steady force amplitude"),
        "perturbation": Key(str, "sines", "decaying perturbation profile", choices=PROFILE_CHOICES),
        "perturbation_amplitude": Key(float, 1.0, "decaying perturbation amplitude"),
        "alpha0": Key(float, 1.0, "decay rate of the perturbation", _positive),
        "manufactured_alpha": Key(float, 0.25, "time decay of the manufactured solution, < delta", _positive),
        "manufactured_amplitude": Key(float, 1.0, "manufactured solution amplitude"),
        "discrete": Key(bool, False, "build manufactured forcing from the grid operators"),
    },
    "steady": {
        "method": Key(str, "stokes_iteration", "nonlinear iteration", choices=("stokes_iteration", "newton")),
        "tol": Key(float, 1e-10, "residual tolerance relative to the force norm", _positive),
        "max_iters": Key(int, 200, "iteration cap", _at_least(1)),
        "diagnostics": Key(bool, True, "compute a-priori and uniqueness diagnostics"),
    },
    "analysis": {
        "trials": Key(int, 1000, "random trials of the positivity certificate", _at_least(1)),
        "margin": Key(float, 0.1, "safety margin on the admissible decay rate", lambda v: None if 0 <= v < 1 else "must lie in [0,1)"),
        "refine": Key(str, "space", "convergence study refinement", choices=("space", "time")),
        "solver": Key(str, "steady", "convergence study solver", choices=("steady", "transient")),
        "levels": Key(int, 3, "refinement levels", _at_least(2)),
        "base": Key(int, 16, "coarsest cells per side", _at_least(4)),
        "dt0": Key(float, 0.025, "coarsest time step", _positive),
        "expected_order": Key(float, 0.0, "expected observed order; 0 means 2 in space, 1 in time", _nonneg),
        "order_tolerance": Key(float, 0.2, "allowed deviation from the expected order", _positive),
    },
    "output": {
        "kind": Key(str, "", "experiment kind; set by the subcommand", choices=("",) + KINDS),
        "directory": Key(str, "", "output directory; set by --out"),
        "seed": Key(int, 0, "random seed; set by --seed", _nonneg),
        "format": Key(str, "csv", "snapshot encoding", choices=("csv", "bin")),
        "snapshot_every": Key(int, 0, "steps between transient snapshots; 0 disables", _nonneg),
    },
}

_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def _convert(section, name, raw, spec):
    key = f"{section}.{name}"
    text = raw.strip()
    try:
        if spec.type is bool:
            value = _BOOL[text.lower()]
        elif spec.type is int:
            value = int(text)
        elif spec.type is float:
            value = float(text)
            if not math.isfinite(value):
                raise ValueError
        else:
            value = text
    except (ValueError, KeyError):
        raise ConfigError(f"{key}: cannot read {raw!r} as {spec.type.__name__}", key) from None
    return value


def _validate_value(section, name, value, spec):
    key = f"{section}.{name}"
    if spec.choices and value not in spec.choices:
        raise ConfigError(f"{key}: {value!r} is not one of {', '.join(repr(c) for c in spec.choices)}", key)
    if spec.check is not None:
        problem = spec.check(value)
        if problem:
            raise ConfigError(f"{key} {problem}, got {value!r}", key)


@dataclass
class ExperimentSpec:
    """A fully resolved experiment: kind, typed sections, output directory and seed."""

    kind: str
    sections: dict = field(default_factory=dict)
    out: str = ""
    seed: int = 0

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def kernel(self):
        k = self.sections["kernel"]
        return KernelParams(k["beta"], k["delta"], k["rho"])

    def with_overrides(self, kind=None, out=None, seed=None):
        sections = {s: dict(v) for s, v in self.sections.items()}
        new = ExperimentSpec(kind or self.kind, sections, self.out if out is None else out,
                             self.seed if seed is None else int(seed))
        sections["output"].update(kind=new.kind, directory=new.out, seed=new.seed)
        validate(new)
        return new


def _cross_checks(spec):
    try:
        kp = spec.kernel
    except ValueError as exc:
        msg = str(exc)
        name = next((n for n in ("beta", "delta", "rho") if msg.startswith(n)), None)
        raise ConfigError(msg, f"kernel.{name}" if name else "kernel") from None
    kind = spec.kind
    if kind != "kernel-check" and not kp.delta > 0:
        raise ConfigError("kernel.delta must be > 0 for flow experiments", "kernel.delta")
    f = spec["forcing"]
    if f["variant"] == "manufactured" and f["manufactured_alpha"] >= kp.delta:
        raise ConfigError("forcing.manufactured_alpha must be < kernel.delta", "forcing.manufactured_alpha")
    if kind == "decay-study" and f["variant"] not in ("steady", "decaying"):
        raise ConfigError("decay-study needs forcing.variant steady or decaying", "forcing.variant")
    if spec.seed != spec["output"]["seed"] or spec.out != spec["output"]["directory"]:
        raise ConfigError("output section disagrees with the experiment settings", "output")


def validate(spec):
    """Check every value against its domain, then cross-parameter constraints."""
    if spec.kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {spec.kind!r}", "output.kind")
    for section, keys in SCHEMA.items():
        values = spec.sections.get(section, {})
        for name, key in keys.items():
            if name not in values:
                raise ConfigError(f"{section}.{name} is required", f"{section}.{name}")
            _validate_value(section, name, values[name], key)
    _cross_checks(spec)
    return spec


def parse_config(text, kind=None):
    """Parse config text into a validated :class:`ExperimentSpec`.

    ``kind`` (the subcommand) fills ``[output] kind`` when the text leaves it
    empty and must agree with it otherwise.
    """
    parser = configparser.ConfigParser(strict=True, interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                       empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]",
                          f"{exc.section}.{exc.option}", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate section [{exc.section}]", exc.section, exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"line {exc.lineno}: key outside of a [section]", None, exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"line {lineno}: cannot parse {exc.errors[0][1]!r}" if exc.errors else str(exc),
                          None, lineno) from None
    if parser.defaults():
        raise ConfigError("the [DEFAULT] section is not supported", "DEFAULT")

    sections = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section)
    for section, keys in SCHEMA.items():
        given = parser[section] if parser.has_section(section) else {}
        values = {}
        for name in given:
            if name not in keys:
                raise ConfigError(f"unknown key {section}.{name}", f"{section}.{name}")
            values[name] = _convert(section, name, given[name], keys[name])
        for name, key in keys.items():
            if name not in values:
                if key.default is REQUIRED:
                    if section == "kernel":
                        raise ConfigError(f"{section}.{name} is required", f"{section}.{name}")
                    continue
                values[name] = key.default
        sections[section] = values

    out = sections["output"]
    declared = out["kind"]
    if kind is not None and declared and declared != kind:
        raise ConfigError(f"config declares kind {declared!r} but {kind!r} was requested", "output.kind")
    resolved = kind or declared
    if not resolved:
        raise ConfigError("experiment kind is not set", "output.kind")
    out["kind"] = resolved
    return validate(ExperimentSpec(resolved, sections, out["directory"], out["seed"]))


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render(spec):
    """Effective configuration text, every key present, defaults documented."""
    lines = []
    for section, keys in SCHEMA.items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for name, key in keys.items():
            lines.append(f"# {key.doc}")
            lines.append(f"{name} = {_format(spec.sections[section][name])}")
    return "\n".join(lines) + "\n"


def load_config(path, kind=None):
    with open(path) as fh:
        return parse_config(fh.read(), kind)
