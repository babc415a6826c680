"""Line-oriented run configuration.

The format is ``key = value`` lines grouped under ``[section]`` headers;
``#`` starts a comment. Every key has a documented default, unknown keys are
rejected, and errors name the offending key and line. Lists are
comma-separated.

Example::

    [run]
    mode = simulate
    seed = 7

    [model]
    xi_noise = 0.1
    gamma_s = 5.0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import IntegratorConfig
from .model import ModelParams

MODES = ("simulate", "sweep", "hydro", "rg", "analyze")


class ConfigError(ValueError):
    pass


def _positive(v):
    return v > 0


def _non_negative(v):
    return v >= 0


def _choice(*options):
    def check(v):
        return v in options

    check.__doc__ = "one of " + ", ".join(str(o) for o in options)
    return check


_positive.__doc__ = "> 0 (positivity)"
_non_negative.__doc__ = ">= 0"


def _list_of(kind, rule=None):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        out = tuple(kind(t) for t in items)
        if rule is not None and not all(rule(v) for v in out):
            raise ValueError(f"every entry must be {rule.__doc__}")
        return out

    return parse


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise ValueError("must be an unsigned 64-bit integer")
    return v


# section -> key -> (parser, default, rule)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "mode": (str, "simulate", _choice(*MODES)),
        "seed": (_u64, 0, None),
        "output": (str, "qvm-run", None),
        "threads": (int, 1, _positive),
    },
    "model": {
        "m": (_float, 1.0, _positive),
        "u": (_float, 0.5, _non_negative),
        "J": (_float, 1.0, None),
        "gamma": (_float, 1.0, _positive),
        "gamma_s": (_float, 1.0, _non_negative),
        "beta": (_float, 1.0, _positive),
        "rho": (_float, 0.5, _positive),
        "r_c": (_float, 1.0, _positive),
        "xi_noise": (_float, 0.1, _non_negative),
        "kappa": (_float, 0.0, None),
        "dims": (int, 3, _choice(2, 3)),
        "L": (_float, 32.0, _positive),
    },
    "integrator": {
        "dt": (_float, 0.1, _positive),
        "noise_model": (str, "gaussian", _choice("gaussian", "vectorial")),
        "translational_noise": (_bool, False, None),
        "mean_field": (str, "local", _choice("local", "global")),
        "inertial": (_bool, False, None),
        "n_steps": (int, 1000, _non_negative),
        "transient": (int, -1, None),
        "snapshot_every": (int, 0, _non_negative),
    },
    "sweep": {
        "gamma_s_inv": (_list_of(_float, _positive), (0.2, 1.0, 5.0), None),
        "xi": (_list_of(_float, _non_negative), (0.1, 0.5, 1.5), None),
        "workers": (int, 1, _positive),
    },
    "hydro": {
        "kind": (str, "dispersion", _choice("dispersion", "goldstone", "full")),
        "grid": (_list_of(int, _positive), (32, 32, 32), None),
        "dx": (_float, 1.0, _positive),
        "dt": (_float, 0.01, _positive),
        "n_steps": (int, 200, _non_negative),
        "modes": (_list_of(int, _positive), (1, 2), None),
        "A_I": (_float, 1.0, None),
        "B": (_float, 1.0, _positive),
        "D": (_float, 0.1, _positive),
        "Delta": (_float, 0.0, _non_negative),
        "Lambda_cut": (_float, 1.0, _positive),
        "xi_align": (_float, 1.0, None),
        "lambda_tilde": (_float, 0.5, None),
        "eta_tilde": (_float, 2.0, _positive),
        "lambda1": (_float, 0.5, None),
        "noise": (_bool, False, None),
        "amplitude": (_float, 1e-3, _non_negative),
    },
    "rg": {
        "F31": (_float, 1.0, _positive),
        "l_max": (_float, 30.0, _positive),
        "dl": (_float, 0.01, _positive),
        "D0": (_float, 1.0, _positive),
        "Delta0": (_float, 0.1, _non_negative),
        "lambda1_0": (_float, 1.0, None),
        "B0": (_float, 1.0, None),
    },
    "analyze": {
        "snapshot": (str, "", None),
        "n_bins": (int, 64, lambda v: v >= 4),
        "threshold": (_float, 1.5, lambda v: v > 1),
        "r_max": (_float, 4.0, _positive),
    },
}
SCHEMA["analyze"]["n_bins"][2].__doc__ = ">= 4"
SCHEMA["analyze"]["threshold"][2].__doc__ = "> 1"


@dataclass
class RunConfig:
    """Validated configuration: one dict of typed values per section."""

    values: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for section, keys in SCHEMA.items():
            sec = self.values.setdefault(section, {})
            for key, (_, default, _) in keys.items():
                sec.setdefault(key, default)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def mode(self) -> str:
        return self.values["run"]["mode"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def model(self) -> ModelParams:
        v = {k: x for k, x in self.values["model"].items() if k != "L"}
        return ModelParams(**v)

    @property
    def L(self) -> float:
        return self.values["model"]["L"]

    @property
    def integrator(self) -> IntegratorConfig:
        v = self.values["integrator"]
        return IntegratorConfig(
            dt=v["dt"],
            noise_model=v["noise_model"],
            include_translational_noise=v["translational_noise"],
            seed=self.seed,
            mean_field=v["mean_field"],
            inertial=v["inertial"],
        )

    @property
    def n_steps(self) -> int:
        return self.values["integrator"]["n_steps"]

    @property
    def transient(self) -> int:
        t = self.values["integrator"]["transient"]
        return self.n_steps // 2 if t < 0 else t

    def set(self, section: str, key: str, value) -> None:
        parser, _, rule = SCHEMA[section][key]
        if isinstance(value, str):
            value = parser(value)
        if rule is not None and not rule(value):
            raise ConfigError(f"{section}.{key}={value!r} violates {rule.__doc__}")
        self.values[section][key] = value
        _cross_validate(self)


def _cross_validate(cfg: RunConfig, lines: dict | None = None) -> None:
    lines = lines or {}

    def fail(section, key, msg):
        where = f"line {lines[(section, key)]}: " if (section, key) in lines else ""
        raise ConfigError(f"{where}{key}: {msg}")

    try:
        cfg.model
    except ValueError as exc:
        raise ConfigError(f"[model]: {exc}") from None
    if cfg.model.r_c > cfg.L / 2:
        fail("model", "r_c", f"r_c={cfg.model.r_c} must be <= L/2={cfg.L / 2}")
    t = cfg["integrator"]["transient"]
    if t >= 0 and t > cfg.n_steps:
        fail("integrator", "transient", f"transient={t} exceeds n_steps={cfg.n_steps}")
    if cfg["integrator"]["dt"] * cfg.model.gamma_s >= 1 and cfg.mode in ("simulate",):
        fail("integrator", "dt", "dt*gamma_s must be < 1 for the explicit spin update")
    grid = cfg["hydro"]["grid"]
    if len(grid) not in (2, 3):
        fail("hydro", "grid", "grid must have 2 or 3 entries")


def parse_config(text: str) -> RunConfig:
    values: dict[str, dict] = {s: {} for s in SCHEMA}
    lines: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside of any section")
        key, _, text_value = (part.strip() for part in line.partition("="))
        if key not in SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if (section, key) in lines:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {lines[(section, key)]})")
        parser, _, rule = SCHEMA[section][key]
        try:
            value = parser(text_value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: cannot parse {text_value!r} ({exc})") from None
        if rule is not None and not rule(value):
            raise ConfigError(f"line {lineno}: {key}={text_value} violates {key} {rule.__doc__}")
        values[section][key] = value
        lines[(section, key)] = lineno
    cfg = RunConfig(values)
    _cross_validate(cfg, lines)
    return cfg


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text: every section and key in schema order, defaults included."""
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key in keys:
            out.append(f"{key} = {_format(cfg.values[section][key])}")
        out.append("")
    return "\n".join(out)
