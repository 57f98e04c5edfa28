"""Experiment configuration files.

Flat sections with ``key = value`` lines and ``#`` comments::

    [experiment]
    protocol = ghz          # teleport | ghz | timetag
    seed = 7
    shots = 1500            # or: duration = 30 s   (exactly one of the two)

    [sources]
    pair_rate = 200
    pair_correlation_time = 20 ns
    ...

Numbers may carry a unit (``ps ns us ms s``, ``Hz kHz MHz GHz``); values are
stored in SI. Parsing collects every problem it finds, each with the line
it belongs to (0 when a key is missing altogether).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable

from . import analysis
from .optics import SourceKind, SourceSpec, VisibilityKind, VisibilityModel
from .qcore import BASES, PureState
from .timesim import WindowConfig

PROTOCOLS = ("teleport", "ghz", "timetag")
OUTPUTS = ("results", "timetags", "plot_data")
NAMED_STATES = ("H", "V", "+", "-", "L", "R")

_UNITS = {
    "ps": 1e-12, "ns": 1e-9, "us": 1e-6, "ms": 1e-3, "s": 1.0,
    "hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, "/s": 1.0,
}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]+)?\s*$")
_CUSTOM = re.compile(r"^custom\(\s*([^,()]+?)\s*,\s*([^,()]+?)\s*\)$")


@dataclass(frozen=True)
class ConfigIssue:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}" if self.line else self.message


class ConfigError(ValueError):
    def __init__(self, issues: list[ConfigIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


@dataclass(frozen=True)
class StateNoise:
    visibility: float | None = None
    accidental_fraction: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    seed: int
    pair: SourceSpec
    laser: SourceSpec
    windows: WindowConfig
    visibility_model: VisibilityModel
    shots: int | None = None
    duration: float | None = None
    input_states: tuple[str, ...] = ()
    settings: tuple[str, ...] = ()
    visibility_override: float | None = None
    accidental_fraction_override: float | None = None
    state_noise: tuple[tuple[str, StateNoise], ...] = ()
    detector_efficiency: tuple[float, float, float] = (1.0, 1.0, 1.0)
    jitter: float = 0.0
    repeats: int = 1
    outputs: tuple[str, ...] = ("results",)

    @property
    def mode(self) -> str:
        return "shots" if self.shots is not None else "duration"

    def noise_for(self, state: str) -> StateNoise:
        return dict(self.state_noise).get(state, StateNoise())

    def effective_settings(self) -> tuple[str, ...]:
        if self.settings:
            return self.settings
        if self.protocol == "teleport":
            return ("X", "Y", "Z")
        if self.protocol == "ghz":
            return (analysis.ZZZ,) + analysis.MERMIN_SETTINGS
        return ()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))


def parse_state(name: str) -> PureState:
    """Catalog state: H V + - L R, or custom(theta, phi) in radians on the Bloch sphere."""
    if name in NAMED_STATES:
        return PureState.from_label(name)
    m = _CUSTOM.match(name)
    if m:
        return PureState.from_bloch_angles(float(m.group(1)), float(m.group(2)))
    raise ValueError(f"unknown state {name!r}")


def parse_quantity(text: str) -> float:
    m = _QUANTITY.match(text)
    if not m:
        raise ValueError(f"not a number: {text!r}")
    value = float(m.group(1))
    unit = m.group(2)
    if unit:
        try:
            value *= _UNITS[unit.lower()]
        except KeyError:
            raise ValueError(f"unknown unit {unit!r}") from None
    return value


def _split_list(text: str) -> list[str]:
    return [t for t in re.findall(r"custom\([^)]*\)|[^,\s]+", text)]


# -- schema ----------------------------------------------------------------

def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"not an integer: {text!r}") from None


def _float(text: str) -> float:
    v = parse_quantity(text)
    if not math.isfinite(v):
        raise ValueError("value must be finite")
    return v


def _choice(options):
    table = {o.lower(): o for o in options}

    def conv(text: str) -> str:
        try:
            return table[text.strip().lower()]
        except KeyError:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}") from None
    return conv


def _list(item: Callable[[str], object]):
    def conv(text: str):
        return tuple(item(t) for t in _split_list(text))
    return conv


def _state_name(text: str) -> str:
    parse_state(text)
    return text


def _setting(text: str) -> str:
    if not text or any(b not in BASES for b in text):
        raise ValueError(f"bad measurement setting {text!r}")
    return text


def _output(text: str) -> str:
    return _choice(OUTPUTS)(text)


SCHEMA: dict[str, dict[str, tuple[Callable[[str], object], bool]]] = {
    "experiment": {
        "protocol": (_choice(PROTOCOLS), True),
        "seed": (_int, True),
        "shots": (_int, False),
        "duration": (_float, False),
        "repeats": (_int, False),
        "outputs": (_list(_output), False),
    },
    "states": {"inputs": (_list(_state_name), False)},
    "sources": {
        "pair_rate": (_float, True),
        "pair_correlation_time": (_float, True),
        "pair_linewidth": (_float, True),
        "laser_rate": (_float, True),
        "laser_linewidth": (_float, True),
    },
    "windows": {"pair": (_float, True), "bsm": (_float, True), "threefold": (_float, True)},
    "visibility": {
        "model": (_choice(("unit", "exponential", "gaussian")), True),
        "coherence_time": (_float, False),
        "window": (_float, False),
    },
    "noise": {"visibility": (_float, False), "accidental_fraction": (_float, False)},
    "detectors": {"efficiency": (_list(_float), False), "jitter": (_float, False)},
    "measurement": {"settings": (_list(_setting), False)},
}
_PER_STATE = re.compile(r"^(visibility|accidental_fraction)\.(.+)$")
_MODEL_KIND = {"unit": VisibilityKind.UNIT, "exponential": VisibilityKind.EXPONENTIAL,
               "gaussian": VisibilityKind.GAUSSIAN}


def _tokenize(text: str, issues: list[ConfigIssue]) -> dict[tuple[str, str], tuple[str, int]]:
    raw: dict[tuple[str, str], tuple[str, int]] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                issues.append(ConfigIssue(lineno, f"malformed section header {body!r}"))
                continue
            section = body[1:-1].strip().lower()
            if section not in SCHEMA:
                issues.append(ConfigIssue(lineno, f"unknown section [{section}]"))
            continue
        if "=" not in body:
            issues.append(ConfigIssue(lineno, f"expected 'key = value', got {body!r}"))
            continue
        key, value = (p.strip() for p in body.split("=", 1))
        if section is None:
            issues.append(ConfigIssue(lineno, f"key {key!r} outside any section"))
            continue
        if section not in SCHEMA:
            continue
        known = key in SCHEMA[section] or (section == "noise" and _PER_STATE.match(key))
        if not known:
            issues.append(ConfigIssue(lineno, f"unknown key {section}.{key}"))
            continue
        if (section, key) in raw:
            issues.append(ConfigIssue(lineno, f"duplicate key {section}.{key} "
                                              f"(first at line {raw[(section, key)][1]})"))
            continue
        raw[(section, key)] = (value, lineno)
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    issues: list[ConfigIssue] = []
    raw = _tokenize(text, issues)
    vals: dict[tuple[str, str], object] = {}
    lines: dict[tuple[str, str], int] = {}

    for (section, key), (value, lineno) in raw.items():
        lines[(section, key)] = lineno
        conv = SCHEMA[section][key][0] if key in SCHEMA[section] else _float
        try:
            vals[(section, key)] = conv(value)
        except ValueError as exc:
            issues.append(ConfigIssue(lineno, f"{section}.{key}: {exc}"))

    for section, keys in SCHEMA.items():
        for key, (_, required) in keys.items():
            if required and (section, key) not in raw:
                issues.append(ConfigIssue(0, f"missing required key {section}.{key}"))

    def line(section, key):
        return lines.get((section, key), 0)

    has_shots = ("experiment", "shots") in raw
    has_duration = ("experiment", "duration") in raw
    if has_shots and has_duration:
        issues.append(ConfigIssue(line("experiment", "duration"),
                                  "experiment.shots and experiment.duration are mutually exclusive"))
    elif not (has_shots or has_duration):
        issues.append(ConfigIssue(0, "one of experiment.shots or experiment.duration is required"))

    def check(section, key, ok, message):
        if (section, key) in vals and not ok(vals[(section, key)]):
            issues.append(ConfigIssue(line(section, key), f"{section}.{key} {message}"))

    check("experiment", "shots", lambda v: v >= 1, "must be >= 1")
    check("experiment", "duration", lambda v: v > 0, "must be > 0")
    check("experiment", "repeats", lambda v: v >= 1, "must be >= 1")
    check("experiment", "seed", lambda v: 0 <= v < 2**64, "must be a 64-bit unsigned integer")
    for k in SCHEMA["sources"]:
        check("sources", k, lambda v: v > 0, "must be > 0")
    for k in SCHEMA["windows"]:
        check("windows", k, lambda v: v > 0, "must be > 0")
    check("visibility", "coherence_time", lambda v: v > 0, "must be > 0")
    check("visibility", "window", lambda v: v > 0, "must be > 0")
    check("noise", "visibility", lambda v: 0 <= v <= 1, "must be in [0, 1]")
    check("noise", "accidental_fraction", lambda v: 0 <= v < 1, "must be in [0, 1)")
    check("detectors", "efficiency", lambda v: len(v) == 3 and all(0 < e <= 1 for e in v),
          "needs three values in (0, 1]")
    check("detectors", "jitter", lambda v: v >= 0, "must be >= 0")

    protocol = vals.get(("experiment", "protocol"))
    inputs = vals.get(("states", "inputs"), ())
    if protocol == "teleport" and not inputs:
        issues.append(ConfigIssue(line("states", "inputs"), "teleport protocol needs states.inputs"))
    if protocol == "timetag" and has_shots:
        issues.append(ConfigIssue(line("experiment", "shots"), "timetag protocol needs experiment.duration"))
    outputs = vals.get(("experiment", "outputs"), ("results",))
    if "timetags" in outputs and has_shots:
        issues.append(ConfigIssue(line("experiment", "outputs"),
                                  "timetags output needs experiment.duration (shots mode has no time tags)"))
    settings = vals.get(("measurement", "settings"), ())
    nq = {"teleport": 1, "ghz": 3}.get(protocol)
    bad = [s for s in settings if nq is not None and len(s) != nq]
    if bad:
        issues.append(ConfigIssue(line("measurement", "settings"),
                                  f"settings {bad} do not match the {protocol} protocol"))

    model_name = vals.get(("visibility", "model"))
    if model_name in ("exponential", "gaussian") and ("visibility", "coherence_time") not in raw:
        issues.append(ConfigIssue(line("visibility", "model"),
                                  f"{model_name} visibility model needs visibility.coherence_time"))

    state_noise: dict[str, dict[str, float]] = {}
    for (section, key), v in vals.items():
        m = _PER_STATE.match(key) if section == "noise" else None
        if not m:
            continue
        field_name, state = m.groups()
        lo_ok = 0 <= v <= 1 if field_name == "visibility" else 0 <= v < 1
        if not lo_ok:
            issues.append(ConfigIssue(line(section, key), f"noise.{key} out of range"))
        if state not in inputs:
            issues.append(ConfigIssue(line(section, key), f"noise.{key} refers to a state not in states.inputs"))
        state_noise.setdefault(state, {})[field_name] = v

    if issues:
        raise ConfigError(sorted(issues, key=lambda i: i.line))

    g = lambda s, k, d=None: vals.get((s, k), d)  # noqa: E731
    windows = WindowConfig(g("windows", "pair"), g("windows", "bsm"), g("windows", "threefold"))
    kind = _MODEL_KIND[model_name]
    if kind is VisibilityKind.UNIT:
        vis_model = VisibilityModel(kind)
    else:
        vis_model = VisibilityModel(kind, g("visibility", "window", windows.bsm), g("visibility", "coherence_time"))
    try:
        pair = SourceSpec(SourceKind.PAIR, g("sources", "pair_rate"), g("sources", "pair_linewidth"),
                          g("sources", "pair_correlation_time"))
        laser = SourceSpec(SourceKind.LASER, g("sources", "laser_rate"), g("sources", "laser_linewidth"))
    except ValueError as exc:
        raise ConfigError([ConfigIssue(0, str(exc))]) from None
    ordered_noise = tuple((s, StateNoise(d.get("visibility"), d.get("accidental_fraction")))
                          for s, d in sorted(state_noise.items()))
    return ExperimentConfig(
        protocol=protocol,
        seed=g("experiment", "seed"),
        pair=pair,
        laser=laser,
        windows=windows,
        visibility_model=vis_model,
        shots=g("experiment", "shots"),
        duration=g("experiment", "duration"),
        input_states=tuple(inputs),
        settings=tuple(settings),
        visibility_override=g("noise", "visibility"),
        accidental_fraction_override=g("noise", "accidental_fraction"),
        state_noise=ordered_noise,
        detector_efficiency=tuple(g("detectors", "efficiency", (1.0, 1.0, 1.0))),
        jitter=g("detectors", "jitter", 0.0),
        repeats=g("experiment", "repeats", 1),
        outputs=tuple(dict.fromkeys(outputs)),
    )


def validate_config(text: str) -> list[ConfigIssue]:
    try:
        parse_config(text)
    except ConfigError as exc:
        return exc.issues
    return []


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    out = ["[experiment]", f"protocol = {cfg.protocol}", f"seed = {cfg.seed}"]
    if cfg.shots is not None:
        out.append(f"shots = {cfg.shots}")
    else:
        out.append(f"duration = {cfg.duration!r}")
    out.append(f"repeats = {cfg.repeats}")
    out.append(f"outputs = {', '.join(cfg.outputs)}")
    if cfg.input_states:
        out += ["", "[states]", f"inputs = {', '.join(cfg.input_states)}"]
    out += ["", "[sources]",
            f"pair_rate = {cfg.pair.rate!r}",
            f"pair_correlation_time = {cfg.pair.correlation_time!r}",
            f"pair_linewidth = {cfg.pair.linewidth!r}",
            f"laser_rate = {cfg.laser.rate!r}",
            f"laser_linewidth = {cfg.laser.linewidth!r}",
            "", "[windows]",
            f"pair = {cfg.windows.pair!r}",
            f"bsm = {cfg.windows.bsm!r}",
            f"threefold = {cfg.windows.threefold!r}",
            "", "[visibility]",
            f"model = {cfg.visibility_model.kind.value.lower()}"]
    if cfg.visibility_model.kind is not VisibilityKind.UNIT:
        out += [f"coherence_time = {cfg.visibility_model.coherence_time!r}",
                f"window = {cfg.visibility_model.window!r}"]
    noise = []
    if cfg.visibility_override is not None:
        noise.append(f"visibility = {cfg.visibility_override!r}")
    if cfg.accidental_fraction_override is not None:
        noise.append(f"accidental_fraction = {cfg.accidental_fraction_override!r}")
    for state, sn in cfg.state_noise:
        if sn.visibility is not None:
            noise.append(f"visibility.{state} = {sn.visibility!r}")
        if sn.accidental_fraction is not None:
            noise.append(f"accidental_fraction.{state} = {sn.accidental_fraction!r}")
    if noise:
        out += ["", "[noise]"] + noise
    out += ["", "[detectors]",
            f"efficiency = {', '.join(repr(e) for e in cfg.detector_efficiency)}",
            f"jitter = {cfg.jitter!r}"]
    if cfg.settings:
        out += ["", "[measurement]", f"settings = {', '.join(cfg.settings)}"]
    return "\n".join(out) + "\n"
