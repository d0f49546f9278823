"""Experiment configuration files (YAML, SI units).

The file has fixed sections with flat keys; see ``configs/paper-default.yaml``
for the full layout.  Unknown sections or keys are rejected, and every
validation error names the offending field and, when known, its line.
"""

from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .density import hwp_weights
from .errors import ConfigError
from .geometry import MultiSlit, OpticalSetup
from .pump import ArmConfiguration, Gaussian, PumpProfile, TopHat, broad_arm2, focused_arm1, load_sampled

PAPER_DEFAULT = "paper-default"

_NUM = (int, float)
_OPT_NUM = (int, float, type(None))
_PROFILE = (str, dict)

# section -> key -> accepted python types
SCHEMA: dict[str, dict[str, tuple]] = {
    "aperture": {"num_slits": (int,), "half_width": _NUM, "spacing": _NUM},
    "optics": {"pump_wavelength": _NUM, "downconverted_wavelength": _OPT_NUM,
               "crystal_to_slit": _NUM, "slit_to_detector": _NUM, "detector_half_width": _NUM},
    "arms": {"arm1_profile": _PROFILE, "arm2_profile": _PROFILE, "arm1_open": (bool,),
             "arm2_open": (bool,), "weight_arm1": _NUM, "weight_arm2": _NUM,
             "hwp_angle": _OPT_NUM},
    "scan": {"nearfield_start": _NUM, "nearfield_stop": _NUM, "nearfield_points": (int,),
             "farfield_start": _NUM, "farfield_stop": _NUM, "farfield_points": (int,),
             "include_fresnel_phase": (bool,), "farfield_detector_convolution": (bool,)},
    "counts": {"total": (int,), "integration_time_s": _NUM, "seed": (int,)},
    "bootstrap": {"n_resamples": (int,)},
}
_OPTIONAL = {("optics", "downconverted_wavelength"), ("arms", "hwp_angle")}
_PROFILE_KEYS = {"gaussian": {"waist", "center"}, "tophat": {"half_width", "center"},
                 "sampled": {"path"}}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    slits: MultiSlit
    setup: OpticalSetup
    arms: ArmConfiguration
    weights: tuple[float, float]
    nearfield_positions: np.ndarray
    farfield_positions: np.ndarray
    include_fresnel_phase: bool
    farfield_detector_convolution: bool
    total_counts: int
    integration_time_s: float
    seed: int
    n_resamples: int
    raw: dict

    def resolved(self) -> dict:
        """The full configuration with defaults filled in, for embedding in reports."""
        out = copy.deepcopy(self.raw)
        out["optics"]["downconverted_wavelength"] = self.setup.downconverted_wavelength
        out["counts"]["seed"] = self.seed
        out["arms"]["weight_arm1"], out["arms"]["weight_arm2"] = self.weights
        return out


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-4`` (no decimal point) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?(?:[eE][-+]?[0-9]+)
                |[-+]?(?:[0-9][0-9_]*)\.[0-9_]*
                |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                |[-+]?\.(?:inf|Inf|INF)
                |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


class _Locator:
    """Maps dotted config paths to 1-based line numbers in the source text."""

    def __init__(self, text: str | None):
        self._lines: dict[str, int] = {}
        if text:
            try:
                self._walk(yaml.compose(text), "")
            except yaml.YAMLError:
                pass

    def _walk(self, node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                path = f"{prefix}{key.value}"
                self._lines[path] = key.start_mark.line + 1
                self._walk(value, path + ".")

    def where(self, path: str) -> str:
        line = self._lines.get(path)
        while line is None and "." in path:
            path = path.rsplit(".", 1)[0]
            line = self._lines.get(path)
        return f" (line {line})" if line else ""


def _fail(loc: _Locator, path: str, message: str):
    raise ConfigError(f"{path}{loc.where(path)}: {message}")


def read_config_text(source: str | Path | None) -> tuple[str, Path | None]:
    if source is None or str(source) == PAPER_DEFAULT:
        text = resources.files("slitqudit").joinpath("configs/paper-default.yaml").read_text()
        return text, None
    path = Path(source)
    try:
        return path.read_text(), path
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc.strerror}") from None


def load_config(source: str | Path | None = PAPER_DEFAULT, *, seed: int | None = None,
                overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Load, validate and resolve a config file (or the shipped ``paper-default``)."""
    text, path = read_config_text(source)
    try:
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    for key, value in (overrides or {}).items():
        set_path(raw, key, value)
    return resolve(raw, text=text, base_dir=path.parent if path else None, seed=seed)


def set_path(raw: dict, dotted: str, value):
    section, _, key = dotted.partition(".")
    if section not in SCHEMA or key not in SCHEMA[section]:
        raise ConfigError(f"{dotted}: unknown config key")
    raw.setdefault(section, {})[key] = value


def _check_shape(raw, loc: _Locator):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    for section in raw:
        if section not in SCHEMA:
            _fail(loc, str(section), f"unknown section; expected one of {sorted(SCHEMA)}")
    for section, keys in SCHEMA.items():
        body = raw.get(section)
        if not isinstance(body, dict):
            _fail(loc, section, "missing or not a mapping")
        for key in body:
            if key not in keys:
                _fail(loc, f"{section}.{key}", f"unknown key; expected one of {sorted(keys)}")
        for key, types in keys.items():
            path = f"{section}.{key}"
            if key not in body:
                if (section, key) in _OPTIONAL:
                    body[key] = None
                    continue
                _fail(loc, path, "missing required key")
            value = body[key]
            bad_bool = isinstance(value, bool) and bool not in types
            if bad_bool or not isinstance(value, types):
                names = "/".join(t.__name__ if t is not type(None) else "null" for t in types)
                _fail(loc, path, f"expected {names}, got {type(value).__name__} {value!r}")
            if isinstance(value, float) and not math.isfinite(value):
                _fail(loc, path, "must be finite")


def _profile(spec, which: str, slits: MultiSlit, loc: _Locator, base_dir) -> PumpProfile:
    path = f"arms.{which}"
    if isinstance(spec, str):
        if spec == "focused":
            return focused_arm1(slits)
        if spec == "broad":
            return broad_arm2(slits)
        _fail(loc, path, f"unknown profile {spec!r}; use 'focused', 'broad' or a mapping")
    kind = spec.get("kind")
    if kind not in _PROFILE_KEYS:
        _fail(loc, path, f"profile kind must be one of {sorted(_PROFILE_KEYS)}, got {kind!r}")
    extra = set(spec) - _PROFILE_KEYS[kind] - {"kind"}
    if extra:
        _fail(loc, path, f"unknown keys {sorted(extra)} for a {kind} profile")
    try:
        if kind == "gaussian":
            return Gaussian(waist=float(spec["waist"]), center=float(spec.get("center", 0.0)))
        if kind == "tophat":
            return TopHat(half_width=float(spec["half_width"]),
                          center=float(spec.get("center", 0.0)))
        table = Path(spec["path"])
        if base_dir is not None and not table.is_absolute():
            table = base_dir / table
        return load_sampled(table)
    except KeyError as exc:
        _fail(loc, path, f"{kind} profile needs key {exc.args[0]!r}")
    except (ValueError, TypeError, OSError) as exc:
        _fail(loc, path, str(exc))


def _grid(section: dict, prefix: str, loc: _Locator) -> np.ndarray:
    start, stop, n = section[f"{prefix}_start"], section[f"{prefix}_stop"], section[f"{prefix}_points"]
    if n < 2 or not stop > start:
        _fail(loc, f"scan.{prefix}_points", f"need {prefix}_stop > {prefix}_start and >= 2 points")
    return np.linspace(start, stop, n)


def resolve(raw, *, text: str | None = None, base_dir=None, seed: int | None = None) -> ExperimentConfig:
    loc = _Locator(text)
    raw = copy.deepcopy(raw)
    _check_shape(raw, loc)
    ap, op, arms, sc, co, bs = (raw[k] for k in SCHEMA)
    try:
        slits = MultiSlit(ap["num_slits"], float(ap["half_width"]), float(ap["spacing"]))
    except ValueError as exc:
        _fail(loc, "aperture", str(exc))
    try:
        dc = op["downconverted_wavelength"]
        setup = OpticalSetup(float(op["pump_wavelength"]), float(op["crystal_to_slit"]),
                             float(op["slit_to_detector"]), float(op["detector_half_width"]),
                             None if dc is None else float(dc))
    except ValueError as exc:
        _fail(loc, "optics", str(exc))
    profiles = [_profile(arms[f"arm{i}_profile"], f"arm{i}_profile", slits, loc, base_dir)
                for i in (1, 2)]
    if not (arms["arm1_open"] or arms["arm2_open"]):
        _fail(loc, "arms.arm1_open", "at least one interferometer arm must be open")
    if arms["hwp_angle"] is not None:
        weights = hwp_weights(float(arms["hwp_angle"]))
    else:
        weights = (float(arms["weight_arm1"]), float(arms["weight_arm2"]))
        for i, w in enumerate(weights, 1):
            if w < 0:
                _fail(loc, f"arms.weight_arm{i}", "weights must be >= 0")
        if sum(weights) <= 0:
            _fail(loc, "arms.weight_arm1", "weights must not both be zero")
        weights = (weights[0] / sum(weights), weights[1] / sum(weights))
    open_weight = weights[0] * arms["arm1_open"] + weights[1] * arms["arm2_open"]
    if open_weight <= 0:
        _fail(loc, "arms", "every open arm has zero weight")
    if co["total"] < 1:
        _fail(loc, "counts.total", "must be >= 1")
    if co["integration_time_s"] <= 0:
        _fail(loc, "counts.integration_time_s", "must be > 0")
    if co["seed"] < 0:
        _fail(loc, "counts.seed", "must be >= 0")
    if bs["n_resamples"] < 100:
        _fail(loc, "bootstrap.n_resamples", "must be >= 100")
    return ExperimentConfig(
        slits=slits, setup=setup,
        arms=ArmConfiguration(profiles[0], profiles[1], arms["arm1_open"], arms["arm2_open"]),
        weights=weights,
        nearfield_positions=_grid(sc, "nearfield", loc),
        farfield_positions=_grid(sc, "farfield", loc),
        include_fresnel_phase=sc["include_fresnel_phase"],
        farfield_detector_convolution=sc["farfield_detector_convolution"],
        total_counts=co["total"], integration_time_s=float(co["integration_time_s"]),
        seed=co["seed"] if seed is None else int(seed),
        n_resamples=bs["n_resamples"], raw=raw,
    )
