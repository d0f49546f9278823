"""Pump-beam transverse profiles at the aperture plane.

Every profile is peak-normalised with a flat phase; the overall scale drops
out when two-photon coefficients are normalised, so only the shape matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MultiSlit


@dataclass(frozen=True)
class Gaussian:
    waist: float
    center: float = 0.0

    def __post_init__(self):
        if not self.waist > 0:
            raise ValueError(f"Gaussian waist must be > 0, got {self.waist!r}")


@dataclass(frozen=True)
class TopHat:
    half_width: float
    center: float = 0.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"TopHat half_width must be > 0, got {self.half_width!r}")


@dataclass(frozen=True, eq=False)
class Sampled:
    """Tabulated complex amplitude, linearly interpolated inside the grid."""

    positions: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        w = np.asarray(self.amplitudes, dtype=complex)
        if x.ndim != 1 or x.shape != w.shape:
            raise ValueError("positions and amplitudes must be 1-D arrays of equal length")
        if x.size < 2:
            raise ValueError("a sampled profile needs at least 2 points")
        if np.any(np.diff(x) <= 0):
            raise ValueError("sampled positions must be strictly ascending")
        if not np.any(w != 0):
            raise ValueError("sampled profile has no nonzero amplitude")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "amplitudes", w)


PumpProfile = Gaussian | TopHat | Sampled


@dataclass(frozen=True)
class ArmConfiguration:
    """Pump profiles of the two interferometer arms and which arms are open."""

    arm1_profile: PumpProfile
    arm2_profile: PumpProfile
    arm1_open: bool = True
    arm2_open: bool = True

    def open_arms(self) -> list[tuple[int, PumpProfile]]:
        arms = [(1, self.arm1_profile)] if self.arm1_open else []
        if self.arm2_open:
            arms.append((2, self.arm2_profile))
        if not arms:
            raise ValueError("at least one interferometer arm must be open")
        return arms


def evaluate(profile: PumpProfile, x):
    """Complex pump amplitude at position(s) ``x``."""
    x = np.asarray(x, dtype=float)
    if isinstance(profile, Gaussian):
        out = np.exp(-((x - profile.center) / profile.waist) ** 2).astype(complex)
    elif isinstance(profile, TopHat):
        out = (np.abs(x - profile.center) <= profile.half_width).astype(complex)
    elif isinstance(profile, Sampled):
        xp, w = profile.positions, profile.amplitudes
        re = np.interp(x, xp, w.real, left=0.0, right=0.0)
        im = np.interp(x, xp, w.imag, left=0.0, right=0.0)
        out = re + 1j * im
    else:
        raise TypeError(f"unknown pump profile {type(profile).__name__}")
    return complex(out) if out.ndim == 0 else out


def focused_arm1(slits: MultiSlit) -> Gaussian:
    # w = d/8 puts W(+-d/2)/W(0) at exp(-16), so only m = -l survives
    return Gaussian(waist=slits.spacing / 8, center=0.0)


def broad_arm2(slits: MultiSlit) -> Gaussian:
    # w = 8*D*d keeps W within ~0.1% of its peak at the double-slit midpoints
    return Gaussian(waist=8 * slits.dim * slits.spacing, center=0.0)


def load_sampled(path) -> Sampled:
    """Read a ``position_m, real[, imag]`` table (comma or whitespace separated)."""
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    delimiter = "," if lines and "," in lines[0] else None
    try:
        table = np.loadtxt(lines, delimiter=delimiter, ndmin=2)
    except ValueError as exc:
        raise ValueError(f"{path}: cannot parse sampled pump table: {exc}") from None
    if table.shape[1] not in (2, 3):
        raise ValueError(f"{path}: expected 2 or 3 columns, got {table.shape[1]}")
    amps = table[:, 1] + (1j * table[:, 2] if table.shape[1] == 3 else 0)
    return Sampled(positions=table[:, 0], amplitudes=amps)
