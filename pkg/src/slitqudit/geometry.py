"""Multi-slit aperture geometry and the optical layout.

Slit labels run over ``-(D-1)/2, ..., (D-1)/2`` in unit steps, so even ``D``
gives half-integer labels.  Slit ``l`` is centred at ``x = l * spacing``.
For double slits the labels ``"+"`` and ``"-"`` denote ``+1/2`` and ``-1/2``
(upper slit at ``+spacing/2``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSlitLabelError

Label = float | str


@dataclass(frozen=True)
class MultiSlit:
    """Array of ``num_slits`` equal slits of half-width ``half_width``.

    ``spacing`` is the centre-to-centre distance between neighbouring slits
    (metres).  Touching slits (``spacing == 2 * half_width``) are rejected.
    """

    num_slits: int
    half_width: float
    spacing: float

    def __post_init__(self):
        if int(self.num_slits) != self.num_slits or self.num_slits < 2:
            raise ValueError(f"num_slits must be an integer >= 2, got {self.num_slits!r}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be > 0, got {self.half_width!r}")
        if not self.spacing > 2 * self.half_width:
            raise ValueError(
                "spacing must exceed 2*half_width (slits would overlap or touch): "
                f"spacing={self.spacing!r}, half_width={self.half_width!r}"
            )

    @property
    def dim(self) -> int:
        return int(self.num_slits)

    @property
    def labels(self) -> np.ndarray:
        """Slit labels in ascending order."""
        return np.arange(self.dim) - (self.dim - 1) / 2

    def index_of(self, label: Label) -> int:
        """Array index of a slit label (numeric, or ``"+"``/``"-"`` for D=2)."""
        if isinstance(label, str):
            text = label.strip().replace("−", "-")
            if self.dim == 2 and text in ("+", "-"):
                return 1 if text == "+" else 0
            try:
                label = float(text)
            except ValueError:
                raise InvalidSlitLabelError(f"unknown slit label {label!r}") from None
        idx = label + (self.dim - 1) / 2
        if not math.isclose(idx, round(idx), abs_tol=1e-9) or not 0 <= round(idx) < self.dim:
            raise InvalidSlitLabelError(
                f"slit label {label!r} not in {list(self.labels)} for D={self.dim}"
            )
        return int(round(idx))

    def label_name(self, index: int) -> str:
        """Display name of a slit: ``+``/``-`` for double slits, the number otherwise."""
        if self.dim == 2:
            return "+" if index == 1 else "-"
        return f"{self.labels[index]:g}"


@dataclass(frozen=True)
class OpticalSetup:
    """Distances and wavelengths of the down-conversion layout (SI units).

    ``downconverted_wavelength`` defaults to twice the pump wavelength
    (degenerate emission).
    """

    pump_wavelength: float
    crystal_to_slit: float
    slit_to_detector: float
    detector_half_width: float
    downconverted_wavelength: float | None = None

    def __post_init__(self):
        if self.downconverted_wavelength is None:
            object.__setattr__(self, "downconverted_wavelength", 2.0 * self.pump_wavelength)
        for name in ("pump_wavelength", "downconverted_wavelength", "crystal_to_slit",
                     "slit_to_detector", "detector_half_width"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")

    @property
    def pump_wavenumber(self) -> float:
        return 2 * math.pi / self.pump_wavelength

    @property
    def downconverted_wavenumber(self) -> float:
        return 2 * math.pi / self.downconverted_wavelength


def slit_centers(slits: MultiSlit) -> np.ndarray:
    return slits.labels * slits.spacing


def transmission(slits: MultiSlit, x):
    """Binary transmission of the aperture at position(s) ``x``."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x[..., None] - slit_centers(slits)) <= slits.half_width
    out = inside.any(axis=-1).astype(int)
    return int(out) if out.ndim == 0 else out


def basis_overlap_oracle(slits: MultiSlit, l: Label, l_prime: Label,
                         q_max: float | None = None, n_points: int = 200_001,
                         *, spacing: float | None = None) -> complex:
    """Brute-force quadrature of the slit-basis overlap <l|l'>.

    Integrates ``(a/pi) * exp(-i q (l - l') d) * sinc^2(q a)`` over
    ``[-q_max, q_max]`` with the trapezoid rule.  Used as an independent check
    that the slit states are orthonormal; the main code never calls it.

    ``spacing`` overrides the aperture spacing, which lets the oracle probe
    hypothetical overlapping geometries that ``MultiSlit`` refuses to build.
    """
    a = slits.half_width
    d = slits.spacing if spacing is None else spacing
    if q_max is None:
        q_max = 400 * math.pi / a
    if q_max * a < 10 * math.pi:
        raise ValueError(f"q_max*a = {q_max * a:.3g} < 10*pi: quadrature range too short")
    if n_points < 10_000:
        raise ValueError(f"n_points must be >= 1e4, got {n_points}")
    dl = _label_value(slits, l) - _label_value(slits, l_prime)
    q = np.linspace(-q_max, q_max, n_points)
    integrand = np.exp(-1j * q * dl * d) * np.sinc(q * a / math.pi) ** 2
    return complex(a / math.pi * np.trapezoid(integrand, q))


def _label_value(slits: MultiSlit, label: Label) -> float:
    if isinstance(label, str):
        return float(slits.labels[slits.index_of(label)])
    return float(label)
