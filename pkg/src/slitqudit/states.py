"""Two-qudit pure states of photon pairs transmitted by identical multi-slits.

Coefficients ``c[l, m]`` are indexed by signal slit (rows) and idler slit
(columns), both in ascending label order.  For double slits row/column 0 is
slit ``-`` and row/column 1 is slit ``+``.

Global phase convention: the largest-magnitude coefficient is made real and
positive; ties (within 1e-12 relative) go to the first index in row-major
order.  This also absorbs the common ``exp(i*phi)`` factor that the
maximally entangled double-slit state would otherwise carry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllCoefficientsZeroError
from .geometry import MultiSlit, OpticalSetup
from .pump import PumpProfile, evaluate

NORM_TOL = 1e-12
_TIE_RTOL = 1e-12
_ZERO_PUMP = 1e-30


@dataclass(frozen=True, eq=False)
class TwoQuditState:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
            raise ValueError(f"coefficient matrix must be square DxD with D>=2, got {c.shape}")
        norm = np.sum(np.abs(c) ** 2)
        if abs(norm - 1) > NORM_TOL:
            raise ValueError(f"state is not normalised: sum |c|^2 = {norm!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_unnormalized(cls, coeffs, fix_phase: bool = True) -> "TwoQuditState":
        c = np.asarray(coeffs, dtype=complex)
        norm = math.sqrt(float(np.sum(np.abs(c) ** 2)))
        if norm == 0:
            raise AllCoefficientsZeroError("all coefficients are zero")
        c = c / norm
        return cls(fix_global_phase(c) if fix_phase else c)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def vector(self) -> np.ndarray:
        """Composite state vector, signal label outer and idler label inner."""
        return self.coeffs.reshape(-1)

    def overlap(self, other: "TwoQuditState") -> complex:
        return complex(np.vdot(self.vector, other.vector))


def fix_global_phase(coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs, dtype=complex)
    flat = c.reshape(-1)
    mag = np.abs(flat)
    k = int(np.argmax(mag >= mag.max() * (1 - _TIE_RTOL)))
    ref = flat[k]
    if ref.imag == 0 and ref.real > 0:
        return c
    out = c * (np.conj(ref) / abs(ref))
    # pin the reference exactly so that re-fixing is a no-op
    out.reshape(-1)[k] = abs(ref)
    return out


def phase_phi(setup: OpticalSetup, slits: MultiSlit) -> float:
    """Pair phase ``k_p d^2 / (8 z_A)`` in radians (not wrapped)."""
    return setup.pump_wavenumber * slits.spacing**2 / (8 * setup.crystal_to_slit)


def synthesize(pump: PumpProfile, slits: MultiSlit, setup: OpticalSetup) -> TwoQuditState:
    """Pure two-qudit state generated by ``pump`` through identical apertures.

    ``c[l, m]`` is proportional to ``W((l + m) d / 2) * exp(i phi (m - l)^2)``
    with the pump point-sampled at each slit-pair midpoint.
    """
    labels = slits.labels
    l, m = np.meshgrid(labels, labels, indexing="ij")
    w = evaluate(pump, (l + m) * slits.spacing / 2)
    if np.max(np.abs(w)) < _ZERO_PUMP:
        raise AllCoefficientsZeroError(
            "pump amplitude vanishes at every slit-pair midpoint; check pump centre/width "
            "against the aperture"
        )
    phi = phase_phi(setup, slits)
    return TwoQuditState.from_unnormalized(w * np.exp(1j * phi * (m - l) ** 2))


def psi1() -> TwoQuditState:
    """Maximally entangled double-slit state ``(|+-> + |-+>)/sqrt(2)``."""
    s = 1 / math.sqrt(2)
    return TwoQuditState(np.array([[0, s], [s, 0]], dtype=complex))


def psi2(phi: float) -> TwoQuditState:
    """Broad-pump double-slit state ``(e^{i phi}(|-+> + |+->) + |--> + |++>)/2``."""
    e = np.exp(1j * phi)
    return TwoQuditState(0.5 * np.array([[1, e], [e, 1]], dtype=complex))


def product_state(signal, idler) -> TwoQuditState:
    """Normalised ``|signal> (x) |idler>`` from two single-photon amplitude vectors."""
    return TwoQuditState.from_unnormalized(np.outer(signal, idler), fix_phase=False)


def from_table(amplitudes: dict[str, complex]) -> TwoQuditState:
    """Double-slit state from a ``{"++": c, "+-": c, ...}`` amplitude table.

    The table is renormalised; no global-phase fixing is applied.
    """
    c = np.zeros((2, 2), dtype=complex)
    for key, value in amplitudes.items():
        s, i = key.replace("−", "-")
        c[1 if s == "+" else 0, 1 if i == "+" else 0] = value
    return TwoQuditState.from_unnormalized(c, fix_phase=False)
