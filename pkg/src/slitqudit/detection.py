"""Forward models of coincidence and singles measurements.

Two measurement planes are modelled:

* near field, with detectors just behind the apertures, where each detector
  resolves which slit a photon went through;
* far field, at distance ``slit_to_detector``, where each slit contributes the
  Fraunhofer amplitude ``sinc(k a x / z) * exp(i k l d x / z)`` (``k`` the
  down-converted wavenumber), optionally with a per-slit Fresnel phase.

Rates are in arbitrary units; only shapes and ratios are physical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import DensityOperator
from .errors import AllRatesZeroError, DimensionMismatchError
from .geometry import Label, MultiSlit, OpticalSetup, slit_centers

NEAR_FIELD = "near"
FAR_FIELD = "far"
_CONV_NODES = 16


@dataclass(frozen=True, eq=False)
class ScanConfig:
    """One detector held fixed while the other scans ``scan_positions``.

    ``fixed_mode`` names the fixed photon (``"signal"`` or ``"idler"``).  In
    the near field ``fixed_slit`` says which slit the fixed detector sits
    behind; in the far field ``fixed_position`` gives its transverse position.
    """

    plane: str
    scan_positions: np.ndarray
    detector_half_width: float
    fixed_mode: str = "signal"
    fixed_slit: Label | None = None
    fixed_position: float = 0.0
    include_fresnel_phase: bool = True
    convolve_detector: bool = False

    def __post_init__(self):
        if self.plane not in (NEAR_FIELD, FAR_FIELD):
            raise ValueError(f"plane must be {NEAR_FIELD!r} or {FAR_FIELD!r}, got {self.plane!r}")
        if self.fixed_mode not in ("signal", "idler"):
            raise ValueError(f"fixed_mode must be 'signal' or 'idler', got {self.fixed_mode!r}")
        x = np.array(self.scan_positions, dtype=float).reshape(-1)
        if x.size == 0:
            raise ValueError("scan_positions is empty")
        if np.any(np.diff(x) <= 0):
            raise ValueError("scan_positions must be strictly ascending")
        if not self.detector_half_width > 0:
            raise ValueError("detector_half_width must be > 0")
        x.setflags(write=False)
        object.__setattr__(self, "scan_positions", x)

    @property
    def scan_mode(self) -> str:
        return "idler" if self.fixed_mode == "signal" else "signal"


@dataclass(frozen=True, eq=False)
class PatternData:
    positions: np.ndarray
    coincidence_rate: np.ndarray
    singles_rate: np.ndarray
    fixed_slit: Label | None = None
    fixed_mode: str = "signal"

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        c = np.asarray(self.coincidence_rate, dtype=float)
        s = np.asarray(self.singles_rate, dtype=float)
        if not (x.shape == c.shape == s.shape) or x.ndim != 1:
            raise ValueError("positions, coincidence_rate and singles_rate must be equal-length 1-D")
        if np.any(c < 0) or np.any(s < 0):
            raise ValueError("rates must be nonnegative")
        for name, arr in (("positions", x), ("coincidence_rate", c), ("singles_rate", s)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def scaled(self, factor: float) -> "PatternData":
        """Same pattern with both rates multiplied by ``factor`` (e.g. an arm weight)."""
        return PatternData(self.positions, self.coincidence_rate * factor,
                           self.singles_rate * factor, self.fixed_slit, self.fixed_mode)


@dataclass(frozen=True, eq=False)
class CountRecord:
    """Detected coincidences per scan position.

    Sampled records hold integer counts.  Noiseless records built by
    ``expected_record`` hold the float expectations and have ``seed=None``.
    """

    pattern: PatternData
    counts: np.ndarray
    total_counts: int
    seed: int | None
    integration_time_s: float = 20.0
    singles_counts: np.ndarray | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != self.pattern.positions.shape:
            raise ValueError("counts must have one entry per scan position")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def positions(self) -> np.ndarray:
        return self.pattern.positions

    def with_counts(self, counts) -> "CountRecord":
        return CountRecord(self.pattern, counts, self.total_counts, self.seed,
                           self.integration_time_s, self.singles_counts)


def _sinc(u):
    return np.sinc(np.asarray(u) / math.pi)


def slit_amplitude(l: Label, x, setup: OpticalSetup, slits: MultiSlit,
                   include_fresnel: bool = True):
    """Far-field amplitude at ``x`` of a photon leaving slit ``l``."""
    lv = float(slits.labels[slits.index_of(l)]) if isinstance(l, str) else float(l)
    return _amplitudes(np.asarray(x, dtype=float), setup, slits, include_fresnel,
                       labels=np.array([lv]))[..., 0]


def _amplitudes(x, setup, slits, include_fresnel, labels=None):
    """Slit amplitudes with shape ``x.shape + (D,)``."""
    k, z = setup.downconverted_wavenumber, setup.slit_to_detector
    labels = slits.labels if labels is None else labels
    x = np.asarray(x, dtype=float)[..., None]
    centers = labels * slits.spacing
    phase = k * centers * x / z
    if include_fresnel:
        phase = phase + k * centers**2 / (2 * z)
    return _sinc(k * slits.half_width * x / z) * np.exp(1j * phase)


def envelope(x, setup: OpticalSetup, slits: MultiSlit):
    """Single-slit diffraction envelope ``sinc^2(k a x / z)``."""
    k, z = setup.downconverted_wavenumber, setup.slit_to_detector
    return _sinc(k * slits.half_width * np.asarray(x, dtype=float) / z) ** 2


def _check_dims(rho: DensityOperator, slits: MultiSlit):
    if rho.qudit_dim != slits.dim:
        raise DimensionMismatchError(
            f"density operator is for D={rho.qudit_dim}, aperture has D={slits.dim}"
        )


def _detector_nodes(x, half_width, convolve):
    """Sample points and weights averaging a top-hat detector centred at ``x``."""
    x = np.asarray(x, dtype=float)
    if not convolve:
        return x[..., None], np.ones(1)
    nodes, weights = np.polynomial.legendre.leggauss(_CONV_NODES)
    return x[..., None] + half_width * nodes, weights / 2


def coincidence_pattern(rho: DensityOperator, xs, xi, setup: OpticalSetup,
                        slits: MultiSlit, cfg: ScanConfig | None = None):
    """Far-field coincidence rate ``C(x_s, x_i)``.

    ``xs`` and ``xi`` broadcast against each other.  The rate is the quadratic
    form ``u^T rho u*`` with ``u[l, m] = A_l(x_s) A_m(x_i)``, nonnegative for
    any positive ``rho``.  With ``cfg.convolve_detector`` both detectors are
    averaged over their top-hat width.
    """
    _check_dims(rho, slits)
    fresnel = True if cfg is None else cfg.include_fresnel_phase
    convolve = False if cfg is None else cfg.convolve_detector
    half = setup.detector_half_width if cfg is None else cfg.detector_half_width
    xs, xi = np.broadcast_arrays(np.asarray(xs, dtype=float), np.asarray(xi, dtype=float))
    ps, ws = _detector_nodes(xs, half, convolve)
    pi, wi = _detector_nodes(xi, half, convolve)
    a_s = _amplitudes(ps, setup, slits, fresnel)            # (..., ns, D)
    a_i = _amplitudes(pi, setup, slits, fresnel)            # (..., ni, D)
    t = rho.tensor()
    # sum over l,m,l',m' of rho[l,m,l',m'] A_l A_m conj(A_l') conj(A_m')
    val = np.einsum("...al,...bm,lmLM,...aL,...bM,a,b->...", a_s, a_i, t,
                    a_s.conj(), a_i.conj(), ws, wi, optimize=True)
    out = _nonnegative(np.real(val))
    return float(out) if out.ndim == 0 else out


def _nonnegative(val):
    # quadratic forms of a PSD rho are >= 0; only rounding noise may dip below
    scale = float(np.max(np.abs(val), initial=0.0))
    if np.any(val < -1e-9 * scale - 1e-300):
        raise RuntimeError("negative rate from a quadratic form: density operator not positive")
    return np.clip(val, 0.0, None)


def singles_pattern(rho: DensityOperator, x, which: str, setup: OpticalSetup,
                    slits: MultiSlit, cfg: ScanConfig | None = None):
    """Far-field singles rate of one photon, the partner traced out."""
    _check_dims(rho, slits)
    fresnel = True if cfg is None else cfg.include_fresnel_phase
    convolve = False if cfg is None else cfg.convolve_detector
    half = setup.detector_half_width if cfg is None else cfg.detector_half_width
    red = rho.reduced(which)
    pts, w = _detector_nodes(x, half, convolve)
    a = _amplitudes(pts, setup, slits, fresnel)
    val = np.einsum("...al,lL,...aL,a->...", a, red, a.conj(), w, optimize=True)
    out = _nonnegative(np.real(val))
    return float(out) if out.ndim == 0 else out


def farfield_scan(rho: DensityOperator, cfg: ScanConfig, setup: OpticalSetup,
                  slits: MultiSlit) -> PatternData:
    """Conditional fringe: the scanning detector moves, the other stays at ``cfg.fixed_position``."""
    if cfg.plane != FAR_FIELD:
        raise ValueError("farfield_scan needs a far-field ScanConfig")
    x = cfg.scan_positions
    if cfg.fixed_mode == "idler":
        coinc = coincidence_pattern(rho, x, cfg.fixed_position, setup, slits, cfg)
    else:
        coinc = coincidence_pattern(rho, cfg.fixed_position, x, setup, slits, cfg)
    singles = singles_pattern(rho, x, cfg.scan_mode, setup, slits, cfg)
    return PatternData(x, np.atleast_1d(coinc), np.atleast_1d(singles),
                       fixed_mode=cfg.fixed_mode)


def detector_overlap(x, center: float, slit_half_width: float, det_half_width: float):
    """Fraction of a slit seen by a top-hat detector centred at ``x``.

    Overlap length of ``[x-h, x+h]`` and ``[center-a, center+a]`` divided by
    ``min(2h, 2a)``, so full coverage gives 1.
    """
    x = np.asarray(x, dtype=float)
    lo = np.maximum(x - det_half_width, center - slit_half_width)
    hi = np.minimum(x + det_half_width, center + slit_half_width)
    return np.clip(hi - lo, 0.0, None) / (2 * min(det_half_width, slit_half_width))


def nearfield_scan(rho: DensityOperator, fixed_slit: Label, cfg: ScanConfig,
                   setup: OpticalSetup, slits: MultiSlit) -> PatternData:
    """Selective slit scan with one detector parked behind ``fixed_slit``.

    The coincidence rate at scan position ``x`` is
    ``sum_{l,m} P(l, m) F(l) O(x - x_m)`` where ``F`` is the fixed detector's
    coverage of each slit (1 for its own slit when centred on it) and ``O``
    the scanning detector's coverage of slit ``m``.  Singles use the marginal
    of the scanning photon.
    """
    _check_dims(rho, slits)
    if cfg.plane != NEAR_FIELD:
        raise ValueError("nearfield_scan needs a near-field ScanConfig")
    idx = slits.index_of(fixed_slit)
    centers = slit_centers(slits)
    a, h = slits.half_width, cfg.detector_half_width
    probs = rho.diagonal_table()
    if cfg.fixed_mode == "idler":
        probs = probs.T
    # rows: fixed photon's slit, columns: scanning photon's slit
    fixed_cover = detector_overlap(centers[idx], centers, a, h)
    scan_cover = np.stack([detector_overlap(cfg.scan_positions, c, a, h) for c in centers], axis=-1)
    coinc = scan_cover @ (fixed_cover @ probs)
    singles = scan_cover @ probs.sum(axis=0)
    return PatternData(cfg.scan_positions, coinc, singles, fixed_slit=fixed_slit,
                       fixed_mode=cfg.fixed_mode)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_counts(pattern: PatternData, total_counts: int, seed, *,
                  reference_total: float | None = None,
                  integration_time_s: float = 20.0) -> CountRecord:
    """Poisson photon counts for ``pattern``.

    The expected count at position ``i`` is
    ``total_counts * rate_i / reference_total`` where ``reference_total``
    defaults to the pattern's own summed rate.  Passing a shared
    ``reference_total`` keeps several scans on one absolute scale (needed
    when records are later compared against each other).
    """
    if total_counts < 1:
        raise ValueError(f"total_counts must be >= 1, got {total_counts}")
    rate = pattern.coincidence_rate
    norm = float(rate.sum()) if reference_total is None else float(reference_total)
    if not np.any(rate > 0) or norm <= 0:
        raise AllRatesZeroError("pattern has no positive coincidence rate")
    rng = _rng(seed)
    counts = rng.poisson(total_counts * rate / norm)
    singles = rng.poisson(total_counts * pattern.singles_rate / norm)
    seed_value = seed if isinstance(seed, (int, np.integer)) else None
    return CountRecord(pattern, counts, int(total_counts), seed_value,
                       integration_time_s, singles)


def expected_record(pattern: PatternData, total_counts: float, *,
                    reference_total: float | None = None,
                    integration_time_s: float = 20.0) -> CountRecord:
    """Noiseless record holding the expected (float) counts."""
    rate = pattern.coincidence_rate
    norm = float(rate.sum()) if reference_total is None else float(reference_total)
    if not np.any(rate > 0) or norm <= 0:
        raise AllRatesZeroError("pattern has no positive coincidence rate")
    counts = total_counts * rate / norm
    singles = total_counts * pattern.singles_rate / norm
    return CountRecord(pattern, counts, int(round(total_counts)), None,
                       integration_time_s, singles)
