"""Recovering state parameters from count data.

Near-field scans give the basis-state probabilities ``P(l, m)``.  Phases are
not measured by those scans; reconstructed states take their phases from the
down-conversion model, ``exp(i phi (m - l)^2)``, and reports say so.  Mixing
weights come from coincidence totals with one arm blocked.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .density import pure_concurrence, state_fidelity
from .detection import CountRecord
from .errors import (EmptyDataError, InsufficientResamplesError,
                     ScanCoverageIncompleteError, ZeroDenominatorError)
from .geometry import Label, MultiSlit, slit_centers
from .states import TwoQuditState

_WINDOW_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class PeakIntegrals:
    """Window-summed counts ``counts[l, m]`` (fixed photon's slit ``l`` for signal-fixed scans).

    ``measured`` marks which rows/columns were actually scanned; ``background``
    collects counts that fell outside every slit window.
    """

    counts: np.ndarray
    measured: np.ndarray
    background: float = 0.0

    @property
    def total(self) -> float:
        return float(self.counts[self.measured].sum())

    @property
    def complete(self) -> bool:
        return bool(self.measured.all())

    def __add__(self, other: "PeakIntegrals") -> "PeakIntegrals":
        return PeakIntegrals(self.counts + other.counts, self.measured | other.measured,
                             self.background + other.background)


def integrate_peaks(record: CountRecord, slits: MultiSlit, fixed_slit: Label | None = None,
                    fixed_mode: str | None = None) -> PeakIntegrals:
    """Sum a near-field record's counts over each geometric slit window ``[x_m - a, x_m + a]``."""
    fixed_slit = record.pattern.fixed_slit if fixed_slit is None else fixed_slit
    fixed_mode = record.pattern.fixed_mode if fixed_mode is None else fixed_mode
    if fixed_slit is None:
        raise ValueError("record does not say which slit the fixed detector was behind")
    row = slits.index_of(fixed_slit)
    x = record.positions
    counts = np.asarray(record.counts, dtype=float)
    in_any = np.zeros(x.shape, dtype=bool)
    sums = np.zeros(slits.dim)
    for m, c in enumerate(slit_centers(slits)):
        inside = np.abs(x - c) <= slits.half_width * (1 + _WINDOW_RTOL)
        if not inside.any():
            raise ScanCoverageIncompleteError(
                f"no scan point inside the window of slit {slits.label_name(m)} "
                f"[{c - slits.half_width:.6e}, {c + slits.half_width:.6e}] m"
            )
        sums[m] = counts[inside].sum()
        in_any |= inside
    table = np.zeros((slits.dim, slits.dim))
    measured = np.zeros((slits.dim, slits.dim), dtype=bool)
    if fixed_mode == "idler":
        table[:, row], measured[:, row] = sums, True
    else:
        table[row, :], measured[row, :] = sums, True
    return PeakIntegrals(table, measured, float(counts[~in_any].sum()))


def compose_peaks(partials: Sequence[PeakIntegrals]) -> PeakIntegrals:
    out = partials[0]
    for p in partials[1:]:
        out = out + p
    return out


def probabilities_from_peaks(peaks: PeakIntegrals) -> np.ndarray:
    """Basis-state probability table ``P[l, m]``."""
    if not peaks.complete:
        missing = sorted({int(i) for i in np.argwhere(~peaks.measured)[:, 0]})
        raise ScanCoverageIncompleteError(f"probability table rows {missing} were never scanned")
    total = peaks.total
    if total <= 0:
        raise EmptyDataError("no counts inside any slit window")
    return peaks.counts / total


def reconstruct_state(probs, phi: float, phases: str = "model") -> TwoQuditState:
    """Pure state with amplitudes ``sqrt(P)``.

    ``phases="model"`` attaches ``exp(i phi (m - l)^2)``; ``phases="none"``
    returns the bare moduli.
    """
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    amps = np.sqrt(p).astype(complex)
    if phases == "model":
        d = p.shape[0]
        labels = np.arange(d) - (d - 1) / 2
        l, m = np.meshgrid(labels, labels, indexing="ij")
        amps = amps * np.exp(1j * phi * (m - l) ** 2)
    elif phases != "none":
        raise ValueError(f"phases must be 'model' or 'none', got {phases!r}")
    return TwoQuditState.from_unnormalized(amps)


@dataclass(frozen=True)
class WeightEstimate:
    A: float
    B: float
    raw_A: float
    raw_B: float


def estimate_weights(total_arm1_only, total_arm2_only, total_both) -> WeightEstimate:
    """Arm probabilities from blocked-arm coincidence totals.

    Raw ratios are each single-arm total over the open-open total; the
    reported ``(A, B)`` are those ratios renormalised to sum to one.
    """
    if not total_both > 0:
        raise ZeroDenominatorError("coincidence total with both arms open must be > 0")
    raw_a = float(total_arm1_only) / float(total_both)
    raw_b = float(total_arm2_only) / float(total_both)
    if raw_a < 0 or raw_b < 0:
        raise ValueError("coincidence totals must be nonnegative")
    if raw_a + raw_b <= 0:
        raise ZeroDenominatorError("both single-arm totals are zero")
    s = raw_a + raw_b
    return WeightEstimate(raw_a / s, raw_b / s, raw_a, raw_b)


def _as_list(group) -> list[CountRecord]:
    if isinstance(group, CountRecord):
        return [group]
    if isinstance(group, dict):
        return list(group.values())
    return list(group)


def _total(group) -> float:
    return float(sum(np.sum(r.counts) for r in _as_list(group)))


def state_from_records(records, slits: MultiSlit, phi: float,
                       phases: str = "model") -> TwoQuditState:
    peaks = compose_peaks([integrate_peaks(r, slits) for r in _as_list(records)])
    return reconstruct_state(probabilities_from_peaks(peaks), phi, phases)


def weights_from_records(arm1, arm2, both) -> WeightEstimate:
    return estimate_weights(_total(arm1), _total(arm2), _total(both))


@dataclass(frozen=True)
class BootstrapResult:
    mean: float
    std: float
    n_resamples: int
    seed: int
    values: np.ndarray


def _resample(records, rng: np.random.Generator):
    """Poisson-parametric copy of a (possibly nested) record structure."""
    if isinstance(records, CountRecord):
        return records.with_counts(rng.poisson(np.asarray(records.counts, dtype=float)))
    if isinstance(records, dict):
        return {k: _resample(v, rng) for k, v in records.items()}
    return [_resample(r, rng) for r in records]


def bootstrap_uncertainty(records, statistic: str | Callable, n_resamples: int = 200,
                          seed: int = 0, *, slits: MultiSlit | None = None, phi: float = 0.0,
                          target: TwoQuditState | None = None,
                          max_workers: int | None = None) -> BootstrapResult:
    """Spread of a statistic under Poisson resampling of the observed counts.

    ``statistic`` is ``"fidelity"`` (reconstructed state vs ``target``),
    ``"concurrence"`` (of the reconstructed double-slit state) or ``"A"``; or
    a callable taking the resampled records.  For the state statistics
    ``records`` are the near-field records of one arm; for ``"A"`` they are
    the three groups ``(arm1_only, arm2_only, both_open)``.

    Resample ``i`` draws from child stream ``i`` of ``seed``, so the result
    does not depend on ``max_workers``.
    """
    if n_resamples < 100:
        raise InsufficientResamplesError(f"n_resamples must be >= 100, got {n_resamples}")
    fn = _statistic(statistic, slits, phi, target)
    streams = np.random.SeedSequence(seed).spawn(n_resamples)

    def one(ss):
        return fn(_resample(records, np.random.default_rng(ss)))

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            values = np.array(list(pool.map(one, streams)))
    else:
        values = np.array([one(ss) for ss in streams])
    return BootstrapResult(float(values.mean()), float(values.std(ddof=1)),
                           n_resamples, seed, values)


def _statistic(statistic, slits, phi, target) -> Callable:
    if callable(statistic):
        return statistic
    if statistic == "A":
        return lambda recs: weights_from_records(*recs).A
    if slits is None:
        raise ValueError(f"statistic {statistic!r} needs the aperture geometry")
    if statistic == "fidelity":
        if target is None:
            raise ValueError("fidelity statistic needs a target state")
        return lambda recs: state_fidelity(state_from_records(recs, slits, phi), target)
    if statistic == "concurrence":
        return lambda recs: pure_concurrence(state_from_records(recs, slits, phi))
    raise ValueError(f"unknown statistic {statistic!r}")
