"""Blocked-arm scenarios of the two-arm pump interferometer.

The arms add incoherently, so every rate with both arms open is the
weight-averaged sum of the single-arm rates.  Patterns built here keep that
absolute scale: the arm-1-only pattern carries weight ``A``, the arm-2-only
pattern weight ``B`` and the open-open pattern ``A + B = 1``.
"""

from __future__ import annotations

import numpy as np

from .density import DensityOperator, MixtureSpec, mix
from .detection import CountRecord, PatternData, ScanConfig, nearfield_scan, sample_counts
from .geometry import MultiSlit, OpticalSetup
from .pump import ArmConfiguration
from .states import TwoQuditState, synthesize

SCENARIOS = ("1", "2", "both")


def arm_states(arms: ArmConfiguration, slits: MultiSlit,
               setup: OpticalSetup) -> tuple[TwoQuditState, TwoQuditState]:
    return (synthesize(arms.arm1_profile, slits, setup),
            synthesize(arms.arm2_profile, slits, setup))


def open_mixture(states, weights, arm1_open=True, arm2_open=True) -> DensityOperator:
    """Density operator with the given arms open (closed arms get zero weight)."""
    w = (weights[0] if arm1_open else 0.0, weights[1] if arm2_open else 0.0)
    if w[0] + w[1] <= 0:
        raise ValueError("no open arm carries any weight")
    return mix(MixtureSpec(w, tuple(states)))


def blocked_arm_patterns(states, weights, cfg: ScanConfig, setup: OpticalSetup,
                         slits: MultiSlit, fixed_slits=None) -> dict[str, dict]:
    """Near-field patterns for arm 1 only, arm 2 only and both arms open.

    Returns ``{scenario: {fixed_slit: PatternData}}`` with ``scenario`` in
    ``("1", "2", "both")`` and ``fixed_slit`` the slit labels (``"+"``/``"-"``
    for double slits).
    """
    if fixed_slits is None:
        fixed_slits = [slits.label_name(i) for i in reversed(range(slits.dim))]
    a, b = float(weights[0]), float(weights[1])
    total = a + b
    a, b = a / total, b / total
    rho1 = DensityOperator.pure(states[0])
    rho2 = DensityOperator.pure(states[1])
    out: dict[str, dict] = {s: {} for s in SCENARIOS}
    for fixed in fixed_slits:
        p1 = nearfield_scan(rho1, fixed, cfg, setup, slits)
        p2 = nearfield_scan(rho2, fixed, cfg, setup, slits)
        out["1"][fixed] = p1.scaled(a)
        out["2"][fixed] = p2.scaled(b)
        out["both"][fixed] = PatternData(
            p1.positions, a * p1.coincidence_rate + b * p2.coincidence_rate,
            a * p1.singles_rate + b * p2.singles_rate, fixed, cfg.fixed_mode)
    return out


def reference_total(patterns: dict[str, dict]) -> float:
    """Summed open-open coincidence rate over every fixed slit."""
    return float(sum(p.coincidence_rate.sum() for p in patterns["both"].values()))


def sample_blocked_arm_records(patterns: dict[str, dict], total_counts: int, seed,
                               integration_time_s: float = 20.0) -> dict[str, dict]:
    """Poisson records for every scenario on one absolute scale.

    ``total_counts`` is the expected coincidence total with both arms open,
    summed over the fixed-slit positions.  Each (scenario, fixed slit) pair
    draws from its own child stream of ``seed``.
    """
    ref = reference_total(patterns)
    keys = [(s, f) for s in SCENARIOS for f in patterns[s]]
    streams = np.random.SeedSequence(seed).spawn(len(keys))
    out: dict[str, dict] = {s: {} for s in SCENARIOS}
    for (scenario, fixed), ss in zip(keys, streams):
        pattern = patterns[scenario][fixed]
        if not np.any(pattern.coincidence_rate > 0):
            # a zero-weight arm detects nothing
            zeros = np.zeros(pattern.positions.shape, dtype=np.int64)
            out[scenario][fixed] = CountRecord(pattern, zeros, total_counts, seed,
                                               integration_time_s, zeros)
            continue
        rec = sample_counts(pattern, total_counts, np.random.default_rng(ss),
                            reference_total=ref, integration_time_s=integration_time_s)
        out[scenario][fixed] = CountRecord(rec.pattern, rec.counts, rec.total_counts, seed,
                                           integration_time_s, rec.singles_counts)
    return out
