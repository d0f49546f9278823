"""Command-line interface: ``slitqudit {state,scan,fringes,estimate,sweep}``.

Exit codes: 0 success, 2 configuration/validation error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import PAPER_DEFAULT, ExperimentConfig, load_config
from .density import (DensityOperator, concurrence, fidelity_with_pure,
                      pure_concurrence, purity, schmidt, state_fidelity)
from .detection import (FAR_FIELD, NEAR_FIELD, CountRecord, PatternData, ScanConfig,
                        envelope, farfield_scan)
from .errors import ConfigError, DataFormatError, InvalidSlitLabelError, SlitQuditError
from .estimation import (bootstrap_uncertainty, compose_peaks, estimate_weights,
                         integrate_peaks, probabilities_from_peaks, reconstruct_state)
from .experiment import arm_states, blocked_arm_patterns, open_mixture, sample_blocked_arm_records
from .states import TwoQuditState, phase_phi, psi1, psi2

SCAN_COLUMNS = ("position_m", "coincidence_rate_au", "singles_rate_au", "counts", "singles_counts")
FRINGE_COLUMNS = ("position_m", "coincidence_norm", "singles_norm")


# -- output helpers ---------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17e")


def _write(text: str, out: str | None):
    """Write to ``out`` atomically (temp file + rename), or to stdout."""
    if out is None:
        sys.stdout.write(text)
        return
    target = Path(out)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(columns, rows, meta: dict | None = None) -> str:
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}={value}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _cplx(arr) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(arr).reshape(-1)]


def _state_json(psi: TwoQuditState) -> dict:
    return {"dim": psi.dim, "coeffs": _cplx(psi.coeffs)}


def _density_json(rho: DensityOperator) -> dict:
    return {"dim": rho.dim, "entries": _cplx(rho.matrix)}


def _labels(cfg: ExperimentConfig) -> list[str]:
    return [cfg.slits.label_name(i) for i in range(cfg.slits.dim)]


def _pair_table(cfg: ExperimentConfig, table) -> dict:
    names = _labels(cfg)
    return {f"{names[l]}{names[m]}" if cfg.slits.dim == 2 else f"{names[l]},{names[m]}":
            float(table[l, m]) for l in range(cfg.slits.dim) for m in range(cfg.slits.dim)}


# -- commands ---------------------------------------------------------------

def _state_report(cfg: ExperimentConfig) -> dict:
    slits, setup = cfg.slits, cfg.setup
    phi = phase_phi(setup, slits)
    states = arm_states(cfg.arms, slits, setup)
    rho = open_mixture(states, cfg.weights, cfg.arms.arm1_open, cfg.arms.arm2_open)
    qubits = slits.dim == 2
    arms = {}
    for i, (psi, w, is_open) in enumerate(zip(states, cfg.weights,
                                              (cfg.arms.arm1_open, cfg.arms.arm2_open)), 1):
        sch = schmidt(psi)
        arms[str(i)] = {
            "open": is_open,
            "weight": w if is_open else 0.0,
            "state": _state_json(psi),
            "concurrence": pure_concurrence(psi) if qubits else None,
            "schmidt": {"coefficients": [float(s) for s in sch.coefficients],
                        "entropy_bits": sch.entropy_bits},
        }
    mixture = {
        "weights": [arms["1"]["weight"], arms["2"]["weight"]],
        "density": _density_json(rho),
        "purity": purity(rho),
        "concurrence": concurrence(rho) if qubits else None,
        "fidelity_with_arm1_state": fidelity_with_pure(rho, states[0]),
        "fidelity_with_arm2_state": fidelity_with_pure(rho, states[1]),
    }
    total = sum(mixture["weights"])
    mixture["weights"] = [w / total for w in mixture["weights"]]
    report = {
        "command": "state",
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.resolved(),
        "basis_order": "row-major: signal slit outer, idler slit inner, labels ascending",
        "labels": _labels(cfg),
        "phi_rad": phi,
        "arms": arms,
        "mixture": mixture,
    }
    if qubits:
        report["reference"] = {
            "concurrence_psi1": pure_concurrence(psi1()),
            "concurrence_psi2": pure_concurrence(psi2(phi)),
            "fidelity_arm1_vs_psi1": state_fidelity(states[0], psi1()),
            "fidelity_arm2_vs_psi2": state_fidelity(states[1], psi2(phi)),
        }
    return report


def cmd_state(cfg: ExperimentConfig, args) -> str:
    report = _state_report(cfg)
    if args.format == "csv":
        rows = [("phi_rad", report["phi_rad"]), ("purity", report["mixture"]["purity"])]
        for i in ("1", "2"):
            rows.append((f"weight_arm{i}", report["arms"][i]["weight"]))
            rows.append((f"entropy_bits_arm{i}", report["arms"][i]["schmidt"]["entropy_bits"]))
            if report["arms"][i]["concurrence"] is not None:
                rows.append((f"concurrence_arm{i}", report["arms"][i]["concurrence"]))
        if report["mixture"]["concurrence"] is not None:
            rows.append(("concurrence_mixture", report["mixture"]["concurrence"]))
        return _csv(("quantity", "value"), rows, {"command": "state", "seed": cfg.seed})
    return _json(report)


def _nearfield_cfg(cfg: ExperimentConfig) -> ScanConfig:
    return ScanConfig(NEAR_FIELD, cfg.nearfield_positions, cfg.setup.detector_half_width,
                      include_fresnel_phase=cfg.include_fresnel_phase)


def _scenario(arm: str, cfg: ExperimentConfig) -> str:
    if arm == "both":
        return "both" if cfg.arms.arm1_open and cfg.arms.arm2_open else \
            ("1" if cfg.arms.arm1_open else "2")
    return arm


def cmd_scan(cfg: ExperimentConfig, args) -> str:
    slits = cfg.slits
    fixed = slits.label_name(slits.index_of(args.fixed_slit))
    states = arm_states(cfg.arms, slits, cfg.setup)
    fixed_all = [slits.label_name(i) for i in reversed(range(slits.dim))]
    patterns = blocked_arm_patterns(states, cfg.weights, _nearfield_cfg(cfg), cfg.setup, slits,
                                    fixed_all)
    records = sample_blocked_arm_records(patterns, cfg.total_counts, cfg.seed,
                                         cfg.integration_time_s)
    scenario = _scenario(args.arm, cfg)
    rec = records[scenario][fixed]
    p = rec.pattern
    if args.format == "json":
        return _json({
            "command": "scan", "arm": scenario, "fixed_slit": fixed, "seed": cfg.seed,
            "config": cfg.resolved(),
            "positions_m": p.positions.tolist(),
            "coincidence_rate_au": p.coincidence_rate.tolist(),
            "singles_rate_au": p.singles_rate.tolist(),
            "counts": [int(c) for c in rec.counts],
            "singles_counts": [int(c) for c in rec.singles_counts],
            "integration_time_s": rec.integration_time_s,
        })
    meta = {"command": "scan", "plane": "near", "arm": scenario, "fixed_slit": fixed,
            "fixed_detector": "signal", "seed": cfg.seed, "total_counts": cfg.total_counts,
            "integration_time_s": cfg.integration_time_s}
    rows = zip(p.positions, p.coincidence_rate, p.singles_rate, rec.counts, rec.singles_counts)
    return _csv(SCAN_COLUMNS, rows, meta)


def cmd_fringes(cfg: ExperimentConfig, args) -> str:
    slits, setup = cfg.slits, cfg.setup
    if args.maximally_mixed:
        rho = DensityOperator.maximally_mixed(slits.dim)
    else:
        states = arm_states(cfg.arms, slits, setup)
        scenario = _scenario(args.arm, cfg)
        rho = open_mixture(states, cfg.weights, scenario in ("1", "both"), scenario in ("2", "both"))
    scan = ScanConfig(FAR_FIELD, cfg.farfield_positions, setup.detector_half_width,
                      fixed_mode="idler", fixed_position=args.fix_idler,
                      include_fresnel_phase=cfg.include_fresnel_phase,
                      convolve_detector=cfg.farfield_detector_convolution)
    p = farfield_scan(rho, scan, setup, slits)
    coinc = p.coincidence_rate / p.coincidence_rate.max()
    singles = p.singles_rate / p.singles_rate.max()
    if args.format == "json":
        return _json({"command": "fringes", "fix_idler_m": args.fix_idler, "seed": cfg.seed,
                      "config": cfg.resolved(), "positions_m": p.positions.tolist(),
                      "coincidence_norm": coinc.tolist(), "singles_norm": singles.tolist()})
    meta = {"command": "fringes", "plane": "far", "fixed_detector": "idler",
            "fix_idler_m": _fmt(args.fix_idler), "maximally_mixed": args.maximally_mixed,
            "seed": cfg.seed}
    return _csv(FRINGE_COLUMNS, zip(p.positions, coinc, singles), meta)


def read_scan_csv(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a scan CSV into ``(metadata, columns)``; errors carry row numbers."""
    meta: dict[str, str] = {}
    header = None
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot open: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                key, sep, value = text[1:].strip().partition("=")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            fields = [f.strip() for f in text.split(",")]
            if header is None:
                header = fields
                missing = {"position_m", "counts"} - set(header)
                if missing:
                    raise DataFormatError(f"{path} row {lineno}: header lacks {sorted(missing)}")
                continue
            if len(fields) != len(header):
                raise DataFormatError(
                    f"{path} row {lineno}: expected {len(header)} fields, got {len(fields)}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise DataFormatError(f"{path} row {lineno}: non-numeric field in {text!r}") from None
            if not line.endswith("\n"):
                raise DataFormatError(f"{path} row {lineno}: truncated final row (no newline)")
    if header is None or not rows:
        raise DataFormatError(f"{path}: no data rows")
    data = np.array(rows)
    cols = {name: data[:, i] for i, name in enumerate(header)}
    if np.any(np.diff(cols["position_m"]) <= 0):
        raise DataFormatError(f"{path}: position_m must be strictly ascending")
    if np.any(cols["counts"] < 0):
        raise DataFormatError(f"{path}: negative counts")
    return meta, cols


def _load_records(paths, cfg: ExperimentConfig) -> list[CountRecord]:
    """Near-field records; fixed slit from metadata, else ``+`` then ``-`` by position."""
    default_order = [cfg.slits.label_name(i) for i in reversed(range(cfg.slits.dim))]
    out = []
    for k, path in enumerate(paths):
        meta, cols = read_scan_csv(path)
        fixed = meta.get("fixed_slit", default_order[k] if k < len(default_order) else None)
        if fixed is None:
            raise DataFormatError(f"{path}: no fixed_slit metadata and no default for position {k}")
        x = cols["position_m"]
        rate = cols.get("coincidence_rate_au", cols["counts"])
        singles = cols.get("singles_rate_au", np.zeros_like(x))
        pattern = PatternData(x, np.clip(rate, 0, None), np.clip(singles, 0, None),
                              fixed_slit=fixed, fixed_mode=meta.get("fixed_detector", "signal"))
        counts = cols["counts"]
        total = int(meta.get("total_counts", round(counts.sum())))
        seed = int(meta["seed"]) if meta.get("seed", "").isdigit() else None
        out.append(CountRecord(pattern, counts, total, seed,
                               float(meta.get("integration_time_s", 20.0))))
    return out


def _arm_report(records, cfg: ExperimentConfig, phi: float, phases: str, targets, seed: int):
    slits = cfg.slits
    peaks = compose_peaks([integrate_peaks(r, slits) for r in records])
    probs = probabilities_from_peaks(peaks)
    psi = reconstruct_state(probs, phi, phases)
    fids = {name: state_fidelity(psi, t) for name, t in targets.items()}
    boots = {}
    for name, t in targets.items():
        b = bootstrap_uncertainty(records, "fidelity", cfg.n_resamples, seed,
                                  slits=slits, phi=phi, target=t)
        boots[name] = {"mean": b.mean, "std": b.std}
    return {
        "probabilities": _pair_table(cfg, probs),
        "amplitudes": _pair_table(cfg, np.abs(psi.coeffs)),
        "state": _state_json(psi),
        "phases": "model-assigned exp(i*phi*(m-l)^2), not measured" if phases == "model"
                  else "none (moduli only)",
        "fidelity": fids,
        "fidelity_bootstrap": boots,
        "concurrence": pure_concurrence(psi) if slits.dim == 2 else None,
        "background_counts": peaks.background,
        "window_total_counts": peaks.total,
    }


def cmd_estimate(cfg: ExperimentConfig, args) -> str:
    slits, setup = cfg.slits, cfg.setup
    phi = phase_phi(setup, slits)
    states = arm_states(cfg.arms, slits, setup)
    targets = {"arm1_model": states[0], "arm2_model": states[1]}
    if slits.dim == 2:
        targets = {"psi1": psi1(), "psi2": psi2(phi), **targets}
    groups = {}
    for name in ("arm1", "arm2", "both"):
        paths = getattr(args, name)
        if paths:
            groups[name] = _load_records(paths, cfg)
    if not groups and args.totals is None:
        raise ConfigError("estimate needs at least one of --arm1/--arm2/--both or --totals")
    seeds = np.random.SeedSequence(cfg.seed).generate_state(4)
    report = {"command": "estimate", "seed": cfg.seed, "config": cfg.resolved(),
              "phi_rad": phi, "inputs": {k: [str(p) for p in getattr(args, k)] for k in groups},
              "arms": {}}
    for k, (name, recs) in enumerate(groups.items()):
        report["arms"][name] = _arm_report(recs, cfg, phi, args.phases, targets, int(seeds[k]))
    totals = None
    if args.totals is not None:
        totals = tuple(args.totals)
        source = "command line"
    elif all(k in groups for k in ("arm1", "arm2", "both")):
        totals = tuple(float(sum(r.counts.sum() for r in groups[k])) for k in ("arm1", "arm2", "both"))
        source = "scan files"
    if totals is not None:
        w = estimate_weights(*totals)
        report["weights"] = {"A": w.A, "B": w.B, "raw_A": w.raw_A, "raw_B": w.raw_B,
                             "totals": {"arm1_only": totals[0], "arm2_only": totals[1],
                                        "both": totals[2]},
                             "source": source}
        if source == "scan files":
            b = bootstrap_uncertainty((groups["arm1"], groups["arm2"], groups["both"]), "A",
                                      cfg.n_resamples, int(seeds[3]))
            report["weights"]["A_bootstrap"] = {"mean": b.mean, "std": b.std}
        else:
            # Poisson spread of totals alone, no scan files to resample
            a, n = w.A, totals[0] + totals[1]
            report["weights"]["A_std_poisson"] = math.sqrt(a * (1 - a) / n) if n > 0 else None
    return _json(report)


def _fringe_visibility(rho: DensityOperator, cfg: ExperimentConfig, idler_fraction: float) -> float:
    """Envelope-corrected signal fringe visibility, idler at ``idler_fraction`` of a period."""
    setup, slits = cfg.setup, cfg.slits
    period = setup.downconverted_wavelength * setup.slit_to_detector / slits.spacing
    x = np.linspace(-period, period, 801)
    scan = ScanConfig(FAR_FIELD, x, setup.detector_half_width, fixed_mode="idler",
                      fixed_position=idler_fraction * period,
                      include_fresnel_phase=cfg.include_fresnel_phase)
    p = farfield_scan(rho, scan, setup, slits)
    fringe = p.coincidence_rate / np.maximum(envelope(x, setup, slits), 1e-300)
    hi, lo = fringe.max(), fringe.min()
    return float((hi - lo) / (hi + lo)) if hi + lo > 0 else 0.0


SWEEP_METRICS = ("phi_rad", "weight_A", "purity", "concurrence_arm1", "concurrence_arm2",
                 "concurrence_mixture", "visibility_idler_0", "visibility_idler_quarter")


def _parse_values(args) -> list[float]:
    if args.values:
        try:
            return [float(v) for v in args.values.split(",")]
        except ValueError:
            raise ConfigError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    if args.start is None or args.stop is None or args.num is None:
        raise ConfigError("sweep needs --values or all of --start/--stop/--num")
    if args.num < 1:
        raise ConfigError("--num must be >= 1")
    return list(np.linspace(args.start, args.stop, args.num))


def cmd_sweep(cfg_source, args) -> str:
    values = _parse_values(args)
    int_keys = {"aperture.num_slits", "scan.nearfield_points", "scan.farfield_points",
                "counts.total", "counts.seed", "bootstrap.n_resamples"}
    rows = []
    for v in values:
        value = int(round(v)) if args.key in int_keys else float(v)
        cfg = load_config(cfg_source, seed=args.seed, overrides={args.key: value})
        states = arm_states(cfg.arms, cfg.slits, cfg.setup)
        rho = open_mixture(states, cfg.weights, cfg.arms.arm1_open, cfg.arms.arm2_open)
        qubits = cfg.slits.dim == 2
        nan = float("nan")
        rows.append((value, phase_phi(cfg.setup, cfg.slits), cfg.weights[0], purity(rho),
                     pure_concurrence(states[0]) if qubits else nan,
                     pure_concurrence(states[1]) if qubits else nan,
                     concurrence(rho) if qubits else nan,
                     _fringe_visibility(rho, cfg, 0.0), _fringe_visibility(rho, cfg, 0.25)))
    if args.format == "json":
        base = load_config(cfg_source, seed=args.seed)
        table = [dict(zip((args.key,) + SWEEP_METRICS, r)) for r in rows]
        for row in table:
            for k, v in row.items():
                if isinstance(v, float) and math.isnan(v):
                    row[k] = None
        return _json({"command": "sweep", "key": args.key, "seed": base.seed,
                      "config": base.resolved(), "rows": table})
    return _csv((args.key,) + SWEEP_METRICS, rows, {"command": "sweep", "key": args.key})


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=PAPER_DEFAULT,
                        help=f"YAML config path or {PAPER_DEFAULT!r} (default)")
    common.add_argument("--seed", type=int, default=None, help="override counts.seed")
    common.add_argument("--out", default=None, help="output file (default: stdout)")

    parser = argparse.ArgumentParser(prog="slitqudit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("state", parents=[common], help="arm states, mixture and entanglement")
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("scan", parents=[common], help="near-field selective slit scan")
    p.add_argument("--arm", choices=("1", "2", "both"), default="both")
    p.add_argument("--fixed-slit", default="+", help="slit behind the fixed signal detector")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("fringes", parents=[common], help="far-field conditional fringes")
    p.add_argument("--fix-idler", type=float, default=0.0, help="idler detector position (m)")
    p.add_argument("--arm", choices=("1", "2", "both"), default="both")
    p.add_argument("--maximally-mixed", action="store_true",
                   help="replace the state by the maximally mixed state")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("estimate", parents=[common], help="recover probabilities, states, weights")
    for name in ("arm1", "arm2", "both"):
        p.add_argument(f"--{name}", nargs="+", default=[], metavar="CSV",
                       help=f"scan CSVs with {name} open (fixed slit + then -)")
    p.add_argument("--totals", nargs=3, type=float, metavar=("ARM1", "ARM2", "BOTH"),
                   help="blocked-arm coincidence totals")
    p.add_argument("--phases", choices=("model", "none"), default="model")
    p.add_argument("--format", choices=("json",), default="json")

    p = sub.add_parser("sweep", parents=[common], help="vary one config key, tabulate metrics")
    p.add_argument("--key", required=True, help="dotted config key, e.g. optics.crystal_to_slit")
    p.add_argument("--values", default=None, help="comma-separated values")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--num", type=int)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            text = cmd_sweep(args.config, args)
        else:
            cfg = load_config(args.config, seed=args.seed)
            command = {"state": cmd_state, "scan": cmd_scan, "fringes": cmd_fringes,
                       "estimate": cmd_estimate}[args.command]
            text = command(cfg, args)
        _write(text, args.out)
    except (ConfigError, InvalidSlitLabelError) as exc:
        print(f"slitqudit: config error: {exc}", file=sys.stderr)
        return 2
    except (SlitQuditError, ValueError, OSError, RuntimeError) as exc:
        print(f"slitqudit: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
