"""Command line front end: analytic curves, simulation, analysis and Bragg maps.

Every command writes a ``manifest.json`` into its output directory. The
manifest hash covers the command, its arguments, the configuration hash
and the seed, but not the output path, and it is embedded in every file
the command writes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import estimate_correlations, extract_E_and_S
from .errors import ConfigError, DataError, HaloBellError
from .model import (
    BinSpec,
    PortPair,
    bell_envelope,
    correlation_amplitude,
    dephasing_parameters,
    gravitational_phase,
    integrated_correlation,
    quantum_correlator,
)
from .raman_nath import BraggPulse, find_pulse, scan_pulse_parameters, transfer_spectrum
from .simulate import EventStore, run_campaign
from .units import ExperimentConfig, load_config, save_config

THREADS_ENV = "HALOBELL_THREADS"
BIN_SCAN_PHASES = (1.052, 4.194)


# manifest and output helpers


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc


def _range(text: str) -> np.ndarray:
    """Parse ``lo:hi:n`` into a linspace."""
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ConfigError(f"expected lo:hi:n, got {text!r}") from exc


@dataclass(frozen=True)
class CampaignManifest:
    """Provenance of one command invocation."""

    command: str
    arguments: dict
    config_hash: str
    config_path: str | None
    seed: int | None
    output_dir: str
    version: str = __version__

    def _body(self) -> dict:
        # the output directory and the config file location do not affect results
        return {
            "tool": "halobell",
            "version": self.version,
            "command": self.command,
            "arguments": self.arguments,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }

    @property
    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self._body(), sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {**self._body(), "config_path": self.config_path, "output_dir": self.output_dir, "manifest_hash": self.hash}


def build_manifest(args, config: ExperimentConfig) -> CampaignManifest:
    params = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func", "config", "command", "seed") and v is not None
    }
    params = json.loads(json.dumps(params, default=_jsonable))
    return CampaignManifest(
        command=args.command,
        arguments=params,
        config_hash=config.hash(),
        config_path=getattr(args, "config", None),
        seed=getattr(args, "seed", None),
        output_dir=str(args.out),
    )


def _prepare_out(args, config: ExperimentConfig) -> tuple[Path, dict]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(args, config).to_dict()
    _write_json(out / "manifest.json", manifest)
    save_config(config, out / "config.json")
    return out, manifest


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def write_csv(path: Path, columns, rows, manifest: dict) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest {manifest['manifest_hash']}\n")
        fh.write(f"# config_hash {manifest['config_hash']}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([f"{x:.10g}" if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from exc
    return max(n, 1)


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


# commands


def cmd_model(args) -> int:
    config = _config(args)
    phi = np.linspace(0, 2 * np.pi, args.points)
    A = tuple(dephasing_parameters(config, args.variant))
    lams = args.lam or list(config.bin_lambda[:1])
    curve = args.curve
    if curve == "fig3":
        config = config.replace(h=1.48, n_bar=0.15, bin_lambda=(0.6, 0.6, 0.6))
    out, manifest = _prepare_out(args, config)

    if curve == "fig3":
        bins = BinSpec(0.6, A)
        rows = [
            (p, integrated_correlation(PortPair.PP, p, config.h, bins),
             integrated_correlation(PortPair.PQ, p, config.h, bins),
             quantum_correlator(p, config.h, bins))
            for p in phi
        ]
        path = write_csv(out / "fig3.csv", ["phi", "c_same", "c_between", "E"], rows, manifest)
    elif curve == "fig4":
        grid = np.linspace(0.3, 3.0, args.points)
        rows = [
            (lam, *(quantum_correlator(p, config.h, BinSpec(lam, A)) for p in BIN_SCAN_PHASES), bell_envelope(config.h))
            for lam in grid
        ]
        cols = ["lambda"] + [f"E_phi_{p}" for p in BIN_SCAN_PHASES] + ["envelope"]
        path = write_csv(out / "fig4.csv", cols, rows, manifest)
    elif curve == "E-vs-phase":
        rows = [(lam, p, quantum_correlator(p, config.h, BinSpec(lam, A))) for lam in lams for p in phi]
        path = write_csv(out / "E_vs_phase.csv", ["lambda", "phi", "E"], rows, manifest)
    else:
        rows = [
            (lam, p, *(integrated_correlation(pp, p, config.h, BinSpec(lam, A)) for pp in PortPair))
            for lam in lams
            for p in phi
        ]
        cols = ["lambda", "phi"] + [f"C_{pp.name.lower()}" for pp in PortPair]
        path = write_csv(out / "C_vs_phase.csv", cols, rows, manifest)
    print(path)
    return 0


def cmd_simulate(args) -> int:
    config = _config(args)
    if args.phases is not None:
        config = config.replace(phases=tuple(args.phases))
    if args.shots < 1:
        raise ConfigError("--shots must be at least 1")
    out, manifest = _prepare_out(args, config)
    store = run_campaign(config, shots_per_phase=args.shots, seed=args.seed, workers=_threads())
    store.manifest_hash = manifest["manifest_hash"]
    paths = store.save(out)
    print(f"{len(paths)} event files in {out}")
    return 0


def cmd_analyze(args) -> int:
    events = Path(args.events)
    store = EventStore.load(events)
    if args.config:
        config = load_config(args.config)
    elif (events / "config.json").exists():
        config = load_config(events / "config.json")
    else:
        config = ExperimentConfig()
    if store.config_hash and store.config_hash != config.hash():
        raise ConfigError(f"event store was produced with config {store.config_hash}, not {config.hash()}")
    if store.n_phases < 2:
        raise DataError("analysis needs at least two phases")
    lam = args.lam or None
    out, manifest = _prepare_out(args, config)
    corr = estimate_correlations(store, config, lam, n_resamples=args.resamples, seed=args.seed)
    ext = extract_E_and_S(corr)
    bins = BinSpec.from_config(config, lam=lam)
    rows = [(c.phase, c.n_shots, c.c_same, c.c_same_err, c.c_between, c.c_between_err, c.e, c.e_err) for c in corr]
    write_csv(
        out / "correlations.csv",
        ["phi", "n_shots", "c_same", "c_same_err", "c_between", "c_between_err", "E", "E_err"],
        rows,
        manifest,
    )
    a = correlation_amplitude(config.h, bins)
    results = {
        "manifest_hash": manifest["manifest_hash"],
        "config_hash": config.hash(),
        "events_manifest": store.manifest_hash,
        "events_config_hash": store.config_hash,
        "bin_lambda": list(bins.lam),
        "correlations": [c.as_row() for c in corr],
        "fit": ext.to_dict(),
        "model": {"e0": a / (1 + a), "gravitational_offset": gravitational_phase(config)["global_wrapped"]},
    }
    _write_json(out / "results.json", results)
    print(f"E0 = {ext.e0:.3f} +- {ext.e0_err:.3f}  S_max = {ext.s_max:.3f}  V = {ext.visibility:.3f}")
    return 0


def cmd_bragg(args) -> int:
    config = _config(args)
    out, manifest = _prepare_out(args, config)
    if args.mode == "scan":
        res = scan_pulse_parameters(_range(args.sigma_grid), _range(args.alpha_grid), args.M, config)
        path = write_csv(out / "bragg_scan.csv", ["sigma_us", "alpha_hbar", "transfer_up", "transfer_down"], res.rows(), manifest)
        s, a, t = res.best()
        print(f"{path}: best transfer {t:.4f} at sigma={s:.3f} us, alpha={a:.3f}")
    elif args.mode == "spectrum":
        pulse = BraggPulse(args.alpha, args.sigma)
        k = _range(args.k_grid) if args.k_grid else np.linspace(-2 * config.k0, 2 * config.k0, 401)
        pops = transfer_spectrum(pulse, k, args.M, config)
        rows = [(kk, *p, p.sum()) for kk, p in zip(k, pops)]
        path = write_csv(out / "bragg_spectrum.csv", ["k", "pop_minus1", "pop_0", "pop_plus1", "sum"], rows, manifest)
        print(path)
    else:
        pulse = find_pulse(args.target, (args.alpha, args.sigma), args.M, config)
        k = np.array([-config.k0, config.k0])
        pops = transfer_spectrum(pulse, k, args.M, config)
        result = {
            "manifest_hash": manifest["manifest_hash"],
            "config_hash": config.hash(),
            "target": args.target,
            "alpha_hbar": pulse.amplitude_alpha,
            "sigma_us": pulse.sigma_t,
            "transfer_up": float(pops[0, 2]),
            "transfer_down": float(pops[1, 0]),
        }
        _write_json(out / "bragg_pulse.json", result)
        print(f"alpha={pulse.amplitude_alpha:.4f} sigma={pulse.sigma_t:.4f} us transfer={pops[0, 2]:.5f}")
    return 0


# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out", help="output directory")

    parser = argparse.ArgumentParser(prog="halobell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"halobell {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", parents=[common], help="tabulate analytic correlation curves")
    p.add_argument("curve", choices=["fig3", "fig4", "E-vs-phase", "C-vs-phase"])
    p.add_argument("--lambda", dest="lam", type=_float_list, help="bin sizes for the phase curves")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--variant", choices=["t2", "t1"], default="t2", help="reference time in the dephasing term")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic event campaign")
    p.add_argument("--phases", type=_float_list)
    p.add_argument("--shots", type=int, default=2900, help="shots per phase")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="correlations, fits and CHSH from an event store")
    p.add_argument("events", help="directory written by the simulate command")
    p.add_argument("--lambda", dest="lam", type=_float_list)
    p.add_argument("--resamples", type=int, default=200)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bragg", parents=[common], help="finite-duration Bragg pulse maps")
    p.add_argument("mode", choices=["scan", "spectrum", "find"])
    p.add_argument("--M", type=int, default=9)
    p.add_argument("--sigma-grid", default="0.5:6:100", help="lo:hi:n pulse widths (us)")
    p.add_argument("--alpha-grid", default="0.05:3:100", help="lo:hi:n pulse amplitudes")
    p.add_argument("--alpha", type=float, default=0.405)
    p.add_argument("--sigma", type=float, default=3.162)
    p.add_argument("--k-grid", help="lo:hi:n quasimomentum grid for spectrum")
    p.add_argument("--target", type=float, default=1.0)
    p.set_defaults(func=cmd_bragg)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HaloBellError as exc:
        print(f"halobell: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"halobell: error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
