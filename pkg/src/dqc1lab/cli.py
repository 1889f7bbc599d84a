"""Command-line front end: ``dqc1lab {trace,sweep,prep,tomo}``.

Settings come from built-in defaults, then an optional JSON ``--config`` file,
then command-line flags (flags win). The resolved settings, minus the output
directory, are echoed into every output file.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.stats import chisquare

from . import __version__
from .dqc1 import Dqc1Config, default_phi_grid, normalized_trace, run_circuit, sweep, trace_estimate
from .export import density_json, metadata, write_csv, write_json
from .matqm import InvalidState, fidelity, partial_trace
from .noise import IntegratorUnstable, NoiseParams, dissipate, noisy_circuit, noisy_pre_gate
from .prep import maximally_mixed_register, measurement_phase_channel, run_binary_tree
from .resources import DiscordConfig, coherence, global_discord
from .tomo import (
    NotInformationallyComplete,
    TruncationError,
    bootstrap_errors,
    default_beta_grid,
    joint_wigner_forward,
    reconstruct,
    sample_shots,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
MODE_GAP_FLAG = 1e-3

DEFAULTS: dict[str, Any] = {
    "phi_points": 65,
    "noise": False,
    "noise_params": {},
    "discord_mode": "fock-fixed",
    "discord": {"starts": 16, "tolerance": 1e-6, "max_evals": 2000, "seed": 0},
    "shots": 3000,
    "seed": 0,
    "format": "both",
    "register_dim": 8,
    "phi": math.pi / 3,
    "bootstrap": 50,
    "runs": 10_000,
    "phase_model": False,
    "compensate": False,
}


class ConfigError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with default settings")
    common.add_argument("--phi-points", type=int, dest="phi_points")
    common.add_argument("--noise", action=argparse.BooleanOptionalAction, default=None,
                        help="enable the Lindblad noise model")
    common.add_argument("--shots", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--discord-mode", choices=("fock-fixed", "full"), dest="discord_mode")
    common.add_argument("--out", type=Path, default=None)
    common.add_argument("--format", choices=("csv", "json", "both"))

    parser = argparse.ArgumentParser(prog="dqc1lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dqc1lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("trace", parents=[common], help="normalized trace Tr(U)/d versus phase")
    sub.add_parser("sweep", parents=[common], help="coherence consumption and discord versus phase")
    p = sub.add_parser("prep", parents=[common], help="binary-tree preparation of the mixed register")
    p.add_argument("--runs", type=int)
    p.add_argument("--phase-model", action=argparse.BooleanOptionalAction, default=None, dest="phase_model",
                   help="apply the photon-number-dependent phase of each ancilla measurement")
    p.add_argument("--compensate", action=argparse.BooleanOptionalAction, default=None,
                   help="fold the inverse measurement phase into the adaptive gates")
    t = sub.add_parser("tomo", parents=[common], help="joint Wigner tomography round trip")
    t.add_argument("--phi", type=float)
    t.add_argument("--bootstrap", type=int)
    return parser


def resolve(args: argparse.Namespace) -> tuple[dict, Path]:
    cfg = json.loads(json.dumps(DEFAULTS))
    out = Path("out")
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        if "out" in loaded:
            out = Path(loaded.pop("out"))
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, val in loaded.items():
            if isinstance(cfg[key], dict):
                cfg[key].update(val)
            else:
                cfg[key] = val
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.out is not None:
        out = args.out
    validate(cfg)
    return cfg, out


def validate(cfg: dict) -> None:
    if not isinstance(cfg["phi_points"], int) or cfg["phi_points"] < 2:
        raise ConfigError("phi_points must be an integer >= 2")
    if cfg["shots"] < 0:
        raise ConfigError("shots must be >= 0")
    if cfg["format"] not in ("csv", "json", "both"):
        raise ConfigError("format must be csv, json or both")
    if cfg["bootstrap"] != 0 and cfg["bootstrap"] < 2:
        raise ConfigError("bootstrap must be 0 or >= 2")
    if cfg["runs"] < 1:
        raise ConfigError("runs must be >= 1")
    if not math.isfinite(float(cfg["phi"])) or cfg["phi"] < 0:
        raise ConfigError("phi must be a finite non-negative angle")
    try:
        disc = DiscordConfig.from_mapping({**cfg["discord"], "mode": cfg["discord_mode"]})
        NoiseParams.from_mapping(cfg["noise_params"])
        Dqc1Config(register_dim=cfg["register_dim"], discord_mode=cfg["discord_mode"], discord=disc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dqc1_config(cfg: dict, phi_grid=None) -> Dqc1Config:
    noise = NoiseParams.from_mapping(cfg["noise_params"]) if cfg["noise"] else None
    return Dqc1Config(
        register_dim=cfg["register_dim"],
        phi_grid=default_phi_grid(cfg["phi_points"]) if phi_grid is None else phi_grid,
        noise=noise,
        discord_mode=cfg["discord_mode"],
        discord=DiscordConfig.from_mapping({**cfg["discord"], "mode": cfg["discord_mode"]}),
    )


def echo(cfg: dict, command: str) -> dict:
    meta = metadata(command, cfg)
    if cfg["noise"]:
        meta["config"]["noise_params"] = NoiseParams.from_mapping(cfg["noise_params"]).to_dict()
    return meta


def _wants(cfg: dict, kind: str) -> bool:
    return cfg["format"] in (kind, "both")


def cmd_trace(cfg: dict, out: Path) -> int:
    config = dqc1_config(cfg)
    d = config.register_dim
    header = ["phi", "re_ideal", "im_ideal"]
    rows = []
    prepared = noisy_pre_gate(config) if config.noise else None
    if prepared is not None:
        header += ["re_noisy", "im_noisy"]
    for phi in config.phi_grid:
        row = [phi, *trace_estimate(run_circuit(config, phi))]
        if prepared is not None:
            row += list(trace_estimate(noisy_circuit(config, phi, prepared).state))
        rows.append(row)
    meta = echo(cfg, "trace")
    meta["closed_form"] = "mean_k exp(i k phi), k < %d" % d
    if _wants(cfg, "csv"):
        write_csv(out / "trace.csv", meta, header, rows)
    if _wants(cfg, "json"):
        write_json(out / "trace.json", {"metadata": meta, "columns": header, "rows": rows,
                                        "closed_form": [[normalized_trace(p, d).real, normalized_trace(p, d).imag]
                                                        for p in config.phi_grid]})
    return EXIT_OK


def cmd_sweep(cfg: dict, out: Path) -> int:
    config = dqc1_config(cfg)
    records = sweep(config)
    full = config.discord_mode == "full"
    header = ["phi", "delta_C", "discord", "discord_converged", "joint_fidelity", "trace_re", "trace_im"]
    if full:
        header += ["discord_fock_fixed", "mode_gap"]
    rows = []
    for r in records:
        row = [r.phi, r.delta_C, r.discord.value, r.discord.converged, r.joint_fidelity, r.trace_re, r.trace_im]
        if full:
            row += [r.discord.fock_fixed_value, r.discord.fock_fixed_value - r.discord.value]
        rows.append(row)
    gap = max(r.discord.value - r.delta_C for r in records)
    summary = {"max_discord_minus_delta_C": gap,
               "inequality_holds": bool(gap <= 1e-4),
               "nonconverged_points": sum(not r.discord.converged for r in records)}
    if full:
        worst = max(abs(r.discord.fock_fixed_value - r.discord.value) for r in records)
        summary["max_mode_gap"] = worst
        summary["mode_disagreement"] = bool(worst > MODE_GAP_FLAG)
    if config.noise is not None:
        summary["max_leaked_population"] = max(r.leaked_population for r in records)
        summary["warnings"] = sorted({w for r in records for w in r.warnings})
    meta = echo(cfg, "sweep")
    meta["summary"] = summary
    if _wants(cfg, "csv"):
        write_csv(out / "sweep.csv", meta, header, rows)
    if _wants(cfg, "json"):
        write_json(out / "sweep.json", {
            "metadata": meta, "columns": header, "rows": rows,
            "records": [{"phi": r.phi, "C_before": r.C_before, "C_after": r.C_after,
                         "delta_C": r.delta_C, "discord": r.discord.value,
                         "discord_converged": r.discord.converged,
                         "discord_fock_fixed": r.discord.fock_fixed_value,
                         "joint_fidelity": r.joint_fidelity, "trace": [r.trace_re, r.trace_im],
                         "leaked_population": r.leaked_population, "state": density_json(r.state)}
                        for r in records]})
    print(f"max(discord - delta_C) = {gap!r}")
    if full and summary["mode_disagreement"]:
        print(f"WARNING: fock-fixed and full discord differ by up to {summary['max_mode_gap']!r}")
    return EXIT_OK


def cmd_prep(cfg: dict, out: Path) -> int:
    phase = measurement_phase_channel() if cfg["phase_model"] else None
    target = maximally_mixed_register()
    rho, trace = run_binary_tree(phase_model=phase, compensate=cfg["compensate"])
    _, sampled = run_binary_tree(phase_model=phase, compensate=cfg["compensate"], sampled=True,
                                 seed=cfg["seed"], runs=cfg["runs"])
    leaves = trace.leaf_probabilities()
    counts = [sampled.counts[p] for p in leaves]
    expected = [cfg["runs"] * leaves[p] for p in leaves]
    keep = [i for i, e in enumerate(expected) if e > 0]
    chi = chisquare([counts[i] for i in keep], [expected[i] for i in keep])
    result = {
        "ideal_fidelity": fidelity(rho, target),
        "leaf_probabilities": leaves,
        "probability_sum": sum(leaves.values()),
        "sampled_counts": sampled.counts,
        "chi2_statistic": float(chi.statistic),
        "chi2_p_value": float(chi.pvalue),
        "node_fidelity": dict(sorted(trace.node_fidelity.items())),
        "density_matrix": density_json(rho),
    }
    if cfg["noise"]:
        params = NoiseParams.from_mapping(cfg["noise_params"])
        noisy, _ = run_binary_tree(phase_model=phase, compensate=cfg["compensate"], noise=params)
        result["noisy_fidelity"] = fidelity(noisy, target)
        result["noisy_density_matrix"] = density_json(noisy)
    meta = echo(cfg, "prep")
    meta["fidelity"] = result["ideal_fidelity"]
    if _wants(cfg, "csv"):
        write_csv(out / "prep_branches.csv", meta, ["path", "probability", "sampled_count"],
                  [[p, leaves[p], sampled.counts[p]] for p in leaves])
    if _wants(cfg, "json"):
        write_json(out / "prep.json", {"metadata": meta, **result})
    print(f"fidelity(output, I/8) = {result['ideal_fidelity']!r}")
    return EXIT_OK


def cmd_tomo(cfg: dict, out: Path) -> int:
    phi = float(cfg["phi"])
    config = dqc1_config(cfg, phi_grid=(phi,))
    ideal = run_circuit(config, phi)
    if config.noise is not None:
        run = noisy_circuit(config, phi)
        truth = dissipate(run.state, config.noise, config.noise.gate_durations["tomography"])
        c_before = coherence(partial_trace(run.pre_gate, ["ancilla"]))
    else:
        truth = ideal
        c_before = coherence(partial_trace(run_circuit(config, 0.0), ["ancilla"]))
    grid = default_beta_grid()
    shots = int(cfg["shots"])
    if shots == 0:
        data = joint_wigner_forward(truth, grid)
    else:
        data = sample_shots(truth, grid, shots=shots, seed=cfg["seed"])
    rec = reconstruct(data, truth, dim=config.register_dim)
    disc = global_discord(rec.rho, config.discord)
    delta_c = c_before - coherence(partial_trace(rec.rho, ["ancilla"]))
    result = {
        "phi": phi,
        "fidelity_vs_true": rec.fidelity_vs_reference,
        "fidelity_vs_ideal": fidelity(rec.rho, ideal),
        "residual": rec.residual,
        "unconstrained_residual": rec.unconstrained_residual,
        "projection_distance": rec.projection_distance,
        "measurement_rank": rec.rank,
        "C_before": c_before,
        "delta_C": delta_c,
        "discord": disc.value,
        "discord_converged": disc.converged,
        "trace_estimate": list(trace_estimate(rec.rho)),
        "reconstruction": density_json(rec.rho),
    }
    if shots > 0 and cfg["bootstrap"] >= 2:
        boot = bootstrap_errors(data, n_resamples=cfg["bootstrap"], seed=cfg["seed"],
                                c_before=c_before, discord=config.discord)
        result["bootstrap_std"] = boot.std
    meta = echo(cfg, "tomo")
    meta["beta_grid"] = [[b.real, b.imag] for b in grid]
    if _wants(cfg, "csv"):
        write_csv(out / "tomo_data.csv", meta, ["setting", "beta_re", "beta_im", "value", "shots"],
                  [[*row, shots] for row in data.rows()])
    if _wants(cfg, "json"):
        write_json(out / "tomo.json", {"metadata": meta, **result, "dataset": data.to_json()})
    print(f"fidelity(reconstructed, true) = {result['fidelity_vs_true']!r}")
    return EXIT_OK


COMMANDS = {"trace": cmd_trace, "sweep": cmd_sweep, "prep": cmd_prep, "tomo": cmd_tomo}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, out = resolve(args)
    except ConfigError as exc:
        print(f"dqc1lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, out)
    except (IntegratorUnstable, NotInformationallyComplete, TruncationError, InvalidState,
            np.linalg.LinAlgError) as exc:
        print(f"dqc1lab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
