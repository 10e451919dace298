"""Command-line interface: simulate, estimate, crlb, sweep, presets.

Every command writes its outputs plus a manifest into --out-dir (or the
directory named by the RISCE_OUT_DIR environment variable). Sweeps emit
delimited metric tables and, by default, rendered NMSE/SNR figures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, records
from .crlb import crlb_report
from .harness import Scenario, preset_scenarios, run_sweep
from .nomp import run_nomp, run_omp_baseline
from .plotting import render_sweep_figures
from .signal_model import (
    sample_channel,
    sample_training_profile,
    snr_to_noise_variance,
    synthesize_pilots,
)

OUT_DIR_ENV = "RISCE_OUT_DIR"


def _out_dir(args) -> Path:
    out = args.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args):
    """Config resolution: CLI --set overrides > file > defaults."""
    data = {}
    if args.config:
        data = records.load_json(args.config)
        if not isinstance(data, dict):
            raise ValueError(f"config file {args.config} must hold a JSON object")
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            data[key] = json.loads(raw)
        except json.JSONDecodeError:
            data[key] = raw
    return records.config_from_dict(data)


def _estimator_names(choice: str) -> tuple[str, ...]:
    return ("nomp", "omp") if choice == "both" else (choice,)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    seed = cfg.rng_seed if args.seed is None else args.seed
    cfg = cfg.replace(rng_seed=seed)
    seq = np.random.SeedSequence(seed)
    ch_rng, prof_rng, noise_rng = (np.random.default_rng(s) for s in seq.spawn(3))

    channel = sample_channel(cfg, args.paths, ch_rng)
    profile = sample_training_profile(cfg, prof_rng)
    if args.snr is not None:
        cfg = cfg.replace(noise_variance=snr_to_noise_variance(args.snr, channel, profile, cfg))
    observation = synthesize_pilots(
        channel, profile, cfg, noise=not args.noiseless, rng=noise_rng
    )

    out_dir = _out_dir(args)
    sim_path = out_dir / "simulation.json"
    records.dump_json(
        records.simulation_to_dict(cfg, channel, profile, observation, seed, args.snr),
        sim_path,
    )
    manifest_path = out_dir / "simulation_manifest.json"
    records.write_manifest(
        records.RunManifest(
            command="simulate",
            scenario="",
            seed=seed,
            config=records.config_to_dict(cfg),
            outputs=(str(sim_path),),
        ),
        manifest_path,
    )
    print(
        f"simulated {args.paths} paths, observation length "
        f"{cfg.observation_length}, noise_variance={cfg.noise_variance:.6g} -> {sim_path}"
    )
    return 0


def cmd_estimate(args) -> int:
    cfg, channel, profile, observation = records.simulation_from_dict(
        records.load_json(args.input)
    )
    out_dir = _out_dir(args)
    outputs = []
    for name in _estimator_names(args.estimator):
        runner = run_nomp if name == "nomp" else run_omp_baseline
        estimates = runner(observation, profile, channel.geometry, cfg)
        path = out_dir / f"estimates_{name}.json"
        records.dump_json(records.estimates_to_dict(estimates, name), path)
        outputs.append(str(path))
        print(
            f"{name}: {estimates.num_paths} paths, stop={estimates.stop_reason}, "
            f"residual_power={estimates.residual_power:.6g} -> {path}"
        )
    records.write_manifest(
        records.RunManifest(
            command="estimate",
            scenario="",
            seed=cfg.rng_seed,
            config=records.config_to_dict(cfg),
            outputs=tuple(outputs),
        ),
        out_dir / "estimates_manifest.json",
    )
    return 0


def cmd_crlb(args) -> int:
    cfg, channel, profile, _ = records.simulation_from_dict(records.load_json(args.input))
    report = crlb_report(channel, profile, cfg=cfg, full_fim=args.full_fim)
    out_dir = _out_dir(args)
    path = out_dir / "crlb.json"
    records.dump_json(records.crlb_report_to_dict(report), path)
    records.write_manifest(
        records.RunManifest(
            command="crlb",
            scenario="",
            seed=cfg.rng_seed,
            config=records.config_to_dict(cfg),
            outputs=(str(path),),
        ),
        out_dir / "crlb_manifest.json",
    )
    agg = report.aggregate_bound
    print(
        f"crlb: aggregate_bound={agg:.6g}, singular_paths={list(report.singular_paths)} "
        f"-> {path}"
    )
    return 0


def _resolve_scenario(args) -> Scenario:
    if bool(args.preset) == bool(args.config):
        raise ValueError("give exactly one of --preset or --config")
    if args.preset:
        presets = preset_scenarios()
        if args.preset not in presets:
            raise ValueError(
                f"unknown preset {args.preset!r}; available: {sorted(presets)}"
            )
        scenario = presets[args.preset]
    else:
        scenario = records.scenario_from_dict(records.load_json(args.config))
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.snr is not None:
        changes["snr_db"] = tuple(float(s) for s in args.snr.split(","))
    if args.estimator is not None:
        changes["estimators"] = _estimator_names(args.estimator)
    return dataclasses.replace(scenario, **changes) if changes else scenario


def cmd_sweep(args) -> int:
    scenario = _resolve_scenario(args)
    result = run_sweep(scenario, log=print if not args.quiet else None)
    out_dir = _out_dir(args)
    stem = f"sweep_{scenario.name}"
    outputs = []
    if args.format == "csv":
        table_path = out_dir / f"{stem}.csv"
        records.write_sweep_csv(result, table_path)
    else:
        table_path = out_dir / f"{stem}.jsonl"
        records.write_sweep_jsonl(result, table_path)
    outputs.append(str(table_path))
    if args.figures:
        for fig_path in render_sweep_figures(result, out_dir, stem):
            outputs.append(str(fig_path))
    records.write_manifest(
        records.RunManifest(
            command="sweep",
            scenario=scenario.name,
            seed=scenario.seed,
            config=records.config_to_dict(scenario.config),
            outputs=tuple(outputs),
        ),
        out_dir / f"{stem}_manifest.json",
    )
    print(f"wrote {', '.join(outputs)}")
    return 0


def cmd_presets(args) -> int:
    for name, sc in preset_scenarios().items():
        cfg = sc.config
        variant = (
            f" sweep {sc.variant_field}={list(sc.variant_values)}"
            if sc.variant_field
            else ""
        )
        print(
            f"{name}: N_b={cfg.num_bs_antennas} N_r={cfg.ris_dims[0]}x{cfg.ris_dims[1]} "
            f"N_c={cfg.num_subcarriers} L={cfg.num_pilot_subcarriers} "
            f"M={cfg.num_pilot_symbols} P={sc.num_paths} trials={sc.trials} "
            f"snr={list(sc.snr_db)} est={list(sc.estimators)}"
            f"{' +crlb' if sc.compute_crlb else ''}{variant}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risce",
        description="RIS-assisted mmWave wideband cascaded channel estimation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"risce {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")

    p_sim = sub.add_parser("simulate", help="draw a channel and synthesize a pilot observation")
    p_sim.add_argument("--config", help="JSON system-config file")
    p_sim.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="inline config override (value parsed as JSON)")
    p_sim.add_argument("--seed", type=int, help="RNG seed (default: config rng_seed)")
    p_sim.add_argument("--paths", type=int, default=5, help="number of channel paths")
    p_sim.add_argument("--snr", type=float, help="set noise variance from this SNR in dB")
    p_sim.add_argument("--noiseless", action="store_true", help="skip the noise draw")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="recover path parameters from a simulation record")
    p_est.add_argument("--input", required=True, help="simulation.json from the simulate command")
    p_est.add_argument("--estimator", choices=("nomp", "omp", "both"), default="nomp")
    add_common(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_crlb = sub.add_parser("crlb", help="lower bounds at the true parameters of a simulation")
    p_crlb.add_argument("--input", required=True, help="simulation.json from the simulate command")
    p_crlb.add_argument("--full-fim", action="store_true",
                        help="keep cross-path information blocks")
    add_common(p_crlb)
    p_crlb.set_defaults(func=cmd_crlb)

    p_sweep = sub.add_parser("sweep", help="Monte-Carlo NMSE sweep with CSV + figures")
    p_sweep.add_argument("--preset", help="named preset (see `risce presets`)")
    p_sweep.add_argument("--config", help="JSON scenario file")
    p_sweep.add_argument("--trials", type=int, help="override trials per point")
    p_sweep.add_argument("--seed", type=int, help="override scenario seed")
    p_sweep.add_argument("--snr", help="override SNR list, comma separated dB values")
    p_sweep.add_argument("--estimator", choices=("nomp", "omp", "both"),
                         help="override estimator selection")
    p_sweep.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p_sweep.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                         help="render NMSE/SNR figures next to the table")
    p_sweep.add_argument("--quiet", action="store_true", help="suppress per-point log lines")
    add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_presets = sub.add_parser("presets", help="list available sweep presets")
    add_common(p_presets)
    p_presets.set_defaults(func=cmd_presets)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
