"""JSON/CSV record formats for simulations, estimates, bounds, and sweeps.

Complex values are stored as [re, im] pairs; floats rely on Python's repr
round-trip, so write -> read -> write is byte-stable. Every reader validates
record kind and shape before handing data to the numeric layers.
"""

from __future__ import annotations

import dataclasses
import datetime
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import SystemConfig, equispaced_pilots
from .crlb import CrlbReport
from .harness import Scenario, SweepResult
from .nomp import EstimateSet, PathEstimate
from .signal_model import (
    ChannelRealization,
    PathParams,
    PilotObservation,
    RisTrainingProfile,
)

CSV_COLUMNS = ("snr_db", "variant_field", "variant_value", "metric", "mean", "stderr", "trials")


def _c2pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def _pair2c(pair) -> complex:
    re, im = pair
    return complex(float(re), float(im))


def dump_json(obj, path: Path) -> None:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path: Path):
    return json.loads(Path(path).read_text())


# -- SystemConfig ------------------------------------------------------------

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}


def config_to_dict(cfg: SystemConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["pilot_subcarriers"] = list(cfg.pilot_subcarriers)
    out["ris_dims"] = list(cfg.ris_dims)
    out["coarse_grid_rates"] = list(cfg.coarse_grid_rates)
    out["precise_grid_rates"] = list(cfg.precise_grid_rates)
    return out


def config_from_dict(data: dict) -> SystemConfig:
    """Build a validated SystemConfig; unknown keys are an error.

    Accepts the shorthand key ``num_pilot_subcarriers`` to request that many
    evenly spread pilots instead of an explicit index list.
    """
    data = dict(data)
    shorthand = data.pop("num_pilot_subcarriers", None)
    unknown = set(data) - _CONFIG_FIELDS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(data)
    for key in ("pilot_subcarriers", "ris_dims", "coarse_grid_rates", "precise_grid_rates"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    cfg = SystemConfig(**kwargs)
    if shorthand is not None:
        if "pilot_subcarriers" in data and data["pilot_subcarriers"] is not None:
            raise ValueError(
                "give either pilot_subcarriers or num_pilot_subcarriers, not both"
            )
        cfg = cfg.replace(
            pilot_subcarriers=equispaced_pilots(cfg.num_subcarriers, int(shorthand))
        )
    return cfg


# -- channel / profile / observation ------------------------------------------


def channel_to_dict(channel: ChannelRealization) -> dict:
    return {
        "paths": [
            {
                "gain": _c2pair(p.gain),
                "elevation_aoa_rad": p.elevation_aoa_rad,
                "azimuth_aoa_rad": p.azimuth_aoa_rad,
                "delay_s": p.delay_s,
            }
            for p in channel.paths
        ],
        "bs_aoa_rad": channel.bs_aoa_rad,
        "ris_elev_aod_rad": channel.ris_elev_aod_rad,
        "ris_azim_aod_rad": channel.ris_azim_aod_rad,
    }


def channel_from_dict(data: dict) -> ChannelRealization:
    return ChannelRealization(
        paths=tuple(
            PathParams(
                gain=_pair2c(p["gain"]),
                elevation_aoa_rad=float(p["elevation_aoa_rad"]),
                azimuth_aoa_rad=float(p["azimuth_aoa_rad"]),
                delay_s=float(p["delay_s"]),
            )
            for p in data["paths"]
        ),
        bs_aoa_rad=float(data["bs_aoa_rad"]),
        ris_elev_aod_rad=float(data["ris_elev_aod_rad"]),
        ris_azim_aod_rad=float(data["ris_azim_aod_rad"]),
    )


def profile_to_dict(profile: RisTrainingProfile) -> dict:
    return {"phases": profile.phases.tolist()}


def profile_from_dict(data: dict) -> RisTrainingProfile:
    return RisTrainingProfile(phases=np.asarray(data["phases"], dtype=float))


def observation_to_dict(obs: PilotObservation) -> dict:
    return {
        "y": [_c2pair(z) for z in obs.y],
        "pilot_subcarriers": list(obs.pilot_subcarriers),
        "num_pilot_symbols": obs.num_pilot_symbols,
        "num_bs_antennas": obs.num_bs_antennas,
        "noise_variance": obs.noise_variance,
    }


def observation_from_dict(data: dict) -> PilotObservation:
    return PilotObservation(
        y=np.array([_pair2c(p) for p in data["y"]], dtype=complex),
        pilot_subcarriers=tuple(int(k) for k in data["pilot_subcarriers"]),
        num_pilot_symbols=int(data["num_pilot_symbols"]),
        num_bs_antennas=int(data["num_bs_antennas"]),
        noise_variance=float(data["noise_variance"]),
    )


def simulation_to_dict(
    cfg: SystemConfig,
    channel: ChannelRealization,
    profile: RisTrainingProfile,
    observation: PilotObservation,
    seed: int,
    snr_db: float | None = None,
) -> dict:
    return {
        "kind": "simulation",
        "version": __version__,
        "seed": seed,
        "snr_db": snr_db,
        "config": config_to_dict(cfg),
        "channel": channel_to_dict(channel),
        "profile": profile_to_dict(profile),
        "observation": observation_to_dict(observation),
    }


def simulation_from_dict(data: dict):
    if data.get("kind") != "simulation":
        raise ValueError(f"expected a simulation record, got kind={data.get('kind')!r}")
    cfg = config_from_dict(data["config"])
    obs = observation_from_dict(data["observation"])
    if obs.y.shape[0] != cfg.observation_length:
        raise ValueError(
            f"observation length {obs.y.shape[0]} does not match config "
            f"L*M*N_b = {cfg.observation_length}"
        )
    if tuple(obs.pilot_subcarriers) != cfg.pilot_subcarriers:
        raise ValueError("observation pilot set does not match the config pilot set")
    return cfg, channel_from_dict(data["channel"]), profile_from_dict(data["profile"]), obs


# -- estimates & bounds --------------------------------------------------------


def estimates_to_dict(estimates: EstimateSet, estimator: str) -> dict:
    return {
        "kind": "estimates",
        "version": __version__,
        "estimator": estimator,
        "paths": [
            {
                "gain": _c2pair(p.gain),
                "elevation": p.elevation,
                "azimuth": p.azimuth,
                "delay": p.delay,
                "refine_steps": p.refine_steps,
            }
            for p in estimates.paths
        ],
        "residual_power": estimates.residual_power,
        "iterations_used": estimates.iterations_used,
        "stop_reason": estimates.stop_reason,
    }


def estimates_from_dict(data: dict) -> EstimateSet:
    if data.get("kind") != "estimates":
        raise ValueError(f"expected an estimates record, got kind={data.get('kind')!r}")
    return EstimateSet(
        paths=tuple(
            PathEstimate(
                gain=_pair2c(p["gain"]),
                elevation=float(p["elevation"]),
                azimuth=float(p["azimuth"]),
                delay=float(p["delay"]),
                refine_steps=int(p.get("refine_steps", 0)),
            )
            for p in data["paths"]
        ),
        residual_power=float(data["residual_power"]),
        iterations_used=int(data["iterations_used"]),
        stop_reason=str(data["stop_reason"]),
    )


def crlb_report_to_dict(report: CrlbReport) -> dict:
    return {
        "kind": "crlb",
        "version": __version__,
        "param_bounds": [
            [None if not np.isfinite(v) else float(v) for v in row]
            for row in report.param_bounds
        ],
        "csi_bounds": None if report.csi_bounds is None else report.csi_bounds.tolist(),
        "aggregate_bound": (
            None if not np.isfinite(report.aggregate_bound) else report.aggregate_bound
        ),
        "block_conditions": list(report.block_conditions),
        "singular_paths": list(report.singular_paths),
        "full_fim": report.full_fim,
    }


# -- scenarios -------------------------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    out = {
        "name": scenario.name,
        "config": config_to_dict(scenario.config),
        "snr_db": list(scenario.snr_db),
        "num_paths": scenario.num_paths,
        "trials": scenario.trials,
        "seed": scenario.seed,
        "estimators": list(scenario.estimators),
        "crlb": scenario.compute_crlb,
    }
    if scenario.variant_field:
        out["variant"] = {
            "field": scenario.variant_field,
            "values": [
                list(v) if isinstance(v, (tuple, list)) else v
                for v in scenario.variant_values
            ],
        }
    return out


def scenario_from_dict(data: dict) -> Scenario:
    known = {
        "name", "config", "snr_db", "num_paths", "trials", "seed",
        "estimators", "crlb", "variant",
    }
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    if "snr_db" not in data:
        raise ValueError("scenario is missing the required key 'snr_db'")
    variant = data.get("variant") or {}
    if variant and set(variant) - {"field", "values"}:
        raise ValueError(f"unknown variant keys: {sorted(set(variant) - {'field', 'values'})}")
    values = variant.get("values")
    if values is not None:
        values = tuple(tuple(v) if isinstance(v, list) else v for v in values)
    return Scenario(
        name=str(data.get("name", "scenario")),
        config=config_from_dict(data.get("config", {})),
        snr_db=tuple(data["snr_db"]),
        num_paths=int(data.get("num_paths", 3)),
        trials=int(data.get("trials", 100)),
        seed=int(data.get("seed", 0)),
        estimators=tuple(data.get("estimators", ("nomp",))),
        compute_crlb=bool(data.get("crlb", False)),
        variant_field=variant.get("field"),
        variant_values=values,
    )


# -- sweep output ------------------------------------------------------------------


def format_variant_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (tuple, list)):
        return "x".join(str(int(v)) for v in value)
    return str(value)


def sweep_rows(result: SweepResult) -> list[dict]:
    """Flatten a sweep into one row per (point, metric).

    Wall-clock runtimes stay out of the table so reruns with the same seed
    are byte-identical; they are reported on the log lines instead.
    """
    rows = []
    for rec in result.records:
        for metric, stat in rec.metrics.items():
            rows.append(
                {
                    "snr_db": rec.snr_db,
                    "variant_field": rec.variant_field or "",
                    "variant_value": format_variant_value(rec.variant_value),
                    "metric": metric,
                    "mean": stat.mean,
                    "stderr": stat.stderr,
                    "trials": stat.trials,
                }
            )
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_sweep_csv(result: SweepResult, path: Path) -> None:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in sweep_rows(result):
        buf.write(",".join(_fmt(row[c]) for c in CSV_COLUMNS) + "\n")
    Path(path).write_text(buf.getvalue())


def write_sweep_jsonl(result: SweepResult, path: Path) -> None:
    with open(path, "w") as fh:
        for row in sweep_rows(result):
            fh.write(json.dumps(row, sort_keys=True) + "\n")


# -- manifest -----------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Provenance record paired with every set of output files."""

    command: str
    scenario: str
    seed: int
    config: dict
    outputs: tuple[str, ...]
    version: str = __version__
    created_utc: str = ""

    def to_dict(self) -> dict:
        return {
            "tool": "risce",
            "version": self.version,
            "created_utc": self.created_utc
            or datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "command": self.command,
            "scenario": self.scenario,
            "seed": self.seed,
            "config": self.config,
            "outputs": list(self.outputs),
        }


def write_manifest(manifest: RunManifest, path: Path) -> None:
    dump_json(manifest.to_dict(), path)
