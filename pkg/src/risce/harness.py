"""Monte-Carlo benchmark engine: NMSE metrics, path matching, and sweeps.

A Scenario fixes a base configuration, an SNR list, optionally one swept
configuration axis (pilot symbols, pilot subcarriers, or RIS size), and the
trial budget. run_sweep draws a fresh channel, training profile, and noise
per trial with seeds derived from (scenario seed, variant, trial) - the SNR
axis reuses the same draws so estimator comparisons across SNR are paired.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import SystemConfig, equispaced_pilots
from .crlb import ParamVector, aggregate_channel_bound
from .nomp import EstimateSet, PathEstimate, run_nomp, run_omp_baseline
from .signal_model import (
    ChannelRealization,
    PathParams,
    PilotModel,
    RisTrainingProfile,
    noiseless_observation,
    sample_channel,
    sample_training_profile,
)

ESTIMATOR_NAMES = ("nomp", "omp")
VARIANT_FIELDS = ("num_pilot_symbols", "num_pilot_subcarriers", "ris_dims")


def nmse(estimate_vector, truth_vector) -> float:
    """Squared-error ratio ||x_hat - x||^2 / ||x||^2 for one trial."""
    est = np.asarray(estimate_vector)
    truth = np.asarray(truth_vector)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    denom = float(np.sum(np.abs(truth) ** 2))
    if denom <= 0.0:
        raise ValueError("truth vector has zero norm")
    return float(np.sum(np.abs(est - truth) ** 2) / denom)


@dataclass(frozen=True)
class PathMatching:
    """Estimate-to-truth correspondence with surplus/missing indices."""

    pairs: tuple[tuple[int, int], ...]  # (estimate index, truth index)
    unmatched_estimates: tuple[int, ...]
    unmatched_truth: tuple[int, ...]
    distances: tuple[float, ...]


def _path_coords(paths, cfg: SystemConfig) -> np.ndarray:
    """Rows of (phi, psi, tau) scaled by each coordinate's range."""
    rows = []
    for p in paths:
        if isinstance(p, PathParams):
            rows.append((p.elevation_aoa_rad, p.azimuth_aoa_rad, p.delay_s))
        else:
            rows.append((p.elevation, p.azimuth, p.delay))
    coords = np.asarray(rows, dtype=float).reshape(-1, 3)
    coords[:, 0] /= math.pi
    coords[:, 1] /= math.pi
    coords[:, 2] /= cfg.max_delay_s
    return coords


def match_paths(
    estimates: EstimateSet | Sequence[PathEstimate],
    truth: ChannelRealization | Sequence[PathParams],
    cfg: SystemConfig,
) -> PathMatching:
    """Minimum-total-cost assignment on normalized (phi, psi, tau) distance.

    Every matchable pair is considered; the leftover side is reported as
    false alarms (surplus estimates) or misses (unmatched true paths).
    """
    est_paths = estimates.paths if isinstance(estimates, EstimateSet) else tuple(estimates)
    true_paths = truth.paths if isinstance(truth, ChannelRealization) else tuple(truth)
    if not est_paths or not true_paths:
        return PathMatching(
            pairs=(),
            unmatched_estimates=tuple(range(len(est_paths))),
            unmatched_truth=tuple(range(len(true_paths))),
            distances=(),
        )
    a = _path_coords(est_paths, cfg)
    b = _path_coords(true_paths, cfg)
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(zip(rows.tolist(), cols.tolist()))
    return PathMatching(
        pairs=pairs,
        unmatched_estimates=tuple(sorted(set(range(len(est_paths))) - set(rows.tolist()))),
        unmatched_truth=tuple(sorted(set(range(len(true_paths))) - set(cols.tolist()))),
        distances=tuple(float(cost[r, c]) for r, c in pairs),
    )


def channel_nmse(
    estimates: EstimateSet | Sequence[PathEstimate],
    truth: ChannelRealization,
    profile: RisTrainingProfile,
    cfg: SystemConfig,
    model: PilotModel | None = None,
) -> float:
    """NMSE of the reconstructed effective channel; order-free by construction.

    An empty estimate set scores 1 (the all-zero reconstruction).
    """
    if model is None:
        model = PilotModel(cfg, truth.geometry, profile)
    h_true = noiseless_observation(truth, profile, cfg, model=model)
    denom = float(np.sum(np.abs(h_true) ** 2))
    if denom <= 0.0:
        raise ValueError("true channel has zero power")
    est_paths = estimates.paths if isinstance(estimates, EstimateSet) else tuple(estimates)
    h_est = np.zeros_like(h_true)
    for p in est_paths:
        h_est += p.gain * model.atom(p.elevation, p.azimuth, p.delay)
    return float(np.sum(np.abs(h_est - h_true) ** 2) / denom)


def parameter_nmses(
    estimates: EstimateSet | Sequence[PathEstimate],
    truth: ChannelRealization,
    cfg: SystemConfig,
) -> dict[str, float]:
    """Per-parameter NMSEs over matched pairs plus miss / false-alarm rates.

    Parameter keys are absent when no pair matched.
    """
    matching = match_paths(estimates, truth, cfg)
    est_paths = estimates.paths if isinstance(estimates, EstimateSet) else tuple(estimates)
    n_true = truth.num_paths
    out = {
        "miss_rate": len(matching.unmatched_truth) / n_true,
        "false_alarm_rate": len(matching.unmatched_estimates) / n_true,
        "detected": float(len(est_paths)),
    }
    if not matching.pairs:
        return out
    est_idx = [i for i, _ in matching.pairs]
    true_idx = [j for _, j in matching.pairs]
    g_est = np.array([est_paths[i].gain for i in est_idx])
    g_true = np.array([truth.paths[j].gain for j in true_idx])
    phi_est = np.array([est_paths[i].elevation for i in est_idx])
    phi_true = np.array([truth.paths[j].elevation_aoa_rad for j in true_idx])
    psi_est = np.array([est_paths[i].azimuth for i in est_idx])
    psi_true = np.array([truth.paths[j].azimuth_aoa_rad for j in true_idx])
    tau_est = np.array([est_paths[i].delay for i in est_idx])
    tau_true = np.array([truth.paths[j].delay_s for j in true_idx])
    out["nmse_gain"] = nmse(g_est, g_true)
    out["nmse_delay"] = nmse(tau_est, tau_true)
    out["nmse_angle"] = 0.5 * (nmse(phi_est, phi_true) + nmse(psi_est, psi_true))
    return out


# -- scenarios ---------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """One sweep: base config, SNR axis, optional variant axis, trial budget."""

    name: str
    config: SystemConfig
    snr_db: tuple[float, ...]
    num_paths: int = 3
    trials: int = 100
    seed: int = 0
    estimators: tuple[str, ...] = ("nomp",)
    compute_crlb: bool = False
    variant_field: str | None = None
    variant_values: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if not self.snr_db:
            raise ValueError("snr_db must be nonempty")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.num_paths < 1:
            raise ValueError(f"num_paths must be >= 1, got {self.num_paths}")
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if not self.estimators:
            raise ValueError("estimators must be nonempty")
        for e in self.estimators:
            if e not in ESTIMATOR_NAMES:
                raise ValueError(f"unknown estimator {e!r}; choose from {ESTIMATOR_NAMES}")
        if self.variant_field is not None:
            if self.variant_field not in VARIANT_FIELDS:
                raise ValueError(
                    f"unknown variant_field {self.variant_field!r}; "
                    f"choose from {VARIANT_FIELDS}"
                )
            if not self.variant_values:
                raise ValueError("variant_values must be nonempty when variant_field is set")
            object.__setattr__(self, "variant_values", tuple(self.variant_values))


def apply_variant(cfg: SystemConfig, field_name: str | None, value) -> SystemConfig:
    """Return cfg with one swept axis applied."""
    if field_name is None:
        return cfg
    if field_name == "num_pilot_symbols":
        return cfg.replace(num_pilot_symbols=int(value))
    if field_name == "num_pilot_subcarriers":
        return cfg.replace(
            pilot_subcarriers=equispaced_pilots(cfg.num_subcarriers, int(value))
        )
    if field_name == "ris_dims":
        nx, ny = value
        return cfg.replace(ris_dims=(int(nx), int(ny)))
    raise ValueError(f"unknown variant_field {field_name!r}")


@dataclass(frozen=True)
class MetricStat:
    mean: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class SweepRecord:
    snr_db: float
    variant_field: str | None
    variant_value: object
    metrics: dict[str, MetricStat]
    runtime_s: float


@dataclass(frozen=True)
class SweepResult:
    scenario: Scenario
    records: tuple[SweepRecord, ...]


def _stat(values: list[float]) -> MetricStat:
    arr = np.asarray(values, dtype=float)
    n = arr.size
    stderr = float(arr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MetricStat(mean=float(arr.mean()), stderr=stderr, trials=n)


def run_sweep(scenario: Scenario, log: Callable[[str], None] | None = None) -> SweepResult:
    """Execute the full Monte-Carlo sweep; deterministic given the seeds."""
    estimator_fns = {"nomp": run_nomp, "omp": run_omp_baseline}
    variants = scenario.variant_values if scenario.variant_field else (None,)
    records = []
    for vi, variant in enumerate(variants):
        cfg_v = apply_variant(scenario.config, scenario.variant_field, variant)
        n_obs = cfg_v.observation_length
        acc: dict[float, dict[str, list[float]]] = {s: {} for s in scenario.snr_db}
        runtime: dict[float, float] = {s: 0.0 for s in scenario.snr_db}
        for trial in range(scenario.trials):
            seq = np.random.SeedSequence(entropy=scenario.seed, spawn_key=(vi, trial))
            ch_rng, prof_rng, noise_rng = (np.random.default_rng(s) for s in seq.spawn(3))
            channel = sample_channel(cfg_v, scenario.num_paths, ch_rng)
            profile = sample_training_profile(cfg_v, prof_rng)
            model = PilotModel(cfg_v, channel.geometry, profile)
            y0 = noiseless_observation(channel, profile, cfg_v, model=model)
            signal_power = float(np.mean(np.abs(y0) ** 2))
            unit_noise = (
                noise_rng.standard_normal(n_obs) + 1j * noise_rng.standard_normal(n_obs)
            ) / math.sqrt(2.0)

            bound_at_unit_variance = None
            if scenario.compute_crlb:
                xi = ParamVector.from_channel(channel)
                unit_model = PilotModel(
                    cfg_v.replace(noise_variance=1.0), channel.geometry, profile
                )
                try:
                    bound_at_unit_variance = aggregate_channel_bound(xi, model=unit_model)
                except ValueError:
                    bound_at_unit_variance = None  # singular information, skip trial

            for snr in scenario.snr_db:
                t0 = time.perf_counter()
                sigma2 = signal_power * 10.0 ** (-snr / 10.0)
                cfg_t = cfg_v.replace(noise_variance=sigma2)
                y = y0 + math.sqrt(sigma2) * unit_noise
                bucket = acc[snr]
                for est_name in scenario.estimators:
                    estimate = estimator_fns[est_name](
                        y, profile, channel.geometry, cfg_t,
                        max_paths=2 * scenario.num_paths,
                    )
                    values = parameter_nmses(estimate, channel, cfg_t)
                    values["nmse_channel"] = channel_nmse(
                        estimate, channel, profile, cfg_t, model=model
                    )
                    values["residual_power"] = estimate.residual_power
                    for key, val in values.items():
                        bucket.setdefault(f"{est_name}_{key}", []).append(val)
                if bound_at_unit_variance is not None:
                    bucket.setdefault("crlb_channel_bound", []).append(
                        bound_at_unit_variance * sigma2
                    )
                runtime[snr] += time.perf_counter() - t0

        for snr in scenario.snr_db:
            stats = {key: _stat(vals) for key, vals in sorted(acc[snr].items())}
            records.append(
                SweepRecord(
                    snr_db=snr,
                    variant_field=scenario.variant_field,
                    variant_value=variant,
                    metrics=stats,
                    runtime_s=runtime[snr],
                )
            )
            if log is not None:
                head = f"[{scenario.name}] snr={snr:g}dB"
                if scenario.variant_field:
                    head += f" {scenario.variant_field}={variant}"
                nm = {
                    k: v.mean
                    for k, v in stats.items()
                    if k.endswith("nmse_channel") or k == "crlb_channel_bound"
                }
                body = " ".join(f"{k}={v:.3e}" for k, v in nm.items())
                log(f"{head} trials={scenario.trials} {body} ({runtime[snr]:.1f}s)")
    return SweepResult(scenario=scenario, records=tuple(records))


# -- presets -----------------------------------------------------------------


def _desk_config(num_pilots: int = 8, max_delay_cycles: int = 8) -> SystemConfig:
    """Reduced-scale system that runs in seconds.

    The delay window is capped at the pilot-stride ambiguity limit so delays
    stay identifiable with exactly-equispaced pilots.
    """
    bandwidth = 600e6
    return SystemConfig(
        num_subcarriers=64,
        pilot_subcarriers=equispaced_pilots(64, num_pilots),
        num_pilot_symbols=8,
        num_bs_antennas=8,
        ris_dims=(4, 4),
        max_delay_s=max_delay_cycles / bandwidth,
        false_alarm_rate=1e-2,
    )


def preset_scenarios() -> dict[str, Scenario]:
    """Named experiment presets: full-scale sweeps and desk-scale variants."""
    full = SystemConfig()  # defaults: 28 GHz, 600 MHz, N_c=512, N_b=64, 16x16 RIS
    snr_lo = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    snr_hi = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    presets = {
        "fig2": Scenario(
            name="fig2", config=full, snr_db=snr_lo, num_paths=5, trials=100,
            estimators=("nomp",), variant_field="num_pilot_symbols",
            variant_values=(5, 10, 15),
        ),
        "fig3": Scenario(
            name="fig3", config=full, snr_db=snr_lo, num_paths=5, trials=100,
            estimators=("nomp",), variant_field="num_pilot_subcarriers",
            variant_values=(6, 12, 24),
        ),
        "fig4": Scenario(
            name="fig4", config=full, snr_db=snr_hi, num_paths=5, trials=100,
            estimators=("nomp", "omp"), compute_crlb=True,
        ),
        "fig2-desk": Scenario(
            name="fig2-desk", config=_desk_config(), snr_db=(0.0, 5.0, 10.0, 15.0, 20.0),
            num_paths=3, trials=200, estimators=("nomp",),
            variant_field="num_pilot_symbols", variant_values=(2, 4, 8),
        ),
        "fig3-desk": Scenario(
            name="fig3-desk", config=_desk_config(num_pilots=8, max_delay_cycles=4),
            snr_db=(0.0, 5.0, 10.0, 15.0, 20.0), num_paths=3, trials=200,
            estimators=("nomp",), variant_field="num_pilot_subcarriers",
            variant_values=(4, 8, 16),
        ),
        "fig4-desk": Scenario(
            name="fig4-desk", config=_desk_config(), snr_db=(0.0, 5.0, 10.0, 15.0, 20.0),
            num_paths=3, trials=200, estimators=("nomp", "omp"), compute_crlb=True,
        ),
    }
    return presets


def sample_separated_channel(
    cfg: SystemConfig,
    num_paths: int,
    rng,
    min_separation: float = 0.15,
    max_tries: int = 1000,
) -> ChannelRealization:
    """Rejection-sample a channel whose paths are pairwise well separated.

    Separation is the normalized (phi, psi, tau) distance used by the path
    matcher.
    """
    for _ in range(max_tries):
        channel = sample_channel(cfg, num_paths, rng)
        coords = _path_coords(channel.paths, cfg)
        dists = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
        dists = dists + np.eye(num_paths) * 1e9
        if dists.min() >= min_separation:
            return channel
    raise RuntimeError(
        f"could not draw {num_paths} paths separated by {min_separation} "
        f"in {max_tries} tries"
    )
