"""Wideband cascaded channel estimation for RIS-assisted mmWave MIMO-OFDM.

Simulator, NOMP estimator with plain-OMP baseline, Cramer-Rao bound
analysis, and a Monte-Carlo benchmark harness with CSV/figure reporting.
"""

__version__ = "0.1.0"

from .config import SystemConfig, equispaced_pilots
from .crlb import (
    CrlbReport,
    FimBlock,
    FisherInformation,
    ParamVector,
    aggregate_channel_bound,
    assemble_fim,
    crlb_report,
    csi_gradient,
    csi_lower_bound,
    csi_lower_bounds,
    csi_value,
    csi_vector,
    fim_block,
    steering_derivatives,
)
from .harness import (
    MetricStat,
    PathMatching,
    Scenario,
    SweepRecord,
    SweepResult,
    channel_nmse,
    match_paths,
    nmse,
    parameter_nmses,
    preset_scenarios,
    run_sweep,
    sample_separated_channel,
)
from .nomp import (
    EstimateSet,
    GridSpec,
    PathEstimate,
    correlation_score,
    cyclic_refine,
    gain_ls_single,
    greedy_search,
    newton_derivatives,
    newton_objective,
    precise_search,
    run_nomp,
    run_omp_baseline,
    single_refine,
    stopping_threshold,
    update_gains_ls,
)
from .signal_model import (
    ChannelRealization,
    LinkGeometry,
    PathParams,
    PilotModel,
    PilotObservation,
    RisTrainingProfile,
    atom,
    bs_steering,
    noiseless_observation,
    normalized_ris_angle,
    ris_steering,
    sample_channel,
    sample_training_profile,
    snr_to_noise_variance,
    synthesize_pilots,
    training_matrix,
)

__all__ = [name for name in dir() if not name.startswith("_")]
