"""Fisher information and Cramer-Rao lower bounds for the path parameters.

Each path is described by the real 5-vector (|g|, angle(g), phi, psi, tau).
Under circularly-symmetric Gaussian noise the Fisher information is
(2/sigma_v^2) * Re{J^H J} with J the Jacobian of the noiseless observation
mean, so every block reduces to inner products of the atom and its analytic
partials. Bounds on the effective per-(subcarrier, symbol, antenna) channel
coefficients follow from the standard quadratic-form transformation of the
inverse information matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import SystemConfig
from .nomp import EstimateSet
from .signal_model import (
    ChannelRealization,
    LinkGeometry,
    PilotModel,
    RisTrainingProfile,
)

SINGULAR_CONDITION = 1e12
PARAMS_PER_PATH = 5  # (amplitude, phase, elevation, azimuth, delay)


@dataclass(frozen=True)
class ParamVector:
    """Stacked per-path parameter 5-tuples (|g|, angle(g), phi, psi, tau)."""

    values: np.ndarray  # (P, 5)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != PARAMS_PER_PATH:
            raise ValueError(f"values must have shape (P, 5), got {vals.shape}")
        if np.any(vals[:, 0] < 0):
            raise ValueError("gain amplitudes must be >= 0")
        if np.any(vals[:, 1] < -math.pi) or np.any(vals[:, 1] >= math.pi):
            raise ValueError("gain phases must lie in [-pi, pi)")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_gains_and_geometry(
        cls, gains: Sequence[complex], elevations, azimuths, delays
    ) -> "ParamVector":
        gains = np.asarray(gains, dtype=complex)
        phases = np.angle(gains)
        phases[phases >= math.pi] -= 2 * math.pi  # fold the +pi endpoint
        return cls(
            values=np.column_stack(
                [np.abs(gains), phases, elevations, azimuths, delays]
            )
        )

    @classmethod
    def from_channel(cls, channel: ChannelRealization) -> "ParamVector":
        return cls.from_gains_and_geometry(
            [p.gain for p in channel.paths],
            [p.elevation_aoa_rad for p in channel.paths],
            [p.azimuth_aoa_rad for p in channel.paths],
            [p.delay_s for p in channel.paths],
        )

    @classmethod
    def from_estimates(cls, estimates: EstimateSet) -> "ParamVector":
        return cls.from_gains_and_geometry(
            [p.gain for p in estimates.paths],
            [p.elevation for p in estimates.paths],
            [p.azimuth for p in estimates.paths],
            [p.delay for p in estimates.paths],
        )

    @property
    def num_paths(self) -> int:
        return self.values.shape[0]

    @property
    def gains(self) -> np.ndarray:
        return self.values[:, 0] * np.exp(1j * self.values[:, 1])


@dataclass(frozen=True)
class FimBlock:
    """One path's 5x5 information block with conditioning diagnostics."""

    matrix: np.ndarray
    condition: float
    singular: bool

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float).copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)


@dataclass(frozen=True)
class FisherInformation:
    """Assembled information matrix, block-diagonal unless full mode was used."""

    blocks: tuple[FimBlock, ...]
    matrix: np.ndarray  # (5P, 5P)
    inverse: np.ndarray | None  # None when any needed block is singular
    full: bool

    @property
    def num_paths(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class CrlbReport:
    """Per-parameter variance bounds and the normalized channel bound."""

    param_bounds: np.ndarray  # (P, 5), NaN where unavailable
    csi_bounds: np.ndarray | None  # (L*M*N_b,) or None when unavailable
    aggregate_bound: float  # NaN when unavailable
    block_conditions: tuple[float, ...]
    singular_paths: tuple[int, ...]
    full_fim: bool


# -- flat-index helpers ------------------------------------------------------


def _flat_index(k: int, m: int, b: int, cfg: SystemConfig) -> int:
    if k not in cfg.pilot_subcarriers:
        raise ValueError(f"subcarrier {k} is not in the pilot set {cfg.pilot_subcarriers}")
    k_pos = cfg.pilot_subcarriers.index(k)
    if not 0 <= m < cfg.num_pilot_symbols:
        raise IndexError(f"pilot symbol index {m} outside [0, {cfg.num_pilot_symbols})")
    if not 0 <= b < cfg.num_bs_antennas:
        raise IndexError(f"BS antenna index {b} outside [0, {cfg.num_bs_antennas})")
    return (k_pos * cfg.num_pilot_symbols + m) * cfg.num_bs_antennas + b


def _model(
    profile: RisTrainingProfile | None,
    geometry: LinkGeometry | None,
    cfg: SystemConfig | None,
    model: PilotModel | None,
) -> PilotModel:
    return model if model is not None else PilotModel(cfg, geometry, profile)


def _equilibrated_condition_and_inverse(
    mat: np.ndarray,
) -> tuple[float, np.ndarray | None]:
    """Condition number and inverse of a symmetric PSD matrix, diagonally scaled.

    The parameters carry wildly different units (radians vs seconds), so the
    raw condition number is dominated by unit choice; the diagonally
    equilibrated form measures intrinsic ill-conditioning (e.g. nearly
    coincident paths) instead.
    """
    diag = np.diag(mat)
    if np.any(diag <= 0.0):
        return float("inf"), None
    d = 1.0 / np.sqrt(diag)
    scaled = mat * np.outer(d, d)
    cond = float(np.linalg.cond(scaled))
    if not cond < SINGULAR_CONDITION:
        return cond, None
    inv = np.linalg.inv(scaled) * np.outer(d, d)
    return cond, 0.5 * (inv + inv.T)


# -- steering-factor derivatives ---------------------------------------------


def cascade_pattern_jet(
    phi: float,
    psi: float,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Delay-free per-(k, m, b) cascade factor and its angle partials.

    Returns (value, d/dphi, d/dpsi), each laid out like the observation. The
    factor equals the atom evaluated at zero delay.
    """
    model = _model(profile, geometry, cfg, model)
    jet = model.atom_jet(phi, psi, 0.0)
    return jet.value, jet.grad[:, 0], jet.grad[:, 1]


def steering_derivatives(
    phi: float,
    psi: float,
    k: int,
    m: int,
    b: int,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> tuple[complex, complex]:
    """Angle partials of the cascade factor at one (k, m, b) cell."""
    model = _model(profile, geometry, cfg, model)
    idx = _flat_index(k, m, b, model.cfg)
    _, d_phi, d_psi = cascade_pattern_jet(phi, psi, model=model)
    return complex(d_phi[idx]), complex(d_psi[idx])


# -- Jacobian of the noiseless mean ------------------------------------------


def path_jacobian(xi_p: np.ndarray, model: PilotModel) -> np.ndarray:
    """(N, 5) complex Jacobian of the mean w.r.t. one path's parameters."""
    amp, phase, phi, psi, tau = xi_p
    gain = amp * np.exp(1j * phase)
    jet = model.atom_jet(phi, psi, tau)
    cols = np.empty((jet.value.shape[0], PARAMS_PER_PATH), dtype=complex)
    cols[:, 0] = np.exp(1j * phase) * jet.value
    cols[:, 1] = 1j * gain * jet.value
    cols[:, 2] = gain * jet.grad[:, 0]
    cols[:, 3] = gain * jet.grad[:, 1]
    cols[:, 4] = gain * jet.grad[:, 2]
    return cols


def mean_jacobian(xi: ParamVector, model: PilotModel) -> np.ndarray:
    """(N, 5P) complex Jacobian of the noiseless mean w.r.t. all parameters."""
    return np.concatenate(
        [path_jacobian(xi.values[p], model) for p in range(xi.num_paths)], axis=1
    )


# -- Fisher information -------------------------------------------------------


def fim_block(
    xi_p: np.ndarray,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> FimBlock:
    """Analytic 5x5 information block (2/sigma^2) Re{J_p^H J_p} for one path."""
    model = _model(profile, geometry, cfg, model)
    jac = path_jacobian(np.asarray(xi_p, dtype=float), model)
    mat = (2.0 / model.cfg.noise_variance) * np.real(jac.conj().T @ jac)
    mat = 0.5 * (mat + mat.T)  # enforce exact symmetry against roundoff
    cond, inv = _equilibrated_condition_and_inverse(mat)
    return FimBlock(matrix=mat, condition=cond, singular=inv is None)


def assemble_fim(
    xi: ParamVector,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
    full: bool = False,
) -> FisherInformation:
    """Assemble the 5P x 5P information matrix.

    Block-diagonal by default (paths assumed well separated); ``full=True``
    keeps every cross-path block for validation. The inverse is computed
    blockwise in block mode and densely in full mode; it is None whenever a
    needed factor is too ill-conditioned.
    """
    model = _model(profile, geometry, cfg, model)
    sigma2 = model.cfg.noise_variance
    n_paths = xi.num_paths
    dim = PARAMS_PER_PATH * n_paths

    if full:
        jac = mean_jacobian(xi, model)
        matrix = (2.0 / sigma2) * np.real(jac.conj().T @ jac)
        matrix = 0.5 * (matrix + matrix.T)
        blocks = []
        for p in range(n_paths):
            sl = slice(5 * p, 5 * p + 5)
            sub = matrix[sl, sl]
            cond, inv = _equilibrated_condition_and_inverse(sub)
            blocks.append(FimBlock(matrix=sub, condition=cond, singular=inv is None))
        _, inverse = _equilibrated_condition_and_inverse(matrix)
        return FisherInformation(
            blocks=tuple(blocks), matrix=matrix, inverse=inverse, full=True
        )

    blocks = tuple(fim_block(xi.values[p], model=model) for p in range(n_paths))
    matrix = np.zeros((dim, dim))
    inverse = np.zeros((dim, dim))
    any_singular = False
    for p, blk in enumerate(blocks):
        sl = slice(5 * p, 5 * p + 5)
        matrix[sl, sl] = blk.matrix
        _, inv = _equilibrated_condition_and_inverse(blk.matrix)
        if inv is None:
            any_singular = True
        else:
            inverse[sl, sl] = inv
    return FisherInformation(
        blocks=blocks,
        matrix=matrix,
        inverse=None if any_singular else inverse,
        full=False,
    )


# -- effective channel coefficients and their bounds --------------------------


def csi_vector(xi: ParamVector, model: PilotModel) -> np.ndarray:
    """All effective channel coefficients, laid out like the observation."""
    out = np.zeros(model.observation_length, dtype=complex)
    gains = xi.gains
    for p in range(xi.num_paths):
        _, _, phi, psi, tau = xi.values[p]
        out += gains[p] * model.atom(phi, psi, tau)
    return out


def csi_value(
    k: int,
    m: int,
    b: int,
    xi: ParamVector,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> complex:
    """Effective channel coefficient at one (subcarrier, symbol, antenna) cell."""
    model = _model(profile, geometry, cfg, model)
    return complex(csi_vector(xi, model)[_flat_index(k, m, b, model.cfg)])


def csi_gradient(
    k: int,
    m: int,
    b: int,
    xi: ParamVector,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> np.ndarray:
    """Complex gradient (length 5P) of one channel coefficient w.r.t. xi."""
    model = _model(profile, geometry, cfg, model)
    return mean_jacobian(xi, model)[_flat_index(k, m, b, model.cfg)]


def csi_lower_bounds(
    xi: ParamVector,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
    fim: FisherInformation | None = None,
) -> np.ndarray:
    """Estimation-variance lower bound of every channel coefficient."""
    model = _model(profile, geometry, cfg, model)
    if fim is None:
        fim = assemble_fim(xi, model=model)
    if fim.inverse is None:
        raise ValueError("Fisher information is singular; bounds unavailable")
    jac = mean_jacobian(xi, model)
    bounds = np.einsum("ni,ij,nj->n", jac.conj(), fim.inverse, jac)
    return np.ascontiguousarray(bounds.real)


def csi_lower_bound(
    k: int,
    m: int,
    b: int,
    xi: ParamVector,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
    fim: FisherInformation | None = None,
) -> float:
    """Lower bound at one (k, m, b) cell."""
    model = _model(profile, geometry, cfg, model)
    return float(
        csi_lower_bounds(xi, model=model, fim=fim)[_flat_index(k, m, b, model.cfg)]
    )


def aggregate_channel_bound(
    xi: ParamVector,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
    full_fim: bool = False,
) -> float:
    """Channel bound normalized by total channel power, comparable to NMSE."""
    model = _model(profile, geometry, cfg, model)
    fim = assemble_fim(xi, model=model, full=full_fim)
    bounds = csi_lower_bounds(xi, model=model, fim=fim)
    power = float(np.sum(np.abs(csi_vector(xi, model)) ** 2))
    if power <= 0.0:
        raise ValueError("channel has zero power; normalized bound undefined")
    return float(np.sum(bounds) / power)


def crlb_report(
    xi: ParamVector | ChannelRealization,
    profile: RisTrainingProfile,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    full_fim: bool = False,
) -> CrlbReport:
    """Bundle per-parameter bounds, per-cell channel bounds, and the aggregate.

    Near-singular blocks are reported (NaN bounds, path index flagged), not
    regularized.
    """
    if isinstance(xi, ChannelRealization):
        geometry = xi.geometry if geometry is None else geometry
        xi = ParamVector.from_channel(xi)
    model = PilotModel(cfg, geometry, profile)
    fim = assemble_fim(xi, model=model, full=full_fim)

    param_bounds = np.full((xi.num_paths, PARAMS_PER_PATH), np.nan)
    singular = []
    for p, blk in enumerate(fim.blocks):
        _, inv = _equilibrated_condition_and_inverse(blk.matrix)
        if inv is None:
            singular.append(p)
        else:
            param_bounds[p] = np.diag(inv)
    if fim.full and fim.inverse is not None:
        param_bounds = np.diag(fim.inverse).reshape(xi.num_paths, PARAMS_PER_PATH).copy()

    if fim.inverse is not None:
        csi_bounds = csi_lower_bounds(xi, model=model, fim=fim)
        power = float(np.sum(np.abs(csi_vector(xi, model)) ** 2))
        aggregate = float(np.sum(csi_bounds) / power) if power > 0 else float("nan")
    else:
        csi_bounds = None
        aggregate = float("nan")

    return CrlbReport(
        param_bounds=param_bounds,
        csi_bounds=csi_bounds,
        aggregate_bound=aggregate,
        block_conditions=tuple(blk.condition for blk in fim.blocks),
        singular_paths=tuple(singular),
        full_fim=full_fim,
    )
