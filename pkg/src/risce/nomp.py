"""Newtonized orthogonal matching pursuit over the cascaded-channel atoms.

Recovery runs in five stages per detected path: a coarse grid search over
(elevation, azimuth, delay), a local refinement on a denser grid, Newton
refinement of the new path, cyclic Newton refinement of all paths, and a
joint least-squares gain update. Iteration stops when the best coarse-grid
correlation falls below a threshold calibrated from the false-alarm rate,
or when a path-count cap is hit. The plain-OMP baseline is the same
pipeline with both Newton stages disabled.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .config import SystemConfig
from .signal_model import (
    LinkGeometry,
    PilotModel,
    PilotObservation,
    RisTrainingProfile,
    angles_to_uv,
    uv_to_angles,
)

HALF_PI = math.pi / 2
# largest double strictly below pi/2, for half-open angle clamping
ANGLE_MAX = np.nextafter(HALF_PI, 0.0)
# direction-cosine radius kept strictly inside the unit disk so that the
# inverse map stays inside [-pi/2, pi/2)
UV_RADIUS_MAX = 1.0 - 1e-12
ILL_CONDITIONED = 1e12


@dataclass(frozen=True)
class GridSpec:
    """Uniform search grids over elevation, azimuth, and delay."""

    phi_points: np.ndarray
    psi_points: np.ndarray
    tau_points: np.ndarray
    rates: tuple[float, float, float]

    def __post_init__(self):
        for name in ("phi_points", "psi_points", "tau_points"):
            pts = np.asarray(getattr(self, name), dtype=float)
            if pts.size == 0:
                raise ValueError(f"{name} must be nonempty")
            pts = pts.copy()
            pts.flags.writeable = False
            object.__setattr__(self, name, pts)

    @classmethod
    def from_rates(cls, cfg: SystemConfig, rates: tuple[float, float, float]) -> "GridSpec":
        """Grid with rate*N_x / rate*N_y angle points and a matching delay grid.

        The delay grid spacing equals 1/(rate * N_c * delta_f) so the full
        [0, 1/delta_f) window at rate 1 would have exactly N_c cells.
        """
        r_phi, r_psi, r_tau = rates
        nx, ny = cfg.ris_dims
        n_phi = max(1, int(round(r_phi * nx)))
        n_psi = max(1, int(round(r_psi * ny)))
        n_tau = max(
            1,
            int(
                math.ceil(
                    r_tau * cfg.num_subcarriers * cfg.max_delay_s * cfg.subcarrier_spacing_hz
                    - 1e-9
                )
            ),
        )
        return cls(
            phi_points=-HALF_PI + math.pi * np.arange(n_phi) / n_phi,
            psi_points=-HALF_PI + math.pi * np.arange(n_psi) / n_psi,
            tau_points=cfg.max_delay_s * np.arange(n_tau) / n_tau,
            rates=(float(r_phi), float(r_psi), float(r_tau)),
        )

    @classmethod
    def coarse(cls, cfg: SystemConfig) -> "GridSpec":
        return cls.from_rates(cfg, cfg.coarse_grid_rates)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self.phi_points), len(self.psi_points), len(self.tau_points))

    def spacings(self, cfg: SystemConfig) -> tuple[float, float, float]:
        return (
            math.pi / len(self.phi_points),
            math.pi / len(self.psi_points),
            cfg.max_delay_s / len(self.tau_points),
        )


@dataclass(frozen=True)
class PathEstimate:
    """Recovered parameters of one detected path."""

    gain: complex
    elevation: float
    azimuth: float
    delay: float
    refine_steps: int = 0  # accepted Newton steps, diagnostic only


@dataclass(frozen=True)
class EstimateSet:
    """Ordered detected paths with termination diagnostics."""

    paths: tuple[PathEstimate, ...]
    residual_power: float
    iterations_used: int
    stop_reason: str  # "threshold" | "max-paths"

    @property
    def num_paths(self) -> int:
        return len(self.paths)


class GainUpdate(NamedTuple):
    gains: np.ndarray
    ill_conditioned: bool


def stopping_threshold(cfg: SystemConfig) -> float:
    """Residual-correlation threshold realizing the configured false-alarm rate.

    Solves P{max of L*M*N_b i.i.d. exponential noise scores > eps} = P_fa.
    """
    p_fa = cfg.false_alarm_rate
    if not 0.0 < p_fa < 1.0:
        raise ValueError(f"false_alarm_rate must lie in (0, 1), got {p_fa}")
    n = cfg.observation_length
    return -cfg.noise_variance * math.log(1.0 - (1.0 - p_fa) ** (1.0 / n))


def correlation_score(atom_vec: np.ndarray, residual: np.ndarray) -> float:
    """Normalized matched-filter energy |f^H y|^2 / ||f||^2."""
    norm_sq = float(np.vdot(atom_vec, atom_vec).real)
    if norm_sq <= 0.0:
        raise ValueError("atom has zero norm")
    return float(abs(np.vdot(atom_vec, residual)) ** 2 / norm_sq)


def gain_ls_single(residual: np.ndarray, atom_vec: np.ndarray) -> complex:
    """Least-squares gain of a single atom against the residual."""
    norm_sq = float(np.vdot(atom_vec, atom_vec).real)
    if norm_sq <= 0.0:
        raise ValueError("atom has zero norm")
    return complex(np.vdot(atom_vec, residual) / norm_sq)


class GridDictionary:
    """Correlation scorer for one (model, grid) pair.

    The delay-only dependence of the phase ramp lets the score factor into a
    per-angle-pair correlation against each pilot subcarrier followed by a
    weighted transform over the delay grid, so no full atom is ever built.
    """

    def __init__(self, model: PilotModel, grid: GridSpec):
        self.model = model
        self.grid = grid
        cfg = model.cfg
        n_phi, n_psi, n_tau = grid.shape

        phi_mesh, psi_mesh = np.meshgrid(grid.phi_points, grid.psi_points, indexing="ij")
        phis = phi_mesh.reshape(-1)
        psis = psi_mesh.reshape(-1)
        i, j = model._i, model._j
        sin_phi = np.sin(phis)[:, None]
        w = model._scale * (
            i[None, :] * sin_phi * np.sin(psis)[:, None]
            + j[None, :] * sin_phi * np.cos(psis)[:, None]
        )  # (n_pairs, N_r)

        n_pairs = n_phi * n_psi
        L = cfg.num_pilot_subcarriers
        m_sym = cfg.num_pilot_symbols
        self.angle_weights = np.empty((L, n_pairs, m_sym), dtype=complex)
        for kp in range(L):
            a_ris = np.exp(-1j * 2 * math.pi * model.squint[kp] * w)
            self.angle_weights[kp] = a_ris @ model.train[kp].T
        self.norms_sq = cfg.num_bs_antennas * np.sum(
            np.abs(self.angle_weights) ** 2, axis=(0, 2)
        )  # (n_pairs,)
        # conjugate delay ramp: e^{+j 2 pi f_k tau}
        self.delay_transform = np.exp(
            1j * 2 * math.pi * np.outer(model.freqs, grid.tau_points)
        )  # (L, n_tau)

    def scores(self, residual: np.ndarray) -> np.ndarray:
        """Correlation score at every (phi, psi, tau) grid triple."""
        cfg = self.model.cfg
        cube = residual.reshape(
            cfg.num_pilot_subcarriers, cfg.num_pilot_symbols, cfg.num_bs_antennas
        )
        bs_proj = np.einsum("lmb,lb->lm", cube, np.conj(self.model.a_bs))
        corr = np.einsum("lpm,lm->pl", np.conj(self.angle_weights), bs_proj)
        g = corr @ self.delay_transform  # (n_pairs, n_tau)
        denom = np.maximum(self.norms_sq, np.finfo(float).tiny)
        return (np.abs(g) ** 2 / denom[:, None]).reshape(self.grid.shape)


def greedy_search(
    residual: np.ndarray,
    grid: GridSpec,
    profile: RisTrainingProfile,
    geometry: LinkGeometry,
    cfg: SystemConfig,
    dictionary: GridDictionary | None = None,
) -> tuple[float, float, float, float]:
    """Argmax of the correlation score over the full grid.

    Ties break to the lowest flat (phi, psi, tau) index, which keeps repeated
    runs deterministic.
    """
    if dictionary is None:
        dictionary = GridDictionary(PilotModel(cfg, geometry, profile), grid)
    scores = dictionary.scores(residual)
    flat = int(np.argmax(scores))
    i_phi, i_psi, i_tau = np.unravel_index(flat, scores.shape)
    return (
        float(grid.phi_points[i_phi]),
        float(grid.psi_points[i_psi]),
        float(grid.tau_points[i_tau]),
        float(scores[i_phi, i_psi, i_tau]),
    )


def _clamp_angle(x: float) -> float:
    return float(min(max(x, -HALF_PI), ANGLE_MAX))


def _wrap_delay(tau: float, cfg: SystemConfig) -> float:
    # wrap onto the finest period the pilot comb can actually distinguish,
    # so boundary-crossing Newton steps report the in-window representative
    return float(tau % cfg.unambiguous_delay_s)


def precise_search(
    residual: np.ndarray,
    coarse: tuple[float, float, float],
    grid: GridSpec,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> tuple[float, float, float]:
    """Re-maximize the score on a +-1-coarse-cell box at the precise rates.

    The center point is always a candidate, so the result never scores worse
    than the coarse maximizer.
    """
    if model is None:
        model = PilotModel(cfg, geometry, profile)
    cfg = model.cfg

    axes = []
    lows = (-HALF_PI, -HALF_PI, 0.0)
    highs = (ANGLE_MAX, ANGLE_MAX, cfg.max_delay_s)
    coarse_steps = grid.spacings(cfg)
    for dim in range(3):
        coarse_step = coarse_steps[dim]
        ratio = cfg.precise_grid_rates[dim] / cfg.coarse_grid_rates[dim]
        fine_step = coarse_step / ratio
        q = int(math.ceil(coarse_step / fine_step - 1e-9))
        vals = coarse[dim] + fine_step * np.arange(-q, q + 1)
        axes.append(np.clip(vals, lows[dim], highs[dim]))

    phi_m, psi_m, tau_m = np.meshgrid(*axes, indexing="ij")
    cands = model.atoms(phi_m.reshape(-1), psi_m.reshape(-1), tau_m.reshape(-1))
    norms = np.maximum(np.sum(np.abs(cands) ** 2, axis=1), np.finfo(float).tiny)
    scores = np.abs(cands.conj() @ residual) ** 2 / norms
    best = int(np.argmax(scores))
    return (
        float(phi_m.reshape(-1)[best]),
        float(psi_m.reshape(-1)[best]),
        float(tau_m.reshape(-1)[best]),
    )


def newton_objective(
    gain: complex,
    phi: float,
    psi: float,
    tau: float,
    residual: np.ndarray,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> float:
    """Residual-power reduction achieved by the component (gain, phi, psi, tau).

    Equals ||y_e||^2 - ||y_e - g f||^2, so maximizing it minimizes the new
    residual power.
    """
    if model is None:
        model = PilotModel(cfg, geometry, profile)
    f = model.atom(phi, psi, tau)
    return _objective_for_atom(gain, f, residual)


def _objective_for_atom(gain: complex, atom_vec: np.ndarray, residual: np.ndarray) -> float:
    corr = np.vdot(residual, atom_vec)
    norm_sq = np.vdot(atom_vec, atom_vec).real
    return float(2.0 * (gain * corr).real - abs(gain) ** 2 * norm_sq)


def newton_derivatives(
    gain: complex,
    phi: float,
    psi: float,
    tau: float,
    residual: np.ndarray,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian of the refinement objective w.r.t. (phi, psi, tau)."""
    if model is None:
        model = PilotModel(cfg, geometry, profile)
    jet = model.atom_jet(phi, psi, tau)
    r = residual - gain * jet.value
    grad = np.array(
        [2.0 * (gain * np.vdot(r, jet.grad[:, a])).real for a in range(3)]
    )
    gain_sq = abs(gain) ** 2
    hess = np.empty((3, 3))
    for a in range(3):
        for b in range(a, 3):
            val = 2.0 * (
                gain * np.vdot(r, jet.hess[a, b])
                - gain_sq * np.vdot(jet.grad[:, b], jet.grad[:, a])
            ).real
            hess[a, b] = hess[b, a] = val
    return grad, hess


def _concentrated_derivatives(
    jet, residual: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Score |f^H y|^2/||f||^2 with its gradient and Hessian from an atom jet.

    This is the refinement objective with the least-squares gain substituted
    in, so ascending it is equivalent to alternating a Newton step with a
    gain re-fit, but without the slow zigzag the alternation suffers when
    the atom norm varies with the angles.
    """
    f = jet.value
    corr = np.vdot(f, residual)
    corr_d = np.array([np.vdot(jet.grad[:, a], residual) for a in range(3)])
    norm = float(np.vdot(f, f).real)
    norm_d = np.array([2.0 * np.vdot(f, jet.grad[:, a]).real for a in range(3)])

    power = abs(corr) ** 2
    power_d = 2.0 * np.real(np.conj(corr) * corr_d)
    score = power / norm
    grad = power_d / norm - power * norm_d / norm**2

    hess = np.empty((3, 3))
    for a in range(3):
        for b in range(a, 3):
            corr_ab = np.vdot(jet.hess[a, b], residual)
            power_ab = 2.0 * np.real(np.conj(corr_d[b]) * corr_d[a] + np.conj(corr) * corr_ab)
            norm_ab = 2.0 * np.real(
                np.vdot(jet.grad[:, b], jet.grad[:, a]) + np.vdot(f, jet.hess[a, b])
            )
            val = (
                power_ab / norm
                - (power_d[a] * norm_d[b] + power_d[b] * norm_d[a]) / norm**2
                - power * norm_ab / norm**2
                + 2.0 * power * norm_d[a] * norm_d[b] / norm**3
            )
            hess[a, b] = hess[b, a] = val
    return score, grad, hess


def single_refine(
    estimate: PathEstimate,
    residual: np.ndarray,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
    iters: int | None = None,
) -> PathEstimate:
    """Safeguarded Newton refinement of one path against its residual.

    Iterates in (direction cosines, delay) coordinates, where the array
    response is smooth even at zero elevation (in raw angles the azimuth
    becomes unobservable there and Newton stalls on the chart boundary).
    Steps ascend the gain-concentrated correlation score; a step is taken
    only when the (delay-rescaled) Hessian is negative definite and the
    score strictly increases, so the residual-reduction objective is
    non-decreasing over the call. The gain is re-fit by least squares after
    every accepted step.
    """
    if model is None:
        model = PilotModel(cfg, geometry, profile)
    cfg = model.cfg
    n_iters = cfg.single_refine_iters if iters is None else iters

    gain = complex(estimate.gain)
    u, v = angles_to_uv(estimate.elevation, estimate.azimuth)
    params = np.array([u, v, estimate.delay])
    # Newton is affine-invariant, so test concavity and solve with the delay
    # expressed in symbol units; raw seconds make the Hessian conditioning
    # meaningless (curvature scales differ by ~(2 pi W)^2).
    scale = np.array([1.0, 1.0, 1.0 / cfg.bandwidth_hz])
    accepted = 0
    for _ in range(n_iters):
        score, grad, hess = _concentrated_derivatives(
            model.atom_jet_uv(*params), residual
        )
        hess_scaled = hess * np.outer(scale, scale)
        if np.max(np.linalg.eigvalsh(hess_scaled)) >= 0.0:
            continue  # not locally concave; skip this iteration
        try:
            step = scale * np.linalg.solve(hess_scaled, scale * grad)
        except np.linalg.LinAlgError:
            continue
        cand = params - step
        radius = math.hypot(cand[0], cand[1])
        if radius > UV_RADIUS_MAX:
            cand[:2] *= UV_RADIUS_MAX / radius
        cand[2] = _wrap_delay(cand[2], cfg)
        cand_atom = model.atom_uv(*cand)
        # demand an improvement beyond float noise, so converged iterates
        # are left untouched instead of jittering in the last ulp
        if correlation_score(cand_atom, residual) <= score * (1.0 + 1e-12):
            continue
        params = cand
        gain = gain_ls_single(residual, cand_atom)
        accepted += 1
    if accepted == 0:
        return estimate  # avoid angle round-trip jitter on a no-op call
    phi, psi = uv_to_angles(params[0], params[1])
    return PathEstimate(
        gain=gain,
        elevation=_clamp_angle(phi),
        azimuth=_clamp_angle(psi),
        delay=float(params[2]),
        refine_steps=estimate.refine_steps + accepted,
    )


def _cyclic_pass(
    paths: list[PathEstimate],
    y: np.ndarray,
    model: PilotModel,
    rounds: int,
    iters: int,
) -> list[PathEstimate]:
    """Cyclic re-refinement: each path refined against y minus the others."""
    if not paths or rounds == 0 or iters == 0:
        return list(paths)
    paths = list(paths)
    atoms = [model.atom(p.elevation, p.azimuth, p.delay) for p in paths]
    residual = y - sum(p.gain * a for p, a in zip(paths, atoms))
    for _ in range(rounds):
        for idx, path in enumerate(paths):
            local = residual + path.gain * atoms[idx]
            refined = single_refine(path, local, model=model, iters=iters)
            paths[idx] = refined
            atoms[idx] = model.atom(refined.elevation, refined.azimuth, refined.delay)
            residual = local - refined.gain * atoms[idx]
    return paths


def cyclic_refine(
    estimates: EstimateSet,
    y: np.ndarray | PilotObservation,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> EstimateSet:
    """Run the configured number of cyclic refinement rounds over all paths."""
    if model is None:
        model = PilotModel(cfg, geometry, profile)
    cfg = model.cfg
    y_vec = y.y if isinstance(y, PilotObservation) else np.asarray(y, dtype=complex)
    paths = _cyclic_pass(
        list(estimates.paths),
        y_vec,
        model,
        cfg.cyclic_refine_rounds,
        cfg.single_refine_iters,
    )
    residual = y_vec - sum(
        p.gain * model.atom(p.elevation, p.azimuth, p.delay) for p in paths
    )
    return dataclasses.replace(
        estimates,
        paths=tuple(paths),
        residual_power=float(np.vdot(residual, residual).real),
    )


def _atom_matrix(paths: Sequence[PathEstimate], model: PilotModel) -> np.ndarray:
    return np.column_stack(
        [model.atom(p.elevation, p.azimuth, p.delay) for p in paths]
    )


def _ls_gains(atom_mat: np.ndarray, y: np.ndarray) -> GainUpdate:
    gram = atom_mat.conj().T @ atom_mat
    rhs = atom_mat.conj().T @ y
    ill = bool(np.linalg.cond(gram) > ILL_CONDITIONED)
    if ill:
        # ridge fallback keeps the solve defined for near-collinear atoms
        ridge = 1e-12 * (np.trace(gram).real / gram.shape[0])
        gram = gram + ridge * np.eye(gram.shape[0])
    return GainUpdate(gains=np.linalg.solve(gram, rhs), ill_conditioned=ill)


def update_gains_ls(
    estimates: EstimateSet | Sequence[PathEstimate],
    y: np.ndarray | PilotObservation,
    profile: RisTrainingProfile | None = None,
    geometry: LinkGeometry | None = None,
    cfg: SystemConfig | None = None,
    model: PilotModel | None = None,
) -> GainUpdate:
    """Joint least-squares gains for all detected paths against the raw y."""
    if model is None:
        model = PilotModel(cfg, geometry, profile)
    paths = estimates.paths if isinstance(estimates, EstimateSet) else tuple(estimates)
    if not paths:
        raise ValueError("no paths to update")
    y_vec = y.y if isinstance(y, PilotObservation) else np.asarray(y, dtype=complex)
    return _ls_gains(_atom_matrix(paths, model), y_vec)


def run_nomp(
    y: np.ndarray | PilotObservation,
    profile: RisTrainingProfile,
    geometry: LinkGeometry,
    cfg: SystemConfig,
    max_paths: int | None = None,
) -> EstimateSet:
    """Full NOMP recovery loop with false-alarm-calibrated stopping.

    Detection stops once the best coarse-grid correlation drops below the
    threshold, or once ``max_paths`` (default ``cfg.max_paths``) components
    have been extracted.
    """
    y_vec = y.y if isinstance(y, PilotObservation) else np.asarray(y, dtype=complex)
    if y_vec.shape != (cfg.observation_length,):
        raise ValueError(
            f"observation has shape {y_vec.shape}, expected ({cfg.observation_length},)"
        )
    model = PilotModel(cfg, geometry, profile)
    grid = GridSpec.coarse(cfg)
    dictionary = GridDictionary(model, grid)
    threshold = stopping_threshold(cfg)
    cap = cfg.max_paths if max_paths is None else max_paths

    paths: list[PathEstimate] = []
    residual = y_vec.copy()
    iterations = 0
    stop_reason = "threshold"
    while True:
        phi, psi, tau, score = greedy_search(
            residual, grid, profile, geometry, cfg, dictionary=dictionary
        )
        if score < threshold:
            stop_reason = "threshold"
            break
        if len(paths) >= cap:
            stop_reason = "max-paths"
            break
        iterations += 1

        phi, psi, tau = precise_search(residual, (phi, psi, tau), grid, model=model)
        first_atom = model.atom(phi, psi, tau)
        estimate = PathEstimate(
            gain=gain_ls_single(residual, first_atom),
            elevation=phi,
            azimuth=psi,
            delay=tau,
        )
        estimate = single_refine(estimate, residual, model=model)
        paths.append(estimate)
        paths = _cyclic_pass(
            paths, y_vec, model, cfg.cyclic_refine_rounds, cfg.single_refine_iters
        )

        atom_mat = _atom_matrix(paths, model)
        update = _ls_gains(atom_mat, y_vec)
        paths = [
            dataclasses.replace(p, gain=complex(g)) for p, g in zip(paths, update.gains)
        ]
        residual = y_vec - atom_mat @ update.gains

    return EstimateSet(
        paths=tuple(paths),
        residual_power=float(np.vdot(residual, residual).real),
        iterations_used=iterations,
        stop_reason=stop_reason,
    )


def run_omp_baseline(
    y: np.ndarray | PilotObservation,
    profile: RisTrainingProfile,
    geometry: LinkGeometry,
    cfg: SystemConfig,
    max_paths: int | None = None,
) -> EstimateSet:
    """Grid-limited baseline: the NOMP pipeline with Newton stages disabled."""
    baseline_cfg = cfg.replace(single_refine_iters=0, cyclic_refine_rounds=0)
    return run_nomp(y, profile, geometry, baseline_cfg, max_paths=max_paths)
