"""Wideband pilot-signal model for the user -> RIS -> BS cascaded channel.

The RIS is an N_x-by-N_y planar array indexed r = i*N_y + j (i horizontal,
j vertical); the BS is a uniform linear array. Steering vectors carry the
spatial-wideband factor (1 + f/f_c), so the array response and the per-path
delay rotation both change across OFDM subcarriers. One pilot "atom" is the
length L*M*N_b response of a unit-gain path, stacked subcarrier-major with
flat index (k_pos*M + m)*N_b + b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .config import SystemConfig

TWO_PI = 2.0 * math.pi


def as_rng(rng: int | np.random.Generator | None, default_seed: int = 0) -> np.random.Generator:
    """Coerce an int seed / Generator / None into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(default_seed if rng is None else rng)


class LinkGeometry(NamedTuple):
    """Fixed LoS geometry of the RIS-BS link: AoA at BS, AoD at RIS."""

    bs_aoa_rad: float
    ris_elev_aod_rad: float
    ris_azim_aod_rad: float


def angles_to_uv(phi: float, psi: float) -> tuple[float, float]:
    """Direction cosines (u, v) = (sin(phi)sin(psi), sin(phi)cos(psi)).

    The RIS response depends on the AoA pair only through (u, v), so this is
    the chart where the estimation objective is smooth, including at phi=0
    where the azimuth becomes unobservable.
    """
    sp = math.sin(phi)
    return sp * math.sin(psi), sp * math.cos(psi)


def uv_to_angles(u: float, v: float) -> tuple[float, float]:
    """Inverse of :func:`angles_to_uv` onto phi in [-pi/2, pi/2], psi in [-pi/2, pi/2).

    The radius hypot(u, v) is clamped into [0, 1]. The v > 0 half-disk maps
    to positive elevations, v < 0 to negative ones; on the v = 0 axis the
    azimuth is pinned to -pi/2.
    """
    r = math.hypot(u, v)
    if r == 0.0:
        return 0.0, 0.0
    if r > 1.0:
        u, v = u / r, v / r
        r = 1.0
    if v > 0.0:
        return math.asin(r), math.atan2(u, v)
    if v < 0.0:
        return -math.asin(r), math.atan2(-u, -v)
    return -math.asin(u), -math.pi / 2


@dataclass(frozen=True)
class PathParams:
    """One propagation path of the cascaded channel."""

    gain: complex
    elevation_aoa_rad: float
    azimuth_aoa_rad: float
    delay_s: float

    def __post_init__(self):
        if not -math.pi / 2 <= self.elevation_aoa_rad < math.pi / 2:
            raise ValueError(
                f"elevation_aoa_rad must lie in [-pi/2, pi/2), got {self.elevation_aoa_rad}"
            )
        if not -math.pi / 2 <= self.azimuth_aoa_rad < math.pi / 2:
            raise ValueError(
                f"azimuth_aoa_rad must lie in [-pi/2, pi/2), got {self.azimuth_aoa_rad}"
            )
        if self.delay_s < 0:
            raise ValueError(f"delay_s must be >= 0, got {self.delay_s}")


@dataclass(frozen=True)
class ChannelRealization:
    """Ground-truth path set plus the fixed RIS-BS link geometry."""

    paths: tuple[PathParams, ...]
    bs_aoa_rad: float
    ris_elev_aod_rad: float
    ris_azim_aod_rad: float

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if len(self.paths) < 1:
            raise ValueError("ChannelRealization needs at least one path")

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def geometry(self) -> LinkGeometry:
        return LinkGeometry(self.bs_aoa_rad, self.ris_elev_aod_rad, self.ris_azim_aod_rad)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)


@dataclass(frozen=True)
class RisTrainingProfile:
    """Per-symbol RIS phase shifts; row m is the diagonal phase of symbol m."""

    phases: np.ndarray  # (M, N_r), entries in [0, 2*pi)

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        if phases.ndim != 2:
            raise ValueError(f"phases must be a 2-D matrix, got shape {phases.shape}")
        if np.any(phases < 0.0) or np.any(phases >= TWO_PI):
            raise ValueError("phases must lie in [0, 2*pi)")
        phases = phases.copy()
        phases.flags.writeable = False
        object.__setattr__(self, "phases", phases)

    @property
    def num_symbols(self) -> int:
        return self.phases.shape[0]

    @property
    def num_elements(self) -> int:
        return self.phases.shape[1]


@dataclass(frozen=True)
class PilotObservation:
    """Stacked noisy pilot vector with its layout metadata.

    Flat index convention: (k_pos*M + m)*N_b + b, where k_pos indexes the
    pilot subcarriers in their configured order.
    """

    y: np.ndarray
    pilot_subcarriers: tuple[int, ...]
    num_pilot_symbols: int
    num_bs_antennas: int
    noise_variance: float

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex).copy()
        expected = len(self.pilot_subcarriers) * self.num_pilot_symbols * self.num_bs_antennas
        if y.shape != (expected,):
            raise ValueError(
                f"observation length {y.shape} does not match layout "
                f"L*M*N_b = {expected}"
            )
        y.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "pilot_subcarriers", tuple(self.pilot_subcarriers))

    def as_cube(self) -> np.ndarray:
        """View of y reshaped to (L, M, N_b)."""
        return self.y.reshape(
            len(self.pilot_subcarriers), self.num_pilot_symbols, self.num_bs_antennas
        )


# -- steering vectors ------------------------------------------------------


def ris_element_indices(cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical element indices (i, j) for r = i*N_y + j."""
    _, ny = cfg.ris_dims
    r = np.arange(cfg.num_ris_elements)
    j = r % ny
    i = (r - j) // ny
    return i, j


def ris_angles(phi: float, psi: float, cfg: SystemConfig) -> np.ndarray:
    """Normalized angle of every RIS element for AoA (phi, psi), in carrier wavelengths."""
    i, j = ris_element_indices(cfg)
    scale = cfg.element_spacing_m / cfg.wavelength_m
    return scale * (i * math.sin(phi) * math.sin(psi) + j * math.sin(phi) * math.cos(psi))


def normalized_ris_angle(r: int, phi: float, psi: float, cfg: SystemConfig) -> float:
    """Normalized angle of element r; raises IndexError for r outside [0, N_r)."""
    if not 0 <= r < cfg.num_ris_elements:
        raise IndexError(f"RIS element index {r} outside [0, {cfg.num_ris_elements})")
    return float(ris_angles(phi, psi, cfg)[r])


def ris_steering(f: float, phi: float, psi: float, cfg: SystemConfig) -> np.ndarray:
    """RIS steering vector at baseband offset f with the beam-squint factor."""
    squint = 1.0 + f / cfg.carrier_freq_hz
    return np.exp(-1j * TWO_PI * squint * ris_angles(phi, psi, cfg))


def bs_steering(f: float, theta: float, cfg: SystemConfig) -> np.ndarray:
    """BS ULA steering vector at baseband offset f."""
    squint = 1.0 + f / cfg.carrier_freq_hz
    b = np.arange(cfg.num_bs_antennas)
    phase = squint * b * cfg.element_spacing_m * math.sin(theta) / cfg.wavelength_m
    return np.exp(-1j * TWO_PI * phase)


def training_matrix(
    k: int,
    profile: RisTrainingProfile,
    geometry: LinkGeometry,
    cfg: SystemConfig,
) -> np.ndarray:
    """M x N_r training matrix at pilot subcarrier k.

    Row m is the RIS-AoD steering row (at frequency k*delta_f) phase-shifted
    elementwise by the m-th RIS training configuration.
    """
    if k not in cfg.pilot_subcarriers:
        raise ValueError(f"subcarrier {k} is not in the pilot set {cfg.pilot_subcarriers}")
    a_aod = ris_steering(
        k * cfg.subcarrier_spacing_hz, geometry.ris_elev_aod_rad, geometry.ris_azim_aod_rad, cfg
    )
    return a_aod[None, :] * np.exp(1j * profile.phases)


# -- precomputed pilot model ----------------------------------------------


class AtomJet(NamedTuple):
    """Atom value with first/second partials w.r.t. (phi, psi, tau)."""

    value: np.ndarray  # (N,)
    grad: np.ndarray  # (N, 3)
    hess: np.ndarray  # (3, 3, N), symmetric in the first two axes


class PilotModel:
    """Per-(config, geometry, profile) tables for fast atom evaluation.

    Precomputes, for every pilot subcarrier, the squinted BS steering vector
    and the training matrix, so that evaluating an atom for a candidate
    (phi, psi, tau) costs one RIS steering build plus L small matvecs.
    """

    def __init__(
        self,
        cfg: SystemConfig,
        geometry: LinkGeometry,
        profile: RisTrainingProfile,
    ):
        if profile.num_symbols != cfg.num_pilot_symbols:
            raise ValueError(
                f"profile has {profile.num_symbols} symbol rows, config expects "
                f"{cfg.num_pilot_symbols}"
            )
        if profile.num_elements != cfg.num_ris_elements:
            raise ValueError(
                f"profile has {profile.num_elements} element columns, config expects "
                f"{cfg.num_ris_elements}"
            )
        self.cfg = cfg
        self.geometry = geometry
        self.profile = profile

        pilots = np.asarray(cfg.pilot_subcarriers)
        self.freqs = pilots * cfg.subcarrier_spacing_hz  # (L,)
        self.squint = 1.0 + self.freqs / cfg.carrier_freq_hz  # (L,)

        self.a_bs = np.stack(
            [bs_steering(f, geometry.bs_aoa_rad, cfg) for f in self.freqs]
        )  # (L, N_b)
        aod = np.stack(
            [
                ris_steering(f, geometry.ris_elev_aod_rad, geometry.ris_azim_aod_rad, cfg)
                for f in self.freqs
            ]
        )  # (L, N_r)
        self.train = aod[:, None, :] * np.exp(1j * profile.phases)[None, :, :]  # (L, M, N_r)

        i, j = ris_element_indices(cfg)
        self._i = i.astype(float)
        self._j = j.astype(float)
        self._scale = cfg.element_spacing_m / cfg.wavelength_m

    @property
    def observation_length(self) -> int:
        return self.cfg.observation_length

    # angle profiles and their derivatives over the RIS aperture
    def _angle_profile(self, phi: float, psi: float):
        sp, cp = math.sin(phi), math.cos(phi)
        ss, cs = math.sin(psi), math.cos(psi)
        w = self._scale * (self._i * sp * ss + self._j * sp * cs)
        w_phi = self._scale * (self._i * cp * ss + self._j * cp * cs)
        w_psi = self._scale * (self._i * sp * cs - self._j * sp * ss)
        w_phipsi = self._scale * (self._i * cp * cs - self._j * cp * ss)
        return w, w_phi, w_psi, w_phipsi

    def _blocks_to_vector(self, per_k: np.ndarray) -> np.ndarray:
        """(L, M) per-subcarrier RIS responses -> stacked L*M*N_b atom."""
        return (per_k[:, :, None] * self.a_bs[:, None, :]).reshape(-1)

    def atom(self, phi: float, psi: float, tau: float) -> np.ndarray:
        """Unit-gain path response stacked per the observation layout."""
        w = self._angle_profile(phi, psi)[0]
        a_ris = np.exp(-1j * TWO_PI * self.squint[:, None] * w[None, :])  # (L, N_r)
        u = np.einsum("lmr,lr->lm", self.train, a_ris)
        delay = np.exp(-1j * TWO_PI * self.freqs * tau)
        return self._blocks_to_vector(u * delay[:, None])

    def atoms(self, phis, psis, taus) -> np.ndarray:
        """Batch of atoms, one row per (phi, psi, tau) triple."""
        phis = np.asarray(phis, dtype=float)
        psis = np.asarray(psis, dtype=float)
        taus = np.asarray(taus, dtype=float)
        sin_phi = np.sin(phis)[:, None]
        w = self._scale * (
            self._i[None, :] * sin_phi * np.sin(psis)[:, None]
            + self._j[None, :] * sin_phi * np.cos(psis)[:, None]
        )  # (n, N_r)
        a_ris = np.exp(-1j * TWO_PI * self.squint[None, :, None] * w[:, None, :])
        u = np.einsum("lmr,nlr->nlm", self.train, a_ris)
        delay = np.exp(-1j * TWO_PI * self.freqs[None, :] * taus[:, None])  # (n, L)
        blocks = u * delay[:, :, None]
        out = blocks[:, :, :, None] * self.a_bs[None, :, None, :]
        return out.reshape(len(phis), -1)

    def atom_norm_sq(self, phi: float, psi: float) -> float:
        """Squared atom norm; independent of the delay."""
        w = self._angle_profile(phi, psi)[0]
        a_ris = np.exp(-1j * TWO_PI * self.squint[:, None] * w[None, :])
        u = np.einsum("lmr,lr->lm", self.train, a_ris)
        return self.cfg.num_bs_antennas * float(np.sum(np.abs(u) ** 2))

    def atom_uv(self, u: float, v: float, tau: float) -> np.ndarray:
        """Atom evaluated in direction-cosine coordinates."""
        w = self._scale * (self._i * u + self._j * v)
        a_ris = np.exp(-1j * TWO_PI * self.squint[:, None] * w[None, :])
        uu = np.einsum("lmr,lr->lm", self.train, a_ris)
        delay = np.exp(-1j * TWO_PI * self.freqs * tau)
        return self._blocks_to_vector(uu * delay[:, None])

    def atom_jet_uv(self, u: float, v: float, tau: float) -> AtomJet:
        """Atom with partials in (u, v, tau); smooth everywhere on the disk.

        In direction cosines the per-element phase is linear, so the second
        derivatives carry no curvature correction terms.
        """
        w = self._scale * (self._i * u + self._j * v)
        alpha = -1j * TWO_PI * self.squint[:, None]  # (L, 1)
        a_ris = np.exp(alpha * w[None, :])
        d_u = alpha * (self._scale * self._i)[None, :]
        d_v = alpha * (self._scale * self._j)[None, :]
        rows = {
            "v": a_ris,
            "p": d_u * a_ris,
            "s": d_v * a_ris,
            "pp": d_u * d_u * a_ris,
            "ps": d_u * d_v * a_ris,
            "ss": d_v * d_v * a_ris,
        }
        return self._assemble_jet(rows, tau)

    def _assemble_jet(self, rows: dict, tau: float) -> AtomJet:
        u = {key: np.einsum("lmr,lr->lm", self.train, mat) for key, mat in rows.items()}
        delay = np.exp(-1j * TWO_PI * self.freqs * tau)[:, None]
        beta = (-1j * TWO_PI * self.freqs)[:, None]

        vec = self._blocks_to_vector
        f = vec(u["v"] * delay)
        grad = np.stack(
            [vec(u["p"] * delay), vec(u["s"] * delay), vec(u["v"] * beta * delay)], axis=1
        )
        n = f.shape[0]
        hess = np.empty((3, 3, n), dtype=complex)
        hess[0, 0] = vec(u["pp"] * delay)
        hess[0, 1] = hess[1, 0] = vec(u["ps"] * delay)
        hess[1, 1] = vec(u["ss"] * delay)
        hess[0, 2] = hess[2, 0] = vec(u["p"] * beta * delay)
        hess[1, 2] = hess[2, 1] = vec(u["s"] * beta * delay)
        hess[2, 2] = vec(u["v"] * beta * beta * delay)
        return AtomJet(value=f, grad=grad, hess=hess)

    def atom_jet(self, phi: float, psi: float, tau: float) -> AtomJet:
        """Atom plus analytic first and second partials in (phi, psi, tau).

        The angle partials multiply each RIS element by -j*2*pi*squint times
        the derivative of its normalized angle; the delay partial multiplies
        each subcarrier block by -j*2*pi*f_k.
        """
        w, w_phi, w_psi, w_phipsi = self._angle_profile(phi, psi)
        alpha = -1j * TWO_PI * self.squint[:, None]  # (L, 1)
        a_ris = np.exp(alpha * w[None, :])  # (L, N_r)

        d_phi = alpha * w_phi[None, :]
        d_psi = alpha * w_psi[None, :]
        # second angle derivatives of the per-element phase profile:
        # d2w/dphi2 = d2w/dpsi2 = -w, d2w/dphidpsi = w_phipsi
        rows = {
            "v": a_ris,
            "p": d_phi * a_ris,
            "s": d_psi * a_ris,
            "pp": (d_phi * d_phi + alpha * (-w)[None, :]) * a_ris,
            "ps": (d_phi * d_psi + alpha * w_phipsi[None, :]) * a_ris,
            "ss": (d_psi * d_psi + alpha * (-w)[None, :]) * a_ris,
        }
        return self._assemble_jet(rows, tau)


def atom(
    phi: float,
    psi: float,
    tau: float,
    profile: RisTrainingProfile,
    geometry: LinkGeometry,
    cfg: SystemConfig,
) -> np.ndarray:
    """Length L*M*N_b model vector of a unit-gain path at (phi, psi, tau)."""
    return PilotModel(cfg, geometry, profile).atom(phi, psi, tau)


# -- synthesis -------------------------------------------------------------


def sample_training_profile(
    cfg: SystemConfig, rng: int | np.random.Generator | None = None
) -> RisTrainingProfile:
    """Draw i.i.d. uniform RIS training phases on [0, 2*pi)."""
    gen = as_rng(rng, cfg.rng_seed)
    phases = gen.uniform(0.0, TWO_PI, size=(cfg.num_pilot_symbols, cfg.num_ris_elements))
    return RisTrainingProfile(phases=phases)


def sample_channel(
    cfg: SystemConfig,
    num_paths: int,
    rng: int | np.random.Generator | None = None,
) -> ChannelRealization:
    """Draw a channel realization.

    Geometry angles and per-path AoAs are uniform on [-pi/2, pi/2); delays
    are uniform on [0, min(32/W, max_delay)); gains are unit-variance
    circularly-symmetric complex Gaussian.
    """
    if num_paths < 1:
        raise ValueError(f"num_paths must be >= 1, got {num_paths}")
    gen = as_rng(rng, cfg.rng_seed)
    half_pi = math.pi / 2
    theta_b, phi_r, psi_r = gen.uniform(-half_pi, half_pi, size=3)
    elevations = gen.uniform(-half_pi, half_pi, size=num_paths)
    azimuths = gen.uniform(-half_pi, half_pi, size=num_paths)
    delay_hi = min(32.0 / cfg.bandwidth_hz, cfg.max_delay_s)
    delays = gen.uniform(0.0, delay_hi, size=num_paths)
    gains = (
        gen.standard_normal(num_paths) + 1j * gen.standard_normal(num_paths)
    ) / math.sqrt(2.0)
    paths = tuple(
        PathParams(
            gain=complex(gains[p]),
            elevation_aoa_rad=float(elevations[p]),
            azimuth_aoa_rad=float(azimuths[p]),
            delay_s=float(delays[p]),
        )
        for p in range(num_paths)
    )
    return ChannelRealization(
        paths=paths,
        bs_aoa_rad=float(theta_b),
        ris_elev_aod_rad=float(phi_r),
        ris_azim_aod_rad=float(psi_r),
    )


def noiseless_observation(
    channel: ChannelRealization,
    profile: RisTrainingProfile,
    cfg: SystemConfig,
    model: PilotModel | None = None,
) -> np.ndarray:
    """Superposition of all path atoms weighted by their gains."""
    if model is None:
        model = PilotModel(cfg, channel.geometry, profile)
    y = np.zeros(cfg.observation_length, dtype=complex)
    for p in channel.paths:
        y += p.gain * model.atom(p.elevation_aoa_rad, p.azimuth_aoa_rad, p.delay_s)
    return y


def synthesize_pilots(
    channel: ChannelRealization,
    profile: RisTrainingProfile,
    cfg: SystemConfig,
    noise: bool = True,
    rng: int | np.random.Generator | None = None,
) -> PilotObservation:
    """Simulate the stacked pilot observation, optionally noise-free.

    Noise entries are i.i.d. circularly-symmetric complex Gaussian with
    per-entry variance ``cfg.noise_variance``; the draw is deterministic
    given the rng/seed.
    """
    for p in channel.paths:
        if p.delay_s >= cfg.max_delay_s:
            raise ValueError(
                f"path delay {p.delay_s} exceeds the configured window {cfg.max_delay_s}"
            )
    y = noiseless_observation(channel, profile, cfg)
    if noise:
        gen = as_rng(rng, cfg.rng_seed)
        scale = math.sqrt(cfg.noise_variance / 2.0)
        n = cfg.observation_length
        y = y + scale * (gen.standard_normal(n) + 1j * gen.standard_normal(n))
    return PilotObservation(
        y=y,
        pilot_subcarriers=cfg.pilot_subcarriers,
        num_pilot_symbols=cfg.num_pilot_symbols,
        num_bs_antennas=cfg.num_bs_antennas,
        noise_variance=cfg.noise_variance,
    )


def snr_to_noise_variance(
    snr_db: float,
    channel: ChannelRealization,
    profile: RisTrainingProfile,
    cfg: SystemConfig,
) -> float:
    """Per-entry noise variance that realizes the requested SNR.

    The signal power is the mean squared magnitude of the noiseless stacked
    observation, so SNR(dB) = 10*log10(signal_power / noise_variance).
    """
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    y = noiseless_observation(channel, profile, cfg)
    signal_power = float(np.mean(np.abs(y) ** 2))
    if signal_power <= 0.0:
        raise ValueError("channel produces a zero-power observation")
    return signal_power * 10.0 ** (-snr_db / 10.0)
