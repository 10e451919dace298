"""Shared fixtures and independent oracle helpers for the test suite."""

import math

import numpy as np
import pytest

from risce.config import SystemConfig, equispaced_pilots
from risce.signal_model import (
    ChannelRealization,
    LinkGeometry,
    PathParams,
    bs_steering,
    ris_steering,
    training_matrix,
)


@pytest.fixture
def tiny_cfg():
    """Smallest nontrivial system: N=16 observations, 512-point coarse grid."""
    return SystemConfig(
        num_subcarriers=16,
        pilot_subcarriers=(0, 4, 8, 12),
        num_pilot_symbols=2,
        num_bs_antennas=2,
        ris_dims=(2, 2),
        noise_variance=1.0,
        max_delay_s=4 / 600e6,  # pilot stride 4 -> unambiguous delay window
    )


@pytest.fixture
def mid_cfg():
    """Mid-size system for refinement-quality tests: smooth score landscape."""
    return SystemConfig(
        num_subcarriers=32,
        pilot_subcarriers=(0, 8, 16, 24),
        num_pilot_symbols=6,
        num_bs_antennas=4,
        ris_dims=(4, 4),
        noise_variance=1e-4,
        max_delay_s=4 / 600e6,
    )


@pytest.fixture
def desk_cfg():
    """Desk-scale system matching the benchmark presets."""
    return SystemConfig(
        num_subcarriers=64,
        pilot_subcarriers=equispaced_pilots(64, 8),
        num_pilot_symbols=8,
        num_bs_antennas=8,
        ris_dims=(4, 4),
        noise_variance=1.0,
        false_alarm_rate=1e-2,
        max_delay_s=8 / 600e6,
    )


@pytest.fixture
def geometry():
    return LinkGeometry(bs_aoa_rad=0.4, ris_elev_aod_rad=-0.3, ris_azim_aod_rad=0.8)


def naive_atom(phi, psi, tau, profile, geometry, cfg):
    """Triple-loop reference assembly of one atom, entry by entry."""
    L = cfg.num_pilot_subcarriers
    M = cfg.num_pilot_symbols
    n_b = cfg.num_bs_antennas
    out = np.zeros(L * M * n_b, dtype=complex)
    for kp, k in enumerate(cfg.pilot_subcarriers):
        f = k * cfg.subcarrier_spacing_hz
        a_ris = ris_steering(f, phi, psi, cfg)
        train = training_matrix(k, profile, geometry, cfg)
        a_bs = bs_steering(f, geometry.bs_aoa_rad, cfg)
        for m in range(M):
            u_m = train[m] @ a_ris
            for b in range(n_b):
                out[(kp * M + m) * n_b + b] = (
                    u_m * a_bs[b] * np.exp(-2j * np.pi * f * tau)
                )
    return out


def make_channel(geometry, *paths):
    """Channel from (gain, phi, psi, tau) tuples plus a fixed geometry."""
    return ChannelRealization(
        paths=tuple(
            PathParams(
                gain=complex(g),
                elevation_aoa_rad=float(phi),
                azimuth_aoa_rad=float(psi),
                delay_s=float(tau),
            )
            for g, phi, psi, tau in paths
        ),
        bs_aoa_rad=geometry.bs_aoa_rad,
        ris_elev_aod_rad=geometry.ris_elev_aod_rad,
        ris_azim_aod_rad=geometry.ris_azim_aod_rad,
    )


def complex_noise(rng, n, variance=1.0):
    return math.sqrt(variance / 2.0) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
