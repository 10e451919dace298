"""System configuration for the RIS-assisted mmWave MIMO-OFDM pilot model.

A single frozen :class:`SystemConfig` carries every model constant: carrier
and bandwidth, array geometry, pilot allocation, noise level, and the knobs
of the grid-search/Newton estimator. All downstream modules read from it and
never mutate it; use :func:`dataclasses.replace` to derive variants.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

SPEED_OF_LIGHT = 299_792_458.0


def equispaced_pilots(num_subcarriers: int, num_pilots: int) -> tuple[int, ...]:
    """Spread `num_pilots` subcarrier indices evenly over [0, num_subcarriers)."""
    if not 1 <= num_pilots <= num_subcarriers:
        raise ValueError(
            f"num_pilots must lie in [1, {num_subcarriers}], got {num_pilots}"
        )
    return tuple(i * num_subcarriers // num_pilots for i in range(num_pilots))


@dataclass(frozen=True)
class SystemConfig:
    """Immutable bundle of physical and algorithmic constants.

    Defaults reproduce a 28 GHz / 600 MHz mmWave downlink with a 64-antenna
    BS ULA, a 16x16 RIS, 12 equispaced pilot subcarriers out of 512, and
    half-wavelength element spacing.
    """

    carrier_freq_hz: float = 28e9
    bandwidth_hz: float = 600e6
    num_subcarriers: int = 512
    pilot_subcarriers: tuple[int, ...] | None = None  # None -> 12 equispaced
    num_pilot_symbols: int = 16
    num_bs_antennas: int = 64
    ris_dims: tuple[int, int] = (16, 16)
    element_spacing_m: float | None = None  # None -> half carrier wavelength
    noise_variance: float = 1.0
    false_alarm_rate: float = 1e-2
    max_delay_s: float | None = None  # None -> min(32/W, 1/delta_f)
    coarse_grid_rates: tuple[float, float, float] = (2.0, 2.0, 2.0)
    precise_grid_rates: tuple[float, float, float] = (4.0, 4.0, 4.0)
    single_refine_iters: int = 5
    cyclic_refine_rounds: int = 5
    max_paths: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.carrier_freq_hz <= 0:
            raise ValueError(f"carrier_freq_hz must be > 0, got {self.carrier_freq_hz}")
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth_hz must be > 0, got {self.bandwidth_hz}")
        if self.num_subcarriers < 1:
            raise ValueError(f"num_subcarriers must be >= 1, got {self.num_subcarriers}")
        if self.pilot_subcarriers is None:
            object.__setattr__(
                self,
                "pilot_subcarriers",
                equispaced_pilots(self.num_subcarriers, min(12, self.num_subcarriers)),
            )
        else:
            object.__setattr__(
                self, "pilot_subcarriers", tuple(int(k) for k in self.pilot_subcarriers)
            )
        pilots = self.pilot_subcarriers
        if len(pilots) == 0:
            raise ValueError("pilot_subcarriers must be nonempty")
        if len(set(pilots)) != len(pilots):
            raise ValueError(f"pilot_subcarriers must be distinct, got {pilots}")
        if any(k < 0 or k >= self.num_subcarriers for k in pilots):
            raise ValueError(
                f"pilot_subcarriers must lie in [0, {self.num_subcarriers}), got {pilots}"
            )
        if self.num_pilot_symbols < 1:
            raise ValueError(
                f"num_pilot_symbols must be >= 1, got {self.num_pilot_symbols}"
            )
        if self.num_bs_antennas < 1:
            raise ValueError(
                f"num_bs_antennas must be >= 1, got {self.num_bs_antennas}"
            )
        nx, ny = self.ris_dims
        if nx < 1 or ny < 1:
            raise ValueError(f"ris_dims entries must be >= 1, got {self.ris_dims}")
        object.__setattr__(self, "ris_dims", (int(nx), int(ny)))
        if self.element_spacing_m is None:
            object.__setattr__(self, "element_spacing_m", self.wavelength_m / 2.0)
        if self.element_spacing_m <= 0:
            raise ValueError(
                f"element_spacing_m must be > 0, got {self.element_spacing_m}"
            )
        if self.noise_variance <= 0:
            raise ValueError(f"noise_variance must be > 0, got {self.noise_variance}")
        if not 0.0 < self.false_alarm_rate < 1.0:
            raise ValueError(
                f"false_alarm_rate must lie in (0, 1), got {self.false_alarm_rate}"
            )
        if self.max_delay_s is None:
            object.__setattr__(
                self,
                "max_delay_s",
                min(32.0 / self.bandwidth_hz, 1.0 / self.subcarrier_spacing_hz),
            )
        if not 0.0 < self.max_delay_s <= 1.0 / self.subcarrier_spacing_hz + 1e-18:
            raise ValueError(
                f"max_delay_s must lie in (0, 1/subcarrier_spacing], got {self.max_delay_s}"
            )
        for name in ("coarse_grid_rates", "precise_grid_rates"):
            rates = getattr(self, name)
            if len(rates) != 3 or any(r <= 0 for r in rates):
                raise ValueError(f"{name} must be three positive rates, got {rates}")
            object.__setattr__(self, name, tuple(float(r) for r in rates))
        if self.single_refine_iters < 0:
            raise ValueError(
                f"single_refine_iters must be >= 0, got {self.single_refine_iters}"
            )
        if self.cyclic_refine_rounds < 0:
            raise ValueError(
                f"cyclic_refine_rounds must be >= 0, got {self.cyclic_refine_rounds}"
            )
        if self.max_paths < 1:
            raise ValueError(f"max_paths must be >= 1, got {self.max_paths}")

    # -- derived constants -------------------------------------------------

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.bandwidth_hz / self.num_subcarriers

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def num_ris_elements(self) -> int:
        return self.ris_dims[0] * self.ris_dims[1]

    @property
    def num_pilot_subcarriers(self) -> int:
        return len(self.pilot_subcarriers)

    @property
    def observation_length(self) -> int:
        """Stacked pilot vector length L * M * N_b."""
        return (
            self.num_pilot_subcarriers
            * self.num_pilot_symbols
            * self.num_bs_antennas
        )

    @property
    def unambiguous_delay_s(self) -> float:
        """Delay period the pilot set can distinguish.

        The per-path delay enters only through exp(-j*2*pi*k*delta_f*tau) at
        the pilot indices k, so delays are identifiable modulo
        1/(gcd(pilots)*delta_f); an all-even pilot comb, for example, halves
        the usable window.
        """
        g = max(math.gcd(*self.pilot_subcarriers), 1)
        return 1.0 / (g * self.subcarrier_spacing_hz)

    def replace(self, **changes) -> "SystemConfig":
        """Return a copy with the given fields replaced (re-validated)."""
        return dataclasses.replace(self, **changes)
