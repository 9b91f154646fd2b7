"""Closed-form count-rate model for a pulsed SFWM pair source.

Power arguments are the average power set on the laser in mW. The fraction
that reaches the chip is the efficiency of whichever grating coupler is used
as the input; the other coupler sits on the collection side. Returned rates
are in Hz; ``gamma_eff`` is stored in MHz/mW^2 and converted here only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields

from .errors import DomainError

MHZ = 1e6
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class IoConfig(str, enum.Enum):
    """Which grating coupler is the input. ``A`` means in via A, out via B."""

    A = "A"
    B = "B"

    def swap(self) -> "IoConfig":
        return IoConfig.B if self is IoConfig.A else IoConfig.A


class Channel(str, enum.Enum):
    SIGNAL = "signal"
    IDLER = "idler"


@dataclass(frozen=True)
class SourceParams:
    gamma_eff: float  # MHz/mW^2
    eta_gc_a: float
    eta_gc_b: float
    eta_path_s: float
    eta_path_i: float
    leak_s: float = 0.0  # Hz per mW on chip, at the chip output
    leak_i: float = 0.0
    dark_s: float = 0.0  # Hz
    dark_i: float = 0.0
    rep_rate: float = 50e6  # Hz
    jitter_fwhm: float = 1.2e-9  # s

    def __post_init__(self):
        for name in ("gamma_eff", "leak_s", "leak_i", "dark_s", "dark_i"):
            value = getattr(self, name)
            if not (value >= 0.0 and math.isfinite(value)):
                raise DomainError(f"{name} must be finite and >= 0, got {value!r}")
        for name in ("eta_gc_a", "eta_gc_b", "eta_path_s", "eta_path_i"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
        if not (self.rep_rate > 0.0 and math.isfinite(self.rep_rate)):
            raise DomainError(f"rep_rate must be > 0, got {self.rep_rate!r}")
        if not (self.jitter_fwhm > 0.0 and math.isfinite(self.jitter_fwhm)):
            raise DomainError(f"jitter_fwhm must be > 0, got {self.jitter_fwhm!r}")

    @property
    def eta_coupling(self) -> float:
        """Pair transmittance of the two couplers, the directly measurable quantity."""
        return self.eta_gc_a * self.eta_gc_b

    @property
    def rep_period(self) -> float:
        return 1.0 / self.rep_rate

    def coupler_in(self, config: IoConfig) -> float:
        return self.eta_gc_a if IoConfig(config) is IoConfig.A else self.eta_gc_b

    def coupler_out(self, config: IoConfig) -> float:
        return self.eta_gc_b if IoConfig(config) is IoConfig.A else self.eta_gc_a

    def collection(self, config: IoConfig, channel: Channel) -> float:
        """Composite collection efficiency (output coupler times path)."""
        path = self.eta_path_s if Channel(channel) is Channel.SIGNAL else self.eta_path_i
        return self.coupler_out(config) * path

    def leak(self, channel: Channel) -> float:
        return self.leak_s if Channel(channel) is Channel.SIGNAL else self.leak_i

    def dark(self, channel: Channel) -> float:
        return self.dark_s if Channel(channel) is Channel.SIGNAL else self.dark_i

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SourceParams":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise DomainError(f"unknown SourceParams fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


def _check_power(p_laser: float) -> None:
    if not p_laser >= 0.0:
        raise DomainError(f"p_laser must be >= 0 mW, got {p_laser!r}")


def pair_rate(params: SourceParams, config: IoConfig, p_laser: float) -> float:
    """On-chip pair generation rate in Hz."""
    _check_power(p_laser)
    p_chip = params.coupler_in(config) * p_laser
    return params.gamma_eff * p_chip * p_chip * MHZ


def mean_pairs_per_pulse(params: SourceParams, config: IoConfig, p_laser: float) -> float:
    return pair_rate(params, config, p_laser) / params.rep_rate


def leak_rate(params: SourceParams, config: IoConfig, channel: Channel, p_laser: float) -> float:
    """Pump leakage clicks per second reaching the detector of ``channel``."""
    _check_power(p_laser)
    eta_ch = params.collection(config, channel)
    return eta_ch * params.leak(channel) * params.coupler_in(config) * p_laser


def expected_singles_rate(
    params: SourceParams, config: IoConfig, channel: Channel, p_laser: float
) -> float:
    eta_ch = params.collection(config, channel)
    return (
        eta_ch * pair_rate(params, config, p_laser)
        + leak_rate(params, config, channel, p_laser)
        + params.dark(channel)
    )


def expected_coincidence_rate(params: SourceParams, config: IoConfig, p_laser: float) -> float:
    """True-pair coincidence rate; accidentals are not included."""
    eta_1 = params.collection(config, Channel.SIGNAL)
    eta_2 = params.collection(config, Channel.IDLER)
    return eta_1 * eta_2 * pair_rate(params, config, p_laser)


def expected_accidental_rate(params: SourceParams, config: IoConfig, p_laser: float) -> float:
    """Accidental coincidence rate populating each pulse-aligned histogram peak."""
    if not params.rep_rate > 0.0:
        raise DomainError("rep_rate must be > 0")
    s_s = expected_singles_rate(params, config, Channel.SIGNAL, p_laser)
    s_i = expected_singles_rate(params, config, Channel.IDLER, p_laser)
    return s_s * s_i / params.rep_rate


def quadratic_coefficients(
    params: SourceParams, config: IoConfig
) -> dict[str, tuple[float, float, float]]:
    """Analytic (a, b, c) of the signal, idler and coincidence rate polynomials.

    Keys are ``"s"``, ``"i"`` and ``"si"``; rates are in Hz with power in mW.
    """
    eta_in = params.coupler_in(config)
    eta_1 = params.collection(config, Channel.SIGNAL)
    eta_2 = params.collection(config, Channel.IDLER)
    pair_a = params.gamma_eff * eta_in * eta_in * MHZ
    return {
        "s": (eta_1 * pair_a, eta_1 * params.leak_s * eta_in, params.dark_s),
        "i": (eta_2 * pair_a, eta_2 * params.leak_i * eta_in, params.dark_i),
        "si": (eta_1 * eta_2 * pair_a, 0.0, 0.0),
    }
