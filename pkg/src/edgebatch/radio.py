"""OFDMA link model: spectral efficiency and minimum bandwidth fractions.

Bandwidth is shared as continuous fractions of the uplink/downlink bands.
A scheduled request must finish its prompt upload within the uplink slot
and its output download within the downlink slot, which pins the minimum
fraction it needs on each direction.  All internal units are SI (W, Hz,
s); dBm conversion happens at config-parse time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RadioConfig:
    """Shared radio parameters of the edge node."""

    uplink_band_hz: float
    downlink_band_hz: float
    downlink_power_w: float
    noise_density_w_hz: float
    uplink_slot_s: float
    downlink_slot_s: float
    bits_per_token: int = 16

    def __post_init__(self):
        for fname in ("uplink_band_hz", "downlink_band_hz", "downlink_power_w",
                      "noise_density_w_hz", "uplink_slot_s", "downlink_slot_s",
                      "bits_per_token"):
            if getattr(self, fname) <= 0:
                raise ValueError(f"radio.{fname} must be strictly positive")

    @property
    def uplink_noise_w(self) -> float:
        # Noise power over the full band, so the log term is independent of
        # the allocated fraction.
        return self.noise_density_w_hz * self.uplink_band_hz

    @property
    def downlink_noise_w(self) -> float:
        return self.noise_density_w_hz * self.downlink_band_hz


@dataclass(frozen=True)
class UserLink:
    """Per-user link state: channel power gain and uplink transmit power."""

    channel_gain: float  # |h|^2, dimensionless power gain
    uplink_power_w: float

    def __post_init__(self):
        if self.channel_gain <= 0:
            raise ValueError("channel_gain must be strictly positive")
        if self.uplink_power_w <= 0:
            raise ValueError("uplink_power_w must be strictly positive")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def spectral_efficiency(power_w: float, channel_gain: float, noise_w: float) -> float:
    """Shannon efficiency log2(1 + P*|h|^2 / N0) in bits/s/Hz."""
    if power_w <= 0 or channel_gain <= 0 or noise_w <= 0:
        raise ValueError("power, gain and noise must be strictly positive")
    return math.log2(1.0 + power_w * channel_gain / noise_w)


def uplink_fraction_per_token(link: UserLink, cfg: RadioConfig) -> float:
    """Uplink bandwidth fraction needed per prompt token."""
    eff = spectral_efficiency(link.uplink_power_w, link.channel_gain, cfg.uplink_noise_w)
    if eff <= 0.0:
        raise ValueError("uplink spectral efficiency is zero")
    return cfg.bits_per_token / (cfg.uplink_slot_s * cfg.uplink_band_hz * eff)


def downlink_fraction_per_token(link: UserLink, cfg: RadioConfig) -> float:
    """Downlink bandwidth fraction needed per output token."""
    eff = spectral_efficiency(cfg.downlink_power_w, link.channel_gain, cfg.downlink_noise_w)
    if eff <= 0.0:
        raise ValueError("downlink spectral efficiency is zero")
    return cfg.bits_per_token / (cfg.downlink_slot_s * cfg.downlink_band_hz * eff)


def min_uplink_fraction(prompt_tokens: int, link: UserLink, cfg: RadioConfig) -> float:
    """Minimum uplink fraction that uploads the prompt within the uplink slot.

    May exceed 1, which marks the request as individually unservable.
    """
    if prompt_tokens < 0:
        raise ValueError("prompt_tokens must be nonnegative")
    return prompt_tokens * uplink_fraction_per_token(link, cfg)


def min_downlink_fraction(output_tokens: int, link: UserLink, cfg: RadioConfig) -> float:
    """Minimum downlink fraction that delivers the output within the downlink slot."""
    if output_tokens < 0:
        raise ValueError("output_tokens must be nonnegative")
    return output_tokens * downlink_fraction_per_token(link, cfg)


def sample_channel_power(rng, mean_gain: float) -> float:
    """Draw one channel power gain under Rayleigh fading.

    Rayleigh amplitude means exponentially distributed power; ``mean_gain``
    is the mean of that exponential (the average path gain).
    """
    if mean_gain <= 0:
        raise ValueError("mean_gain must be strictly positive")
    return float(rng.exponential(mean_gain))
