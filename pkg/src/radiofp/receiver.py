"""Parametric SDR receiver model: the tunable plant of the adaptive loop.

acquire() runs the front-end chain: additive front-end noise (injected
before the gain stage, so gain trades signal level against the quantization
floor but cannot buy back front-end SNR), amplifier gain, a fixed 63-tap
anti-alias lowpass whose bandwidth is the tunable, hard clipping, and a
uniform mid-tread ADC.

The quantizer grid is k * step for |k| <= 2^(bits-1) - 1 with
step = 2*full_scale / (2^bits - 1): zero is representable (silence stays
silent) and values driven past the grid by clipping saturate exactly at
+/- full_scale, which is what clipping_ratio looks for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import IqRecording, design_lowpass, fir_apply
from .errors import ParameterError

NUM_FILTER_TAPS = 63

__all__ = ["ReceiverConfig", "acquire", "clipping_ratio", "quantization_step", "NUM_FILTER_TAPS"]


@dataclass(frozen=True)
class ReceiverConfig:
    """Tunable front-end parameters the controller optimizes."""

    filter_bw_hz: float
    gain_db: float = 0.0
    adc_bits: int = 12
    full_scale: float = 1.0
    frontend_noise_power: float = 0.0

    def __post_init__(self) -> None:
        if not self.filter_bw_hz > 0:
            raise ParameterError(f"filter_bw_hz must be > 0, got {self.filter_bw_hz}")
        if not 2 <= int(self.adc_bits) <= 16:
            raise ParameterError(f"adc_bits must lie in [2, 16], got {self.adc_bits}")
        if not self.full_scale > 0:
            raise ParameterError(f"full_scale must be > 0, got {self.full_scale}")
        if self.frontend_noise_power < 0:
            raise ParameterError("frontend_noise_power must be >= 0")


def quantization_step(adc_bits: int, full_scale: float) -> float:
    return 2.0 * full_scale / (2 ** int(adc_bits) - 1)


def _quantize(values: np.ndarray, step: float, full_scale: float) -> np.ndarray:
    return np.clip(step * np.round(values / step), -full_scale, full_scale)


def acquire(input_recording: IqRecording, config: ReceiverConfig, seed: int) -> IqRecording:
    """Run the receiver chain over a recording; deterministic given the seed."""
    fs = input_recording.sample_rate_hz
    if config.filter_bw_hz >= fs:
        raise ParameterError(
            f"filter_bw_hz={config.filter_bw_hz} is at or above the sample rate {fs}"
        )
    x = np.array(input_recording.samples, dtype=np.complex128, copy=True)

    if config.frontend_noise_power > 0:
        rng = np.random.default_rng(seed)
        scale = np.sqrt(config.frontend_noise_power / 2.0)
        x += scale * (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size))

    x *= 10.0 ** (config.gain_db / 20.0)

    taps = design_lowpass(config.filter_bw_hz / (2.0 * fs), NUM_FILTER_TAPS)
    x = fir_apply(x, taps)

    fsd = config.full_scale
    i = np.clip(x.real, -fsd, fsd)
    q = np.clip(x.imag, -fsd, fsd)

    step = quantization_step(config.adc_bits, fsd)
    i = _quantize(i, step, fsd)
    q = _quantize(q, step, fsd)

    return input_recording.replace_samples(i + 1j * q)


def clipping_ratio(recording: IqRecording, full_scale: float) -> float:
    """Fraction of samples with either component at the rails.

    A component counts as railed when |v| >= full_scale - eps with
    eps = full_scale * 1e-9. Empty recordings report 0.0.
    """
    if not full_scale > 0:
        raise ParameterError(f"full_scale must be > 0, got {full_scale}")
    z = recording.samples
    if z.size == 0:
        return 0.0
    limit = full_scale - full_scale * 1e-9
    railed = (np.abs(z.real) >= limit) | (np.abs(z.imag) >= limit)
    return float(np.mean(railed))
