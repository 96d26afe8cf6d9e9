"""Sampled-waveform container and FFT-domain utilities shared by the DSP chain.

All processing is frame-based and circular: filters are applied as pointwise
multiplications on the FFT grid, and frames carry guard symbols at both edges
that are discarded before any metric is computed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.signal


class Unit(enum.Enum):
    """Physical unit tag. Only the photodiode converts OPTICAL_FIELD -> CURRENT."""

    OPTICAL_FIELD = "optical-field"  # sqrt(W)
    CURRENT = "electrical-current"  # A
    DIMENSIONLESS = "dimensionless"


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled baseband signal.

    samples may be real or complex; sample_rate is in Hz.  Instances are
    treated as immutable values; every operation returns a new Waveform.
    """

    samples: np.ndarray
    sample_rate: float
    unit: Unit = Unit.DIMENSIONLESS

    def __post_init__(self):
        samples = np.atleast_1d(np.asarray(self.samples))
        object.__setattr__(self, "samples", samples)
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray, unit: Unit | None = None) -> "Waveform":
        return Waveform(samples, self.sample_rate, self.unit if unit is None else unit)


@dataclass(frozen=True)
class Spectrum:
    """DFT of a Waveform.  bins follow numpy ordering (DC first, then positive
    frequencies, then negative).  convention records the forward-transform sign."""

    bins: np.ndarray
    bin_spacing: float
    convention: str = "exp(-j*2*pi*f*t)"

    def __len__(self) -> int:
        return self.bins.size

    def frequencies(self) -> np.ndarray:
        n = len(self)
        return np.fft.fftfreq(n, d=1.0 / (n * self.bin_spacing))


def fft(w: Waveform) -> Spectrum:
    """Forward DFT. Parseval: sum|x|^2 == (1/N) sum|X|^2."""
    return Spectrum(np.fft.fft(w.samples), bin_spacing=w.sample_rate / len(w))


def ifft(s: Spectrum, unit: Unit = Unit.DIMENSIONLESS) -> Waveform:
    n = len(s)
    return Waveform(np.fft.ifft(s.bins), sample_rate=n * s.bin_spacing, unit=unit)


def apply_filter(w: Waveform, h, out_unit: Unit | None = None) -> Waveform:
    """Multiply the spectrum pointwise by h(f), evaluated on the FFT grid.

    h must accept an array of frequencies in Hz covering [-Fs/2, Fs/2).
    The output is cast back to real when the input was real (filters used in
    the receive path are conjugate-symmetric).
    """
    freqs = np.fft.fftfreq(len(w), d=1.0 / w.sample_rate)
    response = np.asarray(h(freqs))
    out = np.fft.ifft(np.fft.fft(w.samples) * response)
    if np.isrealobj(w.samples):
        out = out.real
    return Waveform(out, w.sample_rate, w.unit if out_unit is None else out_unit)


def resample(w: Waveform, target_rate: float, max_denominator: int = 1 << 16,
             rel_tol: float = 1e-9) -> Waveform:
    """Fourier-method resampling to target_rate over the same duration.

    The rate ratio must be (close to) rational with a bounded denominator and
    must map the frame to an integer number of output samples; anything else
    is rejected rather than silently approximated.
    """
    if not target_rate > 0:
        raise ValueError("target_rate must be > 0")
    if target_rate == w.sample_rate:
        return w
    ratio = Fraction(target_rate / w.sample_rate).limit_denominator(max_denominator)
    if abs(float(ratio) - target_rate / w.sample_rate) > rel_tol * (target_rate / w.sample_rate):
        raise ValueError(
            f"rate ratio {target_rate / w.sample_rate} is not rational within "
            f"tolerance (denominator limit {max_denominator})"
        )
    n_out = len(w) * ratio
    if n_out.denominator != 1:
        raise ValueError(
            f"frame of {len(w)} samples does not map to an integer number of "
            f"samples at ratio {ratio}"
        )
    out = scipy.signal.resample(w.samples, int(n_out))
    return Waveform(out, target_rate, w.unit)
