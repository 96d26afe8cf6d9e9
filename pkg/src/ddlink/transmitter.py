"""ASK alphabets, differential sign precoding, and pulse-shaped modulation.

The transmit pulse has a raised-cosine spectrum, so its time-domain taps cross
zero at every nonzero symbol instant (zero ISI before the channel).  A bias
offset c >= 0 is added after pulse shaping; c = 0 is pure bipolar signaling
and c = 1 moves the innermost levels to the nonnegative line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import Unit, Waveform


@dataclass(frozen=True)
class Constellation:
    """Equispaced bipolar ASK levels, normalized to max|level| = 1."""

    levels: np.ndarray
    order: int

    def __post_init__(self):
        object.__setattr__(self, "levels", np.asarray(self.levels, dtype=float))

    def indices_to_levels(self, indices: np.ndarray) -> np.ndarray:
        return self.levels[np.asarray(indices)]

    def levels_to_indices(self, levels: np.ndarray) -> np.ndarray:
        return np.argmin(np.abs(np.subtract.outer(np.asarray(levels), self.levels)), axis=-1)


def build_alphabet(order: int) -> Constellation:
    """Levels {±1/(M-1), ±3/(M-1), ..., ±1} for even order M >= 2.

    Odd orders would place a level at 0; the bias offset supplies any DC, so
    they are rejected.
    """
    if order < 2 or order % 2 != 0:
        raise ValueError(f"ASK order must be even and >= 2, got {order}")
    return Constellation(levels=np.linspace(-1.0, 1.0, order), order=order)


def diff_precode(symbol_indices: np.ndarray, alphabet: Constellation) -> np.ndarray:
    """Encode information in sign transitions; magnitudes pass through.

    Output sign k = (output sign k-1) * (input sign k), starting from +1.
    Square-law detection destroys the global sign, but sign *transitions*
    survive, which is exactly what this map protects.
    """
    if np.any(alphabet.levels == 0):
        raise ValueError("differential precoding requires a zero-free alphabet")
    levels = alphabet.indices_to_levels(symbol_indices)
    signs = np.cumprod(np.sign(levels))
    return signs * np.abs(levels)


def diff_decode(precoded_levels: np.ndarray, alphabet: Constellation) -> np.ndarray:
    """Invert diff_precode given the +1 initial sign; returns symbol indices."""
    precoded = np.asarray(precoded_levels, dtype=float)
    signs = np.sign(precoded)
    prev = np.concatenate(([1.0], signs[:-1]))
    return alphabet.levels_to_indices(prev * signs * np.abs(precoded))


@dataclass(frozen=True)
class PulseShape:
    """Raised-cosine-spectrum pulse, truncated and tapered.

    span is the total length in symbols; the outermost taper_symbols on each
    side are smoothed to zero with a raised-cosine window so truncation ISI
    stays far below the quantities being measured.
    """

    rolloff: float
    span: int = 32
    sps: int = 16
    taper_symbols: int = 2

    def __post_init__(self):
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError(f"rolloff must be in [0, 1], got {self.rolloff}")
        if self.span < 2 or self.span % 2 != 0:
            raise ValueError("span must be an even symbol count >= 2")
        if self.sps < 1:
            raise ValueError("sps must be >= 1")

    def taps(self) -> np.ndarray:
        """FIR taps at sps samples per symbol, peak 1 at the center tap."""
        a = self.rolloff
        t = np.arange(-self.span * self.sps // 2, self.span * self.sps // 2 + 1) / self.sps
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.sinc(t) * np.cos(np.pi * a * t) / (1.0 - (2.0 * a * t) ** 2)
        if a > 0:
            # l'Hopital at t = +-1/(2a)
            singular = np.isclose(np.abs(2.0 * a * t), 1.0)
            g[singular] = (np.pi / 4.0) * np.sinc(1.0 / (2.0 * a))
        edge = np.abs(t) - (self.span / 2 - self.taper_symbols)
        ramp = np.clip(edge / max(self.taper_symbols, 1e-12), 0.0, 1.0)
        g = g * (0.5 * (1.0 + np.cos(np.pi * ramp)))
        return g


@dataclass(frozen=True)
class FrameSpec:
    """Payload length, discarded edge symbols, and the dataset RNG seed."""

    n: int
    guard: int
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("payload length must be >= 1")
        if self.guard < 0:
            raise ValueError("guard must be >= 0")

    @property
    def total(self) -> int:
        return self.n + 2 * self.guard


def modulate(symbols: np.ndarray, pulse: PulseShape, c: float,
             symbol_rate: float = 1.0) -> Waveform:
    """Sum of symbol-weighted pulses plus the bias offset c.

    The frame is circular: symbol k sits at sample k*sps and the pulse wraps
    at the edges, which the frame guards absorb.
    """
    if c < 0:
        raise ValueError(f"offset c must be >= 0, got {c}")
    symbols = np.asarray(symbols, dtype=float)
    n_samp = symbols.size * pulse.sps
    taps = pulse.taps()
    if taps.size > n_samp:
        raise ValueError(
            f"frame of {symbols.size} symbols is shorter than the pulse span "
            f"({pulse.span} symbols)"
        )
    upsampled = np.zeros(n_samp)
    upsampled[:: pulse.sps] = symbols
    # place the center tap at index 0 so sample k*sps lines up with symbol k
    kernel = np.zeros(n_samp)
    half = taps.size // 2
    kernel[: half + 1] = taps[half:]
    kernel[-half:] = taps[:half]
    out = np.fft.ifft(np.fft.fft(upsampled) * np.fft.fft(kernel)).real + c
    return Waveform(out, sample_rate=pulse.sps * symbol_rate, unit=Unit.DIMENSIONLESS)
