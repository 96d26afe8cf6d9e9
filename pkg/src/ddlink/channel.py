"""Fiber dispersion, power scaling, square-law detection, thermal noise, and
the receiver front end, composed into a reproducible end-to-end link run.

The chain follows the received-signal model
    Y(t) = h_rx(t) * ( |X(t) * h(t)|^2 + N(t) )
with noise injected before the receiver filter, then decimation to 2 samples
per symbol with even samples on the symbol centers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import scipy.signal

from .config import FrontendParams, FiberParams, LinkConfig
from .signal_core import Unit, Waveform, apply_filter, resample
from .transmitter import build_alphabet, diff_precode, modulate


def cd_filter(w: Waveform, p: FiberParams) -> Waveform:
    """All-pass chromatic dispersion H(w) = exp(+j (b2 w^2/2 + b3 w^3/6) L)."""
    if w.unit is not Unit.OPTICAL_FIELD:
        raise ValueError("cd_filter expects an optical-field waveform")
    if p.length_km == 0:
        return w
    beta2 = p.beta2_ps2_per_km * 1e-24  # s^2/km
    beta3 = p.beta3_ps3_per_km * 1e-36  # s^3/km

    def response(freqs):
        omega = 2.0 * np.pi * freqs
        phase = (beta2 * omega ** 2 / 2.0 + beta3 * omega ** 3 / 6.0) * p.length_km
        return np.exp(1j * phase)

    out = np.fft.ifft(np.fft.fft(w.samples.astype(complex))
                      * response(np.fft.fftfreq(len(w), 1.0 / w.sample_rate)))
    return Waveform(out, w.sample_rate, Unit.OPTICAL_FIELD)


def scale_to_rop(w: Waveform, rop_dbm: float) -> Waveform:
    """Scale so the mean optical power is exactly 10^(rop/10) mW."""
    power = w.mean_power()
    if power == 0:
        raise ValueError("cannot scale an all-zero waveform to a target power")
    target_w = 1e-3 * 10.0 ** (rop_dbm / 10.0)
    return Waveform(w.samples * np.sqrt(target_w / power), w.sample_rate,
                    Unit.OPTICAL_FIELD)


def photodiode(w: Waveform, responsivity_a_per_w: float) -> Waveform:
    """Square-law detection: current = R * |field|^2. Phase is lost here."""
    if w.unit is not Unit.OPTICAL_FIELD:
        raise ValueError("photodiode expects an optical-field waveform")
    current = responsivity_a_per_w * np.abs(w.samples) ** 2
    return Waveform(current, w.sample_rate, Unit.CURRENT)


def add_thermal_noise(w: Waveform, f: FrontendParams,
                      rng: np.random.Generator) -> Waveform:
    """White real Gaussian noise with two-sided PSD thermal_const/2.

    Per-sample variance is thermal_const * Fs / 2, so the variance within any
    bandwidth B window is thermal_const * B, matching the quoted receiver
    noise power in the reference bandwidth.
    """
    if w.unit is not Unit.CURRENT:
        raise ValueError("thermal noise is added in the electrical domain")
    sigma = np.sqrt(f.thermal_const_a2s * w.sample_rate / 2.0)
    return Waveform(w.samples + rng.normal(0.0, sigma, len(w)), w.sample_rate,
                    Unit.CURRENT)


def _bessel_response(cutoff_hz: float, order: int = 5):
    """Analog Bessel lowpass with |H(f_c)|^2 = 1/2, DC group delay removed.

    The bulk delay would shift symbol centers off the output sampling grid;
    removing it keeps even output samples aligned with the symbols while
    leaving the magnitude response untouched.
    """
    b, a = scipy.signal.bessel(order, 2.0 * np.pi * cutoff_hz, btype="low",
                               analog=True, norm="mag")

    def raw(freqs):
        s = 2j * np.pi * np.asarray(freqs)
        return np.polyval(b, s) / np.polyval(a, s)

    df = cutoff_hz * 1e-6
    delay = -(np.angle(raw(df)) - np.angle(raw(0.0))) / (2.0 * np.pi * df)

    def response(freqs):
        return raw(freqs) * np.exp(2j * np.pi * np.asarray(freqs) * delay)

    return response


def rx_frontend(w: Waveform, f: FrontendParams, out_rate_hz: float) -> Waveform:
    """Receiver bandwidth limitation followed by decimation to the ADC rate."""
    if w.unit is not Unit.CURRENT:
        raise ValueError("rx_frontend expects an electrical-current waveform")
    if out_rate_hz > w.sample_rate:
        raise ValueError(
            f"output rate {out_rate_hz} exceeds the simulation rate {w.sample_rate}"
        )
    filtered = apply_filter(w, _bessel_response(f.rx_cutoff_hz))
    return resample(filtered, out_rate_hz)


# ---------------------------------------------------------------------------
# End-to-end link
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkRecords:
    """Aligned per-symbol records for the payload of one or more frames.

    indices/levels are the information symbols (pre-precoding); samples holds
    the received pair (even = symbol center, odd = half-symbol later) per
    payload symbol.  frame_len marks frame boundaries inside the arrays.
    """

    indices: np.ndarray  # (n,) int
    levels: np.ndarray  # (n,) float
    samples: np.ndarray  # (n, 2) float
    frame_len: int

    def __post_init__(self):
        if self.indices.shape[0] != self.levels.shape[0] or \
                self.samples.shape != (self.indices.shape[0], 2):
            raise ValueError("misaligned record arrays")
        if self.indices.shape[0] % self.frame_len != 0:
            raise ValueError("record length must be a whole number of frames")

    @property
    def n_frames(self) -> int:
        return self.indices.shape[0] // self.frame_len

    def concat(self, other: "LinkRecords") -> "LinkRecords":
        if other.frame_len != self.frame_len:
            raise ValueError("frame lengths differ")
        return LinkRecords(
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.levels, other.levels]),
            np.concatenate([self.samples, other.samples]),
            self.frame_len,
        )


def transmit_field(info_indices: np.ndarray, config: LinkConfig) -> Waveform:
    """Pulse-shape one full frame (guards included) and apply fiber + power
    scaling; returns the optical field impinging on the photodiode."""
    alphabet = build_alphabet(config.modulation_order)
    if config.diff_precoding:
        tx_levels = diff_precode(info_indices, alphabet)
    else:
        tx_levels = alphabet.indices_to_levels(info_indices)
    wave = modulate(tx_levels, config.pulse_shape(), config.offset_c,
                    symbol_rate=config.symbol_rate_baud)
    field = Waveform(wave.samples, wave.sample_rate, Unit.OPTICAL_FIELD)
    field = cd_filter(field, config.fiber)
    return scale_to_rop(field, config.frontend.rop_dbm)


def field_at_symbol_instants(info_indices: np.ndarray,
                             config: LinkConfig) -> np.ndarray:
    """Pre-photodiode field sampled at payload symbol centers (noise-free).

    Used to fit symbol-rate surrogate models for the exact-oracle path.
    """
    field = transmit_field(info_indices, config)
    g = config.frame.guard
    centers = (g + np.arange(config.frame.n)) * config.sps_sim
    return field.samples[centers]


def simulate_link(info_indices: np.ndarray, config: LinkConfig,
                  rng: np.random.Generator) -> LinkRecords:
    """Run the full chain for one frame and return guard-stripped records."""
    info_indices = np.asarray(info_indices)
    if info_indices.size != config.frame.total:
        raise ValueError(
            f"expected {config.frame.total} symbols (payload + guards), "
            f"got {info_indices.size}"
        )
    field = transmit_field(info_indices, config)
    current = photodiode(field, config.frontend.responsivity_a_per_w)
    if config.noise_enabled:
        current = add_thermal_noise(current, config.frontend, rng)
    received = rx_frontend(current, config.frontend, config.out_rate_hz)

    g, n = config.frame.guard, config.frame.n
    alphabet = build_alphabet(config.modulation_order)
    payload = info_indices[g:g + n]
    pairs = received.samples.reshape(-1, config.sps_out)[g:g + n, :2]
    return LinkRecords(indices=payload.copy(),
                       levels=alphabet.indices_to_levels(payload),
                       samples=np.array(pairs, dtype=float),
                       frame_len=n)


def frame_rng(master_seed: int, role: int, frame_index: int) -> np.random.Generator:
    """Independent, reproducible per-frame stream: role keeps train/eval/
    calibration draws disjoint under one master seed."""
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(role, frame_index)))


ROLE_TRAIN, ROLE_EVAL, ROLE_CALIB = 0, 1, 2


def draw_frame_indices(config: LinkConfig, role: int,
                       frame_index: int) -> np.ndarray:
    rng = frame_rng(config.frame.seed, role, frame_index)
    return rng.integers(0, config.modulation_order, size=config.frame.total)


def build_dataset(config: LinkConfig, n_frames: int, role: int) -> LinkRecords:
    """Simulate n_frames independent frames and stack their payload records."""
    parts = []
    for i in range(n_frames):
        indices = draw_frame_indices(config, role, i)
        noise_rng = frame_rng(config.frame.seed, role + 16, i)
        parts.append(simulate_link(indices, config, noise_rng))
    out = parts[0]
    for p in parts[1:]:
        out = out.concat(p)
    return out


# ---------------------------------------------------------------------------
# Dataset persistence: CSV or packed binary, both carrying the full config
# ---------------------------------------------------------------------------

_BIN_MAGIC = b"DDLINKDS"


def save_dataset(path: str, records: LinkRecords, config: LinkConfig) -> None:
    """Write (symbol_index, true_level, sample_even, sample_odd) records.

    .csv gets a '# config: <json>' header; anything else is written as the
    packed binary layout: magic, header length, config+frame_len JSON, then
    little-endian float64 records.
    """
    header = {"config": config.to_dict(), "frame_len": records.frame_len,
              "n_records": int(records.indices.shape[0])}
    if str(path).endswith(".csv"):
        with open(path, "w") as fh:
            fh.write("# config: " + json.dumps(header, sort_keys=True) + "\n")
            fh.write("symbol_index,true_level,sample_even,sample_odd\n")
            for i in range(records.indices.shape[0]):
                fh.write(f"{int(records.indices[i])},"
                         f"{float(records.levels[i])!r},"
                         f"{float(records.samples[i, 0])!r},"
                         f"{float(records.samples[i, 1])!r}\n")
        return
    blob = json.dumps(header, sort_keys=True).encode()
    rows = np.column_stack([records.indices.astype(float), records.levels,
                            records.samples]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(rows.tobytes())


def load_dataset(path: str) -> tuple[LinkRecords, LinkConfig]:
    if str(path).endswith(".csv"):
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# config: "):
                raise ValueError("missing dataset config header")
            header = json.loads(first[len("# config: "):])
            data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    else:
        with open(path, "rb") as fh:
            if fh.read(len(_BIN_MAGIC)) != _BIN_MAGIC:
                raise ValueError("not a ddlink dataset file")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen))
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(-1, 4)
    config = LinkConfig.from_dict(header["config"])
    records = LinkRecords(indices=data[:, 0].astype(int), levels=data[:, 1].copy(),
                          samples=data[:, 2:4].copy(), frame_len=header["frame_len"])
    return records, config
