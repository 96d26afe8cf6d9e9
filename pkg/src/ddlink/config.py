"""Validated parameter records for the whole link, with JSON round-trip.

Every physical quantity carries its unit in the field name.  Defaults are the
O-Band operating point used throughout: 10 km of SSMF, thermal-noise-limited
p-i-n receiver with a 95 GHz front end, 8-ASK with an 0.15-rolloff pulse, and
3 SIC stages.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

from .transmitter import FrameSpec, PulseShape


@dataclass(frozen=True)
class FiberParams:
    """Linear fiber response: length plus second/third-order dispersion."""

    length_km: float = 10.0
    beta2_ps2_per_km: float = -2.0
    beta3_ps3_per_km: float = 0.07

    def __post_init__(self):
        if self.length_km < 0:
            raise ValueError("fiber length must be >= 0")


@dataclass(frozen=True)
class FrontendParams:
    """Photodiode responsivity, thermal noise constant, and receiver filter."""

    responsivity_a_per_w: float = 0.9
    thermal_const_a2s: float = 3e-22  # 4*kB*T*Fn/R_L
    noise_bandwidth_hz: float = 100e9  # reference bandwidth for quoting sigma^2
    rx_cutoff_hz: float = 95e9  # 3 dB cutoff of the receiver filter
    rop_dbm: float = -15.0

    def __post_init__(self):
        for name in ("responsivity_a_per_w", "thermal_const_a2s",
                     "noise_bandwidth_hz", "rx_cutoff_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    def noise_variance_a2(self) -> float:
        """Thermal current variance within the reference bandwidth."""
        return self.thermal_const_a2s * self.noise_bandwidth_hz


@dataclass(frozen=True)
class TrainSpec:
    """Equalizer training hyperparameters. All overridable; the defaults keep
    desk-scale runs reproducible rather than chasing the last millibit."""

    batch_size: int = 1024
    learning_rate: float = 1e-3
    lr_decay: float = 0.5
    lr_patience: int = 2
    min_lr: float = 1e-5
    epochs: int = 30
    val_fraction: float = 0.1
    window_half_width: int = 15  # symbols each side of the target
    hidden_widths: tuple[int, ...] = (256, 256)
    train_frames: int = 8
    eval_frames: int = 4
    seed: int = 11

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        for name in ("batch_size", "lr_patience", "epochs", "window_half_width",
                     "train_frames", "eval_frames"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    @property
    def input_width(self) -> int:
        """2 samples/symbol over the window plus 2 conditioning slots."""
        return 2 * (2 * self.window_half_width + 1) + 2


@dataclass(frozen=True)
class LinkConfig:
    """Everything needed to reproduce one simulated operating point."""

    modulation_order: int = 8
    offset_c: float = 0.6
    symbol_rate_baud: float = 230e9
    rolloff: float = 0.15
    sps_sim: int = 16
    sps_out: int = 2
    pulse_span_symbols: int = 32
    diff_precoding: bool = False
    noise_enabled: bool = True
    sic_stages: int = 3
    seed: int = 1234
    fiber: FiberParams = field(default_factory=FiberParams)
    frontend: FrontendParams = field(default_factory=FrontendParams)
    frame: FrameSpec = field(default_factory=lambda: FrameSpec(n=2048, guard=128, seed=7))
    train: TrainSpec = field(default_factory=TrainSpec)

    def __post_init__(self):
        if self.modulation_order < 2 or self.modulation_order % 2 != 0:
            raise ValueError("modulation_order must be even and >= 2")
        if self.offset_c < 0:
            raise ValueError("offset_c must be >= 0")
        if not self.symbol_rate_baud > 0:
            raise ValueError("symbol_rate_baud must be > 0")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must be in [0, 1]")
        if self.sps_sim % self.sps_out != 0:
            raise ValueError("sps_sim must be a multiple of sps_out")
        if self.sic_stages < 1:
            raise ValueError("sic_stages must be >= 1")
        mem = self.channel_memory_symbols()
        if self.frame.guard < 4 * mem:
            raise ValueError(
                f"frame guard of {self.frame.guard} symbols is below 4x the "
                f"channel memory ({mem} symbols); use guard >= {4 * mem}"
            )

    # -- derived quantities -------------------------------------------------

    @property
    def sim_rate_hz(self) -> float:
        return self.sps_sim * self.symbol_rate_baud

    @property
    def out_rate_hz(self) -> float:
        return self.sps_out * self.symbol_rate_baud

    def pulse_shape(self) -> PulseShape:
        return PulseShape(rolloff=self.rolloff, span=self.pulse_span_symbols,
                          sps=self.sps_sim)

    def channel_memory_symbols(self) -> int:
        """Conservative one-sided memory: pulse half-span + dispersion group
        delay spread over the occupied band + receiver filter settling."""
        mem_pulse = self.pulse_span_symbols // 2
        t_sym = 1.0 / self.symbol_rate_baud
        omega = 2 * math.pi * 0.75 * self.symbol_rate_baud
        beta2 = self.fiber.beta2_ps2_per_km * 1e-24
        beta3 = self.fiber.beta3_ps3_per_km * 1e-36
        tau = (abs(beta2) * omega + abs(beta3) * omega ** 2 / 2) * self.fiber.length_km
        mem_cd = math.ceil(tau / t_sym)
        mem_rx = math.ceil(3.0 * self.symbol_rate_baud / self.frontend.rx_cutoff_hz)
        return mem_pulse + mem_cd + mem_rx

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LinkConfig":
        d = dict(d)
        if "fiber" in d:
            d["fiber"] = FiberParams(**d["fiber"])
        if "frontend" in d:
            d["frontend"] = FrontendParams(**d["frontend"])
        if "frame" in d:
            d["frame"] = FrameSpec(**d["frame"])
        if "train" in d:
            d["train"] = TrainSpec(**d["train"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "LinkConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def with_overrides(self, **kwargs) -> "LinkConfig":
        return replace(self, **kwargs)
