"""Direct-detection fiber link simulation with MLP-SIC equalization and
achievable-rate estimation."""

from .air import (AirResult, RateEstimate, TruncatedModel, air_from_posteriors,
                  fba_air, fit_truncated_model, mi_ask_awgn, mi_points_awgn,
                  net_bit_rate)
from .channel import (FiberParams, FrontendParams, LinkRecords,
                      add_thermal_noise, build_dataset, cd_filter,
                      load_dataset, photodiode, rx_frontend, save_dataset,
                      scale_to_rop, simulate_link)
from .config import LinkConfig, TrainSpec
from .equalizer import (DivergenceError, MlpParams, SicSchedule, mlp_forward,
                        mlp_train, sic_detect)
from .signal_core import Spectrum, Unit, Waveform, apply_filter, fft, ifft, resample
from .sweep import SweepSpec, export_best, run_point, run_sweep
from .transmitter import (Constellation, FrameSpec, PulseShape,
                          build_alphabet, diff_decode, diff_precode, modulate)

__version__ = "0.1.0"
