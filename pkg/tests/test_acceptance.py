"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The full-scale operating points (hundreds of Gbit/s, hours of training per
grid point) are not reproducible at desk scale, so the gate checks exact
small-scale oracles plus scaled-down trend experiments.  Run with -s to see
the per-criterion lines.
"""

import filecmp
import shutil

import numpy as np
import pytest

from _oracles import enum_logprob
from ddlink.air import (TruncatedModel, _forward_logprob, _mean_table,
                        _state_of, air_from_posteriors, fba_air, mi_ask_awgn,
                        simulate_truncated)
from ddlink.channel import cd_filter
from ddlink.cli import EXIT_OK, main
from ddlink.config import FiberParams, FrontendParams, LinkConfig, TrainSpec
from ddlink.signal_core import Unit, Waveform
from ddlink.sweep import run_point
from ddlink.transmitter import FrameSpec
from test_equalizer import grad_check_configs, max_grad_rel_error


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# 1. AWGN oracle equivalence (runtime: seconds)
# ---------------------------------------------------------------------------


def test_awgn_oracle_equivalence():
    rng = np.random.default_rng(42)
    n = 1_000_000
    details = []
    ok = True
    for order, sigma in ((2, 0.5), (4, 0.2)):
        levels = np.linspace(-1, 1, order)
        true = rng.integers(0, order, n)
        y = levels[true] + sigma * rng.normal(size=n)
        logp = -((y[:, None] - levels[None, :]) ** 2) / (2 * sigma ** 2)
        post = np.exp(logp - logp.max(axis=1, keepdims=True))
        post /= post.sum(axis=1, keepdims=True)
        est = air_from_posteriors(true, post, order)
        ref = mi_ask_awgn(order, sigma)
        gap = abs(est.rate_bpcu - ref)
        tol = min(3 * est.std_error_bpcu, 0.02)
        ok &= gap < tol
        details.append(f"{order}-ASK gap {gap:.5f} < {tol:.5f}")
    _report("AWGN oracle equivalence", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 2. Dispersion oracle (runtime: seconds)
# ---------------------------------------------------------------------------


def test_dispersion_oracle():
    fs = 16 * 230e9
    n = 1 << 15
    t = (np.arange(n) - n // 2) / fs
    T0 = 5e-12
    envelope = np.exp(-t ** 2 / (2 * T0 ** 2))
    w = Waveform(np.roll(envelope.astype(complex), -(n // 2)), fs,
                 Unit.OPTICAL_FIELD)
    out = cd_filter(w, FiberParams(length_km=10.0, beta2_ps2_per_km=-2.0,
                                   beta3_ps3_per_km=0.0))

    def rms_width(intensity):
        weight = intensity / intensity.sum()
        mu = np.sum(t * weight)
        return np.sqrt(np.sum((t - mu) ** 2 * weight))

    measured = rms_width(np.abs(np.roll(out.samples, n // 2)) ** 2) \
        / rms_width(envelope ** 2)
    expected = np.sqrt(1.0 + ((-2e-24 * 10.0) / T0 ** 2) ** 2)
    rel = abs(measured / expected - 1.0)
    _report("Dispersion oracle", rel < 1e-3,
            f"broadening {measured:.6f} vs closed form {expected:.6f} "
            f"(rel err {rel:.2e} < 1e-3)")


# ---------------------------------------------------------------------------
# 3. FBA brute-force equivalence (runtime: tens of seconds)
# ---------------------------------------------------------------------------


def test_fba_brute_force_equivalence():
    model = TruncatedModel(taps=[1.0, 0.45], noise_var=0.15 ** 2, offset=0.3,
                           levels=np.array([-1.0, 1.0]))
    means = _mean_table(model)
    n, n_frames, seed = 10, 40, 77
    enum_vals, fba_vals = [], []
    for f in range(n_frames):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(f,)))
        warmup, x_idx, y = simulate_truncated(model, n, rng)
        init = _state_of(model, warmup)
        pin_all, pin_none = np.ones(n, bool), np.zeros(n, bool)
        fba_vals.append((_forward_logprob(model, y, pin_all, x_idx, init, means)
                         - _forward_logprob(model, y, pin_none, x_idx, init, means))
                        / np.log(2) / n)
        enum_vals.append((enum_logprob(model, warmup, x_idx, y, pin_all)
                          - enum_logprob(model, warmup, x_idx, y, pin_none))
                         / np.log(2) / n)
    fba_rate = float(np.mean(fba_vals))
    enum_rate = float(np.mean(enum_vals))
    se = np.hypot(np.std(fba_vals, ddof=1), np.std(enum_vals, ddof=1)) \
        / np.sqrt(n_frames)
    gap = abs(fba_rate - enum_rate)
    # identical realizations: the two routes agree to float precision, which
    # is far inside the 3-standard-error budget
    _report("FBA brute-force equivalence",
            gap < max(3 * se, 1e-9),
            f"forward recursion {fba_rate:.6f} vs enumeration {enum_rate:.6f} "
            f"(gap {gap:.2e}, 3se {3 * se:.2e})")


# ---------------------------------------------------------------------------
# 4. Gradient check (runtime: seconds)
# ---------------------------------------------------------------------------


def test_gradient_check():
    worst = 0.0
    for i, (params, x, y) in enumerate(grad_check_configs(20, seed=123)):
        worst = max(worst, max_grad_rel_error(params, x, y, seed=i))
    _report("Gradient check", worst < 1e-4,
            f"max relative error {worst:.2e} < 1e-4 over 20 random nets")


# ---------------------------------------------------------------------------
# 5.-7. Scaled-down link trend experiments
# ---------------------------------------------------------------------------


def _desk_link(order, offset_c, precode, stages, cutoff_hz, rop_dbm,
               train_frames, epochs=15):
    return LinkConfig(
        modulation_order=order, offset_c=offset_c, symbol_rate_baud=40e9,
        rolloff=0.15, sps_sim=16, pulse_span_symbols=32,
        diff_precoding=precode, noise_enabled=True, sic_stages=stages,
        seed=100,
        fiber=FiberParams(length_km=10.0),
        frontend=FrontendParams(rx_cutoff_hz=cutoff_hz, rop_dbm=rop_dbm),
        frame=FrameSpec(n=2046, guard=120, seed=3),
        train=TrainSpec(batch_size=512, epochs=epochs, hidden_widths=(128, 128),
                        train_frames=train_frames, eval_frames=8, seed=11),
    )


def test_sign_ambiguity_precoding_gap():
    # c = 0, back to back, S = 1: square-law detection loses the global
    # sign, so the non-precoded rate collapses while precoding survives
    base = dict(order=2, offset_c=0.0, stages=1, cutoff_hz=38e9,
                rop_dbm=-15.0, train_frames=12)
    cfg_plain = _desk_link(precode=False, **base)
    cfg_coded = _desk_link(precode=True, **base)
    cfg_plain = cfg_plain.with_overrides(fiber=FiberParams(length_km=0.0))
    cfg_coded = cfg_coded.with_overrides(fiber=FiberParams(length_km=0.0))
    plain = run_point(cfg_plain, modes=("decision",)).results[0]
    coded = run_point(cfg_coded, modes=("decision",)).results[0]
    gap = coded.aggregate_bpcu - plain.aggregate_bpcu
    _report("Square-law sign-ambiguity A/B", gap >= 0.2,
            f"precoded {coded.aggregate_bpcu:.4f} vs plain "
            f"{plain.aggregate_bpcu:.4f} bpcu (gap {gap:.4f} >= 0.2)")


def test_sic_gain_trend():
    # 4-ASK at 40 GBaud with a 12 GHz front end (same relative bandwidth
    # stress as the full-scale system): staged detection with correct
    # lower-stage symbols must clear single-stage detection by 0.1 bpcu
    kw = dict(order=4, offset_c=0.3, precode=False, cutoff_hz=12e9,
              rop_dbm=-15.0, train_frames=30)
    sdd = run_point(_desk_link(stages=1, **kw), modes=("genie",)).results[0]
    sic = run_point(_desk_link(stages=3, **kw), modes=("genie",)).results[0]
    gain = sic.aggregate_bpcu - sdd.aggregate_bpcu
    _report("SIC gain trend", gain >= 0.1,
            f"I_3 {sic.aggregate_bpcu:.4f} vs I_1 {sdd.aggregate_bpcu:.4f} "
            f"bpcu (gain {gain:.4f} >= 0.1; stages "
            f"{[round(r, 3) for r in sic.stage_rates_bpcu]})")


def test_offset_trend():
    # noise-limited scaled point where the front-end filter bites: the best
    # interior offset must at least match both endpoint strategies
    kw = dict(order=4, stages=3, cutoff_hz=12e9, rop_dbm=-25.0,
              train_frames=30)
    runs = {}
    for label, c, precode in (("c0_precoded", 0.0, True), ("c0.4", 0.4, False),
                              ("c0.6", 0.6, False), ("c1", 1.0, False)):
        res = run_point(_desk_link(offset_c=c, precode=precode, **kw),
                        modes=("genie",)).results[0]
        runs[label] = res
    interior = max((runs["c0.4"], runs["c0.6"]), key=lambda r: r.net_rate_bps)
    endpoint = max((runs["c0_precoded"], runs["c1"]), key=lambda r: r.net_rate_bps)
    slack = endpoint.mc_std_error_bpcu * endpoint.net_rate_bps \
        / max(endpoint.aggregate_bpcu, 1e-12)
    ok = interior.net_rate_bps >= endpoint.net_rate_bps - slack
    _report("Offset trend", ok,
            f"best interior {interior.net_rate_bps / 1e9:.2f} Gbit/s vs best "
            f"endpoint {endpoint.net_rate_bps / 1e9:.2f} Gbit/s "
            f"(slack {slack / 1e9:.2f}); rates bpcu: "
            + ", ".join(f"{k}={v.aggregate_bpcu:.4f}" for k, v in runs.items()))


# ---------------------------------------------------------------------------
# 8. CLI determinism (runtime: tens of seconds)
# ---------------------------------------------------------------------------


def _tiny_cli_flags(tmp_path):
    cfg = LinkConfig(
        modulation_order=2, offset_c=2.0, symbol_rate_baud=40e9,
        diff_precoding=False, noise_enabled=True, sic_stages=1, seed=42,
        fiber=FiberParams(length_km=0.0))
    path = tmp_path / "config.json"
    path.write_text(cfg.to_json())
    return ["--config", str(path), "--frame-n", "256", "--frame-guard", "80",
            "--epochs", "5", "--batch-size", "128", "--hidden", "24,24",
            "--train-frames", "2", "--eval-frames", "2"]


def test_cli_determinism(tmp_path):
    base = _tiny_cli_flags(tmp_path)
    produced = {}
    for tag in ("a", "b"):
        d = tmp_path / tag
        d.mkdir()
        assert main(["simulate", *base, "--frames", "2",
                     "--out", str(d / "data.csv")]) == EXIT_OK
        assert main(["train", "--dataset", str(d / "data.csv"),
                     "--out-dir", str(d / "ckpt")]) == EXIT_OK
        assert main(["evaluate", "--dataset", str(d / "data.csv"),
                     "--checkpoint-dir", str(d / "ckpt"),
                     "--out", str(d / "eval.csv")]) == EXIT_OK
        assert main(["run", *base, "--out", str(d / "run.csv")]) == EXIT_OK
        assert main(["sweep", *base, "--grid-c", "1.5,2.0",
                     "--out-dir", str(d / "sweep")]) == EXIT_OK
        assert main(["oracle", *base, "--memory", "1", "--n", "64",
                     "--frames", "4", "--out", str(d / "oracle.csv")]) == EXIT_OK
        assert main(["export-best", "--results", str(d / "run.csv"),
                     "--out", str(d / "best.csv")]) == EXIT_OK
        produced[tag] = [d / "data.csv", d / "eval.csv", d / "run.csv",
                         d / "sweep" / "results.csv", d / "oracle.csv",
                         d / "best.csv", d / "ckpt" / "stage1.ckpt"]
    mismatches = [pa.name for pa, pb in zip(produced["a"], produced["b"])
                  if not filecmp.cmp(pa, pb, shallow=False)]
    _report("CLI determinism", not mismatches,
            "all verbs reproduce byte-identical outputs from (config, seed)"
            if not mismatches else f"mismatched: {mismatches}")
