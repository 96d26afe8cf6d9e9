"""Command-line surface: simulate / train / evaluate / sweep / oracle /
export-best.  Exit codes: 0 success, 2 bad configuration, 3 training
divergence, 1 any other runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .air import fba_air, fit_truncated_model
from .channel import (ROLE_CALIB, ROLE_EVAL, ROLE_TRAIN, build_dataset,
                      draw_frame_indices, field_at_symbol_instants,
                      load_dataset, save_dataset)
from .config import LinkConfig
from .equalizer import DivergenceError, load_checkpoint, save_checkpoint
from .sweep import (SweepSpec, append_rows, evaluate_models, export_best,
                    read_results, result_rows, run_point, run_sweep,
                    train_stage_models, write_best_csv)
from .transmitter import build_alphabet

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 1, 2, 3

_ROLES = {"train": ROLE_TRAIN, "eval": ROLE_EVAL, "calib": ROLE_CALIB}


def add_config_args(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("link configuration (overrides --config)")
    g.add_argument("--config", help="LinkConfig JSON file")
    g.add_argument("--modulation-order", type=int)
    g.add_argument("--offset-c", type=float)
    g.add_argument("--symbol-rate-baud", type=float)
    g.add_argument("--rolloff", type=float)
    g.add_argument("--sps-sim", type=int)
    g.add_argument("--pulse-span-symbols", type=int)
    g.add_argument("--diff-precoding", action=argparse.BooleanOptionalAction)
    g.add_argument("--noise", action=argparse.BooleanOptionalAction,
                   dest="noise_enabled")
    g.add_argument("--sic-stages", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--length-km", type=float)
    g.add_argument("--rop-dbm", type=float)
    g.add_argument("--rx-cutoff-hz", type=float)
    g.add_argument("--frame-n", type=int)
    g.add_argument("--frame-guard", type=int)
    g.add_argument("--frame-seed", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--hidden", help="comma list of hidden widths, e.g. 256,256")
    g.add_argument("--window-half-width", type=int)
    g.add_argument("--train-frames", type=int)
    g.add_argument("--eval-frames", type=int)
    g.add_argument("--train-seed", type=int)


def config_from_args(args: argparse.Namespace) -> LinkConfig:
    config = LinkConfig.from_json(Path(args.config).read_text()) \
        if args.config else LinkConfig()
    top = {k: getattr(args, k) for k in
           ("modulation_order", "offset_c", "symbol_rate_baud", "rolloff",
            "sps_sim", "pulse_span_symbols", "diff_precoding", "noise_enabled",
            "sic_stages", "seed")
           if getattr(args, k, None) is not None}
    fiber = config.fiber
    if getattr(args, "length_km", None) is not None:
        fiber = replace(fiber, length_km=args.length_km)
    frontend = config.frontend
    for arg_name, field_name in (("rop_dbm", "rop_dbm"),
                                 ("rx_cutoff_hz", "rx_cutoff_hz")):
        if getattr(args, arg_name, None) is not None:
            frontend = replace(frontend, **{field_name: getattr(args, arg_name)})
    frame = config.frame
    for arg_name, field_name in (("frame_n", "n"), ("frame_guard", "guard"),
                                 ("frame_seed", "seed")):
        if getattr(args, arg_name, None) is not None:
            frame = replace(frame, **{field_name: getattr(args, arg_name)})
    train = config.train
    for arg_name, field_name in (("epochs", "epochs"),
                                 ("batch_size", "batch_size"),
                                 ("learning_rate", "learning_rate"),
                                 ("window_half_width", "window_half_width"),
                                 ("train_frames", "train_frames"),
                                 ("eval_frames", "eval_frames"),
                                 ("train_seed", "seed")):
        if getattr(args, arg_name, None) is not None:
            train = replace(train, **{field_name: getattr(args, arg_name)})
    if getattr(args, "hidden", None):
        train = replace(train, hidden_widths=tuple(
            int(w) for w in args.hidden.split(",")))
    return config.with_overrides(fiber=fiber, frontend=frontend, frame=frame,
                                 train=train, **top)


def _parse_grid_values(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def cmd_simulate(args) -> int:
    config = config_from_args(args)
    records = build_dataset(config, args.frames, _ROLES[args.role])
    save_dataset(args.out, records, config)
    print(f"wrote {records.indices.shape[0]} records "
          f"({args.frames} frames) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    records, config = load_dataset(args.dataset)
    models, reports = train_stage_models(records, config)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for stage, (params, report) in enumerate(zip(models, reports), start=1):
        path = outdir / f"stage{stage}.ckpt"
        save_checkpoint(str(path), params, config.train,
                        dataset_hash=config.config_hash())
        print(f"stage {stage}: train CE {report.final_train_ce_bits:.4f} bits, "
              f"val CE {report.final_val_ce_bits:.4f} bits -> {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    records, config = load_dataset(args.dataset)
    models = []
    for stage in range(1, config.sic_stages + 1):
        params, _ = load_checkpoint(str(Path(args.checkpoint_dir) /
                                        f"stage{stage}.ckpt"))
        models.append(params)
    results = evaluate_models(records, models, config)
    rows = [row for res in results for row in result_rows(config, res)]
    append_rows(args.out, rows)
    for res in results:
        print(f"[{res.mode}] I_{res.n_stages} = {res.aggregate_bpcu:.4f} bpcu, "
              f"net {res.net_rate_bps / 1e9:.2f} Gbit/s "
              f"(+-{res.mc_std_error_bpcu:.4f})")
    return EXIT_OK


def cmd_run(args) -> int:
    config = config_from_args(args)
    outcome = run_point(config, results_path=args.out,
                        checkpoint_dir=args.checkpoint_dir)
    for res in outcome.results:
        print(f"[{res.mode}] I_{res.n_stages} = {res.aggregate_bpcu:.4f} bpcu, "
              f"net {res.net_rate_bps / 1e9:.2f} Gbit/s")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = config_from_args(args)
    grid = {}
    if args.grid_c:
        grid["offset_c"] = _parse_grid_values(args.grid_c)
    if args.grid_symbol_rate:
        grid["symbol_rate_baud"] = _parse_grid_values(args.grid_symbol_rate)
    if args.grid_rop:
        grid["rop_dbm"] = _parse_grid_values(args.grid_rop)
    if args.grid_m:
        grid["modulation_order"] = [int(v) for v in
                                    _parse_grid_values(args.grid_m)]
    if args.grid_stages:
        grid["sic_stages"] = [int(v) for v in _parse_grid_values(args.grid_stages)]
    spec = SweepSpec(base=config, grid=grid, repetitions=args.repetitions,
                     output_dir=args.out_dir)
    rows = run_sweep(spec)
    print(f"{len(rows)} result rows in {Path(args.out_dir) / 'results.csv'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = config_from_args(args)
    alphabet = build_alphabet(config.modulation_order)
    indices = draw_frame_indices(config, ROLE_CALIB, 0)
    field_samples = field_at_symbol_instants(indices, config)
    g = config.frame.guard
    symbols = alphabet.indices_to_levels(indices[g - args.memory:
                                                 g + config.frame.n])
    model = fit_truncated_model(symbols, field_samples, args.memory,
                                alphabet.levels, noise_var=1.0)
    if args.noise_std is not None:
        noise_std = args.noise_std
    else:
        # default: 5% of the RMS noise-free output keeps rates informative
        clean = model.mean_output(np.lib.stride_tricks.sliding_window_view(
            symbols, args.memory + 1))
        noise_std = 0.05 * float(np.sqrt(np.mean(clean ** 2)))
    model = replace(model, noise_var=noise_std ** 2)
    result = fba_air(model, args.stages, args.n, config.seed,
                     n_frames=args.frames,
                     symbol_rate_baud=config.symbol_rate_baud)
    append_rows(args.out, result_rows(config, result))
    print(f"fit residual {model.fit_residual:.3e}; "
          f"I_{args.stages} = {result.aggregate_bpcu:.4f} bpcu "
          f"(+-{result.mc_std_error_bpcu:.4f})")
    return EXIT_OK


def cmd_export_best(args) -> int:
    rows = read_results(args.results)
    best = export_best(rows)
    write_best_csv(args.out, best)
    print(f"{len(best)} best-offset rows -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddlink",
        description="Direct-detection link simulation, MLP-SIC equalization, "
                    "and achievable-rate sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate frames and dump a dataset")
    add_config_args(p)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--role", choices=sorted(_ROLES), default="train")
    p.add_argument("--out", required=True, help=".csv or binary output path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train per-stage equalizers on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate checkpoints on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument("--out", required=True, help="results CSV (appended)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="simulate + train + evaluate one point")
    add_config_args(p)
    p.add_argument("--out", required=True, help="results CSV (appended)")
    p.add_argument("--checkpoint-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid sweep with resume")
    add_config_args(p)
    p.add_argument("--grid-c")
    p.add_argument("--grid-symbol-rate")
    p.add_argument("--grid-rop")
    p.add_argument("--grid-m")
    p.add_argument("--grid-stages")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="fit a truncated model and run the "
                                      "exact forward-recursion rates")
    add_config_args(p)
    p.add_argument("--memory", type=int, default=1)
    p.add_argument("--stages", type=int, default=1)
    p.add_argument("--n", type=int, default=256, help="payload symbols/frame")
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--out", required=True, help="results CSV (appended)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export-best", help="select the best offset per "
                                           "(M, S, ROP, symbol rate)")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_best)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
