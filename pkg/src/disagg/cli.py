"""Command-line entry points: train, simulate, disaggregate, oracle, evaluate.

Exit codes: 0 success, 1 algorithmic failure (e.g. an unfittable device),
2 usage or I/O error.  Every subcommand is deterministic given its flags.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io as dio
from .errors import DisaggError, EnumerationCapError, IllPosedFitError, LibraryFormatError
from .filterbank import DisaggParams, run_offline
from .metrics import evaluate
from .models import (
    DeviceLibrary,
    TrainingTrace,
    detect_binary_input,
    fit_fir,
    load_library,
    save_library,
    select_order,
)
from .oracle import exact_map
from .synth import DEFAULT_SAMPLE_PERIOD, DeviceSpec, ScenarioSpec, generate

EXIT_OK = 0
EXIT_ALGORITHM = 1
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disagg",
        description="Split a building's aggregate power signal into per-device signals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit device models from plug-level trace CSVs")
    p_train.add_argument("traces", nargs="+", help="per-device trace CSVs (t,watts)")
    p_train.add_argument("-o", "--out", required=True, help="library JSON to write")
    p_train.add_argument("--sample-period", type=float, default=DEFAULT_SAMPLE_PERIOD,
                         help="seconds between samples (default %(default).4f)")
    p_train.add_argument("--threshold", type=float, default=5.0,
                         help="watts above which a device counts as on")
    p_train.add_argument("--debounce", type=int, default=1,
                         help="samples a level must persist before a switch commits")
    p_train.add_argument("--max-order", type=int, default=5)
    p_train.add_argument("--criterion", choices=["aic", "bic"], default="bic")
    p_train.add_argument("--order", type=int, default=None,
                         help="force this FIR order, skipping selection")
    p_train.add_argument("--instant-off", action="store_true",
                         help="mark all trained devices as dropping instantly on switch-off")

    p_sim = sub.add_parser("simulate", help="generate a ground-truth scenario")
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument("--devices", type=int, default=3)
    p_sim.add_argument("--order", type=int, default=5)
    p_sim.add_argument("--horizon", type=int, default=500)
    p_sim.add_argument("--changes", type=int, default=8)
    p_sim.add_argument("--gain-min", type=float, default=70.0)
    p_sim.add_argument("--gain-max", type=float, default=1800.0)
    p_sim.add_argument("--sigma", type=float, default=1.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--min-segment", type=int, default=None)
    p_sim.add_argument("--overshoot", type=float, default=0.0)
    p_sim.add_argument("--instant-off", action="store_true")

    p_dis = sub.add_parser("disaggregate", help="run the filter-bank engine on an aggregate CSV")
    p_dis.add_argument("aggregate", help="aggregate signal CSV (t,watts)")
    p_dis.add_argument("library", help="device library JSON")
    p_dis.add_argument("--out-dir", required=True)
    p_dis.add_argument("--config", default=None, help="JSON parameter file; flags override it")
    _add_param_flags(p_dis)

    p_oracle = sub.add_parser("oracle", help="exhaustive MAP search (short signals only)")
    p_oracle.add_argument("aggregate")
    p_oracle.add_argument("library")
    p_oracle.add_argument("--full-table", default=None,
                          help="write every candidate's score to this CSV")
    _add_param_flags(p_oracle)

    p_eval = sub.add_parser("evaluate", help="score a result directory against a truth directory")
    p_eval.add_argument("--result-dir", required=True)
    p_eval.add_argument("--truth-dir", required=True)
    p_eval.add_argument("--window", type=int, default=2)
    p_eval.add_argument("--csv", default=None, help="also write a one-row CSV report")

    return parser


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    # defaults stay None so a config file can fill unset flags
    p.add_argument("--sigma2", type=float, default=None,
                   help="aggregate noise variance; defaults to the library's summed variances")
    p.add_argument("--change-prob", type=float, default=None)
    p.add_argument("--prune-mode", choices=["relative", "absolute"], default=None)
    p.add_argument("--prune-thresh", type=float, default=None,
                   help="offset below the best (relative) or log threshold, -inf allowed (absolute)")
    p.add_argument("--beam-cap", type=int, default=None)
    p.add_argument("--no-beam-cap", action="store_true", help="keep every unpruned filter")
    p.add_argument("--enforce-min-segment", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--one-change-per-step", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--branch-suppression-tol", type=float, default=None)
    p.add_argument("--tie-tol", type=float, default=None)


def _resolve_params(args, library: DeviceLibrary) -> DisaggParams:
    file_cfg = dio.load_params_file(args.config) if getattr(args, "config", None) else {}

    def pick(flag_value, key, fallback):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, fallback)

    sigma2 = pick(args.sigma2, "sigma2", None)
    if sigma2 is None:
        sigma2 = library.noise_variance
        if sigma2 <= 0:
            raise DisaggError(
                "library carries no noise variance; pass --sigma2 explicitly"
            )
    beam_cap = pick(None if args.no_beam_cap else args.beam_cap, "beam_cap", 64)
    if args.no_beam_cap:
        beam_cap = None
    return DisaggParams(
        sigma2=float(sigma2),
        change_prob=float(pick(args.change_prob, "change_prob", 0.01)),
        prune_mode=pick(args.prune_mode, "prune_mode", "relative"),
        prune_log_thresh=float(pick(args.prune_thresh, "prune_log_thresh", 20.0)),
        beam_cap=beam_cap,
        enforce_min_segment=bool(pick(args.enforce_min_segment, "enforce_min_segment", False)),
        one_change_per_step=bool(pick(args.one_change_per_step, "one_change_per_step", False)),
        branch_suppression_tol=float(pick(args.branch_suppression_tol, "branch_suppression_tol", 0.0)),
        branch_tie_tol=float(pick(args.tie_tol, "branch_tie_tol", 1e-12)),
    )


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(path)
    return p


def _cmd_train(args) -> int:
    models = []
    for trace_path in args.traces:
        _require_file(trace_path)
        samples = dio.read_signal_csv(trace_path)
        name = Path(trace_path).stem
        trace = TrainingTrace(name, args.sample_period, samples)
        u = detect_binary_input(trace, args.threshold, args.debounce)
        order = args.order if args.order is not None else select_order(
            trace, u, args.max_order, args.criterion, instant_off=args.instant_off
        )
        model = fit_fir(trace, u, order, instant_off=args.instant_off)
        print(
            f"{name}: order {model.order}, dc gain {model.dc_gain:.4f} W, "
            f"noise variance {model.noise_variance:.6g} W^2"
        )
        models.append(model)
    save_library(DeviceLibrary(tuple(models)), args.out)
    print(f"wrote {len(models)} models to {args.out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    devices = tuple(
        DeviceSpec(
            order=args.order,
            dc_gain_range=(args.gain_min, args.gain_max),
            instant_off=args.instant_off,
            overshoot=args.overshoot,
        )
        for _ in range(args.devices)
    )
    spec = ScenarioSpec(
        devices=devices,
        horizon=args.horizon,
        num_changes=args.changes,
        min_segment=args.min_segment,
        noise_sigma=args.sigma,
        seed=args.seed,
    )
    scenario = generate(spec)
    dio.write_scenario(args.out_dir, scenario)
    print(f"scenario with {len(devices)} devices, {args.changes} changes -> {args.out_dir}")
    print(f"true changepoints: {scenario.true_delta.serialize() or '(none)'}")
    return EXIT_OK


def _cmd_disaggregate(args) -> int:
    _require_file(args.aggregate)
    _require_file(args.library)
    library = load_library(args.library)
    params = _resolve_params(args, library)
    y = dio.read_signal_csv(args.aggregate)
    result = run_offline(y, library, params)
    dio.write_result(args.out_dir, result)
    print(f"changepoints: {result.best_seg.serialize() or '(none)'}")
    print(f"log posterior: {result.log_post!r}")
    print(f"bank size: max {max(result.bank_size_trace)}")
    print(f"wrote result files to {args.out_dir}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    _require_file(args.aggregate)
    _require_file(args.library)
    library = load_library(args.library)
    params = _resolve_params(args, library)
    y = dio.read_signal_csv(args.aggregate)
    result = exact_map(y, library, params, materialize_table=args.full_table is not None)
    print(f"changepoints: {result.best_delta.serialize() or '(none)'}")
    print(f"log posterior: {result.best_log_post!r}")
    if args.full_table is not None:
        with open(args.full_table, "w") as fh:
            fh.write("delta,log_post\n")
            for bits, lp in sorted(result.full_table.items()):
                fh.write(f"{''.join(map(str, bits))},{lp!r}\n")
        print(f"wrote {len(result.full_table)} candidates to {args.full_table}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    result = dio.read_result(args.result_dir)
    truth = dio.read_scenario(args.truth_dir)
    report = evaluate(result, truth, window=args.window)
    print(report.render())
    if args.csv is not None:
        header, row = report.csv_header_and_row()
        with open(args.csv, "w") as fh:
            fh.write(",".join(header) + "\n")
            fh.write(",".join(row) + "\n")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "simulate": _cmd_simulate,
    "disaggregate": _cmd_disaggregate,
    "oracle": _cmd_oracle,
    "evaluate": _cmd_evaluate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as err:
        print(f"error: no such file: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (LibraryFormatError, EnumerationCapError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except IllPosedFitError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ALGORITHM
    except DisaggError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
