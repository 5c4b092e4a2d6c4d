"""CSV and JSON file formats shared by the CLI subcommands.

All floats are written with ``repr`` so files round-trip exactly and reruns
are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .filterbank import DisaggResult
from .models import DeviceLibrary, load_library, save_library
from .segmentation import Segmentation
from .synth import Scenario, ScenarioSpec, DeviceSpec

__all__ = [
    "read_signal_csv",
    "write_signal_csv",
    "write_scenario",
    "read_scenario",
    "write_result",
    "read_result",
    "load_params_file",
]


def _fmt(value) -> str:
    return repr(float(value))


def read_signal_csv(path) -> np.ndarray:
    """Read a `t,watts` (or `timestamp,watts`) file into a 1-d array."""
    path = Path(path)
    values = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValidationError(f"{path}: expected a two-column header like 't,watts'")
        if header[1].strip().lower() != "watts":
            raise ValidationError(f"{path}: second column must be 'watts', got {header[1]!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values.append(float(row[1]))
            except (IndexError, ValueError) as err:
                raise ValidationError(f"{path}:{lineno}: bad row {row!r}") from err
    if not values:
        raise ValidationError(f"{path}: no samples")
    return np.asarray(values)


def write_signal_csv(path, values, value_header: str = "watts") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", value_header])
        for t, v in enumerate(values):
            writer.writerow([t, _fmt(v)])


def _write_wide_csv(path, names, columns: np.ndarray, extra=None) -> None:
    """columns: (k, n) array written as n rows; extra: optional (name, values)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t"] + list(names)
        if extra is not None:
            header.append(extra[0])
        writer.writerow(header)
        n = columns.shape[1]
        for t in range(n):
            row = [t] + [_fmt(columns[i, t]) for i in range(columns.shape[0])]
            if extra is not None:
                row.append(_fmt(extra[1][t]))
            writer.writerow(row)


def _read_wide_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "t":
            raise ValidationError(f"{path}: expected a header starting with 't'")
        names = header[1:]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as err:
                raise ValidationError(f"{path}:{lineno}: bad row {row!r}") from err
    if not rows:
        raise ValidationError(f"{path}: no samples")
    return names, np.asarray(rows).T


def write_scenario(out_dir, scenario: Scenario) -> None:
    """Emit aggregate.csv, truth.csv, library.json and scenario.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_signal_csv(out / "aggregate.csv", scenario.aggregate)
    _write_wide_csv(out / "truth.csv", scenario.device_names, scenario.device_signals)
    save_library(scenario.library, out / "library.json")
    meta = {
        "seed": scenario.spec.seed,
        "noise_sigma": float(scenario.spec.noise_sigma),
        "min_segment": scenario.spec.resolved_min_segment,
        "device_names": scenario.device_names,
        "changepoints": list(scenario.changepoints),
        "true_inputs": [[float(v) for v in row] for row in scenario.true_inputs],
        "noise": [float(v) for v in scenario.noise],
    }
    with open(out / "scenario.json", "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def read_scenario(truth_dir) -> Scenario:
    """Rebuild a Scenario from a directory written by ``write_scenario``."""
    truth = Path(truth_dir)
    library = load_library(truth / "library.json")
    names, signals = _read_wide_csv(truth / "truth.csv")
    if names != library.names:
        raise ValidationError(f"{truth}: truth.csv devices {names} != library {library.names}")
    aggregate = read_signal_csv(truth / "aggregate.csv")
    with open(truth / "scenario.json") as fh:
        meta = json.load(fh)
    n = signals.shape[1]
    bits = [0] * n
    for c in meta["changepoints"]:
        bits[c] = 1
    spec = ScenarioSpec(
        devices=tuple(
            DeviceSpec(name=m.device_name, order=m.order, coeffs=tuple(m.coeffs),
                       instant_off=m.instant_off)
            for m in library.models
        ),
        horizon=n - 1,
        num_changes=len(meta["changepoints"]),
        min_segment=meta["min_segment"],
        noise_sigma=meta["noise_sigma"],
        seed=meta["seed"],
    )
    return Scenario(
        spec=spec,
        library=library,
        true_inputs=np.asarray(meta["true_inputs"], dtype=float),
        true_delta=Segmentation(tuple(bits)),
        device_signals=signals,
        noise=np.asarray(meta["noise"], dtype=float),
        aggregate=aggregate,
    )


def write_result(out_dir, result: DisaggResult) -> None:
    """Emit devices.csv, summary.json and plotdata.csv for one run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_wide_csv(
        out / "devices.csv",
        result.device_names,
        result.per_device_signals,
        extra=("residual", result.residual),
    )
    summary = {
        "changepoints": list(result.changepoints),
        "delta_u_per_segment": [[float(v) for v in du] for du in result.delta_u],
        "log_post": float(result.log_post),
        "bank_size_trace": list(result.bank_size_trace),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    with open(out / "plotdata.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "series", "watts"])
        n = result.aggregate.size
        for t in range(n):
            writer.writerow([t, "aggregate", _fmt(result.aggregate[t])])
        for i, name in enumerate(result.device_names):
            for t in range(n):
                writer.writerow([t, name, _fmt(result.per_device_signals[i, t])])
        for t in range(n):
            writer.writerow([t, "residual", _fmt(result.residual[t])])


def read_result(result_dir) -> DisaggResult:
    """Rebuild a DisaggResult from a directory written by ``write_result``."""
    rdir = Path(result_dir)
    names, columns = _read_wide_csv(rdir / "devices.csv")
    if not names or names[-1] != "residual":
        raise ValidationError(f"{rdir}: devices.csv must end with a residual column")
    device_names = names[:-1]
    signals = columns[:-1]
    residual = columns[-1]
    with open(rdir / "summary.json") as fh:
        summary = json.load(fh)
    n = signals.shape[1]
    bits = [0] * n
    for c in summary["changepoints"]:
        bits[c] = 1
    return DisaggResult(
        best_seg=Segmentation(tuple(bits)),
        delta_u=tuple(np.asarray(du, dtype=float) for du in summary["delta_u_per_segment"]),
        per_device_signals=signals,
        log_post=float(summary["log_post"]),
        bank_size_trace=tuple(summary["bank_size_trace"]),
        device_names=tuple(device_names),
        aggregate=signals.sum(axis=0) + residual,
    )


def load_params_file(path) -> dict:
    """Read a JSON engine-parameter file into a plain dict."""
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as err:
            raise ValidationError(f"{path}: not valid JSON: {err}") from err
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}: parameter file must hold a JSON object")
    return payload
