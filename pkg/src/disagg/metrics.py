"""Scoring of disaggregation output against a ground-truth scenario."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .filterbank import DisaggResult
from .synth import Scenario

__all__ = ["EvalReport", "match_changepoints", "evaluate"]


@dataclass(frozen=True)
class EvalReport:
    changepoint_exact: bool
    precision: float
    recall: float
    f1: float
    window: int
    per_device_rmse: dict[str, float]
    energy_fraction_error: dict[str, float]
    bank_size_max: int
    bank_size_mean: float

    def render(self) -> str:
        lines = [
            f"changepoints exact: {'yes' if self.changepoint_exact else 'no'}",
            f"changepoint match (window +/-{self.window}): "
            f"precision {self.precision:.4f}  recall {self.recall:.4f}  f1 {self.f1:.4f}",
        ]
        for name in self.per_device_rmse:
            lines.append(
                f"{name}: rmse {self.per_device_rmse[name]:.4f} W, "
                f"energy fraction error {self.energy_fraction_error[name]:.6f}"
            )
        lines.append(f"bank size: max {self.bank_size_max}, mean {self.bank_size_mean:.2f}")
        return "\n".join(lines)

    def csv_header_and_row(self) -> tuple[list[str], list[str]]:
        header = ["changepoint_exact", "precision", "recall", "f1", "window"]
        row = [
            str(int(self.changepoint_exact)),
            repr(self.precision), repr(self.recall), repr(self.f1), str(self.window),
        ]
        for name in self.per_device_rmse:
            header += [f"rmse_{name}", f"energy_frac_err_{name}"]
            row += [repr(self.per_device_rmse[name]), repr(self.energy_fraction_error[name])]
        header += ["bank_size_max", "bank_size_mean"]
        row += [str(self.bank_size_max), repr(self.bank_size_mean)]
        return header, row


def match_changepoints(detected, truth, window: int) -> int:
    """Number of one-to-one matches within +/-window samples, greedy by distance."""
    pairs = sorted(
        (abs(d - t), i, j)
        for i, d in enumerate(detected)
        for j, t in enumerate(truth)
        if abs(d - t) <= window
    )
    used_d: set[int] = set()
    used_t: set[int] = set()
    matches = 0
    for _, i, j in pairs:
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        matches += 1
    return matches


def evaluate(result: DisaggResult, truth: Scenario, window: int = 2) -> EvalReport:
    """Score estimated signals and changepoints against the scenario truth."""
    names = list(result.device_names)
    if names != truth.device_names:
        raise ValidationError(
            f"device mismatch: result has {names}, truth has {truth.device_names}"
        )
    est = result.per_device_signals
    ref = truth.device_signals
    if est.shape != ref.shape:
        raise ValidationError(f"horizon mismatch: result {est.shape}, truth {ref.shape}")

    detected = list(result.changepoints)
    true_cps = list(truth.changepoints)
    matches = match_changepoints(detected, true_cps, window)
    precision = matches / len(detected) if detected else 1.0
    recall = matches / len(true_cps) if true_cps else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    rmse = {
        name: float(np.sqrt(np.mean((est[i] - ref[i]) ** 2)))
        for i, name in enumerate(names)
    }
    total_energy = float(ref.sum())
    if total_energy == 0:
        raise ValidationError("ground truth carries no energy; fractions undefined")
    frac_err = {
        name: abs(float(est[i].sum()) - float(ref[i].sum())) / total_energy
        for i, name in enumerate(names)
    }
    sizes = result.bank_size_trace
    return EvalReport(
        changepoint_exact=detected == true_cps,
        precision=precision,
        recall=recall,
        f1=f1,
        window=window,
        per_device_rmse=rmse,
        energy_fraction_error=frac_err,
        bank_size_max=max(sizes) if sizes else 0,
        bank_size_mean=float(np.mean(sizes)) if sizes else math.nan,
    )
