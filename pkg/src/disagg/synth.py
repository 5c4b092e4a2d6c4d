"""Ground-truth scenario generation for fitting and disaggregation tests.

A scenario is a drawn device library, piecewise-constant inputs with a
guaranteed minimum spacing between change times, the noise-free per-device
signals, and the noisy aggregate.  Everything is deterministic given the
seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .models import DeviceLibrary, FirModel, simulate_device
from .segmentation import Segmentation

__all__ = ["DeviceSpec", "ScenarioSpec", "Scenario", "generate"]

# defaults mirror the measurement campaign the engine targets: fifth-order
# devices drawing between 70 W and 1800 W, sampled at 0.13 Hz
DEFAULT_ORDER = 5
DEFAULT_GAIN_RANGE = (70.0, 1800.0)
DEFAULT_SAMPLE_PERIOD = 1.0 / 0.13


@dataclass(frozen=True)
class DeviceSpec:
    """How to draw (or pin) one device model."""

    name: str | None = None
    order: int = DEFAULT_ORDER
    coeffs: tuple[float, ...] | None = None
    dc_gain_range: tuple[float, float] = DEFAULT_GAIN_RANGE
    instant_off: bool = False
    overshoot: float = 0.0              # relative inflation of the first coefficient
    levels: tuple[float, ...] = (0.0, 1.0)

    def __post_init__(self):
        if self.order < 0:
            raise ValidationError("device order must be >= 0")
        if self.coeffs is not None and len(self.coeffs) != self.order + 1:
            raise ValidationError("explicit coeffs must have length order+1")
        if len(self.levels) < 2 or 0.0 not in self.levels:
            raise ValidationError("levels must contain 0 and at least one other value")


@dataclass(frozen=True)
class ScenarioSpec:
    devices: tuple[DeviceSpec, ...]
    horizon: int = 500                  # last sample index; signals have horizon+1 samples
    num_changes: int = 8
    min_segment: int | None = None      # defaults to the largest device order
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.devices:
            raise ValidationError("scenario needs at least one device")
        if self.horizon < 0:
            raise ValidationError("horizon must be >= 0")
        if self.num_changes < 0:
            raise ValidationError("num_changes must be >= 0")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")

    @property
    def resolved_min_segment(self) -> int:
        n_floor = max(d.order for d in self.devices)
        if self.min_segment is None:
            return max(n_floor, 1)
        if self.min_segment < n_floor:
            raise ValidationError(
                f"min_segment {self.min_segment} is below the largest device order {n_floor}"
            )
        return max(self.min_segment, 1)


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    library: DeviceLibrary
    true_inputs: np.ndarray             # (D, T+1)
    true_delta: Segmentation
    device_signals: np.ndarray          # (D, T+1), noise-free
    noise: np.ndarray                   # (T+1,)
    aggregate: np.ndarray               # (T+1,)

    @property
    def device_names(self) -> list[str]:
        return self.library.names

    @property
    def changepoints(self) -> tuple[int, ...]:
        return self.true_delta.changepoints


def _draw_model(dev: DeviceSpec, index: int, n_devices: int,
                noise_sigma: float, rng: np.random.Generator) -> FirModel:
    name = dev.name if dev.name is not None else f"device_{index + 1}"
    if dev.coeffs is not None:
        coeffs = np.asarray(dev.coeffs, dtype=float)
    else:
        raw = rng.uniform(0.5, 1.5, dev.order + 1)
        raw[0] *= 1.0 + dev.overshoot
        gain = rng.uniform(*dev.dc_gain_range)
        coeffs = raw * (gain / raw.sum())
    return FirModel(
        device_name=name,
        order=dev.order,
        coeffs=coeffs,
        noise_variance=noise_sigma**2 / n_devices,
        input_min=min(0.0, min(dev.levels)),
        input_max=max(0.0, max(dev.levels)),
        instant_off=dev.instant_off,
    )


def _draw_change_times(horizon: int, num_changes: int, min_seg: int,
                       rng: np.random.Generator) -> list[int]:
    # first change at >= min_seg, spacing >= min_seg, and min_seg samples
    # left after the last change, so every true segment settles
    slack = (horizon + 1) - min_seg * (num_changes + 1)
    if num_changes > 0 and slack < 0:
        raise ValidationError(
            f"horizon {horizon} too short for {num_changes} changes with "
            f"min segment {min_seg}"
        )
    if num_changes == 0:
        return []
    extras = np.sort(rng.integers(0, slack + 1, size=num_changes))
    return [min_seg * (k + 1) + int(extras[k]) for k in range(num_changes)]


def generate(spec: ScenarioSpec) -> Scenario:
    """Draw a scenario: library, inputs, noise-free signals, noisy aggregate."""
    rng = np.random.default_rng(spec.seed)
    n_dev = len(spec.devices)
    min_seg = spec.resolved_min_segment
    models = [
        _draw_model(dev, i, n_dev, spec.noise_sigma, rng)
        for i, dev in enumerate(spec.devices)
    ]
    library = DeviceLibrary(tuple(models))

    change_times = _draw_change_times(spec.horizon, spec.num_changes, min_seg, rng)
    which = rng.integers(0, n_dev, size=len(change_times))

    n_samples = spec.horizon + 1
    inputs = np.zeros((n_dev, n_samples))
    current = np.zeros(n_dev)
    bits = np.zeros(n_samples, dtype=int)
    prev_t = 0
    for t, dev_idx in zip(change_times, which):
        inputs[:, prev_t:t] = current[:, None]
        levels = spec.devices[dev_idx].levels
        options = [lv for lv in levels if lv != current[dev_idx]]
        current = current.copy()
        current[dev_idx] = options[int(rng.integers(0, len(options)))]
        bits[t] = 1
        prev_t = t
    inputs[:, prev_t:] = current[:, None]

    device_signals = np.vstack([
        simulate_device(models[i], inputs[i]) for i in range(n_dev)
    ])
    drawn = rng.normal(0.0, spec.noise_sigma, n_samples) if spec.noise_sigma > 0 else np.zeros(n_samples)
    total = device_signals.sum(axis=0)
    aggregate = total + drawn
    # store the noise as seen by the aggregate so conservation is exact
    noise = aggregate - total
    return Scenario(
        spec=spec,
        library=library,
        true_inputs=inputs,
        true_delta=Segmentation(tuple(int(b) for b in bits)),
        device_signals=device_signals,
        noise=noise,
        aggregate=aggregate,
    )
