"""Per-device FIR models: estimation from plug-level traces and storage.

A device is modelled as a finite impulse response of its (piecewise
constant) input: z[t] = sum_j coeffs[j] * u[t-j] + noise, with zero input
assumed before t = 0.  ``detect_binary_input`` recovers an on/off input
from a raw trace, ``fit_fir`` solves the least-squares coefficient fit,
``select_order`` picks the order by AIC/BIC, and a library of fitted
models round-trips through a JSON file.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IllPosedFitError, LibraryFormatError, ValidationError

__all__ = [
    "TrainingTrace",
    "InputSignal",
    "FirModel",
    "DeviceLibrary",
    "detect_binary_input",
    "fit_fir",
    "select_order",
    "dc_gain",
    "save_library",
    "load_library",
    "simulate_device",
]

# Residual variances below this relative floor are treated as "exact fit"
# so that information criteria tie and parsimony picks the smaller order.
_RSS_REL_FLOOR = 1e-24


@dataclass(frozen=True)
class TrainingTrace:
    """A plug-level power recording for one device."""

    device_name: str
    sample_period: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValidationError(f"trace {self.device_name!r}: samples must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(samples)):
            raise ValidationError(f"trace {self.device_name!r}: samples contain non-finite values")
        if not self.sample_period > 0:
            raise ValidationError(f"trace {self.device_name!r}: sample_period must be > 0")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class InputSignal:
    """An estimated input sequence, same length as its source trace."""

    values: np.ndarray
    is_binary: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.is_binary and not np.all(np.isin(values, (0.0, 1.0))):
            raise ValidationError("binary input signal contains values other than 0/1")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class FirModel:
    """FIR coefficients and metadata for one device.

    ``input_min``/``input_max`` bound the input level (0 is always inside);
    per-segment change bounds used during disaggregation are derived from
    them.  ``instant_off`` marks devices whose output drops straight to the
    new steady level on a downward input change.
    """

    device_name: str
    order: int
    coeffs: np.ndarray
    noise_variance: float = 0.0
    input_min: float = 0.0
    input_max: float = 1.0
    instant_off: bool = False

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", coeffs)
        if self.order < 0:
            raise ValidationError(f"model {self.device_name!r}: order must be >= 0")
        if coeffs.ndim != 1 or coeffs.size != self.order + 1:
            raise ValidationError(
                f"model {self.device_name!r}: coeffs length {coeffs.size} != order+1 = {self.order + 1}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValidationError(f"model {self.device_name!r}: coeffs contain non-finite values")
        if self.noise_variance < 0:
            raise ValidationError(f"model {self.device_name!r}: noise_variance must be >= 0")
        if not (self.input_min <= 0.0 <= self.input_max):
            raise ValidationError(
                f"model {self.device_name!r}: input bounds must satisfy input_min <= 0 <= input_max"
            )

    @property
    def dc_gain(self) -> float:
        return float(np.sum(self.coeffs))

    def step_values(self, length: int) -> np.ndarray:
        """Unit-step response at offsets 0..length-1 (saturates at the DC gain)."""
        out = np.full(length, self.dc_gain)
        k = min(length, self.order + 1)
        out[:k] = np.cumsum(self.coeffs[:k])
        return out


def dc_gain(model: FirModel) -> float:
    """Steady-state output per unit input: the sum of the FIR coefficients."""
    return model.dc_gain


@dataclass(frozen=True)
class DeviceLibrary:
    """An ordered collection of fitted device models with unique names."""

    models: tuple[FirModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        names = [m.device_name for m in self.models]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ValidationError(f"duplicate device names in library: {sorted(dupes)}")

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    @property
    def names(self) -> list[str]:
        return [m.device_name for m in self.models]

    @property
    def max_order(self) -> int:
        """Largest model order; the minimum closed-segment length."""
        return max(m.order for m in self.models) if self.models else 0

    @property
    def dc_gains(self) -> np.ndarray:
        return np.array([m.dc_gain for m in self.models])

    @property
    def noise_variance(self) -> float:
        """Aggregate noise variance: sum of the per-device variances."""
        return float(sum(m.noise_variance for m in self.models))


def detect_binary_input(trace: TrainingTrace, on_threshold: float, debounce: int = 1) -> InputSignal:
    """Estimate an on/off input from a power trace by thresholding with hysteresis.

    A state switch is committed only once the trace stays on the other side
    of ``on_threshold`` for at least ``debounce`` consecutive samples; the
    committed switch is aligned to the first sample of that run.
    """
    if not on_threshold > 0:
        raise ValidationError("on_threshold must be > 0")
    if debounce < 1:
        raise ValidationError("debounce must be >= 1")
    sides = trace.samples >= on_threshold
    out = np.empty(len(trace), dtype=float)
    state = False
    pos = 0
    for side, run in itertools.groupby(sides):
        n = sum(1 for _ in run)
        if side != state and n >= debounce:
            state = side
        out[pos:pos + n] = 1.0 if state else 0.0
        pos += n
    return InputSignal(out, is_binary=True)


def _regressors(u: np.ndarray, order: int, instant_off: bool = False) -> np.ndarray:
    """Lagged-input matrix with zeros before t = 0; row t is (u[t], ..., u[t-order]).

    For instant_off devices the output sits at dc_gain * u[t] right after a
    downward change instead of playing out the turn-off tail, so rows inside
    that window use the saturated form u[t] * (1, ..., 1), which keeps the
    fit consistent with the model the disaggregation engine applies.
    """
    n = len(u)
    xi = np.zeros((n, order + 1))
    for j in range(order + 1):
        xi[j:, j] = u[: n - j]
    if instant_off:
        changes = [t for t in range(n) if u[t] != (u[t - 1] if t > 0 else 0.0)]
        for k, c in enumerate(changes):
            if u[c] >= (u[c - 1] if c > 0 else 0.0):
                continue
            stop = min(c + order + 1, n)
            if k + 1 < len(changes):
                stop = min(stop, changes[k + 1])
            xi[c:stop, :] = u[c:stop, None]
    return xi


def fit_fir(trace: TrainingTrace, input_signal: InputSignal, order: int, instant_off: bool = False) -> FirModel:
    """Least-squares FIR fit of a trace against its (known) input.

    Returns the coefficient vector minimizing the sum of squared residuals
    over all samples, with the unbiased residual variance and the observed
    input-level range (extended to include 0) as the model's input bounds.
    """
    if order < 0:
        raise ValidationError("order must be >= 0")
    if len(input_signal) != len(trace):
        raise ValidationError("input signal and trace must have equal length")
    n = len(trace)
    if n <= order + 1:
        raise ValidationError(f"trace {trace.device_name!r}: need more than order+1 = {order + 1} samples, got {n}")
    u = np.asarray(input_signal.values, dtype=float)
    xi = _regressors(u, order, instant_off)
    if np.linalg.matrix_rank(xi) < order + 1:
        raise IllPosedFitError(trace.device_name, f"order {order}, input does not excite all lags")
    coeffs, _, _, _ = np.linalg.lstsq(xi, trace.samples, rcond=None)
    resid = trace.samples - xi @ coeffs
    rss = float(resid @ resid)
    noise_variance = rss / (n - (order + 1))
    return FirModel(
        device_name=trace.device_name,
        order=order,
        coeffs=coeffs,
        noise_variance=noise_variance,
        input_min=min(0.0, float(u.min())),
        input_max=max(0.0, float(u.max())),
        instant_off=instant_off,
    )


def _criterion(rss: float, n: int, k: int, z_scale: float, which: str) -> float:
    # Floor exact fits so noiseless data ties across orders and the
    # parsimony tie-break decides.
    sigma2 = max(rss / n, _RSS_REL_FLOOR * z_scale + 5e-324)
    loglik_part = n * math.log(sigma2)
    if which == "aic":
        return loglik_part + 2 * k
    if which == "bic":
        return loglik_part + k * math.log(n)
    raise ValidationError(f"unknown criterion {which!r} (expected 'aic' or 'bic')")


def select_order(
    trace: TrainingTrace,
    input_signal: InputSignal,
    max_order: int,
    criterion: str = "bic",
    instant_off: bool = False,
) -> int:
    """Pick the FIR order in 0..max_order minimizing AIC or BIC.

    Orders whose fit is ill-posed are skipped; ties break toward the
    smaller order.  Raises if no candidate order can be fit.
    """
    if max_order < 0:
        raise ValidationError("max_order must be >= 0")
    which = criterion.lower()
    n = len(trace)
    z_scale = float(np.mean(trace.samples**2))
    best_order = None
    best_score = math.inf
    last_err = None
    for order in range(max_order + 1):
        try:
            model = fit_fir(trace, input_signal, order, instant_off)
        except (IllPosedFitError, ValidationError) as err:
            last_err = err
            continue
        rss = model.noise_variance * (n - (order + 1))
        score = _criterion(rss, n, order + 1, z_scale, which)
        if score < best_score:
            best_score = score
            best_order = order
    if best_order is None:
        raise IllPosedFitError(trace.device_name, f"no order in 0..{max_order} could be fit: {last_err}")
    return best_order


def simulate_device(model: FirModel, u: np.ndarray) -> np.ndarray:
    """Noise-free device output for a piecewise-constant input (zero before t=0).

    Changes are assumed at least ``model.order`` samples apart so every
    transient settles before the next change.  Upward changes follow the
    FIR step response; downward changes on an ``instant_off`` device jump
    straight to the new steady level.
    """
    u = np.asarray(u, dtype=float)
    n = len(u)
    y = np.zeros(n)
    level = 0.0          # steady output of all settled changes
    prev_u = 0.0
    changes = [t for t in range(n) if u[t] != (u[t - 1] if t > 0 else 0.0)]
    bounds = changes + [n]
    # samples before the first change stay at the initial zero level
    for idx, start in enumerate(changes):
        end = bounds[idx + 1]
        du = u[start] - prev_u
        seg_len = end - start
        if model.instant_off and du < 0:
            y[start:end] = level + model.dc_gain * du
        else:
            y[start:end] = level + model.step_values(seg_len) * du
        level += model.dc_gain * du
        prev_u = u[start]
    return y


# ---------------------------------------------------------------------------
# library file round-trip


def _model_to_dict(m: FirModel) -> dict:
    return {
        "name": m.device_name,
        "order": m.order,
        "coeffs": [float(c) for c in m.coeffs],
        "noise_variance": float(m.noise_variance),
        "input_min": float(m.input_min),
        "input_max": float(m.input_max),
        "instant_off": bool(m.instant_off),
    }


def _model_from_dict(d: dict, path, index: int) -> FirModel:
    def need(key, types):
        if key not in d:
            raise LibraryFormatError(f"device #{index}: missing field", path=path, field=key)
        v = d[key]
        if not isinstance(v, types):
            raise LibraryFormatError(
                f"device #{index}: expected {types}, got {type(v).__name__}", path=path, field=key
            )
        return v

    name = need("name", str)
    order = need("order", int)
    coeffs = need("coeffs", list)
    try:
        return FirModel(
            device_name=name,
            order=order,
            coeffs=np.asarray(coeffs, dtype=float),
            noise_variance=float(need("noise_variance", (int, float))),
            input_min=float(need("input_min", (int, float))),
            input_max=float(need("input_max", (int, float))),
            instant_off=bool(need("instant_off", bool)),
        )
    except ValidationError as err:
        raise LibraryFormatError(str(err), path=path, device=name) from err


def save_library(lib: DeviceLibrary, path) -> None:
    payload = {"devices": [_model_to_dict(m) for m in lib.models]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_library(path) -> DeviceLibrary:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as err:
            raise LibraryFormatError(f"not valid JSON: {err}", path=path) from err
    if not isinstance(payload, dict) or "devices" not in payload:
        raise LibraryFormatError("top-level object must contain a 'devices' list", path=path)
    devices = payload["devices"]
    if not isinstance(devices, list):
        raise LibraryFormatError("'devices' must be a list", path=path, field="devices")
    models = [_model_from_dict(d, path, i) for i, d in enumerate(devices)]
    try:
        return DeviceLibrary(tuple(models))
    except ValidationError as err:
        raise LibraryFormatError(str(err), path=path) from err
