"""Exhaustive MAP search over all segmentations of a short signal.

Every candidate bit sequence is scored by replaying it through the same
filter-update machinery the online engine uses, so the two code paths
cannot drift apart.  Enumeration is a depth-first walk of the binary tree
of bit sequences, sharing prefix work between candidates; the horizon is
hard-capped because the tree has 2^(T+1) leaves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationCapError, ValidationError
from .filterbank import DisaggParams, Filter
from .models import DeviceLibrary
from .segmentation import Segmentation

__all__ = [
    "ENUMERATION_CAP",
    "OracleResult",
    "score_delta",
    "score_trajectory",
    "exact_map",
    "check_prefix_optimality",
]

ENUMERATION_CAP = 16


@dataclass(frozen=True)
class OracleResult:
    best_delta: Segmentation
    best_log_post: float
    full_table: dict[tuple[int, ...], float] | None = None


def _as_signal(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValidationError("signal must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(y)):
        raise ValidationError("signal contains non-finite values")
    return y


def _replay(y_arr: np.ndarray, bits, library: DeviceLibrary, params: DisaggParams) -> tuple[Filter, list[float]]:
    if bits[0]:
        f = Filter.initial_change(params)
    else:
        f = Filter.initial_zero(params)
    f.refresh(y_arr, 0, library, params)
    trajectory = [f.log_post]
    for t in range(1, len(bits)):
        if bits[t]:
            f = f.branched(y_arr, t, library, params)
        else:
            f.extend_zero(y_arr, t, library, params)
        trajectory.append(f.log_post)
    return f, trajectory


def score_delta(y, bits, library: DeviceLibrary, params: DisaggParams) -> float:
    """Log posterior of one bit sequence, via the engine's own update path."""
    y = _as_signal(y)
    if len(bits) != y.size:
        raise ValidationError("bit sequence and signal length differ")
    filt, _ = _replay(y, list(bits), library, params)
    return filt.log_post


def score_trajectory(y, bits, library: DeviceLibrary, params: DisaggParams) -> list[float]:
    """Log posterior of every prefix of ``bits`` against the matching prefix of y."""
    y = _as_signal(y)
    if len(bits) != y.size:
        raise ValidationError("bit sequence and signal length differ")
    _, trajectory = _replay(y, list(bits), library, params)
    return trajectory


def exact_map(
    y,
    library: DeviceLibrary,
    params: DisaggParams,
    materialize_table: bool = False,
) -> OracleResult:
    """Best segmentation over all 2^len(y) bit sequences.

    Ties break toward fewer changepoints, then the lexicographically
    smallest bit sequence.  Refuses signals longer than ENUMERATION_CAP.
    """
    y = _as_signal(y)
    length = y.size
    if length > ENUMERATION_CAP:
        raise EnumerationCapError(
            f"horizon {length} exceeds the exhaustive-search cap of {ENUMERATION_CAP} samples"
        )
    table: dict[tuple[int, ...], float] | None = {} if materialize_table else None
    best_key = None
    best: Filter | None = None

    roots = []
    for ctor in (Filter.initial_zero, Filter.initial_change):
        f = ctor(params)
        f.refresh(y, 0, library, params)
        roots.append(f)
    # explore 0-children before 1-children so equal-scoring candidates are
    # met in lexicographic order
    stack: list[Filter] = [roots[1], roots[0]]
    while stack:
        f = stack.pop()
        t_next = len(f.bits)
        if t_next == length:
            if table is not None:
                table[tuple(f.bits)] = f.log_post
            key = (-f.log_post, f.num_changes, tuple(f.bits))
            if best_key is None or key < best_key:
                best_key, best = key, f
            continue
        one = f.branched(y, t_next, library, params)
        f.extend_zero(y, t_next, library, params)
        stack.append(one)
        stack.append(f)
    return OracleResult(
        best_delta=best.segmentation,
        best_log_post=best.log_post,
        full_table=table,
    )


def check_prefix_optimality(
    result: OracleResult,
    y,
    library: DeviceLibrary,
    params: DisaggParams,
    tol: float = 1e-9,
) -> bool:
    """Does every changepoint of the MAP split it into MAP-optimal prefixes?

    For each change at t0 > 0 in ``result.best_delta``, the first t0 bits
    must attain the exhaustive maximum on the first t0 samples (within
    ``tol`` log-units).  Vacuously true without changepoints.
    """
    y = _as_signal(y)
    bits = result.best_delta.delta
    for t0 in result.best_delta.changepoints:
        if t0 == 0:
            continue
        prefix_score = score_delta(y[:t0], bits[:t0], library, params)
        prefix_best = exact_map(y[:t0], library, params).best_log_post
        if prefix_score < prefix_best - tol:
            return False
    return True
