"""Online MAP segmentation of an aggregate signal over a bank of hypotheses.

Each hypothesis ("filter") is a change-bit sequence plus, for every segment
it opens, a box-constrained least-squares estimate of the input change that
entered that segment.  Scores are unnormalized log posteriors

    log p(delta) - sum_t e[t]^2 / (2 sigma^2)

kept in the log domain throughout.  One step of the engine: snapshot the
current best filters, extend every filter with a 0-bit and refresh its open
segment against the new sample, branch the snapshot with a 1-bit (closing
the open segment and starting a new one), then prune.

Within a segment the predicted aggregate is the steady level of all closed
segments plus the zero-state step response of the library to the segment's
input change, so segments decouple and each one is a small box-constrained
least-squares problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boxls import box_lstsq
from .errors import ValidationError
from .models import DeviceLibrary, FirModel
from .segmentation import Segmentation

__all__ = [
    "DisaggParams",
    "Filter",
    "FilterBank",
    "DisaggResult",
    "step_response_matrix",
    "estimate_segment",
    "log_posterior",
    "init_bank",
    "run_offline",
    "reconstruct_devices",
]


@dataclass(frozen=True)
class DisaggParams:
    """Knobs of the segmentation engine.

    ``prune_log_thresh`` is the relative offset below the best score in
    relative mode, or the absolute log threshold (may be -inf) in absolute
    mode.  ``branch_suppression_tol`` > 0 skips branching whenever the best
    filter's newest squared residual is within tol * sigma2.
    """

    sigma2: float
    change_prob: float = 0.01
    prune_mode: str = "relative"
    prune_log_thresh: float = 20.0
    beam_cap: int | None = 64
    enforce_min_segment: bool = False
    one_change_per_step: bool = False
    branch_suppression_tol: float = 0.0
    branch_tie_tol: float = 1e-12

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValidationError("sigma2 must be > 0")
        if not 0.0 < self.change_prob < 1.0:
            raise ValidationError("change_prob must be in (0, 1)")
        if self.prune_mode not in ("relative", "absolute"):
            raise ValidationError("prune_mode must be 'relative' or 'absolute'")
        if self.prune_mode == "relative" and not self.prune_log_thresh > 0:
            raise ValidationError("relative pruning needs a positive offset")
        if self.prune_mode == "absolute" and not self.prune_log_thresh < 0:
            raise ValidationError("absolute pruning needs a negative log threshold (or -inf)")
        if self.beam_cap is not None and self.beam_cap < 1:
            raise ValidationError("beam_cap must be >= 1 (or None for unbounded)")
        if self.branch_suppression_tol < 0:
            raise ValidationError("branch_suppression_tol must be >= 0")
        if self.branch_tie_tol < 0:
            raise ValidationError("branch_tie_tol must be >= 0")

    @property
    def log_change(self) -> float:
        return math.log(self.change_prob)

    @property
    def log_stay(self) -> float:
        return math.log1p(-self.change_prob)


def step_response_matrix(library: DeviceLibrary, max_offset: int) -> np.ndarray:
    """Unit-step responses of every device, rows = offsets 0..max_offset.

    Entry [tau, i] is the output of device i tau samples after a unit step;
    rows at tau >= order_i equal the DC gain.  This is the upward-step form;
    a downward step on an instant_off device uses the DC row at all offsets.
    """
    if max_offset < 0:
        raise ValidationError("max_offset must be >= 0")
    return np.column_stack([m.step_values(max_offset + 1) for m in library.models])


def _delta_bounds(models, levels=None) -> tuple[np.ndarray, np.ndarray]:
    # per-segment change bounds derived from the stored input-level range;
    # for instant_off devices the cumulative level (when known) tightens the
    # box, since a downward step carries no transient that could otherwise
    # identify the device
    lo = np.empty(len(models))
    hi = np.empty(len(models))
    for j, m in enumerate(models):
        if m.instant_off and levels is not None:
            lo[j] = min(m.input_min - levels[j], 0.0)
            hi[j] = max(m.input_max - levels[j], 0.0)
        else:
            lo[j] = m.input_min - m.input_max
            hi[j] = m.input_max - m.input_min
    return lo, hi


def _normalize_mask(support_mask, n_devices: int) -> np.ndarray:
    if support_mask is None:
        return np.ones(n_devices, dtype=bool)
    mask = np.zeros(n_devices, dtype=bool)
    for i in support_mask:
        if not 0 <= i < n_devices:
            raise ValidationError(f"support mask index {i} out of range")
        mask[i] = True
    return mask


def estimate_segment(
    y_segment,
    y_ss_prev: float,
    library: DeviceLibrary,
    support_mask=None,
    levels=None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Estimate the input change entering one segment.

    Minimizes ``||(y_segment - y_ss_prev) - A @ du||^2`` over the per-device
    change bounds, where A holds the step responses at offsets 0..len-1.
    Devices outside ``support_mask`` are pinned to zero.  For instant_off
    devices the response depends on the sign of the change: with a single
    allowed device both signs are solved exactly, otherwise signs are fixed
    from an initial symmetric solve and the problem is re-solved once.
    ``levels`` (cumulative inputs before this segment) tightens instant_off
    devices' bounds to the reachable range.

    Returns ``(du, residuals, sse)``.
    """
    y_seg = np.asarray(y_segment, dtype=float)
    if y_seg.ndim != 1 or y_seg.size == 0:
        raise ValidationError("segment must be a non-empty 1-d sequence")
    r = y_seg - y_ss_prev
    n_dev = len(library)
    mask = _normalize_mask(support_mask, n_dev)
    idx = np.flatnonzero(mask)
    du_full = np.zeros(n_dev)
    if idx.size == 0:
        resid = r.copy()
        return du_full, resid, float(resid @ resid)

    models = [library.models[i] for i in idx]
    length = y_seg.size
    A_up = np.column_stack([m.step_values(length) for m in models])
    sub_levels = None if levels is None else np.asarray(levels, dtype=float)[idx]
    lo, hi = _delta_bounds(models, sub_levels)
    if np.any(lo > hi):
        raise ValidationError("infeasible change bounds: min > max")

    if not any(m.instant_off for m in models):
        du = box_lstsq(A_up, r, lo, hi)
        A_eff = A_up
    elif len(models) == 1:
        m = models[0]
        du_up = box_lstsq(A_up, r, np.maximum(lo, 0.0), hi)
        e_up = r - A_up @ du_up
        A_dn = np.full((length, 1), m.dc_gain)
        du_dn = box_lstsq(A_dn, r, lo, np.minimum(hi, 0.0))
        e_dn = r - A_dn @ du_dn
        if float(e_dn @ e_dn) < float(e_up @ e_up):
            du, A_eff = du_dn, A_dn
        else:
            du, A_eff = du_up, A_up
    else:
        # probe signs with the sign-symmetric (saturated) response for
        # instant_off devices, then re-solve once with signs fixed
        A_probe = A_up.copy()
        for j, m in enumerate(models):
            if m.instant_off:
                A_probe[:, j] = m.dc_gain
        du0 = box_lstsq(A_probe, r, lo, hi)
        A_eff = A_up.copy()
        lo_fixed, hi_fixed = lo.copy(), hi.copy()
        for j, m in enumerate(models):
            if not m.instant_off:
                continue
            if du0[j] < 0:
                A_eff[:, j] = m.dc_gain
                hi_fixed[j] = min(hi_fixed[j], 0.0)
            else:
                lo_fixed[j] = max(lo_fixed[j], 0.0)
        du = box_lstsq(A_eff, r, lo_fixed, hi_fixed)

    du_full[idx] = du
    resid = r - A_eff @ du
    return du_full, resid, float(resid @ resid)


class Filter:
    """One segmentation hypothesis and its running sufficient statistics.

    ``y_ss`` is the steady level contributed by all closed segments, i.e.
    the baseline the open segment is estimated against.  Change estimates
    freeze when their segment closes; the open segment's entry in
    ``delta_u`` is refreshed on every new sample.
    """

    __slots__ = (
        "bits", "changepoints", "delta_u", "masks", "y_ss", "levels",
        "sse_closed", "log_prior", "infeasible", "open_start", "open_sse",
        "last_residual", "log_post",
    )

    def __init__(self):
        self.bits: list[int] = []
        self.changepoints: list[int] = []
        self.delta_u: list[np.ndarray | None] = []
        self.masks: list[tuple[int, ...] | None] = []
        self.y_ss = 0.0
        self.levels: np.ndarray | None = None   # cumulative inputs of closed segments
        self.sse_closed = 0.0
        self.log_prior = 0.0
        self.infeasible = False
        self.open_start = 0
        self.open_sse = 0.0
        self.last_residual = math.nan
        self.log_post = -math.inf

    @classmethod
    def initial_zero(cls, params: DisaggParams) -> "Filter":
        f = cls()
        f.bits = [0]
        f.log_prior = params.log_stay
        f.log_post = f.log_prior
        return f

    @classmethod
    def initial_change(cls, params: DisaggParams, mask=None) -> "Filter":
        f = cls()
        f.bits = [1]
        f.changepoints = [0]
        f.delta_u = [None]
        f.masks = [mask]
        f.log_prior = params.log_change
        f.log_post = f.log_prior
        return f

    @property
    def num_changes(self) -> int:
        return len(self.changepoints)

    @property
    def total_sse(self) -> float:
        return self.sse_closed + self.open_sse

    @property
    def segmentation(self) -> Segmentation:
        return Segmentation(tuple(self.bits))

    def clone(self) -> "Filter":
        f = Filter()
        f.bits = list(self.bits)
        f.changepoints = list(self.changepoints)
        f.delta_u = list(self.delta_u)
        f.masks = list(self.masks)
        f.y_ss = self.y_ss
        f.levels = self.levels
        f.sse_closed = self.sse_closed
        f.log_prior = self.log_prior
        f.infeasible = self.infeasible
        f.open_start = self.open_start
        f.open_sse = self.open_sse
        f.last_residual = self.last_residual
        f.log_post = self.log_post
        return f

    def refresh(self, y_arr: np.ndarray, t: int, library: DeviceLibrary, params: DisaggParams):
        """Re-estimate the open segment against samples open_start..t."""
        if self.infeasible:
            self.log_post = -math.inf
            return
        if self.levels is None:
            self.levels = np.zeros(len(library))    # zero initial conditions
        seg = y_arr[self.open_start:t + 1]
        if not self.changepoints:
            # leading segment: input pinned at the initial zero level
            self.open_sse = float(seg @ seg)
            self.last_residual = float(seg[-1])
        else:
            du, resid, sse = estimate_segment(seg, self.y_ss, library,
                                              self.masks[-1], self.levels)
            self.delta_u[-1] = du
            self.open_sse = sse
            self.last_residual = float(resid[-1])
        self.log_post = self.log_prior - self.total_sse / (2.0 * params.sigma2)

    def extend_zero(self, y_arr: np.ndarray, t_new: int, library: DeviceLibrary, params: DisaggParams):
        self.bits.append(0)
        self.log_prior += params.log_stay
        self.refresh(y_arr, t_new, library, params)

    def branched(self, y_arr: np.ndarray, t_new: int, library: DeviceLibrary,
                 params: DisaggParams, mask=None) -> "Filter":
        """Child with a change at t_new; self stays at time t_new - 1."""
        child = self.clone()
        child.bits.append(1)
        child.log_prior += params.log_change
        if params.enforce_min_segment and (t_new - child.open_start) < library.max_order:
            child.infeasible = True
        if child.changepoints:
            du = child.delta_u[-1]
            child.y_ss += float(library.dc_gains @ du)
            if child.levels is not None:
                child.levels = child.levels + du
        child.sse_closed += child.open_sse
        child.changepoints.append(t_new)
        child.delta_u.append(None)
        child.masks.append(mask)
        child.open_start = t_new
        child.refresh(y_arr, t_new, library, params)
        return child


def log_posterior(filt: Filter, params: DisaggParams) -> float:
    """Unnormalized log posterior of a filter's segmentation and estimates."""
    if filt.infeasible:
        return -math.inf
    return filt.log_prior - filt.total_sse / (2.0 * params.sigma2)


def _rank_key(f: Filter):
    return (-f.log_post, f.num_changes, tuple(f.bits))


class FilterBank:
    """The evolving set of segmentation hypotheses over an aggregate signal."""

    def __init__(self, library: DeviceLibrary, params: DisaggParams):
        if len(library) == 0:
            raise ValidationError("device library is empty")
        self.library = library
        self.params = params
        self.t = -1
        self._y = np.empty(64)
        self.bank_size_trace: list[int] = []
        if params.one_change_per_step:
            branch_masks = [(i,) for i in range(len(library))]
        else:
            branch_masks = [None]
        self._branch_masks = branch_masks
        self.filters: list[Filter] = [Filter.initial_zero(params)]
        self.filters += [Filter.initial_change(params, m) for m in branch_masks]

    @property
    def y(self) -> np.ndarray:
        return self._y[:self.t + 1]

    def best(self) -> Filter:
        return min(self.filters, key=_rank_key)

    def step(self, y_value: float) -> "FilterBank":
        """Ingest one sample: snapshot / extend / branch / prune."""
        y_value = float(y_value)
        if not math.isfinite(y_value):
            raise ValidationError("aggregate sample is not finite")
        t_new = self.t + 1
        if t_new >= self._y.size:
            grown = np.empty(self._y.size * 2)
            grown[:self._y.size] = self._y
            self._y = grown
        self._y[t_new] = y_value
        y_arr = self._y[:t_new + 1]
        params = self.params

        if t_new == 0:
            # initial filters already carry their bit for sample 0
            for f in self.filters:
                f.refresh(y_arr, 0, self.library, params)
        else:
            max_lp = max(f.log_post for f in self.filters)
            tie_floor = max_lp - params.branch_tie_tol * abs(max_lp)
            sources = [f.clone() for f in self.filters if f.log_post >= tie_floor]
            for f in self.filters:
                f.extend_zero(y_arr, t_new, self.library, params)
            suppress = False
            if params.branch_suppression_tol > 0:
                best = max(self.filters, key=lambda f: f.log_post)
                suppress = best.last_residual**2 <= params.branch_suppression_tol * params.sigma2
            if not suppress:
                for src in sources:
                    for mask in self._branch_masks:
                        self.filters.append(src.branched(y_arr, t_new, self.library, params, mask))
        self.t = t_new
        self._prune()
        self.bank_size_trace.append(len(self.filters))
        return self

    def _prune(self):
        params = self.params
        ranked = sorted(self.filters, key=lambda f: (-f.log_post, f.num_changes))
        if params.prune_mode == "absolute":
            floor = params.prune_log_thresh
        else:
            floor = ranked[0].log_post - params.prune_log_thresh
        kept = [f for f in ranked if f.log_post >= floor]
        if not kept:
            kept = [ranked[0]]          # the best filter is never pruned
        if params.beam_cap is not None:
            kept = kept[:params.beam_cap]
        self.filters = kept


def init_bank(library: DeviceLibrary, params: DisaggParams) -> FilterBank:
    """Fresh bank holding the no-change and change-at-start hypotheses."""
    return FilterBank(library, params)


@dataclass(frozen=True)
class DisaggResult:
    """Output of a full disaggregation run."""

    best_seg: Segmentation
    delta_u: tuple[np.ndarray, ...]
    per_device_signals: np.ndarray      # (D, T+1)
    log_post: float
    bank_size_trace: tuple[int, ...]
    device_names: tuple[str, ...]
    aggregate: np.ndarray
    residual: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "residual",
            np.asarray(self.aggregate, dtype=float) - self.per_device_signals.sum(axis=0),
        )

    @property
    def changepoints(self) -> tuple[int, ...]:
        return self.best_seg.changepoints


def reconstruct_devices(filt: Filter, library: DeviceLibrary) -> np.ndarray:
    """Per-device signals implied by a filter's segment estimates.

    Within each segment a device outputs its own steady level plus its step
    response to its component of the segment's change (instant_off devices
    drop straight to the new level on downward changes).  Rows sum to the
    aggregate prediction the filter was scored against.
    """
    length = len(filt.bits)
    n_dev = len(library)
    out = np.zeros((n_dev, length))
    levels = np.zeros(n_dev)
    cps = list(filt.changepoints)
    bounds = cps + [length]
    for l, start in enumerate(cps):
        end = bounds[l + 1]
        du = filt.delta_u[l]
        seg_len = end - start
        for i, m in enumerate(library.models):
            if m.instant_off and du[i] < 0:
                out[i, start:end] = levels[i] + m.dc_gain * du[i]
            else:
                out[i, start:end] = levels[i] + m.step_values(seg_len) * du[i]
        levels = levels + library.dc_gains * du
    return out


def run_offline(y, library: DeviceLibrary, params: DisaggParams) -> DisaggResult:
    """Run the bank over a whole signal and reconstruct the MAP hypothesis.

    Ties on the final score break toward fewer changepoints, then the
    lexicographically smallest bit sequence.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValidationError("aggregate signal must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(y)):
        raise ValidationError("aggregate signal contains non-finite values")
    bank = init_bank(library, params)
    for value in y:
        bank.step(value)
    best = bank.best()
    return DisaggResult(
        best_seg=best.segmentation,
        delta_u=tuple(np.array(du) for du in best.delta_u),
        per_device_signals=reconstruct_devices(best, library),
        log_post=best.log_post,
        bank_size_trace=tuple(bank.bank_size_trace),
        device_names=tuple(library.names),
        aggregate=y.copy(),
    )
