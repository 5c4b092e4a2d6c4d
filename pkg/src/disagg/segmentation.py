"""Segmentations of a signal into constant-input stretches.

Two equivalent encodings are used: a bit sequence ``delta`` where
``delta[t] = 1`` marks an input change between samples t-1 and t, and the
list of changepoint indices (the positions of the 1-bits).  A changepoint
at index c starts a new segment at sample c; the stretch before the first
changepoint carries the all-off initial input, and the stretch after the
last changepoint is still open.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "Segmentation",
    "from_delta",
    "to_changepoints",
    "segment_spans",
    "min_segment_ok",
]


@dataclass(frozen=True)
class Segmentation:
    """A change-bit sequence plus its derived changepoint indices."""

    delta: tuple[int, ...]
    changepoints: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.delta):
            raise ValueError("delta bits must be 0 or 1")
        object.__setattr__(
            self, "changepoints",
            tuple(i for i, b in enumerate(self.delta) if b),
        )

    def __len__(self) -> int:
        return len(self.delta)

    @property
    def num_changes(self) -> int:
        return len(self.changepoints)

    def serialize(self) -> str:
        """Comma-separated changepoint list, e.g. ``"3,41"``; empty string if none."""
        return ",".join(str(c) for c in self.changepoints)


def from_delta(bits) -> Segmentation:
    return Segmentation(tuple(int(b) for b in bits))


def to_changepoints(seg: Segmentation) -> list[int]:
    return list(seg.changepoints)


def segment_spans(seg: Segmentation, t: int | None = None) -> list[tuple[int, int, bool]]:
    """Split samples 0..t into (start, end, closed) spans, ends inclusive.

    The final span is open (closed=False).  When ``delta[0] = 1`` the empty
    leading span is omitted.
    """
    if t is None:
        t = len(seg.delta) - 1
    if t < 0:
        return []
    cps = [c for c in seg.changepoints if c <= t]
    starts = ([0] if not cps or cps[0] > 0 else []) + cps
    spans = []
    for i, s in enumerate(starts):
        if i + 1 < len(starts):
            spans.append((s, starts[i + 1] - 1, True))
        else:
            spans.append((s, t, False))
    return spans


def min_segment_ok(seg: Segmentation, n_floor: int, t: int | None = None) -> bool:
    """True iff every closed span through time t has length >= n_floor.

    The trailing open span is exempt until a later change closes it.
    """
    if n_floor < 1:
        raise ValueError("n_floor must be >= 1")
    return all(
        end - start + 1 >= n_floor
        for start, end, closed in segment_spans(seg, t)
        if closed
    )
