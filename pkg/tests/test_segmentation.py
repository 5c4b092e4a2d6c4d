import pytest
from hypothesis import given
from hypothesis import strategies as st

from disagg.segmentation import (
    Segmentation,
    from_delta,
    min_segment_ok,
    segment_spans,
    to_changepoints,
)


def test_no_changes():
    assert to_changepoints(from_delta((0, 0, 0))) == []


def test_changepoints_are_one_bit_positions():
    assert to_changepoints(from_delta((0, 1, 0, 1))) == [1, 3]


def test_change_at_first_sample_allowed():
    seg = from_delta((1, 0, 0))
    assert to_changepoints(seg) == [0]


@given(st.lists(st.integers(0, 1), min_size=1, max_size=50))
def test_round_trip_identity(bits):
    seg = from_delta(bits)
    assert list(seg.delta) == bits
    rebuilt = [0] * len(bits)
    for c in to_changepoints(seg):
        rebuilt[c] = 1
    assert rebuilt == bits


@given(st.lists(st.integers(0, 1), min_size=1, max_size=50))
def test_spans_partition_all_samples(bits):
    seg = from_delta(bits)
    spans = segment_spans(seg)
    assert sum(end - start + 1 for start, end, _ in spans) == len(bits)
    # ordered, non-overlapping, exactly one open span at the end
    for (s1, e1, c1), (s2, e2, c2) in zip(spans, spans[1:]):
        assert e1 + 1 == s2
        assert c1
    assert not spans[-1][2]


def test_all_zero_delta_passes_floor():
    assert min_segment_ok(from_delta((0, 0, 0, 0)), 2)


def test_short_closed_segment_fails_floor():
    assert not min_segment_ok(from_delta((0, 1, 1, 0)), 2)


def test_trailing_open_segment_exempt():
    # closed leading segment has length 2; the open tail is not checked
    assert min_segment_ok(from_delta((0, 0, 1, 0, 0)), 2)


def test_floor_applies_once_segment_closes():
    assert not min_segment_ok(from_delta((0, 0, 1, 0, 1)), 3)
    assert min_segment_ok(from_delta((0, 0, 1, 0, 1)), 2)


def test_leading_closed_segment_is_checked():
    # the run before the first change closes when that change lands
    assert not min_segment_ok(from_delta((0, 1, 0, 0, 0)), 2)


def test_empty_leading_span_is_skipped():
    spans = segment_spans(from_delta((1, 0, 0)))
    assert spans == [(0, 2, False)]
    assert min_segment_ok(from_delta((1, 0, 0)), 5)


def test_prefix_time_argument():
    seg = from_delta((0, 0, 1, 0, 0))
    assert segment_spans(seg, 1) == [(0, 1, False)]
    assert min_segment_ok(seg, 3, t=1)


def test_bad_bits_rejected():
    with pytest.raises(ValueError):
        Segmentation((0, 2, 0))


def test_serialize():
    assert from_delta((0, 1, 0, 1)).serialize() == "1,3"
    assert from_delta((0, 0)).serialize() == ""
