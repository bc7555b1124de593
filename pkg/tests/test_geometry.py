import numpy as np
import pytest
from hypothesis import given, strategies as st

from twister.geometry import (
    DIRECTIONS,
    ScanDirection,
    ScanOrder,
    channel_reassemble,
    channel_scan,
    channel_sequence,
    cross_scan,
    fold,
    unfold,
)
from twister.ssm import SelectiveSSM
from twister.tensor import ShapeError

from conftest import rel_err

GRID = np.array([[["a"], ["b"]], [["c"], ["d"]]], dtype=object)


def letters(seq):
    return tuple(seq[:, 0])


def test_enums_have_expected_members():
    assert len(ScanDirection) == 4
    assert len(ScanOrder) == 5


@pytest.mark.parametrize(
    "direction, expected",
    [
        (ScanDirection.ROW_FORWARD, ("a", "b", "c", "d")),
        (ScanDirection.COL_FORWARD, ("a", "c", "b", "d")),
        (ScanDirection.ROW_BACKWARD, ("d", "c", "b", "a")),
        (ScanDirection.COL_BACKWARD, ("d", "b", "c", "a")),
    ],
)
def test_unfold_enumeration(direction, expected):
    x = np.arange(4.0).reshape(2, 2, 1)
    names = np.array(["a", "b", "c", "d"])
    assert tuple(names[unfold(x, direction)[:, 0].astype(int)]) == expected


@given(h=st.integers(1, 7), w=st.integers(1, 7), c=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_fold_unfold_roundtrip(h, w, c, seed):
    x = np.random.default_rng(seed).standard_normal((h, w, c))
    for d in DIRECTIONS:
        assert np.array_equal(fold(unfold(x, d), d, h, w), x)
    rot = x[::-1, ::-1]
    for d in (ScanDirection.ROW_FORWARD, ScanDirection.COL_FORWARD):
        assert np.array_equal(unfold(rot, d), unfold(x, d)[::-1])


def test_fold_constant_and_rotation():
    assert np.array_equal(fold(np.full((6, 2), 3.0), ScanDirection.COL_FORWARD, 2, 3), np.full((2, 3, 2), 3.0))
    x = np.arange(4.0).reshape(2, 2, 1)
    rotated = fold(unfold(x, ScanDirection.ROW_FORWARD), ScanDirection.ROW_BACKWARD, 2, 2)
    assert np.array_equal(rotated, x[::-1, ::-1])


def test_fold_rejects_bad_length():
    with pytest.raises(ShapeError):
        fold(np.zeros((5, 1)), ScanDirection.ROW_FORWARD, 2, 3)


@pytest.fixture
def four(rng):
    return [SelectiveSSM.init(3, 4, rng) for _ in range(4)]


def test_cross_scan_zero_input(four):
    assert not cross_scan(np.zeros((3, 4, 3)), four).any()


def test_cross_scan_single_pixel(four, rng):
    x = rng.standard_normal((1, 1, 3))
    expected = sum(m(x.reshape(1, 3), parallel=False) for m in four).reshape(1, 1, 3)
    assert rel_err(cross_scan(x, four), expected) < 1e-14


def test_cross_scan_compositional_oracle(four, rng):
    x = rng.standard_normal((2, 3, 3))
    oracle = np.zeros((2, 3, 3))
    for d, m in zip(DIRECTIONS, four):
        oracle += fold(m(unfold(x, d), parallel=False), d, 2, 3)
    assert rel_err(cross_scan(x, four), oracle) < 1e-12


def test_cross_scan_rejects_wrong_count(four):
    with pytest.raises(ValueError):
        cross_scan(np.zeros((2, 2, 3)), four[:3])


def test_cross_scan_rot180_symmetry_for_constant_input(rng):
    shared = [SelectiveSSM.init(2, 3, rng)] * 4
    for h, w in [(2, 2), (3, 4), (1, 5)]:
        x = np.broadcast_to(rng.standard_normal(2), (h, w, 2))
        y = cross_scan(x, shared)
        assert np.abs(y - y[::-1, ::-1]).max() < 1e-12


def test_channel_sequence_enumeration_and_roundtrip(rng):
    x = np.array([[[1.0, 2.0, 3.0]]])
    np.testing.assert_array_equal(channel_sequence(x)[:, 0, 0], [1.0, 2.0, 3.0])
    y = rng.standard_normal((3, 4, 6))
    for block in (1, 2, 3):
        assert np.array_equal(channel_reassemble(channel_sequence(y, block), 3, 4), y)
    with pytest.raises(ShapeError):
        channel_sequence(y, 4)


def test_channel_scan_location_independent(rng):
    ssm = SelectiveSSM.init(1, 4, rng)
    x = rng.standard_normal((3, 4, 7))
    out = channel_scan(x, ssm)
    perm = rng.permutation(12)
    xp = x.reshape(12, 7)[perm].reshape(3, 4, 7)
    outp = channel_scan(xp, ssm)
    assert np.array_equal(outp.reshape(12, 7), out.reshape(12, 7)[perm])


def test_channel_scan_is_a_1d_scan_per_pixel(rng):
    ssm = SelectiveSSM.init(1, 3, rng)
    x = rng.standard_normal((2, 2, 5))
    out = channel_scan(x, ssm)
    for i in range(2):
        for j in range(2):
            single = ssm(x[i, j][:, None], parallel=False)[:, 0]
            assert rel_err(out[i, j], single) < 1e-13


def test_bidirectional_channel_scan(rng):
    ssm = SelectiveSSM.init(1, 3, rng)
    x = rng.standard_normal((2, 3, 5))
    fwd = channel_scan(x, ssm)
    both = channel_scan(x, ssm, bidirectional=True)
    bwd = channel_scan(x[..., ::-1], ssm)[..., ::-1]
    assert rel_err(both, fwd + bwd) < 1e-13
