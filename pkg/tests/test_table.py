import numpy as np
import pytest

from haarthin.dyadic import DomainError, HaarId, enumerate_shapes, haar_eval, locate_nonzero, shape_count
from haarthin.table import CoefficientTable, new_state, recompute_oracle
from oracles import haar_values


def table_with(points, h, d=1):
    t = new_state(d)
    for p in points:
        t.insert(np.atleast_1d(p))
    if h:
        t.grow(h)
    return t


def test_new_state_is_empty():
    for d in (1, 3):
        t = new_state(d)
        assert (t.h, t.n_entries, t.n_kept) == (0, 0, 0)
        assert t.signed_sum(np.full(d, 0.3)) == 0


def test_grow_examples():
    t = new_state(1)
    t.grow(2)
    assert t.n_shapes == 2 and t.n_entries == 3
    assert not t.entries.any()
    assert table_with([0.1], 1).coefficient(HaarId((1,), (0,))) == 1
    assert table_with([0.1, 0.9], 1).coefficient(HaarId((1,), (0,))) == 0


def test_insert_examples():
    t = table_with([], 2)
    t.insert([0.6])
    assert t.coefficient(HaarId((1,), (0,))) == -1
    assert t.coefficient(HaarId((2,), (1,))) == 1
    assert t.coefficient(HaarId((2,), (0,))) == 0
    t = table_with([], 1, d=2)
    t.insert([0.2, 0.8])
    assert t.coefficient(HaarId((1, 0), (0, 0))) == 1
    assert t.coefficient(HaarId((0, 1), (0, 0))) == -1


def test_signed_sum_examples():
    t = table_with([0.1], 1)
    assert t.signed_sum([0.25]) == -1
    assert t.signed_sum([0.75]) == 1
    t = table_with([0.1, 0.9], 1)
    assert all(t.signed_sum([x]) == 0 for x in (0.0, 0.3, 0.6, 0.99))


def test_coefficient_examples():
    hid = HaarId((1,), (0,))
    assert table_with([], 1).coefficient(hid) == 0
    assert table_with([0.1, 0.2], 1).coefficient(hid) == 2


def test_recompute_oracle_examples():
    assert recompute_oracle([], HaarId((3,), (2,))) == 0
    assert recompute_oracle([0.3, 0.6], HaarId((1,), (0,))) == 0
    assert recompute_oracle([(0.1, 0.1)], HaarId((1, 1), (0, 0))) == 1


def test_unknown_id_and_bad_point():
    t = table_with([0.2], 2)
    with pytest.raises(KeyError):
        t.coefficient(HaarId((3,), (0,)))
    with pytest.raises(KeyError):
        t.coefficient(HaarId((1, 0), (0, 0)))
    with pytest.raises(DomainError):
        t.insert([1.0])
    with pytest.raises(DomainError):
        t.signed_sum([-0.5])
    with pytest.raises(ValueError):
        t.grow(2)
    with pytest.raises(ValueError):
        new_state(0)


def _oracle_entries(t):
    pts = t.kept_points
    return np.array([int(haar_values(hid, pts).sum()) for hid in t.ids()], dtype=np.int64)


@pytest.mark.parametrize("d,h_max", [(1, 8), (2, 8), (3, 6)])
def test_incremental_matches_oracle(d, h_max):
    rng = np.random.default_rng(d)
    for trial in range(3):
        t = new_state(d)
        n_ops = int(rng.integers(200, 2001)) if d < 3 else 400
        for _ in range(n_ops):
            if t.h < h_max and rng.random() < 0.01:
                t.grow(int(rng.integers(t.h + 1, h_max + 1)))
            else:
                t.insert(rng.random(d))
        if t.h < h_max:
            t.grow(h_max)
        np.testing.assert_array_equal(t.entries, _oracle_entries(t))


def test_incremental_matches_recompute_oracle_per_id():
    rng = np.random.default_rng(11)
    t = table_with(rng.random((150, 2)), 4, d=2)
    for hid in t.ids():
        assert t.coefficient(hid) == recompute_oracle(t.kept_points, hid)


@pytest.mark.parametrize("d,h", [(1, 7), (2, 5), (3, 4)])
def test_bounded_change_per_insert(d, h):
    rng = np.random.default_rng(3)
    t = table_with(rng.random((50, d)), h, d)
    for _ in range(100):
        before = t.entries.copy()
        t.insert(rng.random(d))
        delta = t.entries - before
        assert np.count_nonzero(delta) == shape_count(h, d)
        assert set(np.unique(delta)) <= {-1, 0, 1}


@pytest.mark.parametrize("d,h", [(1, 9), (2, 6), (3, 4)])
def test_signed_sum_consistency(d, h):
    rng = np.random.default_rng(5)
    t = table_with(rng.random((300, d)), h, d)
    for x in rng.random((1000, d)):
        expected = 0
        for shape in enumerate_shapes(h, d):
            pos, _ = locate_nonzero(shape, x)
            hid = HaarId(shape, pos)
            expected += int(np.sign(-t.coefficient(hid))) * haar_eval(hid, x)
        s = t.signed_sum(x)
        assert s == expected
        assert abs(s) <= t.W


def test_memory_growth_one_dimension():
    rng = np.random.default_rng(0)
    t = new_state(1)
    for n in range(1, 5001):
        h = n.bit_length() - 1
        if h > t.h:
            t.grow(h)
        t.insert(rng.random(1))
        assert t.n_entries == sum(1 << (s - 1) for s in range(1, h + 1)) < n or n == 1


def test_grow_cap():
    t = CoefficientTable(2, max_entries=100)
    t.grow(3)
    with pytest.raises(MemoryError):
        t.grow(6)
    assert t.h == 3


def test_shape_block_layout():
    t = table_with([(0.1, 0.6)], 4, d=2)
    block = t.shape_block((2, 2))
    assert block.shape == (2, 2)
    assert block[0, 1] == 1 and block.sum() == 1


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    t = table_with(rng.random((500, 2)), 5, d=2)
    data = t.to_bytes()
    back = CoefficientTable.from_bytes(data)
    assert (back.d, back.h, back.n_kept) == (t.d, t.h, t.n_kept)
    np.testing.assert_array_equal(back.entries, t.entries)
    np.testing.assert_array_equal(back.kept_points, t.kept_points)
    assert back.to_bytes() == data
    # the restored table keeps working
    x = rng.random(2)
    back.insert(x)
    t.insert(x)
    np.testing.assert_array_equal(back.entries, t.entries)
    path = tmp_path / "state.bin"
    t.save(path)
    assert CoefficientTable.load(path).to_bytes() == t.to_bytes()
    with pytest.raises(ValueError):
        CoefficientTable.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        CoefficientTable.from_bytes(data[:-8])
