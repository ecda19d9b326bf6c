import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from stgmsfem.cache import MAGIC, MatrixCache, cache_key, read_matrix, write_matrix


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=6)))
def test_round_trip_bit_exact(tmp_path_factory, M):
    p = tmp_path_factory.mktemp("c") / "m.bin"
    write_matrix(p, M)
    assert np.array_equal(read_matrix(p), M, equal_nan=True)


def test_layout(tmp_path):
    p = tmp_path / "m.bin"
    write_matrix(p, [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    raw = p.read_bytes()
    assert raw[:8] == MAGIC
    assert np.frombuffer(raw[8:24], "<u8").tolist() == [3, 2]
    assert np.frombuffer(raw[24:], "<f8").tolist() == [1, 3, 5, 2, 4, 6]


def test_corrupt_entries_are_misses(tmp_path):
    c = MatrixCache(tmp_path)
    assert c.get("abcd", "x") is None
    c.put("abcd", "x", np.eye(3))
    assert np.array_equal(c.get("abcd", "x"), np.eye(3))
    p = c.path("abcd", "x")
    p.write_bytes(p.read_bytes()[:-8])
    assert c.get("abcd", "x") is None
    p.write_bytes(b"NOTAMATX" + b"\0" * 16)
    assert c.get("abcd", "x") is None
    with pytest.raises(ValueError):
        read_matrix(p)


def test_key_is_order_independent_and_sensitive():
    assert cache_key(a=1, b=[1, 2]) == cache_key(b=[1, 2], a=1)
    assert cache_key(a=1) != cache_key(a=2)
    assert len(cache_key(a=1)) == 32
