import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimo_gnn.constellation import (SUPPORTED_ORDERS, build_alphabet, hard_slice, one_hot,
                                    symbol_error_rate)
from mimo_gnn.errors import IndexOutOfRange, LengthMismatch, UnsupportedOrder


def test_qpsk_levels():
    np.testing.assert_array_equal(build_alphabet(4).levels, [-1.0, 1.0])


def test_16qam_levels():
    # (1 + 9) / 2 * s^2 = 1  =>  s = 1/sqrt(5)
    a = build_alphabet(16)
    np.testing.assert_allclose(a.levels, np.array([-3, -1, 1, 3]) / math.sqrt(5), atol=1e-15)
    assert abs(np.mean(a.levels ** 2) - 1.0) <= 1e-15


@pytest.mark.parametrize("M", SUPPORTED_ORDERS)
def test_alphabet_invariants(M):
    a = build_alphabet(M)
    assert a.size == math.isqrt(M)
    assert abs(np.sum(a.levels ** 2) / a.size - 1.0) <= 1e-14
    np.testing.assert_allclose(a.levels, -a.levels[::-1], atol=1e-15)
    np.testing.assert_allclose(np.diff(a.levels), np.diff(a.levels)[0], atol=1e-14)
    assert all(hard_slice(v, a) == k for k, v in enumerate(a.levels))


def test_unsupported_order():
    with pytest.raises(UnsupportedOrder):
        build_alphabet(8)


def test_hard_slice_examples():
    a4 = build_alphabet(4)
    assert a4.levels[hard_slice(0.9, a4)] == 1.0
    assert hard_slice(0.0, a4) == 0  # tie goes to the smaller level
    a16 = build_alphabet(16)
    # enumeration oracle: nearest of the four levels to 0.5
    nearest = min(range(4), key=lambda k: abs(a16.levels[k] - 0.5))
    assert hard_slice(0.5, a16) == nearest == 2


def test_one_hot():
    a = build_alphabet(16)
    np.testing.assert_array_equal(one_hot(2, a), [0, 0, 1, 0])
    for i in range(4):
        v = one_hot(i, a)
        assert v.sum() == 1 and np.argmax(v) == i
    with pytest.raises(IndexOutOfRange):
        one_hot(4, a)


def test_ser_examples():
    t = np.arange(32) % 4
    assert symbol_error_rate(t, t) == 0
    assert symbol_error_rate(t, (t + 1) % 4) == 1
    d = t.copy()
    d[[0, 5, 9]] = (d[[0, 5, 9]] + 1) % 4
    assert symbol_error_rate(t, d) == 0.09375
    with pytest.raises(LengthMismatch):
        symbol_error_rate(t, t[:-1])


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=50),
       st.randoms())
def test_ser_permutation_invariant(pairs, rnd):
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    a = symbol_error_rate(*zip(*pairs))
    b = symbol_error_rate(*zip(*shuffled))
    assert a == b
