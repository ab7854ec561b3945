"""Kernel backend equivalence and correctness against a brute-force oracle."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czlab import _kernels_py
from czlab.kernels import IMPLEMENTATION, disc_sum_map
from czlab.lattice import disc_halfwidths

try:
    from czlab import _kernels_c
except ImportError:
    _kernels_c = None


def brute_disc_sums(values, hw):
    """O(N^2 * disc) reference: sum over the full disc offset set, zero outside."""
    n0, n1 = values.shape
    k = len(hw) - 1
    out = np.zeros_like(values)
    for i in range(n0):
        for j in range(n1):
            total = 0.0
            for dy in range(-k, k + 1):
                w = hw[abs(dy)]
                ii = i + dy
                if ii < 0 or ii >= n0:
                    continue
                lo = max(0, j - w)
                hi = min(n1 - 1, j + w)
                total += values[ii, lo:hi + 1].sum()
            out[i, j] = total
    return out


def test_python_kernel_matches_bruteforce():
    rng = np.random.default_rng(0)
    values = rng.lognormal(0.0, 1.0, (17, 17))
    for s in (1, 2, 5, 10, 25):
        hw = disc_halfwidths(s)
        got = _kernels_py.disc_sum_map(values, hw)
        want = brute_disc_sums(values, hw)
        np.testing.assert_allclose(got, want, rtol=1e-12)


@pytest.mark.skipif(_kernels_c is None, reason="compiled kernel not built")
def test_compiled_kernel_matches_python():
    rng = np.random.default_rng(1)
    for s in (1, 4, 16, 50):
        values = rng.lognormal(0.0, 1.0, (31, 31))
        hw = disc_halfwidths(s)
        a = _kernels_c.disc_sum_map(values, hw)
        b = _kernels_py.disc_sum_map(values, hw)
        assert float(np.max(np.abs(a - b))) == 0.0


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**31 - 1),
    st.integers(min_value=1, max_value=30),
    st.integers(min_value=3, max_value=20),
)
def test_active_backend_matches_bruteforce(seed, s, n):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, 5.0, (n, n))
    hw = disc_halfwidths(s)
    got = disc_sum_map(values, hw)
    np.testing.assert_allclose(got, brute_disc_sums(values, hw), rtol=1e-12)


def test_backend_selected():
    assert IMPLEMENTATION in ("c", "py")


def test_constant_field_interior_value():
    # a node whose disc stays inside the array sums to count * c
    values = np.full((21, 21), 3.0)
    hw = disc_halfwidths(4)  # radius 2 lattice disc, 13 nodes
    count = sum(2 * int(w) + 1 for w in hw) * 2 - (2 * int(hw[0]) + 1)
    out = disc_sum_map(values, hw)
    assert out[10, 10] == pytest.approx(3.0 * count)
