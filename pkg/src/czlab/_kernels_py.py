"""Numpy implementation of the disc-sum kernel.

The kernel computes, for every node (i, j) of a 2-D array, the sum of the
array over the lattice disc {(i+dy, j+dx) : |dx| <= halfwidths[|dy|]},
with the array extended by zero outside its bounds.  Row half-widths are
what makes the footprint a Euclidean disc; the caller derives them from
the squared radius.

Cost is O(n0 * n1) per row offset, via per-row prefix sums, so a disc of
node radius k costs O(n0 * n1 * k) regardless of its area.
"""

import numpy as np


def disc_sum_map(values, halfwidths):
    """Sum `values` over a disc footprint around every node.

    values     : (n0, n1) float array.
    halfwidths : (k+1,) int array; halfwidths[m] is the max |dx| at row
                 offset |dy| = m.
    Returns an (n0, n1) float array.
    """
    values = np.asarray(values, dtype=np.float64)
    halfwidths = np.asarray(halfwidths, dtype=np.int64)
    n0, n1 = values.shape
    k = len(halfwidths) - 1

    # per-row prefix sums with a leading zero column
    prefix = np.zeros((n0, n1 + 1))
    np.cumsum(values, axis=1, out=prefix[:, 1:])

    out = np.zeros((n0, n1))
    cols = np.arange(n1)
    for dy in range(-k, k + 1):
        lo_row = max(0, -dy)
        hi_row = min(n0, n0 - dy)
        if lo_row >= hi_row:
            continue
        w = int(halfwidths[abs(dy)])
        lo = np.clip(cols - w, 0, n1)
        hi = np.clip(cols + w + 1, 0, n1)
        rows = prefix[lo_row + dy : hi_row + dy]
        out[lo_row:hi_row] += rows[:, hi] - rows[:, lo]
    return out
