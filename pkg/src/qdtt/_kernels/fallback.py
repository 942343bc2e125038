"""Pure-numpy coincidence kernel, used when the compiled extension is absent.

Semantics are bit-identical to the Cython kernel: same inclusive +-window,
same round-half-away-from-zero binning, same same-period sifting.  Pairs are
enumerated with searchsorted windows and flattened index arithmetic; memory
is bounded by processing the first stream in blocks.
"""

from __future__ import annotations

import numpy as np

# cap on pair delays materialized at once (per block)
_BLOCK_PAIRS = 4_000_000


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def pair_histogram(ta, tb, bin_width_ps, window_ps, rep_period_ps, sift,
                   counts) -> int:
    ta = np.asarray(ta, dtype=np.int64)
    tb = np.asarray(tb, dtype=np.int64)
    k_half = (counts.shape[0] - 1) // 2
    if ta.size == 0 or tb.size == 0:
        return 0

    lo = np.searchsorted(tb, ta - window_ps, side="left")
    hi = np.searchsorted(tb, ta + window_ps, side="right")
    n = hi - lo
    accepted = 0

    # split ta so that each block materializes a bounded number of pairs
    cum = np.cumsum(n)
    start = 0
    while start < ta.size:
        stop = int(np.searchsorted(cum, (cum[start - 1] if start else 0) + _BLOCK_PAIRS,
                                   side="left")) + 1
        stop = min(max(stop, start + 1), ta.size)
        nb = n[start:stop]
        total = int(nb.sum())
        if total:
            rep_a = np.repeat(np.arange(start, stop), nb)
            offs = np.arange(total) - np.repeat(np.cumsum(nb) - nb, nb)
            idx_b = np.repeat(lo[start:stop], nb) + offs
            t_a = ta[rep_a]
            dt = tb[idx_b] - t_a
            if sift:
                pa = np.floor(t_a / rep_period_ps)
                pb = np.floor((t_a + dt) / rep_period_ps)
                dt = dt[pa == pb]
            m = _round_half_away(dt / bin_width_ps).astype(np.int64)
            m = m[np.abs(m) <= k_half]
            counts += np.bincount(m + k_half, minlength=counts.shape[0])
            accepted += int(m.size)
        start = stop
    return accepted
