"""Backend selection for the coincidence kernel.

Prefers the compiled Cython extension; falls back to the numpy
implementation when the extension is missing or QDTT_NO_EXT=1 is set.
Both backends produce identical histograms.
"""

from __future__ import annotations

import os

import numpy as np

from . import fallback

_compiled = None
if os.environ.get("QDTT_NO_EXT") != "1":
    try:
        from . import _corr as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def pair_histogram(ta, tb, *, bin_width_ps: float, window_ps: int,
                   rep_period_ps: float = 0.0, sift: bool = False):
    """Histogram pair delays t_b - t_a; returns (counts, accepted_pairs).

    Bins are centered on integer multiples of ``bin_width_ps``; pairs with
    |dt| <= window_ps are considered.  With ``sift`` only same-period pairs
    (equal floor(t / rep_period_ps)) are accepted.
    """
    if bin_width_ps <= 0:
        raise ValueError("bin_width_ps must be > 0")
    if window_ps < bin_width_ps:
        raise ValueError("window_ps must be >= bin_width_ps")
    if sift and rep_period_ps <= 0:
        raise ValueError("sifting requires a positive rep_period_ps")
    ta = np.ascontiguousarray(ta, dtype=np.int64)
    tb = np.ascontiguousarray(tb, dtype=np.int64)
    k_half = int(window_ps // bin_width_ps)
    counts = np.zeros(2 * k_half + 1, dtype=np.int64)
    if _compiled is not None:
        n = _compiled.pair_histogram(ta, tb, float(bin_width_ps), int(window_ps),
                                     float(rep_period_ps), bool(sift), counts)
    else:
        n = fallback.pair_histogram(ta, tb, float(bin_width_ps), int(window_ps),
                                    float(rep_period_ps), bool(sift), counts)
    return counts, int(n)
