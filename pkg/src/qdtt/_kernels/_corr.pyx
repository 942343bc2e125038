# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Hot loop of the correlator: merge sweep over two sorted tag arrays,
histogramming pair delays, optionally accepting only same-excitation-period
pairs.  Pure C loop, runs without the GIL."""

from libc.math cimport floor


def pair_histogram(const long long[::1] ta, const long long[::1] tb,
                   double bin_width_ps, long long window_ps,
                   double rep_period_ps, bint sift,
                   long long[::1] counts):
    """Accumulate delays t_b - t_a of all pairs within +-window into bins
    centered on integer multiples of bin_width.  Returns accepted pair count.

    ``counts`` must have odd length 2K+1 with K = floor(window/bin_width).
    When ``sift`` is true, only pairs with equal floor(t/rep_period) are
    accepted (same excitation period).
    """
    cdef Py_ssize_t na = ta.shape[0]
    cdef Py_ssize_t nb = tb.shape[0]
    cdef Py_ssize_t nbins = counts.shape[0]
    cdef long long k_half = (nbins - 1) // 2
    cdef Py_ssize_t i, j, lo = 0
    cdef long long t, dt, m, accepted = 0
    cdef long long pa, pb
    cdef double inv_rep = 0.0
    cdef double adt

    if sift:
        inv_rep = 1.0 / rep_period_ps

    with nogil:
        for i in range(na):
            t = ta[i]
            while lo < nb and tb[lo] < t - window_ps:
                lo += 1
            j = lo
            while j < nb and tb[j] <= t + window_ps:
                dt = tb[j] - t
                j += 1
                if sift:
                    pa = <long long>floor(t * inv_rep)
                    pb = <long long>floor((t + dt) * inv_rep)
                    if pa != pb:
                        continue
                # round half away from zero, symmetric in +-dt
                adt = dt / bin_width_ps
                if adt >= 0:
                    m = <long long>floor(adt + 0.5)
                else:
                    m = -<long long>floor(-adt + 0.5)
                if -k_half <= m <= k_half:
                    counts[m + k_half] += 1
                    accepted += 1
    return accepted
