"""Auto/cross correlation of time-tag streams.

Two acceptance modes mirror the two acquisition styles of a TCSPC setup:

* ``histogram``  - all pairs within the window are accepted, reproducing the
  hardware start-stop histograms including their cross-period crosstalk.
* ``ttr_sifted`` - only pairs falling in the same excitation period
  (equal floor(t / rep_period)) are accepted; cross-period coincidences are
  sifted out entirely, which is the whole point of offline tag processing.

Delay convention: delta_tau = t_b - t_a, so for an (XX channel, X channel)
pair the histogram is the X-after-XX delay distribution.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .polarization import BASIS_PAIRS, ORTHOGONAL

MODES = ("ttr_sifted", "histogram")


@dataclass
class CorrelationHistogram:
    """Binned coincidence counts for one channel pair.

    ``counts[k]`` covers delays within half a bin of
    ``tau_min_ps + k * bin_width_ps`` (``tau_min_ps`` is the center of the
    first bin).  Freshly correlated histograms are symmetric with delay zero
    at the center bin; rebinning keeps the grid explicit.
    """

    bin_width_ps: float
    counts: np.ndarray
    channel_pair: tuple[int, int]
    mode: str
    tau_min_ps: float = 0.0
    n_pairs: int = 0
    basis_pair: tuple[str, str] | None = None
    rep_period_ps: float | None = None

    @property
    def bin_centers(self) -> np.ndarray:
        return self.tau_min_ps + np.arange(len(self.counts)) * self.bin_width_ps

    def rebin(self, factor: int) -> "CorrelationHistogram":
        """Aggregate ``factor`` adjacent bins, trimming the ends evenly."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        if factor == 1:
            return self
        m = len(self.counts) // factor
        start = (len(self.counts) - m * factor) // 2
        counts = self.counts[start:start + m * factor].reshape(-1, factor).sum(axis=1)
        tau_min = self.tau_min_ps + (start + 0.5 * (factor - 1)) * self.bin_width_ps
        return replace(self, counts=counts, tau_min_ps=tau_min,
                       bin_width_ps=self.bin_width_ps * factor)

    def integrate(self, lo_ps: float, hi_ps: float) -> int:
        """Total counts in bins whose centers lie in [lo_ps, hi_ps]."""
        c = self.bin_centers
        sel = (c >= lo_ps) & (c <= hi_ps)
        return int(self.counts[sel].sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center_ps", "counts"])
            for c, n in zip(self.bin_centers, self.counts):
                w.writerow([f"{c:.10g}", int(n)])


def load_histogram_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a (bin_center_ps, counts) CSV into two arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: expected two CSV columns")
    return data[:, 0], data[:, 1]


def as_stream(stream) -> tuple[np.ndarray, np.ndarray]:
    """Accept a structured record array or a (timestamps, channels) pair."""
    if isinstance(stream, np.ndarray) and stream.dtype.names:
        return stream["timestamp"].astype(np.int64), stream["channel"]
    ts, ch = stream
    return np.asarray(ts, dtype=np.int64), np.asarray(ch)


def cross_correlate(stream, ch_a: int, ch_b: int, *, bin_width_ps: float = 1.0,
                    window_ps: float = 2000.0, mode: str = "ttr_sifted",
                    rep_period_ps: float | None = None, threads: int = 1,
                    channel_count: int | None = None) -> CorrelationHistogram:
    """Histogram of delays t_b - t_a for tag pairs within ``window_ps``.

    The result is independent of ``threads`` and of how the stream was
    chunked: workers correlate contiguous blocks of the a-channel tags
    against the matching window of b-channel tags and the partial histograms
    are summed.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    sift = mode == "ttr_sifted"
    if sift and (rep_period_ps is None or rep_period_ps <= 0):
        raise ValueError("ttr_sifted mode requires rep_period_ps")
    ts, ch = as_stream(stream)
    if channel_count is not None:
        for c in (ch_a, ch_b):
            if not 0 <= c < channel_count:
                raise ValueError(f"unknown channel {c} (stream has {channel_count})")
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        raise ValueError("stream is not sorted by timestamp")

    ta = ts[ch == ch_a]
    tb = ts[ch == ch_b]
    window = int(window_ps)
    scan_window = window
    if sift:
        # same-period pairs can never be further apart than one period
        scan_window = min(window, int(rep_period_ps))
    k_half = int(window // bin_width_ps)

    kw = dict(bin_width_ps=float(bin_width_ps), window_ps=scan_window,
              rep_period_ps=float(rep_period_ps or 0.0), sift=sift)

    def run_block(i0: int, i1: int):
        block = ta[i0:i1]
        if block.size == 0:
            return np.zeros(2 * int(scan_window // bin_width_ps) + 1, np.int64), 0
        j0 = np.searchsorted(tb, block[0] - scan_window, side="left")
        j1 = np.searchsorted(tb, block[-1] + scan_window, side="right")
        return _kernels.pair_histogram(block, tb[j0:j1], **kw)

    threads = max(1, int(threads))
    if threads == 1 or ta.size < 2 * threads:
        counts, n_pairs = run_block(0, ta.size)
    else:
        edges = np.linspace(0, ta.size, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda se: run_block(*se),
                                  zip(edges[:-1], edges[1:])))
        counts = sum(p[0] for p in parts)
        n_pairs = sum(p[1] for p in parts)

    if scan_window != window:
        # pad the capped scan histogram out to the requested range
        pad = k_half - (len(counts) - 1) // 2
        counts = np.pad(counts, (pad, pad))
    return CorrelationHistogram(
        bin_width_ps=float(bin_width_ps), counts=counts,
        channel_pair=(ch_a, ch_b), mode=mode, n_pairs=n_pairs,
        tau_min_ps=-k_half * float(bin_width_ps), rep_period_ps=rep_period_ps,
    )


@dataclass
class MatrixSegment:
    """One sequentially acquired stream with its per-channel projection bases.

    Four fixed detectors cover a 2x2 basis block at a time, so the full
    6x6 basis-pair matrix is assembled from nine such segments.
    Channels 0/1 are the XX arm, channels 2/3 the X arm.
    """

    stream: object
    bases: tuple[str, str, str, str]
    n_pulses: int
    rep_period_ps: float


@dataclass
class CorrelationMatrix:
    """The 36 polarization-resolved XX-X correlation histograms."""

    histograms: dict[tuple[str, str], CorrelationHistogram]
    acquisition: dict[tuple[str, str], float] = field(default_factory=dict)
    rep_period_ps: float | None = None

    def __post_init__(self):
        missing = [(i, j) for i, _ in _all_bases() for j, _ in _all_bases()
                   if (i, j) not in self.histograms]
        if missing:
            raise ValueError(f"correlation matrix is missing basis pairs: {missing}")

    def save_dir(self, path) -> None:
        import json
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        entries = []
        for (bx, bs), hist in sorted(self.histograms.items()):
            name = f"hist_{bx}{bs}.csv"
            hist.to_csv(path / name)
            entries.append({
                "basis_xx": bx, "basis_x": bs, "file": name,
                "acquisition": self.acquisition.get((bx, bs), 1.0),
                "bin_width_ps": hist.bin_width_ps,
            })
        meta = {"rep_period_ps": self.rep_period_ps, "entries": entries}
        (path / "matrix.json").write_text(json.dumps(meta, indent=1))

    @classmethod
    def load_dir(cls, path) -> "CorrelationMatrix":
        import json
        path = Path(path)
        meta = json.loads((path / "matrix.json").read_text())
        hists, acq = {}, {}
        for e in meta["entries"]:
            centers, counts = load_histogram_csv(path / e["file"])
            key = (e["basis_xx"], e["basis_x"])
            hists[key] = CorrelationHistogram(
                bin_width_ps=float(e["bin_width_ps"]),
                counts=counts.astype(np.int64), channel_pair=(-1, -1),
                mode="ttr_sifted", tau_min_ps=float(centers[0]), basis_pair=key,
                rep_period_ps=meta.get("rep_period_ps"),
            )
            acq[key] = float(e["acquisition"])
        return cls(histograms=hists, acquisition=acq,
                   rep_period_ps=meta.get("rep_period_ps"))


def _all_bases():
    for a, b in BASIS_PAIRS:
        yield a, b
        yield b, a


def build_correlation_matrix(segments, *, bin_width_ps: float = 1.0,
                             window_ps: float = 600.0, mode: str = "ttr_sifted",
                             threads: int = 1) -> CorrelationMatrix:
    """Correlate every XX channel against every X channel per segment and
    file the histograms under their (XX basis, X basis) labels."""
    hists: dict[tuple[str, str], CorrelationHistogram] = {}
    acq: dict[tuple[str, str], float] = {}
    rep = None
    for seg in segments:
        rep = seg.rep_period_ps
        for ca in (0, 1):
            for cb in (2, 3):
                key = (seg.bases[ca], seg.bases[cb])
                if key in hists:
                    raise ValueError(f"duplicate basis pair {key} across segments")
                h = cross_correlate(
                    seg.stream, ca, cb, bin_width_ps=bin_width_ps,
                    window_ps=window_ps, mode=mode,
                    rep_period_ps=seg.rep_period_ps, threads=threads)
                h.basis_pair = key
                hists[key] = h
                acq[key] = float(seg.n_pulses)
    return CorrelationMatrix(histograms=hists, acquisition=acq, rep_period_ps=rep)


def g2_zero(hist: CorrelationHistogram, rep_period_ps: float):
    """Single-photon purity from a histogram-mode auto-correlation.

    Integrates the peak at every multiple of the excitation period covered
    by the histogram; purity = 1 - (central area / mean side-peak area).
    Requires at least 5 fully covered side peaks.
    """
    centers = hist.bin_centers
    span = centers[-1]
    n_max = int(span // rep_period_ps)
    sides = []
    half = rep_period_ps / 2.0
    for n in range(-n_max, n_max + 1):
        mid = n * rep_period_ps
        if mid - half < centers[0] or mid + half > centers[-1] + hist.bin_width_ps:
            continue
        area = hist.integrate(mid - half, mid + half - hist.bin_width_ps * 0.5)
        if n == 0:
            central = area
        else:
            sides.append(area)
    if len(sides) < 5:
        raise ValueError("histogram must span at least 5 side peaks")
    mean_side = float(np.mean(sides))
    if mean_side <= 0:
        raise ValueError("no coincidences in side peaks")
    g2 = central / mean_side
    return 1.0 - g2, g2
