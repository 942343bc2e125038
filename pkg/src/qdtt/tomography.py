"""Two-qubit polarization state reconstruction from correlation matrices.

Pipeline per delay bin (or per integration window): background-subtract the
36 histograms, normalize counts within each complementary basis-pair group,
invert linearly to the density matrix via two-qubit Stokes parameters,
project onto the physical (positive semidefinite, unit trace) set, then
evaluate negativity.  Statistical errors come from a nonparametric bootstrap
over the coincidence events of each group.

Linear inversion plus eigenvalue projection is transparent and exactly
invertible on noise-free data; iterative maximum likelihood would be the
natural extension at much lower statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .correlate import CorrelationMatrix
from .fitting import FitResult, leastsq_sigma, minimize_multistart, relative_mse
from .params import FWHM_TO_SIGMA
from .polarization import (
    BASIS_PAIRS,
    CascadeStateParams,
    ORTHOGONAL,
    pair_probability_coeffs,
)

SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
# +1 / -1 eigenbasis labels of each Pauli axis under the fixed circular
# convention (L = (H+iV)/sqrt 2 is the +1 eigenstate of sigma_y)
AXIS_BASES = {"x": ("D", "A"), "y": ("L", "R"), "z": ("H", "V")}
AXES = ("x", "y", "z")


class InsufficientStatisticsError(RuntimeError):
    """A complementary basis-pair group has no usable coincidences."""


@dataclass
class TomographyInput:
    """Correlation matrix plus the delay binning used for reconstruction."""

    matrix: CorrelationMatrix
    bin_ps: float = 8.0
    background_below_ps: float = -150.0
    subtract_background: bool = True

    def __post_init__(self):
        widths = {h.bin_width_ps for h in self.matrix.histograms.values()}
        if len(widths) != 1:
            raise ValueError("histograms have inconsistent bin widths")
        (w,) = widths
        if self.bin_ps < w:
            raise ValueError("bin_ps must be >= the histogram bin width")
        factor = int(round(self.bin_ps / w))
        if abs(factor * w - self.bin_ps) > 1e-9:
            raise ValueError("bin_ps must be an integer multiple of the bin width")
        self._factor = factor


def group_keys(pair_xx, pair_x):
    """The four (XX basis, X basis) keys of one complementary group."""
    i, ip = pair_xx
    j, jp = pair_x
    return ((i, j), (i, jp), (ip, j), (ip, jp))


def _prepare(inp: TomographyInput):
    """Rebin all 36 histograms and estimate their background floors.

    Returns (centers, counts[key] -> float array, background[key] -> per-bin
    floor).  The floor is the mean count of bins left of
    ``background_below_ps``, where no true cascade coincidences can fall.
    """
    centers = None
    counts = {}
    background = {}
    for key, hist in inp.matrix.histograms.items():
        h = hist.rebin(inp._factor)
        c = h.bin_centers
        if centers is None:
            centers = c
        elif c.shape != centers.shape or not np.allclose(c, centers):
            raise ValueError("histograms have inconsistent bin ranges")
        y = h.counts.astype(float)
        acq = inp.matrix.acquisition.get(key, 1.0)
        bg = 0.0
        if inp.subtract_background:
            sel = c <= inp.background_below_ps
            if np.any(sel):
                bg = float(y[sel].mean())
        counts[key] = np.maximum(y - bg, 0.0) / acq
        background[key] = bg / acq
    return centers, counts, background


def _probabilities_from_values(values: dict) -> dict:
    """Normalize per-group values into probabilities; raises if a group is
    empty."""
    probs = {}
    for gx in BASIS_PAIRS:
        for gs in BASIS_PAIRS:
            keys = group_keys(gx, gs)
            tot = sum(values[k] for k in keys)
            if tot <= 0:
                raise InsufficientStatisticsError(
                    f"no coincidences in basis group {keys[0][0]}{keys[0][1]}")
            for k in keys:
                probs[k] = values[k] / tot
    return probs


def counts_to_probabilities(matrix_or_input, *, delay_ps: float | None = None,
                            window_ps: tuple[float, float] | None = None,
                            bin_ps: float = 8.0) -> dict:
    """36 outcome probabilities at one delay bin or one integration window.

    Within each complementary group {I,Iperp} x {J,Jperp} the probabilities
    sum to one; acquisition-time normalization is applied before grouping.
    """
    inp = matrix_or_input if isinstance(matrix_or_input, TomographyInput) \
        else TomographyInput(matrix_or_input, bin_ps=bin_ps)
    centers, counts, _ = _prepare(inp)
    if (delay_ps is None) == (window_ps is None):
        raise ValueError("pass exactly one of delay_ps or window_ps")
    if delay_ps is not None:
        idx = int(np.argmin(np.abs(centers - delay_ps)))
        values = {k: float(v[idx]) for k, v in counts.items()}
    else:
        lo, hi = window_ps
        sel = (centers >= lo) & (centers <= hi)
        values = {k: float(v[sel].sum()) for k, v in counts.items()}
    return _probabilities_from_values(values)


def linear_inversion(probs: dict) -> np.ndarray:
    """Density matrix from the 36 projection probabilities.

    Builds the two-qubit Stokes correlations S_ij from outcome sums and
    differences in the three mutually unbiased bases and assembles
    rho = 1/4 sum S_ij sigma_i x sigma_j.  Exact on consistent probabilities;
    the result is Hermitian with unit trace but not necessarily positive.
    """
    need = [(i, j) for gx in BASIS_PAIRS for gs in BASIS_PAIRS
            for (i, j) in group_keys(gx, gs)]
    missing = [k for k in need if k not in probs]
    if missing:
        raise ValueError(f"incomplete probability set; missing {missing}")

    s = np.zeros((4, 4))
    s[0, 0] = 1.0
    marg_xx = {a: [] for a in AXES}
    marg_x = {a: [] for a in AXES}
    for ia, ax in enumerate(AXES):
        ip, im = AXIS_BASES[ax]
        for ja, bx in enumerate(AXES):
            jp, jm = AXIS_BASES[bx]
            pp = probs[(ip, jp)]
            pm = probs[(ip, jm)]
            mp = probs[(im, jp)]
            mm = probs[(im, jm)]
            s[ia + 1, ja + 1] = pp - pm - mp + mm
            marg_xx[ax].append(pp + pm - mp - mm)
            marg_x[bx].append(pp - pm + mp - mm)
    for ia, ax in enumerate(AXES):
        s[ia + 1, 0] = float(np.mean(marg_xx[ax]))
        s[0, ia + 1] = float(np.mean(marg_x[ax]))

    eye = np.eye(2, dtype=complex)
    ops = [eye, SIGMA["x"], SIGMA["y"], SIGMA["z"]]
    rho = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            rho += s[i, j] * np.kron(ops[i], ops[j])
    return rho / 4.0


def project_physical(rho: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) positive-semidefinite unit-trace matrix.

    Projects the eigenvalue spectrum onto the probability simplex: negative
    eigenvalues are clipped to zero and their deficit is redistributed over
    the remaining ones.  Idempotent; leaves physical states untouched.
    """
    rho = np.asarray(rho, dtype=complex)
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2.0)
    w = w.real.copy()
    d = w.size
    acc = 0.0
    out = np.zeros_like(w)
    for i in range(d):  # ascending
        if w[i] + acc / (d - i) < 0.0:
            acc += w[i]
            out[i] = 0.0
        else:
            out[i:] = w[i:] + acc / (d - i)
            break
    rho_p = (v * out) @ v.conj().T
    return (rho_p + rho_p.conj().T) / 2.0


@dataclass
class NegativitySeries:
    """Negativity vs delay (or vs integration window) with bootstrap errors."""

    abscissa_ps: np.ndarray
    values: np.ndarray
    sigmas: np.ndarray
    n_events: np.ndarray
    omitted_ps: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_csv(self, path, label: str = "delay_ps") -> None:
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([label, "negativity", "sigma", "events"])
            for row in zip(self.abscissa_ps, self.values, self.sigmas, self.n_events):
                w.writerow([f"{row[0]:.10g}", f"{row[1]:.8g}", f"{row[2]:.8g}",
                            int(row[3])])


def _negativity_of_values(values: dict) -> float:
    from .polarization import negativity
    probs = _probabilities_from_values(values)
    return negativity(project_physical(linear_inversion(probs)))


def _bootstrap_sigma(values: dict, n_boot: int, rng) -> float:
    if n_boot <= 0:
        return 0.0
    samples = np.empty(n_boot)
    group_list = []
    for gx in BASIS_PAIRS:
        for gs in BASIS_PAIRS:
            keys = group_keys(gx, gs)
            tot = sum(values[k] for k in keys)
            p = np.array([values[k] / tot for k in keys])
            group_list.append((keys, int(round(tot)), p))
    for b in range(n_boot):
        res = {}
        for keys, tot, p in group_list:
            draw = rng.multinomial(tot, p)
            for k, n in zip(keys, draw):
                res[k] = float(n)
        try:
            samples[b] = _negativity_of_values(res)
        except InsufficientStatisticsError:
            samples[b] = np.nan
    good = samples[np.isfinite(samples)]
    return float(good.std(ddof=1)) if good.size > 1 else 0.0


def _series(inp: TomographyInput, selectors, abscissa, *, min_group_counts,
            n_boot, seed) -> NegativitySeries:
    centers, counts, _ = _prepare(inp)
    rng = np.random.default_rng(seed)
    xs, vals, sigs, events, omitted = [], [], [], [], []
    for x, sel in zip(abscissa, selectors):
        mask = sel(centers)
        values = {k: float(v[mask].sum()) for k, v in counts.items()}
        group_totals = [sum(values[k] for k in group_keys(gx, gs))
                        for gx in BASIS_PAIRS for gs in BASIS_PAIRS]
        if min(group_totals) < min_group_counts:
            omitted.append(x)
            continue
        vals.append(_negativity_of_values(values))
        sigs.append(_bootstrap_sigma(values, n_boot, rng))
        events.append(sum(group_totals))
        xs.append(x)
    return NegativitySeries(
        abscissa_ps=np.array(xs), values=np.array(vals), sigmas=np.array(sigs),
        n_events=np.array(events), omitted_ps=np.array(omitted))


def negativity_vs_delay(inp: TomographyInput, *, delay_range_ps=None,
                        min_group_counts: float = 100.0, n_boot: int = 200,
                        seed: int = 0) -> NegativitySeries:
    """Per-delay-bin tomography; bins with too few coincidences are omitted
    and reported in ``omitted_ps``."""
    centers, _, _ = _prepare(inp)
    if delay_range_ps is None:
        delay_range_ps = (centers[0], centers[-1])
    lo, hi = delay_range_ps
    sel_centers = centers[(centers >= lo) & (centers <= hi)]
    selectors = [(lambda c, x=x: np.isclose(c, x)) for x in sel_centers]
    return _series(inp, selectors, sel_centers,
                   min_group_counts=min_group_counts, n_boot=n_boot, seed=seed)


def negativity_vs_window(inp: TomographyInput, windows_ps=None, *,
                         start_ps: float = 0.0,
                         min_group_counts: float = 100.0, n_boot: int = 200,
                         seed: int = 0) -> NegativitySeries:
    """Cumulative-window tomography: each point integrates delays from
    ``start_ps`` out to ``start_ps + window``."""
    centers, _, _ = _prepare(inp)
    if windows_ps is None:
        windows_ps = np.arange(inp.bin_ps, centers[-1] - start_ps, inp.bin_ps)
    windows_ps = np.asarray(windows_ps, dtype=float)
    selectors = [(lambda c, w=w: (c >= start_ps) & (c <= start_ps + w))
                 for w in windows_ps]
    return _series(inp, selectors, windows_ps,
                   min_group_counts=min_group_counts, n_boot=n_boot, seed=seed)


def density_matrix_at(inp: TomographyInput, *, delay_ps=None, window_ps=None):
    """Physical density matrix reconstructed at one bin or window."""
    probs = counts_to_probabilities(inp, delay_ps=delay_ps, window_ps=window_ps)
    return project_physical(linear_inversion(probs))


# ---------------------------------------------------------------------------
# forward model of the delay-resolved traces, shared by the phase-offset fit
# and by analytic matrix generation


def _trace_kernels(centers: np.ndarray, t_p_ps: float, t1_x_ps: float,
                   t2star_ps: float, jitter_fwhm_ps: float):
    """E0 (decay envelope) and complex E1 (precessing part) on bin centers,
    convolved with the combined Gaussian timing response."""
    sigma = jitter_fwhm_ps * FWHM_TO_SIGMA
    step = 1.0
    pad = 6.0 * sigma + 5.0 * t1_x_ps
    grid = np.arange(centers[0] - pad, centers[-1] + pad + step, step)
    decay = np.where(grid >= 0, np.exp(-np.maximum(grid, 0.0) / t1_x_ps), 0.0)
    damp = decay if math.isinf(t2star_ps) else decay * np.exp(
        -np.maximum(grid, 0.0) / t2star_ps)
    omega = 0.0 if math.isinf(t_p_ps) else 2.0 * math.pi / t_p_ps
    osc = damp * np.exp(1j * omega * grid)
    if sigma > 0:
        half = int(math.ceil(5.0 * sigma / step))
        x = np.arange(-half, half + 1) * step
        kern = np.exp(-0.5 * (x / sigma) ** 2)
        kern /= kern.sum()
        decay = np.convolve(decay, kern, mode="same")
        osc = np.convolve(osc, kern, mode="same")
    e0 = np.interp(centers, grid, decay)
    e1 = np.interp(centers, grid, osc.real) + 1j * np.interp(centers, grid, osc.imag)
    return e0, e1


def model_traces(centers: np.ndarray, state: CascadeStateParams,
                 jitter_fwhm_ps: float = 0.0) -> dict:
    """Expected delay-resolved trace shape for all 36 basis pairs (unit
    amplitude): exp(-dt/T1) * P_IJ(cascade state at dt), jitter-convolved."""
    e0, e1 = _trace_kernels(centers, state.precession_period_ps,
                            state.lifetime_ps, state.coherence_time_ps,
                            jitter_fwhm_ps)
    rot = np.exp(1j * state.phase_offset_rad)
    out = {}
    for gx in BASIS_PAIRS:
        for gs in BASIS_PAIRS:
            for key in group_keys(gx, gs):
                alpha, beta = pair_probability_coeffs(*key)
                out[key] = alpha * e0 + np.real(beta * rot * e1)
    return out


def model_correlation_matrix(state: CascadeStateParams, *,
                             bin_width_ps: float = 1.0,
                             window_ps: float = 1100.0,
                             jitter_fwhm_ps: float = 0.0,
                             scale: float = 1e7) -> CorrelationMatrix:
    """Noise-free expected correlation matrix (counts rounded to integers).

    Used to drive the tomography pipeline with exact model data; ``scale``
    sets the total number of expected coincidences per basis group.
    """
    from .correlate import CorrelationHistogram
    k = int(window_ps // bin_width_ps)
    centers = np.arange(-k, k + 1) * bin_width_ps
    traces = model_traces(centers, state, jitter_fwhm_ps)
    norm = sum(traces[k0].sum()
               for k0 in group_keys(BASIS_PAIRS[0], BASIS_PAIRS[0])) or 1.0
    hists = {}
    for key, y in traces.items():
        counts = np.rint(scale * y / norm).astype(np.int64)
        hists[key] = CorrelationHistogram(
            bin_width_ps=bin_width_ps, counts=counts, channel_pair=(-1, -1),
            mode="model", tau_min_ps=float(centers[0]), basis_pair=key,
            n_pairs=int(counts.sum()))
    return CorrelationMatrix(histograms=hists,
                             acquisition={k2: 1.0 for k2 in hists})


def fit_cascade_model(matrix: CorrelationMatrix, *, t_p_ps: float,
                      t1_x_ps: float, jitter_fwhm_ps: float,
                      bin_ps: float = 8.0, fit_range_ps=(-100.0, 900.0),
                      t2star_x_ps: float = math.inf,
                      background_below_ps: float = -150.0,
                      seed: int = 0) -> FitResult:
    """Least-squares fit of all 36 traces to the precessing-state model.

    Free parameters are one shared amplitude and the phase offset; the
    precession period, X lifetime and timing response are held fixed.
    Reports the phase offset in degrees together with the relative
    mean-square error of the joint fit.
    """
    inp = TomographyInput(matrix, bin_ps=bin_ps,
                          background_below_ps=background_below_ps)
    centers, counts, _ = _prepare(inp)
    lo, hi = fit_range_ps
    sel = (centers >= lo) & (centers <= hi)
    c = centers[sel]
    keys = sorted(counts)
    y = np.concatenate([counts[k][sel] for k in keys])
    w = 1.0 / np.maximum(y, 1.0)

    e0, e1 = _trace_kernels(c, t_p_ps, t1_x_ps, t2star_x_ps, jitter_fwhm_ps)
    alphas = np.array([pair_probability_coeffs(*k)[0] for k in keys])
    betas = np.array([pair_probability_coeffs(*k)[1] for k in keys])

    def shape(dphi_rad: float) -> np.ndarray:
        rot = np.exp(1j * dphi_rad)
        return np.concatenate([a * e0 + np.real(b * rot * e1)
                               for a, b in zip(alphas, betas)])

    def chi2(p):
        m = shape(p[0])
        amp = max(float(np.sum(w * y * m) / np.sum(w * m * m)), 0.0)
        return float(np.sum(w * (y - amp * m) ** 2))

    # coarse phase scan, then simplex refinement around the best start
    grid = np.linspace(-math.pi, math.pi, 37)
    start = grid[int(np.argmin([chi2([g]) for g in grid]))]
    res = minimize_multistart(chi2, [start], bounds=[(start - 0.6, start + 0.6)],
                              n_starts=3, seed=seed, spread=0.15)
    dphi = float(res.x[0])
    m = shape(dphi)
    amp = float(np.sum(w * y * m) / np.sum(w * m * m))

    def model_fn(p):
        return p[0] * shape(p[1])

    sigma, model = leastsq_sigma(model_fn, [amp, dphi], y, weights=w)
    dphi_deg = math.degrees(math.atan2(math.sin(dphi), math.cos(dphi)))
    return FitResult(
        params={"dphi_deg": dphi_deg, "amplitude": amp},
        sigma={"dphi_deg": math.degrees(sigma[1]), "amplitude": sigma[0]},
        mse=relative_mse(y, model),
        converged=bool(res.success),
        extra={"n_bins": int(y.size)},
    )
