"""Scalar parameter estimators: efficiencies, blinking, lifetimes, fine
structure splitting and Rabi power dependence.

The efficiency estimator needs no assumption about the emitter's jitter or
the optical setup: if every detected photon implies a partner photon from
the same pulse, then the single rate gives eta_ex * eta_det while the
same-period coincidence rate gives an extra factor of eta_det, so the two
rates separate the product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correlate import CorrelationHistogram, cross_correlate
from .fitting import (
    FitResult,
    leastsq_sigma,
    minimize_multistart,
    poisson_deviance,
    profile_amplitude,
    relative_mse,
)
from .interferometry import exp_gauss_density
from .params import CascadeParams, FWHM_TO_SIGMA


@dataclass
class RateSummary:
    """Detected rates entering the efficiency estimate.

    gamma_single_hz: detected rate of one transition (XX arm, both channels).
    gamma_coinc_hz:  co-polarized same-period XX-X coincidence rate.
    Counts are carried along for Poisson error propagation.
    """

    gamma_single_hz: float
    gamma_coinc_hz: float
    gamma_rep_hz: float
    n_single: int = 0
    n_coinc: int = 0

    def __post_init__(self):
        if not self.gamma_coinc_hz <= self.gamma_single_hz <= self.gamma_rep_hz:
            raise ValueError(
                "rates must satisfy coincidence <= single <= repetition")


def estimate_efficiencies(rates: RateSummary) -> FitResult:
    """Excitation and detection efficiencies from pair rates.

    eta_1p = single rate / rep rate, eta_2p = coincidence rate / rep rate,
    eta_det = eta_2p / eta_1p, eta_ex = eta_1p^2 / eta_2p.  The identity
    eta_ex * eta_det = eta_1p holds by construction.  Uncertainties are
    propagated from Poisson counting errors (correlations between the two
    counts are neglected).
    """
    if rates.gamma_coinc_hz <= 0:
        raise ValueError("coincidence rate must be > 0 to separate efficiencies")
    eta_1p = rates.gamma_single_hz / rates.gamma_rep_hz
    eta_2p = rates.gamma_coinc_hz / rates.gamma_rep_hz
    eta_det = eta_2p / eta_1p
    eta_ex = eta_1p ** 2 / eta_2p
    r1 = 1.0 / math.sqrt(rates.n_single) if rates.n_single else 0.0
    r2 = 1.0 / math.sqrt(rates.n_coinc) if rates.n_coinc else 0.0
    return FitResult(
        params={"eta_ex": eta_ex, "eta_det": eta_det,
                "eta_1p": eta_1p, "eta_2p": eta_2p},
        sigma={"eta_ex": eta_ex * math.sqrt(4 * r1 ** 2 + r2 ** 2),
               "eta_det": eta_det * math.sqrt(r1 ** 2 + r2 ** 2),
               "eta_1p": eta_1p * r1, "eta_2p": eta_2p * r2},
        mse=0.0,
    )


def rates_from_stream(stream, params: CascadeParams, n_pulses: int,
                      window_ps: float | None = None) -> RateSummary:
    """Extract the rate summary from a simulated or recorded tag stream.

    Singles are counted on the XX arm (channels 0+1); coincidences are the
    same-period co-polarized pairings (0,2) and (1,3), counted with the
    sifted correlator.
    """
    from .correlate import as_stream
    ts, ch = as_stream(stream)
    rep = params.rep_period_ps
    duration_s = n_pulses * rep * 1e-12
    n_single = int(np.count_nonzero(ch == 0) + np.count_nonzero(ch == 1))
    if window_ps is None:
        window_ps = rep
    bases = [c.basis for c in params.channels]
    pairs = [(a, b) for a in (0, 1) for b in (2, 3) if bases[a] == bases[b]]
    if not pairs:
        raise ValueError("no co-polarized (XX, X) channel pairing in config")
    n_coinc = 0
    for ca, cb in pairs:
        h = cross_correlate((ts, ch), ca, cb, bin_width_ps=1.0,
                            window_ps=window_ps, mode="ttr_sifted",
                            rep_period_ps=rep)
        n_coinc += h.n_pairs
    return RateSummary(
        gamma_single_hz=n_single / duration_s,
        gamma_coinc_hz=n_coinc / duration_s,
        gamma_rep_hz=params.rep_rate_ghz * 1e9,
        n_single=n_single, n_coinc=n_coinc,
    )


# ---------------------------------------------------------------------------
# blinking


def peak_envelope(hist: CorrelationHistogram, rep_period_ps: float,
                  n_max: int | None = None):
    """Integrated side-peak areas A(n) of an auto-correlation histogram.

    Returns (n, areas, sigmas) for n >= 1; the n = 0 peak is excluded since
    antibunching suppresses it regardless of blinking.
    """
    centers = hist.bin_centers
    span = centers[-1]
    if n_max is None:
        n_max = int(span // rep_period_ps)
    ns, areas = [], []
    half = rep_period_ps / 2.0
    for n in range(1, n_max + 1):
        mid = n * rep_period_ps
        if mid + half > span + hist.bin_width_ps:
            break
        pos = hist.integrate(mid - half, mid + half - 0.5 * hist.bin_width_ps)
        neg = hist.integrate(-mid - half, -mid + half - 0.5 * hist.bin_width_ps)
        ns.append(n)
        areas.append(pos + neg)
    ns = np.array(ns)
    areas = np.array(areas, dtype=float)
    return ns, areas, np.sqrt(np.maximum(areas, 1.0))


def fit_blinking(peak_n, peak_areas, rep_period_ps: float, *,
                 sigmas=None, seed: int = 0) -> FitResult:
    """Fit A(n) = C (1 + (1-beta)/beta * exp(-n T_rep / T_decay)).

    A flat envelope leaves beta unidentifiable; in that case beta is pinned
    to 1 and the result carries the 'flat_envelope' flag.
    """
    n = np.asarray(peak_n, dtype=float)
    y = np.asarray(peak_areas, dtype=float)
    if n.size < 10:
        raise ValueError("need at least 10 side peaks to fit blinking")
    if sigmas is None:
        sigmas = np.sqrt(np.maximum(y, 1.0))
    w = 1.0 / np.asarray(sigmas) ** 2

    head = y[: max(3, n.size // 10)].mean()
    tail = y[-max(3, n.size // 3):].mean()
    contrast = (head - tail) / max(math.sqrt(tail), 1.0)
    if contrast < 3.0:
        return FitResult(params={"beta": 1.0, "t_decay_ns": math.inf,
                                 "amplitude": float(y.mean())},
                         sigma={"beta": 0.0, "t_decay_ns": math.inf},
                         mse=relative_mse(y, np.full_like(y, y.mean())),
                         flags=("flat_envelope",))

    r0 = max(head / tail - 1.0, 1e-3)
    beta0 = 1.0 / (1.0 + r0)

    def model(p):
        beta, t_decay_ps = p
        r = (1.0 - beta) / beta
        shape = 1.0 + r * np.exp(-n * rep_period_ps / t_decay_ps)
        amp = profile_amplitude(shape, y, weights=w)
        return amp * shape

    def chi2(p):
        return float(np.sum(w * (y - model(p)) ** 2))

    res = minimize_multistart(
        chi2, [beta0, 10.0 * rep_period_ps],
        bounds=[(0.02, 1.0), (0.1 * rep_period_ps, 1e4 * rep_period_ps)],
        n_starts=5, seed=seed)
    beta, t_decay_ps = res.x
    m = model(res.x)
    amp = m[-1] / (1.0 + (1 - beta) / beta * math.exp(
        -n[-1] * rep_period_ps / t_decay_ps))
    sigma, _ = leastsq_sigma(model, res.x, y, weights=w)
    return FitResult(
        params={"beta": float(beta), "t_decay_ns": float(t_decay_ps) / 1000.0,
                "amplitude": float(amp)},
        sigma={"beta": float(sigma[0]), "t_decay_ns": float(sigma[1]) / 1000.0},
        mse=relative_mse(y, m),
        converged=bool(res.success),
    )


def blinking_from_stream(stream, params: CascadeParams, *,
                         n_periods: int = 80, seed: int = 0) -> FitResult:
    """Auto-correlate the XX arm in histogram mode and fit the peak envelope."""
    rep = params.rep_period_ps
    hist = cross_correlate(stream, 0, 1, bin_width_ps=rep / 4.0,
                           window_ps=(n_periods + 0.5) * rep, mode="histogram")
    ns, areas, sig = peak_envelope(hist, rep)
    return fit_blinking(ns, areas, rep, sigmas=sig, seed=seed)


# ---------------------------------------------------------------------------
# lifetimes


def _double_exp_gauss(t, tau_a, tau_b, sigma):
    """Exp(tau_a) convolved with Exp(tau_b) convolved with Gaussian(sigma)."""
    if abs(tau_a - tau_b) < 1e-6 * tau_a:
        tau_b = tau_a * (1.0 + 1e-4)
    ea = tau_a * exp_gauss_density(t, tau_a, sigma)
    eb = tau_b * exp_gauss_density(t, tau_b, sigma)
    return (eb - ea) / (tau_b - tau_a)


def fit_lifetimes(hist_xx, hist_x, hist_cond, *, jitter_fwhm_ch1_ps: float,
                  jitter_fwhm_ch2_ps: float, seed: int = 0) -> FitResult:
    """Simultaneous lifetime fit to the three decay curves.

    hist_xx:   XX arrival time within the excitation period
               -> Exp(T1_XX) (x) N(tres1)
    hist_x:    X arrival time within the period
               -> Exp(T1_XX) (x) Exp(T1_X) (x) N(tres2)
    hist_cond: X-after-XX delay -> Exp(T1_X|XX) (x) N(sqrt(tres1^2+tres2^2))

    Each curve carries a free amplitude and time origin; the three lifetimes
    are refined jointly after per-curve warm starts.
    """
    s1 = jitter_fwhm_ch1_ps * FWHM_TO_SIGMA
    s2 = jitter_fwhm_ch2_ps * FWHM_TO_SIGMA
    s12 = math.hypot(s1, s2)
    curves = [(np.asarray(h[0], float), np.asarray(h[1], float))
              for h in (hist_xx, hist_x, hist_cond)]

    def curve_model(i, t, t0, t1_xx, t1_x, t1_cond):
        ts = t - t0
        if i == 0:
            return exp_gauss_density(ts, t1_xx, s1)
        if i == 1:
            return _double_exp_gauss(ts, t1_xx, t1_x, s2)
        return exp_gauss_density(ts, t1_cond, s12)

    def mean_start(x, y):
        w = np.maximum(y, 0.0)
        return float(np.sum(x * w) / max(w.sum(), 1.0))

    t1_xx0 = max(mean_start(*curves[0]), 10.0)
    t1_cond0 = max(mean_start(*curves[2]), 10.0)
    t1_x0 = max(mean_start(*curves[1]) - t1_xx0, 10.0)

    def objective(p):
        t1_xx, t1_x, t1_cond, t0a, t0b, t0c = p
        total = 0.0
        for i, (x, y) in enumerate(curves):
            m = curve_model(i, x, (t0a, t0b, t0c)[i], t1_xx, t1_x, t1_cond)
            amp = float(y.sum() / max(m.sum(), 1e-12))  # Poisson-MLE amplitude
            total += poisson_deviance(y, amp * m)
        return total

    res = minimize_multistart(
        objective, [t1_xx0, t1_x0, t1_cond0, 0.0, 0.0, 0.0],
        bounds=[(5.0, 1e5), (5.0, 1e5), (5.0, 1e5),
                (-200.0, 200.0), (-200.0, 200.0), (-200.0, 200.0)],
        n_starts=5, seed=seed)
    t1_xx, t1_x, t1_cond = res.x[:3]

    # per-lifetime sigma from its own curve, amplitudes profiled at optimum
    sigmas = {}
    models = []
    for i, (x, y) in enumerate(curves):
        def model_fn(p, i=i, x=x, y=y):
            q = list(res.x)
            q[i] = p[0]
            m = curve_model(i, x, q[3 + i], q[0], q[1], q[2])
            return float(y.sum() / max(m.sum(), 1e-12)) * m
        m0 = np.asarray(model_fn([res.x[i]]))
        sig, m0 = leastsq_sigma(model_fn, [res.x[i]], y,
                                weights=1.0 / np.maximum(m0, 0.25))
        sigmas[("t1_xx_ps", "t1_x_ps", "t1_cond_ps")[i]] = float(sig[0])
        models.append(m0)
    y_all = np.concatenate([c[1] for c in curves])
    m_all = np.concatenate(models)
    return FitResult(
        params={"t1_xx_ps": float(t1_xx), "t1_x_ps": float(t1_x),
                "t1_cond_ps": float(t1_cond)},
        sigma=sigmas,
        mse=relative_mse(y_all, m_all),
        converged=bool(res.success),
    )


def lifetime_histograms(stream, params: CascadeParams, *,
                        bin_width_ps: float = 1.0, window_ps: float = 4000.0):
    """Build the three lifetime curves from a tag stream.

    Arrival phases within the excitation period for the H-basis XX and X
    channels, plus the sifted XX-X delay histogram.
    """
    from .correlate import as_stream
    ts, ch = as_stream(stream)
    rep = params.rep_period_ps
    out = []
    for c in (0, 2):
        t = ts[ch == c]
        phase = t - np.floor(t / rep) * rep
        nbins = int(min(window_ps, rep) // bin_width_ps)
        counts, edges = np.histogram(phase, bins=nbins,
                                     range=(0.0, nbins * bin_width_ps))
        centers = 0.5 * (edges[:-1] + edges[1:])
        out.append((centers, counts.astype(float)))
    h = cross_correlate((ts, ch), 0, 2, bin_width_ps=bin_width_ps,
                        window_ps=min(window_ps, rep), mode="ttr_sifted",
                        rep_period_ps=rep)
    out.append((h.bin_centers, h.counts.astype(float)))
    return tuple(out)


# ---------------------------------------------------------------------------
# fine structure splitting


def fit_fss(angles_deg, energies_uev, *, seed: int = 0) -> FitResult:
    """Fit E(theta) = E0 + (delta/2) sin(4 theta + phi0) to polarization-
    resolved emission energies (half-wave plate angle doubles the
    polarization angle, hence the factor 4).

    Linear least squares on the sin/cos quadratures; exact, no iteration.
    """
    th = np.radians(np.asarray(angles_deg, dtype=float))
    y = np.asarray(energies_uev, dtype=float)
    if th.size < 8:
        raise ValueError("need at least 8 angle samples")
    if th.max() - th.min() < math.radians(90.0) - 1e-9:
        raise ValueError("angle samples must span at least 90 degrees")
    a = np.column_stack([np.ones_like(th), np.sin(4 * th), np.cos(4 * th)])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    dof = max(th.size - 3, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(a.T @ a)
    e0, cs, cc = coef
    amp = math.hypot(cs, cc)
    delta = 2.0 * amp
    phase = math.atan2(cc, cs)
    # delta-method errors for the amplitude
    if amp > 0:
        grad = np.array([0.0, cs / amp, cc / amp])
        var_amp = float(grad @ cov @ grad)
    else:
        var_amp = float(cov[1, 1] + cov[2, 2])
    return FitResult(
        params={"delta_fss_uev": delta, "phase_rad": phase, "e0_uev": float(e0)},
        sigma={"delta_fss_uev": 2.0 * math.sqrt(max(var_amp, 0.0)),
               "phase_rad": math.sqrt(max(var_amp, 0.0)) / max(amp, 1e-12),
               "e0_uev": math.sqrt(max(float(cov[0, 0]), 0.0))},
        mse=relative_mse(y - e0, (a @ coef) - e0),
    )


def fss_phase_contrast(fit_a: FitResult, fit_b: FitResult) -> float:
    """|phase difference| of two transitions' modulations, folded to [0, pi].

    The X and XX lines swing in antiphase (the splitting moves them in
    opposite directions), so a near-pi value is the expected signature.
    """
    d = abs(fit_a.params["phase_rad"] - fit_b.params["phase_rad"]) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


# ---------------------------------------------------------------------------
# Rabi power dependence


def fit_rabi(pulse_energies_fj, rates, *, seed: int = 0) -> FitResult:
    """Fit the damped Rabi oscillation; reports the pi-pulse energy.

    Requires the sampled energies to bracket the first oscillation maximum.
    """
    from .simulate import rabi_excitation_probability
    e = np.asarray(pulse_energies_fj, dtype=float)
    y = np.asarray(rates, dtype=float)
    imax = int(np.argmax(y))
    if imax == 0 or imax == e.size - 1:
        raise ValueError("pulse energies do not bracket the first maximum")

    def model(p):
        e_pi, eta_max, damping = p
        return rabi_excitation_probability(e, e_pi, damping, eta_max)

    def chi2(p):
        return float(np.sum((y - model(p)) ** 2))

    res = minimize_multistart(
        chi2, [e[imax], max(y.max(), 1e-9), 0.1],
        bounds=[(e[1] * 0.2, e[-1] * 2.0), (0.0, None), (0.0, 10.0)],
        n_starts=5, seed=seed)
    sigma, m = leastsq_sigma(model, res.x, y, weights=np.ones_like(y))
    return FitResult(
        params={"e_pi_fj": float(res.x[0]), "eta_max": float(res.x[1]),
                "damping": float(res.x[2])},
        sigma={"e_pi_fj": float(sigma[0]), "eta_max": float(sigma[1]),
               "damping": float(sigma[2])},
        mse=relative_mse(y, m),
        converged=bool(res.success),
    )
