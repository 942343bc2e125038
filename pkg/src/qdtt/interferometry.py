"""Photon coherence forward models and fitters.

Hong-Ou-Mandel geometry: the excitation pulses of one repetition period are
split into two pulses separated by the interferometer delay; consecutive
photons meet at a fiber beamsplitter after one of them takes the matching
fiber delay.  The central coincidence manifold is modeled as three peaks at
{-delay, 0, +delay} with cross-polarized area ratios 1:2:1.  Co-polarized
coincidences are suppressed by the two-photon interference kernel

    g_par(dt) = g_perp(dt) * (1 - V_bs * exp(-2|dt|/T2*)),

the Markovian pure-dephasing limit of time-resolved two-photon interference
(V_bs = 2R(1-R)/(R^2+(1-R)^2) accounts for beamsplitter imbalance).  The
kernel is isolated in :func:`visibility_kernel` so an alternative dephasing
model can be substituted in one place.

Michelson visibility uses a Lorentzian times Gaussian product line shape
with optional beat notes; T2 is reported as the 1/e point.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc, erfcx

from .fitting import (
    FitResult,
    leastsq_sigma,
    minimize_multistart,
    profile_amplitude,
    relative_mse,
)
from .params import FWHM_TO_SIGMA


class HomParams:
    """Parameters of the unbalanced-delay pulsed HOM measurement."""

    def __init__(self, t1_ps: float, t2star_ps: float,
                 jitter_fwhm_ps: float = 73.5, rep_period_ns: float = 13.16,
                 delay_ns: float = 1.58, bs_ratio: float = 0.5):
        if t1_ps <= 0 or t2star_ps <= 0:
            raise ValueError("lifetimes must be > 0")
        if not 0.0 < bs_ratio < 1.0:
            raise ValueError("bs_ratio must be in (0, 1)")
        if jitter_fwhm_ps < 0 or rep_period_ns <= 0 or delay_ns <= 0:
            raise ValueError("invalid HOM parameters")
        self.t1_ps = t1_ps
        self.t2star_ps = t2star_ps
        self.jitter_fwhm_ps = jitter_fwhm_ps
        self.rep_period_ns = rep_period_ns
        self.delay_ns = delay_ns
        self.bs_ratio = bs_ratio

    @property
    def delay_ps(self) -> float:
        return self.delay_ns * 1000.0

    @property
    def bs_visibility(self) -> float:
        r = self.bs_ratio
        return 2.0 * r * (1.0 - r) / (r * r + (1.0 - r) ** 2)


def visibility_kernel(dt_ps: np.ndarray, t2star_ps: float) -> np.ndarray:
    """Two-photon interference suppression factor exp(-2|dt|/T2*)."""
    if math.isinf(t2star_ps):
        return np.ones_like(np.asarray(dt_ps, dtype=float))
    return np.exp(-2.0 * np.abs(dt_ps) / t2star_ps)


def _peak(dt_ps: np.ndarray, t1_ps: float) -> np.ndarray:
    """Unit-area two-sided exponential coincidence peak."""
    return np.exp(-np.abs(dt_ps) / t1_ps) / (2.0 * t1_ps)


def hom_model(dt_ps, p: HomParams, polarization: str = "co",
              convolved: bool = True) -> np.ndarray:
    """Coincidence density of the central HOM manifold vs detection delay.

    ``convolved=False`` gives the non-time-convoluted (NC) model; otherwise
    the curve is convolved with the combined Gaussian detector response.
    """
    if polarization not in ("co", "cross"):
        raise ValueError("polarization must be 'co' or 'cross'")
    dt = np.atleast_1d(np.asarray(dt_ps, dtype=float))
    d = p.delay_ps

    def manifold(t):
        g = (_peak(t + d, p.t1_ps) + 2.0 * _peak(t, p.t1_ps)
             + _peak(t - d, p.t1_ps)) / 4.0
        if polarization == "co":
            g = g * (1.0 - p.bs_visibility * visibility_kernel(t, p.t2star_ps))
        return g

    sigma = p.jitter_fwhm_ps * FWHM_TO_SIGMA
    if not convolved or sigma == 0.0:
        out = manifold(dt)
    else:
        step = min(1.0, sigma / 4.0)
        pad = 6.0 * sigma
        grid = np.arange(dt.min() - pad, dt.max() + pad + step, step)
        half = int(math.ceil(5.0 * sigma / step))
        x = np.arange(-half, half + 1) * step
        kern = np.exp(-0.5 * (x / sigma) ** 2)
        kern /= kern.sum()
        smooth = np.convolve(manifold(grid), kern, mode="same")
        out = np.interp(dt, grid, smooth)
    return out if np.ndim(dt_ps) else float(out[0])


def hom_indistinguishability(t1_ps: float, t2star_ps: float,
                             bs_ratio: float = 0.5,
                             ps_window_ps: float = 170.0) -> tuple[float, float]:
    """(I_itgr, I_ps) of the NC model, in closed form.

    I_itgr = 1 - (co central-peak area)/(cross central-peak area).
    I_ps   = the same contrast restricted to a post-selection window of
    ``ps_window_ps`` full width around zero detection delay (a measure-zero
    window would trivially give 1, so post-selection needs an explicit
    window; 170 ps is about 2.3x the combined detector response of the
    four-channel setup).
    """
    r = bs_ratio
    v_bs = 2.0 * r * (1.0 - r) / (r * r + (1.0 - r) ** 2)
    if math.isinf(t2star_ps):
        return v_bs, v_bs
    k0 = 1.0 / (1.0 + 2.0 * t1_ps / t2star_ps)
    i_itgr = v_bs * k0
    w = 0.5 * ps_window_ps
    t_eff = 1.0 / (1.0 / t1_ps + 2.0 / t2star_ps)
    cw = 1.0 - math.exp(-w / t1_ps)
    kw = k0 * (1.0 - math.exp(-w / t_eff))
    i_ps = v_bs * kw / cw if cw > 0 else v_bs
    return i_itgr, i_ps


def fit_hom(co_hist, cross_hist, *, t1_ps: float, jitter_fwhm_ps: float,
            rep_period_ns: float = 13.16, delay_ns: float = 1.58,
            bs_ratio: float = 0.5, ps_window_ps: float = 170.0,
            seed: int = 0) -> FitResult:
    """Fit T2* to a co/cross pair of HOM histograms (centers, counts).

    The cross histogram pins the manifold amplitude; the co histogram then
    determines T2* through the depth of the central-peak suppression, its
    own +-delay side peaks acting as in-manifold normalization.  Reports the
    fitted T2* and the integrated / post-selected indistinguishabilities of
    the fitted model.
    """
    c_co, y_co = np.asarray(co_hist[0], float), np.asarray(co_hist[1], float)
    c_cx, y_cx = np.asarray(cross_hist[0], float), np.asarray(cross_hist[1], float)
    span = delay_ns * 1000.0 * 1.5
    if c_cx.min() > -span / 3 or c_cx.max() < span / 3 or y_cx.sum() <= 0:
        raise ValueError("cross histogram does not cover the central manifold")
    if y_co.sum() <= 0:
        raise ValueError("co histogram is empty")

    def params_for(t2star):
        return HomParams(t1_ps=t1_ps, t2star_ps=t2star,
                         jitter_fwhm_ps=jitter_fwhm_ps,
                         rep_period_ns=rep_period_ns, delay_ns=delay_ns,
                         bs_ratio=bs_ratio)

    shape_cx = hom_model(c_cx, params_for(1.0), "cross")
    amp_cx = profile_amplitude(shape_cx, y_cx)

    def chi2(p):
        m = hom_model(c_co, params_for(abs(p[0])), "co")
        amp = profile_amplitude(m, y_co)
        w = 1.0 / np.maximum(y_co, 1.0)
        return float(np.sum(w * (y_co - amp * m) ** 2))

    res = minimize_multistart(chi2, [2.0 * t1_ps], bounds=[(1.0, 1e7)],
                              n_starts=5, seed=seed, spread=0.8)
    t2star = float(abs(res.x[0]))
    shape_co = hom_model(c_co, params_for(t2star), "co")
    amp_co = profile_amplitude(shape_co, y_co)

    def model_fn(p):
        return p[0] * hom_model(c_co, params_for(abs(p[1])), "co")

    sigma, model_co = leastsq_sigma(model_fn, [amp_co, t2star], y_co)
    i_itgr, i_ps = hom_indistinguishability(t1_ps, t2star, bs_ratio,
                                            ps_window_ps)
    y_all = np.concatenate([y_co, y_cx])
    m_all = np.concatenate([model_co, amp_cx * shape_cx])
    return FitResult(
        params={"t2star_ps": t2star, "i_itgr": i_itgr, "i_ps": i_ps,
                "amp_co": amp_co, "amp_cross": amp_cx},
        sigma={"t2star_ps": float(sigma[1])},
        mse=relative_mse(y_all, m_all),
        converged=bool(res.success),
    )


# ---------------------------------------------------------------------------
# Michelson visibility


def michelson_model(dt_ps, v0: float, tau_l_ps: float, tau_g_ps: float,
                    beats=()) -> np.ndarray:
    """Fringe visibility V(dt) = V0 exp(-|dt|/tau_L) exp(-(dt/tau_G)^2) B(dt).

    ``beats`` is a list of (amplitude, angular frequency in rad/ps); the beat
    factor |sum_k a_k e^{i w_k dt}| is normalized to one at zero delay.
    """
    if tau_l_ps <= 0 or tau_g_ps <= 0:
        raise ValueError("coherence scales must be > 0")
    dt = np.atleast_1d(np.asarray(dt_ps, dtype=float))
    v = v0 * np.exp(-np.abs(dt) / tau_l_ps) * np.exp(-((dt / tau_g_ps) ** 2))
    if beats:
        z = np.zeros(dt.shape, dtype=complex)
        norm = 0.0
        for a, w in beats:
            z += a * np.exp(1j * w * dt)
            norm += a
        v = v * np.abs(z) / abs(norm)
    return v if np.ndim(dt_ps) else float(v[0])


def michelson_t2(v0: float, tau_l_ps: float, tau_g_ps: float, beats=()) -> float:
    """Delay where V/V0 first drops to 1/e."""
    def f(t):
        return michelson_model(t, 1.0, tau_l_ps, tau_g_ps, beats) - math.exp(-1)

    hi = tau_l_ps
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e9:
            return math.inf
    return float(brentq(f, 0.0, hi, xtol=1e-6))


def fit_michelson(delays_ps, visibilities, *, beats=(), seed: int = 0) -> FitResult:
    """Fit (V0, tau_L, tau_G) to measured visibility points; reports T2."""
    x = np.asarray(delays_ps, dtype=float)
    y = np.asarray(visibilities, dtype=float)
    span = max(x.max(), 1.0)

    def unpack(p):
        v0, tau_l, g_rate = p
        tau_g = 1.0 / g_rate if g_rate > 1e-12 else 1e12
        return v0, abs(tau_l), tau_g

    def chi2(p):
        v0, tau_l, tau_g = unpack(p)
        return float(np.sum((y - michelson_model(x, v0, tau_l, tau_g, beats)) ** 2))

    res = minimize_multistart(chi2, [max(y.max(), 0.1), span / 3.0, 1.0 / (3 * span)],
                              bounds=[(0.0, 1.5), (1.0, None), (0.0, None)],
                              n_starts=5, seed=seed)
    v0, tau_l, tau_g = unpack(res.x)

    def model_fn(p):
        pv, pl, pg = unpack(p)
        return michelson_model(x, pv, pl, pg, beats)

    sigma, model = leastsq_sigma(model_fn, res.x, y, weights=np.ones_like(y))
    t2 = michelson_t2(v0, tau_l, tau_g, beats)
    return FitResult(
        params={"v0": v0, "tau_l_ps": tau_l, "tau_g_ps": tau_g, "t2_ps": t2},
        sigma={"v0": float(sigma[0]), "tau_l_ps": float(sigma[1]),
               "tau_g_ps": float(sigma[2] / max(res.x[2], 1e-12) ** 2)
               if res.x[2] > 1e-12 else math.inf},
        mse=relative_mse(y, model),
        converged=bool(res.success),
    )


# ---------------------------------------------------------------------------
# spectral filtering and coherence-time relations


def t2_indirect(t1_ps: float, t2star_ps: float) -> float:
    """Total coherence time from lifetime and pure dephasing:
    1/T2 = 1/(2 T1) + 1/T2*."""
    if t1_ps <= 0 or t2star_ps <= 0:
        raise ValueError("times must be > 0")
    if math.isinf(t2star_ps):
        return 2.0 * t1_ps
    return 1.0 / (0.5 / t1_ps + 1.0 / t2star_ps)


def _product_acf_decay(t2_ps: float, t2_filter_ps: float) -> float:
    """1/e decay time of the field correlation behind a Lorentzian filter.

    The filtered spectrum is the product of two Lorentzians with correlation
    decay rates g1 = 1/t2 and g2 = 1/t2_filter; its inverse transform is
    (g2 e^{-g1 t} - g1 e^{-g2 t}) / (g2 - g1).
    """
    g1 = 1.0 / t2_ps
    g2 = 1.0 / t2_filter_ps

    if abs(g1 - g2) < 1e-9 * g1:
        g = 0.5 * (g1 + g2)

        def acf(t):
            return (1.0 + g * t) * math.exp(-g * t)
    else:
        def acf(t):
            return (g2 * math.exp(-g1 * t) - g1 * math.exp(-g2 * t)) / (g2 - g1)

    target = math.exp(-1.0)
    hi = 2.0 * max(t2_ps, t2_filter_ps)
    while acf(hi) > target:
        hi *= 2.0
    return float(brentq(lambda t: acf(t) - target, 0.0, hi, xtol=1e-9))


def etalon_transform(t2star_ps: float, t1_ps: float,
                     bandwidth_ghz: float) -> tuple[float, float]:
    """Effective (T2*, transmission) behind a Lorentzian etalon.

    The photon line (FWHM 1/(pi T2)) is multiplied by the filter line
    (FWHM = bandwidth); the effective total coherence time is the 1/e decay
    of the filtered field correlation, converted back to a pure-dephasing
    time at fixed T1 (infinite when the filter pushes the line to the
    lifetime limit).  Transmission is the filter linewidth over the summed
    linewidths, capped at one.  An infinitely wide filter is the identity.
    """
    if bandwidth_ghz <= 0:
        raise ValueError("bandwidth must be > 0")
    t2 = t2_indirect(t1_ps, t2star_ps)
    width_photon_ghz = 1000.0 / (math.pi * t2)
    transmission = min(1.0, bandwidth_ghz / (bandwidth_ghz + width_photon_ghz))
    if math.isinf(t2star_ps) and bandwidth_ghz > 1e6:
        return math.inf, transmission
    t2_filter = 1000.0 / (math.pi * bandwidth_ghz)
    t2_eff = _product_acf_decay(t2, t2_filter)
    inv_t2star = 1.0 / t2_eff - 0.5 / t1_ps
    t2star_eff = math.inf if inv_t2star <= 0 else 1.0 / inv_t2star
    return t2star_eff, transmission


def exp_gauss_density(t, tau_ps: float, sigma_ps: float):
    """Exponential decay (mean tau) convolved with a Gaussian (sigma).

    Two-branch evaluation keeps it stable on both tails: the scaled
    complementary error function on the rising edge, the plain exponential
    with a saturating erfc deep in the decay.
    """
    t = np.asarray(t, dtype=float)
    if sigma_ps <= 0:
        return np.where(t >= 0, np.exp(-np.maximum(t, 0.0) / tau_ps) / tau_ps, 0.0)
    b = (sigma_ps / tau_ps - t / sigma_ps) / math.sqrt(2.0)
    out = np.empty_like(b)
    rising = b >= 0
    out[rising] = erfcx(b[rising]) * np.exp(-0.5 * (t[rising] / sigma_ps) ** 2)
    tail = ~rising
    arg = 0.5 * (sigma_ps / tau_ps) ** 2 - t[tail] / tau_ps
    out[tail] = erfc(b[tail]) * np.exp(arg)
    return 0.5 / tau_ps * out
