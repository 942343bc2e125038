"""Monte Carlo time-tag generation for the pulsed XX-X cascade source.

Event chain per excitation pulse: a two-state telegraph decides whether the
emitter is on; an "on" pulse creates a photon pair with probability eta_ex;
the XX emission delay is exponential in the XX lifetime, the X photon follows
after another exponential delay; the joint polarization outcome is sampled
from the precessing two-photon state at the XX-X delay, degraded by each
arm's projection fidelity; detection applies per-channel efficiency, Gaussian
timing jitter and Poissonian dark counts.

Reproducibility: pulses are processed in fixed-size blocks, each block
drawing from its own counter-based (Philox) stream keyed by (seed, block).
The telegraph and the dark counts use dedicated streams.  Output is
therefore bit-identical for a given (params, n_pulses, seed) no matter how
many worker threads are used.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import ttr
from .params import CascadeParams, ChannelConfig, FWHM_TO_SIGMA

BLOCK_PULSES = 1 << 19

_STREAM_TELEGRAPH = 0
_STREAM_DARKS = 1
_STREAM_BLOCK = 2


def _rng(seed: int, *key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed,) + key)))


def telegraph_boundaries(beta: float, t_decay_ps: float, total_ps: float,
                         rng: np.random.Generator):
    """Switching times of a stationary two-state telegraph process.

    Rates are chosen so the stationary on-probability is ``beta`` and the
    on/off autocorrelation decays with time constant ``t_decay_ps``:
    mean on-dwell = t_decay/(1-beta), mean off-dwell = t_decay/beta.
    Returns (boundaries, start_on); the state flips at each boundary.
    """
    if beta >= 1.0:
        return np.empty(0), True
    mean_on = t_decay_ps / (1.0 - beta)
    mean_off = t_decay_ps / beta
    start_on = bool(rng.random() < beta)
    bounds = []
    t = 0.0
    on = start_on
    mean_cycle = mean_on + mean_off
    while t < total_ps:
        # even batch size keeps `on` valid at every batch start
        n = max(16, int(1.5 * (total_ps - t) / mean_cycle) * 2)
        dw = np.empty(n)
        dw[0::2] = rng.exponential(mean_on if on else mean_off, size=n // 2)
        dw[1::2] = rng.exponential(mean_off if on else mean_on, size=n // 2)
        edges = t + np.cumsum(dw)
        bounds.append(edges)
        t = edges[-1]
    boundaries = np.concatenate(bounds)
    return boundaries[boundaries < total_ps], start_on


def telegraph_state(times_ps: np.ndarray, boundaries: np.ndarray,
                    start_on: bool) -> np.ndarray:
    """On/off state of the telegraph at each query time."""
    if boundaries.size == 0:
        return np.full(times_ps.shape, start_on, dtype=bool)
    idx = np.searchsorted(boundaries, times_ps, side="right")
    return (idx % 2 == 0) == start_on


def _joint_basis_coeffs(channels: tuple[ChannelConfig, ...]):
    """Per (XX channel, X channel) combination, the coefficients (alpha, beta)
    of the outcome probability p = alpha + damp * Re(beta * e^{i phase})."""
    from .polarization import pair_probability_coeffs
    alphas = np.empty(4)
    betas = np.empty(4, dtype=complex)
    for a in range(2):
        for b in range(2):
            alphas[2 * a + b], betas[2 * a + b] = pair_probability_coeffs(
                channels[a].basis, channels[2 + b].basis)
    return alphas, betas


def _outcome_probabilities(delta_tau: np.ndarray, params: CascadeParams,
                           alphas, betas) -> np.ndarray:
    """(n, 4) probabilities of the joint channel outcome at each XX-X delay."""
    if math.isinf(params.precession_period_ps):
        phase = np.full_like(delta_tau, params.dphi_rad)
    else:
        phase = 2.0 * math.pi * delta_tau / params.precession_period_ps + params.dphi_rad
    damp = np.ones_like(delta_tau) if math.isinf(params.t2star_x_ps) \
        else np.exp(-delta_tau / params.t2star_x_ps)
    rot = damp * np.exp(1j * phase)
    p = alphas[None, :] + np.real(betas[None, :] * rot[:, None])
    np.clip(p, 0.0, None, out=p)
    p /= p.sum(axis=1, keepdims=True)
    return p


def sample_emission(params: CascadeParams, seed: int, size: int = 1):
    """Draw emission delays and joint polarization outcomes (pre-detection).

    Returns dict with tau_xx_ps, tau_x_ps (absolute X delay from the pulse),
    xx_channel and x_channel arrays.  Exposed for statistical unit tests of
    the sampler.
    """
    rng = _rng(seed, _STREAM_BLOCK, 0)
    return _sample_pairs(params, rng, size)


def _sample_pairs(params: CascadeParams, rng: np.random.Generator, m: int):
    alphas, betas = _joint_basis_coeffs(params.channels)
    tau_xx = rng.exponential(params.t1_xx_ps, m)
    delta = rng.exponential(params.t1_x_ps, m)
    p = _outcome_probabilities(delta, params, alphas, betas)
    u = rng.random(m)
    outcome = (u[:, None] > np.cumsum(p, axis=1)).sum(axis=1)
    xx_ch = (outcome >> 1).astype(np.int64)
    x_ch = 2 + (outcome & 1).astype(np.int64)
    # projection infidelity: depolarizing admixture, i.e. with probability
    # (1 - F) the recorded outcome is uniform over the two arm projectors,
    # which flips it to the orthogonal channel half the time
    fid = np.array([c.fidelity for c in params.channels])
    flip_xx = rng.random(m) < 0.5 * (1.0 - fid[xx_ch])
    flip_x = rng.random(m) < 0.5 * (1.0 - fid[x_ch])
    xx_ch = np.where(flip_xx, 1 - xx_ch, xx_ch)
    x_ch = np.where(flip_x, 5 - x_ch, x_ch)
    return {
        "tau_xx_ps": tau_xx,
        "tau_x_ps": tau_xx + delta,
        "xx_channel": xx_ch,
        "x_channel": x_ch,
    }


def _simulate_block(params, k0, k1, seed, block_index, boundaries, start_on):
    rng = _rng(seed, _STREAM_BLOCK, block_index)
    rep = params.rep_period_ps
    k = np.arange(k0, k1, dtype=np.int64)
    u = rng.random(k.size)
    on = telegraph_state(k * rep, boundaries, start_on)
    created = on & (u < params.eta_ex)
    k = k[created]
    m = int(k.size)
    if m == 0:
        return np.empty(0, np.int64), np.empty(0, np.uint8)
    pairs = _sample_pairs(params, rng, m)
    pulse_t = k * rep

    eta = np.array([c.eta_det for c in params.channels])
    sig = np.array([c.jitter_sigma_ps for c in params.channels])
    ts_parts, ch_parts = [], []
    for t_emit, ch in ((pairs["tau_xx_ps"], pairs["xx_channel"]),
                       (pairs["tau_x_ps"], pairs["x_channel"])):
        detected = rng.random(m) < eta[ch]
        jitter = rng.standard_normal(m) * sig[ch]
        t = pulse_t + t_emit + jitter
        ts_parts.append(t[detected])
        ch_parts.append(ch[detected])
    ts = np.concatenate(ts_parts)
    ch = np.concatenate(ch_parts)
    ts = np.maximum(np.rint(ts), 0.0).astype(np.int64)
    return ts, ch.astype(np.uint8)


def simulate(params: CascadeParams, n_pulses: int, seed: int,
             threads: int = 1) -> np.ndarray:
    """Generate the time-sorted detection record array for ``n_pulses``.

    Deterministic for given (params, n_pulses, seed), independent of
    ``threads``.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    rep = params.rep_period_ps
    total_ps = n_pulses * rep

    boundaries, start_on = telegraph_boundaries(
        params.beta, params.t_decay_ns * 1000.0, total_ps,
        _rng(seed, _STREAM_TELEGRAPH))

    blocks = [(b, min(b + BLOCK_PULSES, n_pulses))
              for b in range(0, n_pulses, BLOCK_PULSES)]

    def work(item):
        i, (k0, k1) = item
        return _simulate_block(params, k0, k1, seed, i, boundaries, start_on)

    threads = max(1, int(threads))
    if threads == 1 or len(blocks) == 1:
        parts = [work(it) for it in enumerate(blocks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, enumerate(blocks)))

    ts_all = [p[0] for p in parts]
    ch_all = [p[1] for p in parts]

    rng_d = _rng(seed, _STREAM_DARKS)
    for c, chan in enumerate(params.channels):
        if chan.dark_hz > 0:
            n_dark = rng_d.poisson(chan.dark_hz * total_ps * 1e-12)
            ts_all.append(rng_d.integers(0, int(total_ps), n_dark, dtype=np.int64))
            ch_all.append(np.full(n_dark, c, dtype=np.uint8))

    ts = np.concatenate(ts_all) if ts_all else np.empty(0, np.int64)
    ch = np.concatenate(ch_all) if ch_all else np.empty(0, np.uint8)
    order = np.lexsort((ch, ts))
    return ttr.make_records(ts[order], ch[order])


def rabi_excitation_probability(pulse_energy_fj, e_pi_fj: float,
                                damping: float = 0.0, eta_max: float = 1.0):
    """Damped Rabi oscillation of the pair creation probability vs pulse
    energy: eta_max * sin^2(pi/2 * sqrt(E/E_pi)) * exp(-damping*sqrt(E/E_pi)).
    """
    if e_pi_fj <= 0:
        raise ValueError("e_pi_fj must be > 0")
    e = np.asarray(pulse_energy_fj, dtype=float)
    if np.any(e < 0):
        raise ValueError("pulse energy must be >= 0")
    x = np.sqrt(e / e_pi_fj)
    p = eta_max * np.sin(0.5 * math.pi * x) ** 2 * np.exp(-damping * x)
    return float(p) if np.isscalar(pulse_energy_fj) else p
