"""End-to-end drivers: simulate -> correlate -> analyze, plus the
figure-reproduction recipes used by ``qdtt reproduce``.

Every driver is deterministic for a given (config, seed, scale) and emits
plot-ready CSV/JSON artifacts plus a run manifest.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np

from . import __version__, ttr
from .correlate import CorrelationMatrix, MatrixSegment, build_correlation_matrix
from .estimators import (
    blinking_from_stream,
    estimate_efficiencies,
    fit_lifetimes,
    lifetime_histograms,
    rates_from_stream,
)
from .interferometry import HomParams, fit_hom, hom_model
from .params import CascadeParams, paper_defaults
from .polarization import BASIS_PAIRS
from .simulate import simulate
from .tomography import (
    TomographyInput,
    fit_cascade_model,
    negativity_vs_delay,
    negativity_vs_window,
)

FIGURES = ("fig2", "fig3b", "fig3c", "fig4c", "s2", "s5")


def derived_seed(seed: int, *key) -> int:
    return int(np.random.SeedSequence((seed,) + key).generate_state(1)[0])


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(path, *, command: str, config: dict, seed: int,
                   inputs=(), outputs=(), t_start: float) -> None:
    manifest = {
        "command": command,
        "config_sha256": config_hash(config),
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "wall_time_s": round(time.monotonic() - t_start, 3),
    }
    Path(path).write_text(json.dumps(manifest, indent=1) + "\n")


def segment_bases():
    """The nine (XX arm, X arm) basis-pair assignments covering all 36
    combinations with four detectors."""
    out = []
    for bx in BASIS_PAIRS:
        for bs in BASIS_PAIRS:
            out.append((bx[0], bx[1], bs[0], bs[1]))
    return out


def simulate_matrix_segments(params: CascadeParams, pulses_per_segment: int,
                             seed: int, threads: int = 1) -> list[MatrixSegment]:
    """Simulate the nine sequential acquisition segments of the full
    polarization correlation matrix."""
    segments = []
    for s, bases in enumerate(segment_bases()):
        p = params.with_channels(bases=bases)
        rec = simulate(p, pulses_per_segment, derived_seed(seed, 10, s),
                       threads=threads)
        segments.append(MatrixSegment(stream=rec, bases=bases,
                                      n_pulses=pulses_per_segment,
                                      rep_period_ps=p.rep_period_ps))
    return segments


def matrix_from_simulation(params: CascadeParams, n_pulses: int, seed: int, *,
                           bin_width_ps: float = 1.0, window_ps: float = 600.0,
                           mode: str = "ttr_sifted",
                           threads: int = 1) -> CorrelationMatrix:
    per_seg = max(1, n_pulses // 9)
    segs = simulate_matrix_segments(params, per_seg, seed, threads=threads)
    return build_correlation_matrix(segs, bin_width_ps=bin_width_ps,
                                    window_ps=window_ps, mode=mode,
                                    threads=threads)


def _inflated(params: CascadeParams) -> CascadeParams:
    """Detection efficiency raised to 0.5 for desk-scale statistics."""
    return params.with_channels(eta_det=0.5)


def reproduce(figure: str, out_dir, *, scale: int = 1_000_000, seed: int = 0,
              config: CascadeParams | None = None, threads: int = 1) -> dict:
    """Run the full chain for one figure; returns {name: path} of artifacts."""
    if figure not in FIGURES:
        raise ValueError(f"unknown figure id {figure!r}; expected one of {FIGURES}")
    t0 = time.monotonic()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = config if config is not None else _inflated(paper_defaults())
    fn = globals()[f"_reproduce_{figure}"]
    artifacts = fn(out, params, scale, seed, threads)
    write_manifest(out / "manifest.json", command=f"reproduce {figure}",
                   config=params.to_dict(), seed=seed,
                   outputs=sorted(str(p) for p in artifacts.values()),
                   t_start=t0)
    artifacts["manifest"] = out / "manifest.json"
    return artifacts


def _reproduce_fig2(out, params, scale, seed, threads):
    """Polarization-resolved correlation matrix and the phase-offset fit."""
    matrix = matrix_from_simulation(params, scale, seed, threads=threads)
    mdir = out / "matrix"
    matrix.save_dir(mdir)
    jitter = _combined_jitter(params)
    fit = fit_cascade_model(matrix, t_p_ps=params.precession_period_ps,
                            t1_x_ps=params.t1_x_ps, jitter_fwhm_ps=jitter)
    fit_path = out / "cascade_fit.json"
    fit_path.write_text(json.dumps(fit.to_dict(), indent=1))
    return {"matrix": mdir, "cascade_fit": fit_path}


def _neg_series(out, params, scale, seed, threads, mode):
    matrix = matrix_from_simulation(params, scale, seed, threads=threads)
    inp = TomographyInput(matrix, bin_ps=8.0)
    if mode == "delay":
        series = negativity_vs_delay(inp, delay_range_ps=(0.0, 520.0),
                                     seed=derived_seed(seed, 20))
        label = "delay_ps"
    else:
        series = negativity_vs_window(inp, seed=derived_seed(seed, 20))
        label = "window_ps"
    path = out / "neg.csv"
    series.to_csv(path, label=label)
    return {"neg": path}


def _reproduce_fig3b(out, params, scale, seed, threads):
    """Negativity vs XX-X delay from sifted four-detector data."""
    return _neg_series(out, params, scale, seed, threads, "delay")


def _reproduce_fig3c(out, params, scale, seed, threads):
    """Negativity vs integration window."""
    return _neg_series(out, params, scale, seed, threads, "window")


def _reproduce_fig4c(out, params, scale, seed, threads):
    """Synthetic central HOM manifolds, with and without the etalon."""
    rng = np.random.default_rng(derived_seed(seed, 30))
    artifacts = {}
    centers = np.arange(-2400.0, 2401.0, 8.0)
    for tag, t2star in (("plain", 392.0), ("etalon", 1054.0)):
        p = HomParams(t1_ps=params.t1_xx_ps, t2star_ps=t2star,
                      jitter_fwhm_ps=_combined_jitter(params))
        data = {}
        for pol in ("co", "cross"):
            expect = hom_model(centers, p, pol) * scale
            counts = rng.poisson(expect)
            path = out / f"hom_{tag}_{pol}.csv"
            _write_curve(path, centers, counts, "counts")
            data[pol] = (centers, counts)
            artifacts[f"hom_{tag}_{pol}"] = path
        fit = fit_hom(data["co"], data["cross"], t1_ps=p.t1_ps,
                      jitter_fwhm_ps=p.jitter_fwhm_ps)
        fpath = out / f"hom_fit_{tag}.json"
        fpath.write_text(json.dumps(fit.to_dict(), indent=1))
        artifacts[f"hom_fit_{tag}"] = fpath
    return artifacts


def _reproduce_s2(out, params, scale, seed, threads):
    """Lifetime decay curves at 76 MHz excitation and the joint fit."""
    d = params.to_dict()
    d["rep_rate_ghz"] = 0.076
    p = CascadeParams.from_dict(d)
    rec = simulate(p, scale, derived_seed(seed, 40), threads=threads)
    hists = lifetime_histograms(rec, p)
    artifacts = {}
    for name, (c, y) in zip(("xx", "x", "cond"), hists):
        path = out / f"lifetime_{name}.csv"
        _write_curve(path, c, y, "counts")
        artifacts[name] = path
    fit = fit_lifetimes(*hists,
                        jitter_fwhm_ch1_ps=p.channels[0].jitter_fwhm_ps,
                        jitter_fwhm_ch2_ps=p.channels[2].jitter_fwhm_ps)
    fpath = out / "lifetime_fit.json"
    fpath.write_text(json.dumps(fit.to_dict(), indent=1))
    artifacts["fit"] = fpath
    return artifacts


def _reproduce_s5(out, params, scale, seed, threads):
    """Blinking envelope of the XX auto-correlation and the telegraph fit."""
    d = params.to_dict()
    d["beta"] = 0.61
    d["t_decay_ns"] = 12.7
    p = CascadeParams.from_dict(d)
    rec = simulate(p, scale, derived_seed(seed, 50), threads=threads)
    fit = blinking_from_stream(rec, p)
    from .correlate import cross_correlate
    from .estimators import peak_envelope
    rep = p.rep_period_ps
    hist = cross_correlate(rec, 0, 1, bin_width_ps=rep / 4.0,
                           window_ps=80.5 * rep, mode="histogram")
    ns, areas, _ = peak_envelope(hist, rep)
    env_path = out / "envelope.csv"
    _write_curve(env_path, ns * rep / 1000.0, areas, "area", x_label="delay_ns")
    fpath = out / "blinking_fit.json"
    fpath.write_text(json.dumps(fit.to_dict(), indent=1))
    return {"envelope": env_path, "fit": fpath}


def _combined_jitter(params: CascadeParams) -> float:
    j = [c.jitter_fwhm_ps for c in params.channels]
    return math.hypot((j[0] + j[1]) / 2.0, (j[2] + j[3]) / 2.0)


def _write_curve(path, x, y, y_label: str, x_label: str = "bin_center_ps"):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([x_label, y_label])
        for xi, yi in zip(x, y):
            w.writerow([f"{xi:.10g}", f"{yi:.10g}" if isinstance(yi, float)
                        else int(yi)])
