"""Command line interface.

Exit codes: 0 success, 1 analysis error (propagated as ClickException),
2 usage error (bad flags, malformed config, unknown figure id).
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, ttr
from .correlate import CorrelationMatrix, cross_correlate, load_histogram_csv
from .estimators import (
    estimate_efficiencies,
    fit_blinking,
    fit_fss,
    fit_lifetimes,
    peak_envelope,
    rates_from_stream,
)
from .interferometry import fit_hom, fit_michelson
from .params import CascadeParams, ConfigError, paper_defaults
from .pipeline import FIGURES, reproduce, write_manifest
from .simulate import simulate
from .tomography import TomographyInput, negativity_vs_delay, negativity_vs_window


def _load_config(path) -> CascadeParams:
    if path is None:
        return paper_defaults()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise click.UsageError(
            f"malformed JSON in {path}: {e.msg} at line {e.lineno} column {e.colno}")
    except OSError as e:
        raise click.UsageError(f"cannot read config {path}: {e}")
    try:
        return CascadeParams.from_dict(data)
    except ConfigError as e:
        raise click.UsageError(f"invalid config {path}: {e}")


def _analysis(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, RuntimeError) as e:
        raise click.ClickException(str(e))


def _manifest_for(out_path, command, config, seed, inputs, outputs, t0):
    write_manifest(Path(str(out_path) + ".manifest.json"), command=command,
                   config=config, seed=seed, inputs=inputs, outputs=outputs,
                   t_start=t0)


@click.group()
@click.version_option(__version__, prog_name="qdtt")
@click.option("--threads", type=int, default=1, envvar="QDTT_THREADS",
              show_default=True, help="Worker thread cap (results are "
              "identical for any value).")
@click.pass_context
def main(ctx, threads):
    """Simulate and analyze GHz-clocked entangled photon pair sources."""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = max(1, threads)


@main.command("simulate")
@click.option("--config", type=click.Path(exists=True), default=None,
              help="JSON source/detector config (defaults built in).")
@click.option("--pulses", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True,
              help="Output .ttr tag stream.")
@click.pass_context
def cmd_simulate(ctx, config, pulses, seed, out):
    """Generate a time-tagged detection stream."""
    t0 = time.monotonic()
    params = _load_config(config)
    if pulses < 1:
        raise click.UsageError("--pulses must be >= 1")
    rec = _analysis(simulate, params, pulses, seed, threads=ctx.obj["threads"])
    ttr.write_stream(out, rec, channel_count=4)
    _manifest_for(out, "simulate", params.to_dict(), seed,
                  [config or "<builtin>"], [out], t0)
    click.echo(f"wrote {rec.size} tags to {out}")


@main.command("correlate")
@click.option("--in", "path_in", type=click.Path(exists=True), required=True)
@click.option("--ch-a", type=int, required=True)
@click.option("--ch-b", type=int, required=True)
@click.option("--bin-ps", type=float, default=1.0, show_default=True)
@click.option("--window-ns", type=float, default=2.0, show_default=True)
@click.option("--mode", type=click.Choice(["ttr", "histogram"]), default="ttr",
              show_default=True)
@click.option("--rep-ghz", type=float, default=0.9925, show_default=True,
              help="Repetition rate used for same-period sifting.")
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def cmd_correlate(ctx, path_in, ch_a, ch_b, bin_ps, window_ns, mode, rep_ghz, out):
    """Cross-correlate two channels of a tag stream into a CSV histogram."""
    t0 = time.monotonic()
    header, rec = _analysis(ttr.read_stream, path_in)
    hist = _analysis(
        cross_correlate, rec, ch_a, ch_b, bin_width_ps=bin_ps,
        window_ps=window_ns * 1000.0,
        mode="ttr_sifted" if mode == "ttr" else "histogram",
        rep_period_ps=1000.0 / rep_ghz, threads=ctx.obj["threads"],
        channel_count=header.channel_count)
    hist.to_csv(out)
    _manifest_for(out, "correlate", {"ch_a": ch_a, "ch_b": ch_b,
                                     "bin_ps": bin_ps, "window_ns": window_ns,
                                     "mode": mode, "rep_ghz": rep_ghz},
                  0, [path_in], [out], t0)
    click.echo(f"{hist.n_pairs} coincidences -> {out}")


@main.command("tomography")
@click.option("--matrix", "matrix_dir", type=click.Path(exists=True),
              required=True, help="Directory written by `reproduce fig2`.")
@click.option("--bin-ps", type=float, default=8.0, show_default=True)
@click.option("--mode", type=click.Choice(["delay", "window"]),
              default="delay", show_default=True)
@click.option("--rho-ps", type=str, default=None,
              help="Comma-separated delays; exports rho_<delay>.json each.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Bootstrap resampling seed.")
@click.option("--out", type=click.Path(), required=True)
def cmd_tomography(matrix_dir, bin_ps, mode, rho_ps, seed, out):
    """Reconstruct the two-photon state and its negativity series."""
    t0 = time.monotonic()
    matrix = _analysis(CorrelationMatrix.load_dir, matrix_dir)
    inp = _analysis(TomographyInput, matrix, bin_ps=bin_ps)
    if mode == "delay":
        series = _analysis(negativity_vs_delay, inp, seed=seed)
        series.to_csv(out, label="delay_ps")
    else:
        series = _analysis(negativity_vs_window, inp, seed=seed)
        series.to_csv(out, label="window_ps")
    outputs = [out]
    if rho_ps:
        from .tomography import density_matrix_at
        for tok in rho_ps.split(","):
            delay = float(tok)
            rho = _analysis(density_matrix_at, inp, delay_ps=delay)
            path = Path(out).with_name(f"rho_{tok.strip()}ps.json")
            path.write_text(json.dumps(
                {"delay_ps": delay, "real": rho.real.tolist(),
                 "imag": rho.imag.tolist()}, indent=1))
            outputs.append(path)
    _manifest_for(out, "tomography", {"bin_ps": bin_ps, "mode": mode},
                  seed, [matrix_dir], [str(p) for p in outputs], t0)
    click.echo(f"{series.values.size} points -> {out}")


@main.command("estimate")
@click.option("--in", "path_in", type=click.Path(exists=True), required=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--pulses", type=int, default=None,
              help="Pulse count of the run (inferred from the last tag if "
              "omitted).")
@click.option("--out", type=click.Path(), required=True)
def cmd_estimate(path_in, config, pulses, out):
    """Excitation/detection efficiencies from a tag stream."""
    t0 = time.monotonic()
    params = _load_config(config)
    header, rec = _analysis(ttr.read_stream, path_in)
    if pulses is None:
        if rec.size == 0:
            raise click.ClickException("empty stream and no --pulses given")
        pulses = int(rec["timestamp"].max() / params.rep_period_ps) + 1
    rates = _analysis(rates_from_stream, rec, params, pulses)
    result = _analysis(estimate_efficiencies, rates)
    result.extra = {"gamma_single_hz": rates.gamma_single_hz,
                    "gamma_coinc_hz": rates.gamma_coinc_hz}
    payload = result.to_dict()
    payload["rates"] = result.extra
    Path(out).write_text(json.dumps(payload, indent=1))
    _manifest_for(out, "estimate", params.to_dict(), 0, [path_in], [out], t0)
    click.echo(f"eta_ex={result.params['eta_ex']:.4g} "
               f"eta_det={result.params['eta_det']:.4g} -> {out}")


@main.command("fss-fit")
@click.option("--in", "path_in", type=click.Path(exists=True), required=True,
              help="CSV: angle_deg, then one energy column per transition.")
@click.option("--out", type=click.Path(), required=True)
def cmd_fss_fit(path_in, out):
    """Fine structure splitting from energy vs wave-plate angle."""
    t0 = time.monotonic()
    with open(path_in) as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(path_in, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise click.UsageError("need angle_deg plus at least one energy column")
    payload = {}
    for j, name in enumerate(names[1:], start=1):
        fit = _analysis(fit_fss, data[:, 0], data[:, j])
        payload[name] = fit.to_dict()
    Path(out).write_text(json.dumps(payload, indent=1))
    _manifest_for(out, "fss-fit", {"columns": names}, 0, [path_in], [out], t0)
    click.echo(f"fitted {len(payload)} transitions -> {out}")


@main.command("lifetime-fit")
@click.option("--xx", "path_xx", type=click.Path(exists=True), required=True)
@click.option("--x", "path_x", type=click.Path(exists=True), required=True)
@click.option("--cond", "path_cond", type=click.Path(exists=True), required=True)
@click.option("--jitter-ps", type=str, default="47,54", show_default=True,
              help="Comma pair: XX channel and X channel timing FWHM.")
@click.option("--out", type=click.Path(), required=True)
def cmd_lifetime_fit(path_xx, path_x, path_cond, jitter_ps, out):
    """Joint lifetime fit to the three decay histograms."""
    t0 = time.monotonic()
    try:
        j1, j2 = (float(v) for v in jitter_ps.split(","))
    except ValueError:
        raise click.UsageError("--jitter-ps must be 'fwhm1,fwhm2'")
    hists = [load_histogram_csv(p) for p in (path_xx, path_x, path_cond)]
    fit = _analysis(fit_lifetimes, *hists, jitter_fwhm_ch1_ps=j1,
                    jitter_fwhm_ch2_ps=j2)
    Path(out).write_text(json.dumps(fit.to_dict(), indent=1))
    _manifest_for(out, "lifetime-fit", {"jitter_ps": jitter_ps}, 0,
                  [path_xx, path_x, path_cond], [out], t0)
    click.echo(f"T1_XX={fit.params['t1_xx_ps']:.2f} ps "
               f"T1_X={fit.params['t1_x_ps']:.2f} ps -> {out}")


@main.command("blinking-fit")
@click.option("--in", "path_in", type=click.Path(exists=True), required=True,
              help="Auto-correlation histogram CSV (histogram mode).")
@click.option("--rep-ghz", type=float, default=0.9925, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def cmd_blinking_fit(path_in, rep_ghz, out):
    """On-off ratio and decay time from the auto-correlation envelope."""
    t0 = time.monotonic()
    centers, counts = load_histogram_csv(path_in)
    from .correlate import CorrelationHistogram
    hist = CorrelationHistogram(
        bin_width_ps=float(centers[1] - centers[0]),
        counts=counts.astype(np.int64), channel_pair=(0, 1), mode="histogram",
        tau_min_ps=float(centers[0]))
    rep = 1000.0 / rep_ghz
    ns, areas, sig = _analysis(peak_envelope, hist, rep)
    fit = _analysis(fit_blinking, ns, areas, rep, sigmas=sig)
    Path(out).write_text(json.dumps(fit.to_dict(), indent=1))
    _manifest_for(out, "blinking-fit", {"rep_ghz": rep_ghz}, 0,
                  [path_in], [out], t0)
    click.echo(f"beta={fit.params['beta']:.3f} "
               f"T_decay={fit.params['t_decay_ns']:.2f} ns -> {out}")


@main.command("hom-fit")
@click.option("--co", "path_co", type=click.Path(exists=True), required=True)
@click.option("--cross", "path_cross", type=click.Path(exists=True),
              required=True)
@click.option("--t1-ps", type=float, required=True)
@click.option("--jitter-ps", type=float, default=73.5, show_default=True)
@click.option("--delay-ns", type=float, default=1.58, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def cmd_hom_fit(path_co, path_cross, t1_ps, jitter_ps, delay_ns, out):
    """Pure dephasing time and indistinguishabilities from HOM traces."""
    t0 = time.monotonic()
    co = load_histogram_csv(path_co)
    cross = load_histogram_csv(path_cross)
    fit = _analysis(fit_hom, co, cross, t1_ps=t1_ps, jitter_fwhm_ps=jitter_ps,
                    delay_ns=delay_ns)
    Path(out).write_text(json.dumps(fit.to_dict(), indent=1))
    _manifest_for(out, "hom-fit", {"t1_ps": t1_ps, "jitter_ps": jitter_ps,
                                   "delay_ns": delay_ns}, 0,
                  [path_co, path_cross], [out], t0)
    click.echo(f"T2*={fit.params['t2star_ps']:.0f} ps "
               f"I_ps={fit.params['i_ps']:.3f} -> {out}")


@main.command("michelson-fit")
@click.option("--vis", "path_vis", type=click.Path(exists=True), required=True,
              help="CSV: delay_ps, visibility.")
@click.option("--out", type=click.Path(), required=True)
def cmd_michelson_fit(path_vis, out):
    """Coherence time from Michelson visibility decay."""
    t0 = time.monotonic()
    delays, vis = load_histogram_csv(path_vis)
    fit = _analysis(fit_michelson, delays, vis)
    Path(out).write_text(json.dumps(fit.to_dict(), indent=1))
    _manifest_for(out, "michelson-fit", {}, 0, [path_vis], [out], t0)
    click.echo(f"T2={fit.params['t2_ps']:.1f} ps -> {out}")


@main.command("reproduce")
@click.argument("figure", type=click.Choice(FIGURES))
@click.option("--scale", type=int, default=1_000_000, show_default=True,
              help="Simulated pulses (per run; desk scale by default).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def cmd_reproduce(ctx, figure, scale, seed, config, out):
    """Simulate and analyze one figure's data end to end."""
    params = _load_config(config) if config else None
    artifacts = _analysis(reproduce, figure, out, scale=scale, seed=seed,
                          config=params, threads=ctx.obj["threads"])
    click.echo("\n".join(f"{k}: {v}" for k, v in sorted(artifacts.items())))


if __name__ == "__main__":
    main()
