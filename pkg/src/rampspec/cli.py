"""Command line front end.

Subcommands: spectrum (diagonalization sweep), ramp (trajectory and
populations), measure (exact and noisy time series), recover (sparse or
baseline estimate from a series file), protocol (end to end), stats
(re-aggregate a peaks file).  Exit codes: 0 success, 1 usage error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .evolution import IntegratorConfig, RampSchedule, ramp_trajectory
from .noise import simulate_counts, derive_rng
from .observables import TimeSeries, instantaneous_populations, occupancy_timeseries
from .pipeline import (
    ProtocolConfig,
    adiabatic_lines,
    aggregate_line_stats,
    classify_peaks,
    run_dft_baseline,
    run_protocol,
    run_spectrum_sweep,
    write_manifest,
    RealizationOutcome,
    _fmt,
)
from .recovery import RecoveredPeaks, Peak, recover_lines
from .spectral import FrequencyGrid, RealPairSensing, partial_idft_matrix
from .spin_model import ModelParams, build_hamiltonian, diagonalize


class UsageError(Exception):
    pass


def _add_global_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="key = value config file")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", type=str, default=None, help="output directory override")
    p.add_argument("--threads", type=int, default=None, help="worker process count (0 = auto)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, repeatable")


def _collect_overrides(args) -> dict[str, str]:
    overrides: dict[str, str] = {}
    if args.config:
        overrides.update(cfgmod.parse_config_text(Path(args.config).read_text()))
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["protocol.seed"] = str(args.seed)
    if args.out is not None:
        overrides["protocol.output_dir"] = args.out
    if args.threads is not None:
        overrides["protocol.threads"] = str(args.threads)
    return overrides


def _protocol_config(args) -> tuple[ProtocolConfig, dict[str, str]]:
    overrides = _collect_overrides(args)
    return cfgmod.build_protocol_config(overrides), overrides


def _write_run_record(cfg: ProtocolConfig, overrides: dict[str, str]) -> None:
    dump = cfgmod.canonical_dump(overrides)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, dump, cfgmod.config_hash(dump), cfg.seed)


def cmd_spectrum(args) -> int:
    cfg, overrides = _protocol_config(args)
    grid = np.arange(args.b_min, args.b_max + 0.5 * args.b_step, args.b_step)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_spectrum_sweep(cfg.model, grid, n_levels=args.n_levels,
                       path=out / "spectrum_sweep.csv")
    _write_run_record(cfg, overrides)
    print(f"wrote {out / 'spectrum_sweep.csv'} ({grid.size} fields)")
    return 0


def cmd_ramp(args) -> int:
    cfg, overrides = _protocol_config(args)
    model = cfg.model
    schedule = RampSchedule.stopping_at(model, args.b_stop)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["t,b_over_j0,pop_ground,pop_first_coupled,norm_error"]
    for i, (t, state) in enumerate(ramp_trajectory(model, schedule, cfg.integrator)):
        if i % args.sample_every and t != schedule.t_stop:
            continue
        b = float(schedule.field_at(t))
        eig = diagonalize(build_hamiltonian(model, b))
        pops = instantaneous_populations(state, eig, [0, 2])
        norm_err = abs(np.linalg.norm(state) - 1.0)
        rows.append(f"{_fmt(t)},{_fmt(b)},{_fmt(pops[0])},{_fmt(pops[1])},{_fmt(norm_err)}")
    path = out / f"ramp_b{args.b_stop:.4f}.csv"
    path.write_text("\n".join(rows) + "\n")
    _write_run_record(cfg, overrides)
    print(f"wrote {path}")
    return 0


def cmd_measure(args) -> int:
    cfg, overrides = _protocol_config(args)
    from .evolution import ramp_states_at_fields
    from .noise import apply_decoherence

    b_stops = [float(b) for b in args.b_stop] if args.b_stop else list(cfg.b_stops)
    states = ramp_states_at_fields(cfg.model, b_stops, cfg.integrator)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for f_idx, b in enumerate(b_stops):
        h = build_hamiltonian(cfg.model, b)
        exact = occupancy_timeseries(states[b], h, n_step=cfg.recovery.n_step,
                                     dt_meas=cfg.dt_meas)
        if cfg.noise is not None:
            signal = apply_decoherence(exact, cfg.noise.tau_d)
            sim = simulate_counts(signal, cfg.noise, derive_rng(cfg.seed, f_idx, 1, 0))
            counts, p_sim = sim.counts, sim.values
        else:
            signal, counts, p_sim = exact, None, exact.values
        rows = ["t,p_exact,p_signal,counts,p_simulated"]
        for i, t in enumerate(exact.t):
            c = "" if counts is None else str(int(counts[i]))
            rows.append(f"{_fmt(t)},{_fmt(exact.values[i])},{_fmt(signal.values[i])},"
                        f"{c},{_fmt(p_sim[i])}")
        path = out / f"measure_b{b:.4f}.csv"
        path.write_text("\n".join(rows) + "\n")
        print(f"wrote {path} (m* = {exact.m_star:g})")
    _write_run_record(cfg, overrides)
    return 0


def _read_series_csv(path: str, column: str) -> TimeSeries:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise UsageError(f"column {column!r} not in {path}")
        t, v = [], []
        for row in reader:
            t.append(float(row["t"]))
            v.append(float(row[column]))
    return TimeSeries(t=np.array(t), values=np.array(v))


def cmd_recover(args) -> int:
    cfg, overrides = _protocol_config(args)
    series = _read_series_csv(args.series, args.column)
    n = series.n_step
    if n != cfg.recovery.n_step:
        raise UsageError(
            f"series has {n} rows but recovery.n_step = {cfg.recovery.n_step}; "
            "set recovery.n_step to match"
        )
    grid = FrequencyGrid(n_step=n, dt_meas=float(series.t[1] - series.t[0]))
    if cfg.sampling == "consecutive":
        sample_times = np.arange(1, cfg.recovery.m_step + 1)
    else:
        rng = derive_rng(cfg.seed, 0, 0)
        sample_times = np.sort(
            rng.choice(np.arange(1, n), size=cfg.recovery.m_step, replace=False)
        )
    samples = series.values[sample_times]
    t_samples = series.t[sample_times]
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.method == "dft":
        matrix = partial_idft_matrix(grid, sample_times)
        coeffs = matrix.conj().T @ samples
        k_no_dc = grid.k_values[grid.k_values != 0]
        omegas = grid.omega_of(k_no_dc)
        rows = ["omega_over_j0,re,im,magnitude"]
        for w, c in zip(omegas, coeffs):
            rows.append(f"{_fmt(w)},{_fmt(c.real)},{_fmt(c.imag)},{_fmt(abs(c))}")
        path = out / "recovered_spectrum.csv"
        path.write_text("\n".join(rows) + "\n")
        print(f"wrote {path} (baseline estimate)")
        _write_run_record(cfg, overrides)
        return 0

    sensing = RealPairSensing(grid, sample_times)
    envelope = None if cfg.noise is None else np.exp(-t_samples / cfg.noise.tau_d)
    est = recover_lines(
        samples, t_samples, sensing, cfg.recovery,
        envelope=envelope, cv_rng=derive_rng(cfg.seed, 0, 2),
    )
    tau, peaks = est.tau_abs, est.peaks

    rows = ["omega_over_j0,re,im,magnitude"]
    spec = est.raw.spectrum
    for w, c in zip(spec.grid.omega_values, spec.coeffs):
        if abs(c) > 0:
            rows.append(f"{_fmt(w)},{_fmt(c.real)},{_fmt(c.imag)},{_fmt(abs(c))}")
    (out / "recovered_spectrum.csv").write_text("\n".join(rows) + "\n")
    rows = ["omega_over_j0,magnitude,re_amplitude,im_amplitude"]
    for pk in peaks.peaks:
        rows.append(f"{_fmt(pk.omega)},{_fmt(pk.magnitude)},"
                    f"{_fmt(pk.amplitude.real)},{_fmt(pk.amplitude.imag)}")
    (out / "recovered_peaks.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {out / 'recovered_peaks.csv'} ({len(peaks)} peaks, "
          f"tau = {tau:.4g}, converged = {est.raw.converged})")
    _write_run_record(cfg, overrides)
    return 0


def cmd_protocol(args) -> int:
    cfg, overrides = _protocol_config(args)
    if args.baseline:
        run_dft_baseline(cfg)
    else:
        result = run_protocol(cfg)
        n_peaks = sum(len(o.peaks) for fr in result.fields for o in fr.realizations)
        print(f"{len(result.fields)} fields, {n_peaks} peaks -> {cfg.output_dir}")
    _write_run_record(cfg, overrides)
    return 0


def cmd_stats(args) -> int:
    cfg, overrides = _protocol_config(args)
    with open(args.peaks, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    by_field: dict[float, dict[int, list]] = {}
    for row in rows:
        b = float(row["b_over_j0"])
        r = int(row["realization"])
        by_field.setdefault(b, {}).setdefault(r, []).append(
            (float(row["omega_over_j0"]), float(row["magnitude"]))
        )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines_out = ["b_over_j0,line,omega_adiabatic_over_j0,mean_over_j0,std_over_j0,n_matched,n_realizations"]
    for b in sorted(by_field, reverse=True):
        eig = diagonalize(build_hamiltonian(cfg.model, b))
        lines = adiabatic_lines(eig, cfg.n_lines)
        outcomes = []
        for r in sorted(by_field[b]):
            peaks = RecoveredPeaks(
                peaks=[Peak(omega=w, amplitude=0j, magnitude=m) for w, m in by_field[b][r]]
            )
            outcomes.append(RealizationOutcome(
                index=r, peaks=peaks,
                flags=classify_peaks(peaks, lines, cfg.match_window, cfg.high_margin),
                tau_abs=0.0, converged=True, n_iter=0, counts=None,
                p_simulated=np.empty(0),
            ))
        for ls in aggregate_line_stats(outcomes, lines, cfg.match_window):
            lines_out.append(
                f"{_fmt(b)},{ls.line_index},{_fmt(ls.omega_adiabatic)},"
                f"{_fmt(ls.mean)},{_fmt(ls.std)},{ls.n_matched},{len(outcomes)}"
            )
    (out / "stats.csv").write_text("\n".join(lines_out) + "\n")
    print(f"wrote {out / 'stats.csv'}")
    _write_run_record(cfg, overrides)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rampspec",
        description="Diabatic-ramp spectroscopy simulation of the uniform "
        "transverse-field Ising model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="exact diagonalization field sweep")
    p.add_argument("--b-min", type=float, default=0.02)
    p.add_argument("--b-max", type=float, default=1.0)
    p.add_argument("--b-step", type=float, default=0.005)
    p.add_argument("--n-levels", type=int, default=10)
    _add_global_flags(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("ramp", help="ramp trajectory and populations")
    p.add_argument("--b-stop", type=float, required=True)
    p.add_argument("--sample-every", type=int, default=10,
                   help="record every k-th step")
    _add_global_flags(p)
    p.set_defaults(func=cmd_ramp)

    p = sub.add_parser("measure", help="exact and noisy time series")
    p.add_argument("--b-stop", type=float, action="append", default=None)
    _add_global_flags(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("recover", help="sparse (or baseline) spectrum from a series file")
    p.add_argument("--series", type=str, required=True, help="CSV with a t column")
    p.add_argument("--column", type=str, default="p_simulated")
    p.add_argument("--method", choices=("cs", "dft"), default="cs")
    _add_global_flags(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("protocol", help="end-to-end run over the stopping fields")
    p.add_argument("--baseline", action="store_true",
                   help="partial-transform baseline instead of sparse recovery")
    _add_global_flags(p)
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("stats", help="aggregate a peaks.csv into per-line statistics")
    p.add_argument("--peaks", type=str, required=True)
    _add_global_flags(p)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
