"""End-to-end protocol runs: ramp, hold, noise synthesis, recovery, statistics.

One run sweeps the requested stopping fields.  Per field the deterministic
ramp is evolved once (all fields share a single trajectory), the exact
occupancy series is built from one eigendecomposition, decoherence is
applied, and each Monte Carlo realization draws fresh Poisson counts at the
shared sensing times, cross-validates the shrinkage threshold, recovers the
sparse spectrum and reports peaks.  Peaks are matched to the adiabatic
energy differences of the same-parity eigenstates; unmatched peaks are
flagged spurious (low, or high when beyond the largest tracked line plus a
margin) and excluded from the per-line statistics.

Randomness: every realization draws from its own stream derived from the
protocol seed and the (field index, realization) address, so results are
independent of scheduling and thread count.  All CSV output is written by
the parent process in a fixed order with fixed formatting; two runs with the
same config and seed produce byte-identical files.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .evolution import IntegratorConfig, ramp_states_at_fields
from .noise import NoiseConfig, apply_decoherence, derive_rng, simulate_counts
from .observables import TimeSeries, occupancy_timeseries
from .recovery import (
    RecoveredPeaks,
    RecoveryConfig,
    recover_lines,
)
from .spectral import FrequencyGrid, RealPairSensing, partial_idft_matrix
from .spin_model import ModelParams, build_hamiltonian, diagonalize

__all__ = [
    "ProtocolConfig",
    "FieldResult",
    "RunResult",
    "run_protocol",
    "run_spectrum_sweep",
    "run_dft_baseline",
    "adiabatic_lines",
    "classify_peaks",
    "aggregate_line_stats",
    "write_manifest",
]

FLAG_ACCEPTED = "accepted"
FLAG_SPURIOUS_LOW = "spurious_low"
FLAG_SPURIOUS_HIGH = "spurious_high"


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything one protocol run needs."""

    model: ModelParams
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    noise: NoiseConfig | None = field(default_factory=NoiseConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    b_stops: tuple = ()
    n_realizations: int = 100
    output_dir: str = "out"
    seed: int = 12345
    dt_meas: float = 0.5
    n_lines: int = 6
    match_window: float = 0.05
    high_margin: float = 0.2
    threads: int = 0
    sampling: str = "consecutive"

    def __post_init__(self):
        for b in self.b_stops:
            if not 0 < b < self.model.b0:
                raise ValueError(f"b_stop {b} outside (0, b0)")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.dt_meas <= 0:
            raise ValueError("dt_meas must be > 0")
        if self.sampling not in ("consecutive", "random"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")


@dataclass
class RealizationOutcome:
    index: int
    peaks: RecoveredPeaks
    flags: list[str]
    tau_abs: float
    converged: bool
    n_iter: int
    counts: np.ndarray | None
    p_simulated: np.ndarray


@dataclass
class LineStats:
    line_index: int
    omega_adiabatic: float
    mean: float
    std: float
    n_matched: int


@dataclass
class FieldResult:
    b_stop: float
    t_stop: float
    m_star: float
    lines: np.ndarray
    exact: TimeSeries
    signal: TimeSeries
    sample_times: np.ndarray
    realizations: list[RealizationOutcome]
    line_stats: list[LineStats]


@dataclass
class RunResult:
    config: ProtocolConfig
    fields: list[FieldResult]


def adiabatic_lines(eig, n_lines: int) -> np.ndarray:
    """Lowest energy differences E_k - E_0 over states sharing the ground
    state's parity (the only transitions the protocol can populate)."""
    p0 = eig.parities[0]
    same = np.flatnonzero(eig.parities == p0)
    same = same[same > 0][:n_lines]
    return eig.energies[same] - eig.energies[0]


def classify_peaks(
    peaks: RecoveredPeaks, lines: np.ndarray, match_window: float, high_margin: float
) -> list[str]:
    """Flag each peak as accepted (near a line) or spurious low/high."""
    flags = []
    high_edge = (np.max(lines) if lines.size else 0.0) + high_margin
    for pk in peaks.peaks:
        dist = np.abs(lines - pk.omega) if lines.size else np.array([np.inf])
        if np.min(dist) <= match_window:
            flags.append(FLAG_ACCEPTED)
        elif pk.omega > high_edge:
            flags.append(FLAG_SPURIOUS_HIGH)
        else:
            flags.append(FLAG_SPURIOUS_LOW)
    return flags


def aggregate_line_stats(
    realizations: list[RealizationOutcome], lines: np.ndarray, match_window: float
) -> list[LineStats]:
    """Per-line mean and spread of the matched peak frequencies.

    In each realization the peak nearest to a line (within the window) is the
    line's measurement; realizations without a match do not contribute.
    """
    stats = []
    for li, line in enumerate(lines):
        values = []
        for outcome in realizations:
            omegas = outcome.peaks.omegas()
            if omegas.size == 0:
                continue
            dist = np.abs(omegas - line)
            j = int(np.argmin(dist))
            if dist[j] <= match_window:
                values.append(omegas[j])
        values = np.array(values)
        if values.size:
            mean = float(np.mean(values))
            std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        else:
            mean = np.nan
            std = np.nan
        stats.append(
            LineStats(
                line_index=li,
                omega_adiabatic=float(line),
                mean=mean,
                std=std,
                n_matched=int(values.size),
            )
        )
    return stats


# ---------------------------------------------------------------------------
# worker for the Monte Carlo realizations

_WORKER: dict = {}


def _worker_init(signal_values, t_values, sample_times, n_step, dt_meas,
                 noise_cfg, recovery_cfg, seed, field_index):
    _WORKER["signal"] = signal_values
    _WORKER["t"] = t_values
    _WORKER["sample_times"] = sample_times
    _WORKER["sensing"] = RealPairSensing(
        FrequencyGrid(n_step=n_step, dt_meas=dt_meas), sample_times
    )
    _WORKER["noise"] = noise_cfg
    _WORKER["recovery"] = recovery_cfg
    _WORKER["seed"] = seed
    _WORKER["field_index"] = field_index


def _run_realization(r: int):
    sample_times = _WORKER["sample_times"]
    sensing = _WORKER["sensing"]
    noise_cfg = _WORKER["noise"]
    recovery_cfg = _WORKER["recovery"]
    seed = _WORKER["seed"]
    f_idx = _WORKER["field_index"]

    t_samples = _WORKER["t"][sample_times]
    sampled = TimeSeries(t=t_samples, values=_WORKER["signal"][sample_times])
    if noise_cfg is not None:
        rng = derive_rng(seed, f_idx, 1, r)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sampled = simulate_counts(sampled, noise_cfg, rng)
        counts = sampled.counts
        envelope = np.exp(-t_samples / noise_cfg.tau_d)
    else:
        counts = None
        envelope = None

    cv_rng = derive_rng(seed, f_idx, 2, r)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = recover_lines(
            sampled.values, t_samples, sensing, recovery_cfg,
            envelope=envelope, cv_rng=cv_rng,
        )
    return (r, est.peaks, est.tau_abs, est.raw.converged, est.raw.n_iter,
            counts, sampled.values)


def _map_realizations(cfg: ProtocolConfig, init_args, n_real: int):
    threads = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)
    if threads <= 1 or n_real <= 1:
        _worker_init(*init_args)
        return [_run_realization(r) for r in range(n_real)]
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=min(threads, n_real),
        initializer=_worker_init,
        initargs=init_args,
    ) as pool:
        return sorted(pool.map(_run_realization, range(n_real)), key=lambda x: x[0])


# ---------------------------------------------------------------------------
# protocol driver

def _select_sample_times(cfg: ProtocolConfig, field_index: int) -> np.ndarray:
    """Measurement times for one stopping field.

    Consecutive sampling measures the first m_step grid points after the
    hold starts, where the decohered signal actually lives; the random mode
    draws a seeded uniform subset of the whole grid instead.  t = 0 is
    excluded either way.
    """
    if cfg.sampling == "consecutive":
        return np.arange(1, cfg.recovery.m_step + 1)
    rng = derive_rng(cfg.seed, field_index, 0)
    return np.sort(
        rng.choice(
            np.arange(1, cfg.recovery.n_step), size=cfg.recovery.m_step, replace=False
        )
    )


def run_protocol(cfg: ProtocolConfig) -> RunResult:
    """Run the full protocol and write all output files under output_dir."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    noiseless = cfg.noise is None
    n_real = 1 if noiseless else cfg.n_realizations

    field_results: list[FieldResult] = []
    if cfg.b_stops:
        states = ramp_states_at_fields(cfg.model, cfg.b_stops, cfg.integrator)
        for f_idx, b_stop in enumerate(cfg.b_stops):
            h_stop = build_hamiltonian(cfg.model, b_stop)
            eig = diagonalize(h_stop)
            lines = adiabatic_lines(eig, cfg.n_lines)
            state = states[float(b_stop)]
            exact = occupancy_timeseries(
                state, h_stop, n_step=cfg.recovery.n_step, dt_meas=cfg.dt_meas, eig=eig
            )
            signal = exact if noiseless else apply_decoherence(exact, cfg.noise.tau_d)

            sample_times = _select_sample_times(cfg, f_idx)
            cfg.recovery.warn_if_undersampled(max(len(lines), 1))

            init_args = (
                signal.values, signal.t, sample_times, cfg.recovery.n_step,
                cfg.dt_meas, cfg.noise, cfg.recovery, cfg.seed, f_idx,
            )
            rows = _map_realizations(cfg, init_args, n_real)

            realizations = []
            for r, peaks, tau_abs, converged, n_iter, counts, p_sim in rows:
                flags = classify_peaks(peaks, lines, cfg.match_window, cfg.high_margin)
                realizations.append(
                    RealizationOutcome(
                        index=r, peaks=peaks, flags=flags, tau_abs=tau_abs,
                        converged=converged, n_iter=n_iter, counts=counts,
                        p_simulated=p_sim,
                    )
                )
            line_stats = aggregate_line_stats(realizations, lines, cfg.match_window)

            t_stop = cfg.model.tau_ramp * float(np.log(cfg.model.b0 / b_stop))
            field_results.append(
                FieldResult(
                    b_stop=b_stop, t_stop=t_stop, m_star=exact.m_star, lines=lines,
                    exact=exact, signal=signal, sample_times=sample_times,
                    realizations=realizations, line_stats=line_stats,
                )
            )

    result = RunResult(config=cfg, fields=field_results)
    _write_protocol_outputs(result, out)
    return result


def run_spectrum_sweep(
    params: ModelParams, b_grid, n_levels: int = 10, path: str | Path | None = None
) -> list[tuple]:
    """Exact diagonalization along a field grid; rows of
    (b, level, energy, gap to ground, parity)."""
    rows = []
    for b in b_grid:
        eig = diagonalize(build_hamiltonian(params, b))
        for k in range(min(n_levels, eig.dim)):
            rows.append(
                (
                    float(b),
                    k,
                    float(eig.energies[k]),
                    float(eig.energies[k] - eig.energies[0]),
                    int(eig.parities[k]),
                )
            )
    if path is not None:
        lines = ["b_over_j0,level,energy_over_j0,gap_over_j0,parity"]
        for b, k, en, gap, par in rows:
            lines.append(f"{_fmt(b)},{k},{_fmt(en)},{_fmt(gap)},{par}")
        Path(path).write_text("\n".join(lines) + "\n")
    return rows


def run_dft_baseline(cfg: ProtocolConfig) -> RunResult:
    """Same sampling as the protocol, but the spectrum estimate is the
    adjoint of the partial inverse transform (the broadened baseline)."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    noiseless = cfg.noise is None
    field_results: list[FieldResult] = []
    if cfg.b_stops:
        states = ramp_states_at_fields(cfg.model, cfg.b_stops, cfg.integrator)
        for f_idx, b_stop in enumerate(cfg.b_stops):
            h_stop = build_hamiltonian(cfg.model, b_stop)
            eig = diagonalize(h_stop)
            lines = adiabatic_lines(eig, cfg.n_lines)
            state = states[float(b_stop)]
            exact = occupancy_timeseries(
                state, h_stop, n_step=cfg.recovery.n_step, dt_meas=cfg.dt_meas, eig=eig
            )
            signal = exact if noiseless else apply_decoherence(exact, cfg.noise.tau_d)
            sample_times = _select_sample_times(cfg, f_idx)
            sampled = TimeSeries(t=signal.t[sample_times], values=signal.values[sample_times])
            if not noiseless:
                rng = derive_rng(cfg.seed, f_idx, 1, 0)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    sampled = simulate_counts(sampled, cfg.noise, rng)

            grid = FrequencyGrid(n_step=cfg.recovery.n_step, dt_meas=cfg.dt_meas)
            matrix = partial_idft_matrix(grid, sample_times)
            coeffs = matrix.conj().T @ sampled.values
            k_no_dc = grid.k_values[grid.k_values != 0]
            omegas = grid.omega_of(k_no_dc)
            name = out / f"baseline_spectrum_b{b_stop:.4f}.csv"
            rows = ["omega_over_j0,re,im,magnitude"]
            for w, c in zip(omegas, coeffs):
                rows.append(f"{_fmt(w)},{_fmt(c.real)},{_fmt(c.imag)},{_fmt(abs(c))}")
            name.write_text("\n".join(rows) + "\n")

            t_stop = cfg.model.tau_ramp * float(np.log(cfg.model.b0 / b_stop))
            field_results.append(
                FieldResult(
                    b_stop=b_stop, t_stop=t_stop, m_star=exact.m_star, lines=lines,
                    exact=exact, signal=signal, sample_times=sample_times,
                    realizations=[], line_stats=[],
                )
            )
    return RunResult(config=cfg, fields=field_results)


# ---------------------------------------------------------------------------
# output files

def _fmt(x: float) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def _write_protocol_outputs(result: RunResult, out: Path) -> None:
    cfg = result.config
    for fr in result.fields:
        tag = f"b{fr.b_stop:.4f}"
        rows = ["t,p_exact,p_signal"]
        for t, pe, ps in zip(fr.exact.t, fr.exact.values, fr.signal.values):
            rows.append(f"{_fmt(t)},{_fmt(pe)},{_fmt(ps)}")
        (out / f"series_{tag}.csv").write_text("\n".join(rows) + "\n")

        first = fr.realizations[0] if fr.realizations else None
        rows = ["t_index,t,p_signal,counts,p_simulated"]
        if first is not None:
            for i, ti in enumerate(fr.sample_times):
                counts = "" if first.counts is None else str(int(first.counts[i]))
                rows.append(
                    f"{ti},{_fmt(fr.signal.t[ti])},{_fmt(fr.signal.values[ti])},"
                    f"{counts},{_fmt(first.p_simulated[i])}"
                )
        (out / f"samples_{tag}.csv").write_text("\n".join(rows) + "\n")

    rows = ["b_over_j0,omega_over_j0,magnitude,flag,realization,re_amplitude,im_amplitude"]
    for fr in result.fields:
        for outcome in fr.realizations:
            for pk, flag in zip(outcome.peaks.peaks, outcome.flags):
                rows.append(
                    f"{_fmt(fr.b_stop)},{_fmt(pk.omega)},{_fmt(pk.magnitude)},{flag},"
                    f"{outcome.index},{_fmt(pk.amplitude.real)},{_fmt(pk.amplitude.imag)}"
                )
    (out / "peaks.csv").write_text("\n".join(rows) + "\n")

    rows = ["b_over_j0,line,omega_adiabatic_over_j0,mean_over_j0,std_over_j0,n_matched,n_realizations"]
    for fr in result.fields:
        for ls in fr.line_stats:
            rows.append(
                f"{_fmt(fr.b_stop)},{ls.line_index},{_fmt(ls.omega_adiabatic)},"
                f"{_fmt(ls.mean)},{_fmt(ls.std)},{ls.n_matched},{len(fr.realizations)}"
            )
    (out / "stats.csv").write_text("\n".join(rows) + "\n")


def write_manifest(out: Path, config_dump: str, config_hash: str, seed: int) -> None:
    """Plain key = value run record; deterministic for identical runs."""
    import numpy
    import scipy

    lines = [
        f"rampspec_version = {__version__}",
        f"numpy_version = {numpy.__version__}",
        f"scipy_version = {scipy.__version__}",
        f"seed = {seed}",
        f"config_sha256 = {config_hash}",
        "",
        config_dump.rstrip(),
    ]
    (Path(out) / "manifest.txt").write_text("\n".join(lines) + "\n")
