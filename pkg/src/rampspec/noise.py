"""Synthetic experimental error: exponential decoherence and counting noise.

Decoherence multiplies the exact signal by exp(-t/tau_d) with the clock
starting at the hold.  Counting statistics are simulated by drawing the
number of detections at each time point from a Poisson distribution with
mean n_meas * p_signal(t) and normalizing back to the probability scale.

Poisson variates are generated with the product-of-uniforms construction:
multiply uniforms u_i in [0, 1) until the running product drops below
exp(-lam); the draw is the count of factors minus one.  The construction
costs O(lam) uniforms per draw, so above ``KNUTH_LAMBDA_MAX`` the generator's
exact Poisson method is used instead; both paths are validated by the same
moment and chi-square tests.

Randomness derives from numpy SeedSequences: ``derive_rng(seed, *path)``
builds one independent stream per integer path (the Monte Carlo uses one
stream per (field index, realization) pair), so realizations are reproducible
regardless of scheduling.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .observables import TimeSeries

__all__ = [
    "NoiseConfig",
    "apply_decoherence",
    "poisson_sample",
    "poisson_sample_array",
    "simulate_counts",
    "derive_rng",
    "KNUTH_LAMBDA_MAX",
]

# Above this mean the O(lam) product-of-uniforms loop is replaced by the
# generator's exact sampler.
KNUTH_LAMBDA_MAX = 500.0


@dataclass(frozen=True)
class NoiseConfig:
    """Decoherence constant, repetitions per time point, and the RNG seed."""

    tau_d: float = 25.0
    n_meas: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.tau_d <= 0:
            raise ValueError(f"tau_d must be > 0, got {self.tau_d}")
        if self.n_meas < 1:
            raise ValueError(f"n_meas must be >= 1, got {self.n_meas}")


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent, reproducible stream for an integer-addressed task."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(p) for p in path)))


def apply_decoherence(series: TimeSeries, tau_d: float) -> TimeSeries:
    """Pointwise exp(-t/tau_d) envelope; time measured from the hold start."""
    if tau_d <= 0:
        raise ValueError(f"tau_d must be > 0, got {tau_d}")
    values = series.values * np.exp(-series.t / tau_d)
    return dataclasses.replace(series, values=values, counts=None)


def poisson_sample(lam: float, rng: np.random.Generator) -> int:
    """One Poisson draw with mean lam."""
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    if lam > KNUTH_LAMBDA_MAX:
        return int(rng.poisson(lam))
    limit = np.exp(-lam)
    k = -1
    prod = 1.0
    while prod >= limit:
        prod *= rng.random()
        k += 1
    return k


def poisson_sample_array(lams: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized Poisson draws, one per entry of ``lams``.

    Small means run the product-of-uniforms rounds batched over the still
    active entries; large means go to the generator's sampler in one call.
    Uniforms are consumed in round order, so output is seed-deterministic.
    """
    lams = np.asarray(lams, dtype=float)
    if np.any(~np.isfinite(lams)) or np.any(lams < 0):
        raise ValueError("all means must be finite and >= 0")
    out = np.zeros(lams.shape, dtype=np.int64)

    big = lams > KNUTH_LAMBDA_MAX
    if np.any(big):
        out[big] = rng.poisson(lams[big])

    small = np.flatnonzero(~big)
    if small.size:
        limit = np.exp(-lams[small])
        prod = rng.random(small.size)
        counts = np.zeros(small.size, dtype=np.int64)
        active = prod >= limit
        while np.any(active):
            counts[active] += 1
            prod[active] *= rng.random(int(np.count_nonzero(active)))
            active &= prod >= limit
        out[small] = counts
    return out


def simulate_counts(
    series_signal: TimeSeries,
    cfg: NoiseConfig,
    rng: np.random.Generator | None = None,
) -> TimeSeries:
    """Poisson counting statistics on top of the decohered signal.

    Returns a series whose values are counts / n_meas, with the raw counts
    attached.  Warns when the first-sample signal-to-noise estimate
    sqrt(n_meas * p_signal(0)) does not exceed one.
    """
    values = series_signal.values
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("signal values must lie in [0, 1]")
    if rng is None:
        rng = derive_rng(cfg.seed)
    snr = np.sqrt(cfg.n_meas * values[0]) if values.size else 0.0
    if snr <= 1.0:
        warnings.warn(
            f"signal-to-noise estimate sqrt(n_meas * p(0)) = {snr:.3g} <= 1",
            stacklevel=2,
        )
    counts = poisson_sample_array(cfg.n_meas * values, rng)
    return dataclasses.replace(
        series_signal, values=counts / cfg.n_meas, counts=counts
    )
