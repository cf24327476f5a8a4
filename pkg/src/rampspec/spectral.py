"""Discrete Fourier analysis of the measured time series.

Conventions: the forward transform is unitary with a positive-exponent
kernel,

    P(k) = (1/sqrt(N)) sum_n p(t_n) exp(+2 pi i k n / N),

over bins k in (-N/2, N/2], so a physical tone exp(-i w t) with w > 0 lands
in a positive bin.  All frequencies are reported as angular frequencies in
energy units (hbar = 1), w_k = 2 pi k / (N dt), which makes recovered peaks
directly comparable to eigenenergy differences.  Real signals have
conjugate-symmetric spectra, P(-k) = conj(P(k)).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .observables import TimeSeries

__all__ = [
    "FrequencyGrid",
    "SpectrumEstimate",
    "dft",
    "idft",
    "alias_frequency",
    "low_pass_filter",
    "threshold_filter",
    "partial_idft_matrix",
    "RealPairSensing",
]


@dataclass(frozen=True)
class FrequencyGrid:
    """Frequency bins of an n_step-point series sampled every dt_meas."""

    n_step: int
    dt_meas: float

    def __post_init__(self):
        if self.n_step < 2 or self.n_step % 2 != 0:
            raise ValueError(f"n_step must be even and >= 2, got {self.n_step}")
        if self.dt_meas <= 0:
            raise ValueError(f"dt_meas must be > 0, got {self.dt_meas}")

    @property
    def k_values(self) -> np.ndarray:
        """Bin indices, ascending, (-n/2, n/2]."""
        return np.arange(-self.n_step // 2 + 1, self.n_step // 2 + 1)

    @property
    def omega_values(self) -> np.ndarray:
        return 2.0 * np.pi * self.k_values / (self.n_step * self.dt_meas)

    @property
    def delta_omega(self) -> float:
        return 2.0 * np.pi / (self.n_step * self.dt_meas)

    @property
    def omega_nyquist(self) -> float:
        return np.pi / self.dt_meas

    def omega_of(self, k) -> np.ndarray:
        return 2.0 * np.pi * np.asarray(k) / (self.n_step * self.dt_meas)


@dataclass
class SpectrumEstimate:
    """Complex Fourier coefficients aligned with ``grid.k_values``."""

    grid: FrequencyGrid
    coeffs: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.abs(self.coeffs)

    def nonzero_bins(self) -> np.ndarray:
        """k values of nonzero coefficients."""
        return self.grid.k_values[np.abs(self.coeffs) > 0]

    def hermitized(self) -> "SpectrumEstimate":
        """Project onto the conjugate-symmetric subspace of real signals."""
        n = self.grid.n_step
        c = self.coeffs.copy()
        # index of bin k is k + n/2 - 1 in the ascending layout
        half = n // 2
        kk = np.arange(1, half)
        pos = kk + half - 1
        neg = half - 1 - kk
        avg = 0.5 * (c[pos] + np.conj(c[neg]))
        c[pos] = avg
        c[neg] = np.conj(avg)
        c[half - 1] = c[half - 1].real       # DC
        c[n - 1] = c[n - 1].real             # Nyquist
        return dataclasses.replace(self, coeffs=c)


def dft(series: TimeSeries) -> SpectrumEstimate:
    """Unitary transform of the full series (dense)."""
    values = np.asarray(series.values)
    n = values.shape[0]
    grid = FrequencyGrid(n_step=n, dt_meas=float(series.t[1] - series.t[0]))
    full = np.sqrt(n) * np.fft.ifft(values)
    coeffs = full[grid.k_values % n]
    return SpectrumEstimate(grid=grid, coeffs=coeffs)


def idft(spec: SpectrumEstimate) -> np.ndarray:
    """Inverse of :func:`dft`; returns the complex time-domain samples."""
    n = spec.grid.n_step
    packed = np.zeros(n, dtype=complex)
    packed[spec.grid.k_values % n] = spec.coeffs
    return np.fft.fft(packed) / np.sqrt(n)


def alias_frequency(omega_high: float, omega_nyquist: float) -> float:
    """Fold a frequency at or above Nyquist back into the resolvable band.

    Standard folding for real signals: subtract multiples of 2 w_N and
    reflect.  Frequencies below Nyquist return unchanged; exact Nyquist maps
    to itself.
    """
    if omega_high < 0:
        raise ValueError(f"omega_high must be >= 0, got {omega_high}")
    if omega_nyquist <= 0:
        raise ValueError(f"omega_nyquist must be > 0, got {omega_nyquist}")
    folded = np.mod(omega_high, 2.0 * omega_nyquist)
    if folded > omega_nyquist:
        folded = 2.0 * omega_nyquist - folded
    return float(folded)


def low_pass_filter(spec: SpectrumEstimate, omega_cutoff: float) -> SpectrumEstimate:
    """Zero every bin with |w_k| > w_cutoff."""
    keep = np.abs(spec.grid.omega_values) <= omega_cutoff
    return dataclasses.replace(spec, coeffs=np.where(keep, spec.coeffs, 0.0))


def threshold_filter(spec: SpectrumEstimate, tau: float) -> SpectrumEstimate:
    """Zero every bin whose coefficient magnitude is below tau."""
    keep = np.abs(spec.coeffs) >= tau
    return dataclasses.replace(spec, coeffs=np.where(keep, spec.coeffs, 0.0))


def _check_sample_times(n_step: int, sample_times: np.ndarray) -> np.ndarray:
    idx = np.asarray(sample_times, dtype=int)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("sample_times must be a nonempty 1d index set")
    if np.unique(idx).size != idx.size:
        raise ValueError("sample_times contains duplicates")
    if np.any(idx < 1) or np.any(idx >= n_step):
        raise ValueError("sample_times must lie in {1, ..., n_step-1}")
    return idx


def partial_idft_matrix(grid: FrequencyGrid, sample_times) -> np.ndarray:
    """Inverse-transform matrix restricted to the sampled times.

    Rows are the sample times (t = 0 excluded), columns the frequency bins in
    ascending k order with the DC column removed; entry (a, b) is
    exp(-2 pi i k_b n_a / N) / sqrt(N).  Mapping sparse frequency
    coefficients through it yields the time samples of the zero-mean signal.
    """
    idx = _check_sample_times(grid.n_step, sample_times)
    k = grid.k_values
    k = k[k != 0]
    return np.exp(-2j * np.pi * np.outer(idx, k) / grid.n_step) / np.sqrt(grid.n_step)


class RealPairSensing:
    """Sampled-time sensing operator over positive-frequency bins.

    Real measured series have conjugate-symmetric spectra, so only the bins
    k = 1 ... n/2 are independent unknowns; each +/-k column pair of the full
    inverse-transform matrix is combined into one complex unknown (equivalent
    to a cosine/sine pair), which halves the problem and guarantees real
    reconstructions.  The unknowns coincide with the spectrum coefficients at
    positive bins.  t = 0 and the DC bin are excluded, as in
    :func:`partial_idft_matrix`.
    """

    def __init__(self, grid: FrequencyGrid, sample_times):
        self.grid = grid
        self.sample_times = _check_sample_times(grid.n_step, sample_times)
        n = grid.n_step
        self.k_pos = np.arange(1, n // 2 + 1)
        # Nyquist has no conjugate partner: weight 1 instead of 2.
        self.weights = np.where(self.k_pos == n // 2, 1.0, 2.0)
        self._kernel = np.exp(
            -2j * np.pi * np.outer(self.sample_times, self.k_pos) / n
        ) / np.sqrt(n)

    @property
    def n_samples(self) -> int:
        return self.sample_times.shape[0]

    @property
    def n_unknowns(self) -> int:
        return self.k_pos.shape[0]

    def forward(self, coeffs_pos: np.ndarray) -> np.ndarray:
        """Positive-bin coefficients -> real time samples."""
        return (self._kernel @ (self.weights * coeffs_pos)).real

    def adjoint(self, residual: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`forward` (complex coefficients as R^2 pairs)."""
        return self.weights * (self._kernel.conj().T @ residual)

    def restrict(self, row_indices: np.ndarray) -> "RealPairSensing":
        """Operator over a subset of the sample rows (for cross-validation)."""
        return RealPairSensing(self.grid, self.sample_times[row_indices])

    def column(self, bins: np.ndarray) -> np.ndarray:
        """Real-valued design columns for the given positive bins, one complex
        unknown expanded to (Re, Im) pairs; used by the least-squares refit."""
        cols = []
        for j in np.searchsorted(self.k_pos, bins):
            kern = self._kernel[:, j] * self.weights[j]
            cols.append(kern.real)
            if self.k_pos[j] != self.grid.n_step // 2:
                cols.append(-kern.imag)
        return np.column_stack(cols)

    def spectrum_from_positive(self, coeffs_pos: np.ndarray) -> "SpectrumEstimate":
        """Expand positive-bin coefficients to a full symmetric spectrum."""
        grid = self.grid
        coeffs = np.zeros(grid.k_values.shape[0], dtype=complex)
        k = grid.k_values
        pos_index = np.searchsorted(k, self.k_pos)
        coeffs[pos_index] = coeffs_pos
        neg_index = np.searchsorted(k, -self.k_pos[:-1])
        coeffs[neg_index] = np.conj(coeffs_pos[:-1])
        return SpectrumEstimate(grid=grid, coeffs=coeffs)
