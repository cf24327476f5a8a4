"""Measurement observable: occupancy of the most probable product state.

After the ramp stops, the field is held constant and the occupancy of the
single S_z basis state that is most probable at the stopping time is recorded
on a uniform time grid.  For a frozen Hamiltonian the occupancy oscillates at
the energy differences of the populated same-parity eigenpairs, which is what
the downstream spectral analysis extracts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spin_model import EigenSystem, SpinHamiltonian, diagonalize, m_values

__all__ = [
    "TimeSeries",
    "product_state_probs",
    "highest_probable_index",
    "occupancy_timeseries",
    "instantaneous_populations",
]

# Relative closeness for the +m tie-break between mirror-symmetric maxima.
_TIE_REL = 1e-9


@dataclass
class TimeSeries:
    """Uniformly sampled observable values over the measurement window.

    ``t`` starts at 0 (the stopping time); ``values`` are probabilities in
    [0, 1].  ``counts`` is attached by the counting-noise stage and holds the
    raw number of detections per grid point.
    """

    t: np.ndarray
    values: np.ndarray
    b_stop: float | None = None
    m_star: float | None = None
    dt_meas: float | None = None
    counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_step(self) -> int:
        return self.values.shape[0]


def product_state_probs(state: np.ndarray) -> np.ndarray:
    """|amplitude|^2 per S_z basis state; sums to one for a normalized state."""
    return np.abs(state) ** 2


def highest_probable_index(state: np.ndarray) -> float:
    """Spin projection m of the most probable product state.

    Mirror-symmetric distributions have two equal maxima at +/-m; the
    nonnegative member is returned.
    """
    probs = product_state_probs(state)
    i_best = int(np.argmax(probs))
    mv = m_values(probs.shape[0] - 1)
    m_best = mv[i_best]
    if m_best < 0:
        i_mirror = probs.shape[0] - 1 - i_best
        if probs[i_mirror] >= probs[i_best] * (1.0 - _TIE_REL):
            return float(-m_best)
    return float(m_best)


def occupancy_timeseries(
    state_at_stop: np.ndarray,
    h_stop: SpinHamiltonian,
    n_step: int = 2048,
    dt_meas: float = 0.5,
    eig: EigenSystem | None = None,
) -> TimeSeries:
    """Exact occupancy of the t_stop-most-probable state over the hold window.

    values[k] = |<m*| exp(-i k dt H) |psi>|^2, evaluated with one
    eigendecomposition and a phase matrix over the whole grid.
    """
    if n_step < 2:
        raise ValueError(f"n_step must be >= 2, got {n_step}")
    if dt_meas <= 0:
        raise ValueError(f"dt_meas must be > 0, got {dt_meas}")
    if eig is None:
        eig = diagonalize(h_stop)

    m_star = highest_probable_index(state_at_stop)
    mv = m_values(h_stop.dim - 1)
    row = int(np.argmin(np.abs(mv - m_star)))

    c = eig.states.T @ state_at_stop          # eigenbasis amplitudes
    a = eig.states[row, :] * c                # per-eigenstate contribution to <m*|psi(t)>
    t = np.arange(n_step) * dt_meas
    phases = np.exp(-1j * np.outer(t, eig.energies))
    values = np.abs(phases @ a) ** 2
    # roundoff can push |.|^2 a hair past 1
    np.clip(values, 0.0, 1.0, out=values)
    return TimeSeries(
        t=t,
        values=values,
        b_stop=h_stop.b_field,
        m_star=m_star,
        dt_meas=float(dt_meas),
    )


def instantaneous_populations(state: np.ndarray, eig: EigenSystem, k_list) -> np.ndarray:
    """|<phi_k|state>|^2 for the requested eigenindices of the current field."""
    k = np.asarray(k_list, dtype=int)
    return np.abs(eig.states[:, k].T @ state) ** 2
