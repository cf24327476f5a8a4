"""Time evolution through the exponential field ramp.

The workhorse integrator is the optimized fourth-order commutator-free
exponential propagator: each macro step of size dt is a product of three
plain matrix exponentials

    exp[-i dt1 H(b3)] -> exp[-i dt2 H(b2)] -> exp[-i dt1 H(b1)]   (applied
    right to left, earliest effective field first)

with dt1 = (11/40) dt, dt2 = (9/20) dt and effective fields b_i formed from
the ramp field sampled at the three Gauss-type nodes x = 1/2 -+ sqrt(3/20),
1/2.  The weights are tuned so the product matches the Magnus expansion of
the time-ordered propagator to fourth order without evaluating commutators;
for a frozen field the step collapses to the exact propagator because the
weight rows sum to one.  A single-exponential midpoint step is kept as the
second-order reference integrator.

Each exponential is applied through the eigendecomposition of the real
symmetric tridiagonal Hamiltonian, which is exact to machine precision at
these dimensions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import sqrt

import numpy as np

from .spin_model import (
    EigenSystem,
    ModelParams,
    SpinHamiltonian,
    _solve_sector,
    build_hamiltonian,
    coarse_critical_field,
    diagonalize,
    sector_tridiagonals,
)

__all__ = [
    "RampSchedule",
    "IntegratorConfig",
    "initial_ground_state",
    "cfet4_step",
    "trotter_midpoint_step",
    "propagate_exponential",
    "evolve_ramp",
    "ramp_states_at_fields",
    "ramp_trajectory",
]

# Sub-step fractions and field-node positions of the three-exponential
# fourth-order scheme.
_DT1 = 11.0 / 40.0
_DT2 = 9.0 / 20.0
_X_NODES = np.array([0.5 - sqrt(3.0 / 20.0), 0.5, 0.5 + sqrt(3.0 / 20.0)])

_H1 = 37.0 / 66.0 - (400.0 / 957.0) * sqrt(5.0 / 3.0)
_H2 = -4.0 / 33.0
_H3 = 37.0 / 66.0 + (400.0 / 957.0) * sqrt(5.0 / 3.0)
_H4 = -11.0 / 162.0
_H5 = 92.0 / 81.0
# Rows give the effective fields (b1, b2, b3) from the node fields; each row
# sums to one, which makes the constant-field step exact.
_H_MATRIX = np.array([[_H1, _H2, _H3], [_H4, _H5, _H4], [_H3, _H2, _H1]])

_GRID_EPS = 1e-12


@dataclass(frozen=True)
class RampSchedule:
    """Exponential field ramp b(t) = b0 exp(-t/tau_ramp), run until t_stop."""

    b0: float
    tau_ramp: float
    t_stop: float

    def __post_init__(self):
        if self.t_stop < 0:
            raise ValueError(f"t_stop must be >= 0, got {self.t_stop}")
        if self.tau_ramp <= 0:
            raise ValueError(f"tau_ramp must be > 0, got {self.tau_ramp}")

    def field_at(self, t):
        return self.b0 * np.exp(-np.asarray(t, dtype=float) / self.tau_ramp)

    @property
    def b_stop(self) -> float:
        return float(self.field_at(self.t_stop))

    @classmethod
    def stopping_at(cls, params: ModelParams, b_target: float) -> "RampSchedule":
        """Schedule stopping exactly at b_target: t_stop = tau * ln(b0/b_target)."""
        if not 0 < b_target <= params.b0:
            raise ValueError(f"b_target must be in (0, b0], got {b_target}")
        t_stop = params.tau_ramp * np.log(params.b0 / b_target)
        return cls(b0=params.b0, tau_ramp=params.tau_ramp, t_stop=float(t_stop))


@dataclass(frozen=True)
class IntegratorConfig:
    """Macro step size and integrator choice for the ramp."""

    dt: float = 0.01
    method: str = "cfet4"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.method not in ("cfet4", "trotter_midpoint"):
            raise ValueError(f"unknown method {self.method!r}")

    def validate_step(self, j0: float) -> None:
        if self.dt * j0 > 0.1:
            warnings.warn(
                f"dt*j0 = {self.dt * j0:.3g} exceeds the default bound 0.1; "
                "convergence studies only",
                stacklevel=2,
            )


_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def _apply_exponential(ham: SpinHamiltonian, b: float, tau: float, state: np.ndarray) -> np.ndarray:
    """exp(-i tau H(b)) @ state via the parity-sector eigendecompositions."""
    n = ham.dim
    half = n // 2
    (d_even, e_even), (d_odd, e_odd) = sector_tridiagonals(
        ham.diagonal, b * ham.offdiagonal
    )
    mirror = state[half - 1 :: -1]
    if n % 2 == 1:
        c_even = np.empty(half + 1, dtype=complex)
        c_even[0] = state[half]
        c_even[1:] = (state[half + 1 :] + mirror) * _INV_SQRT2
        c_odd = (state[half + 1 :] - mirror) * _INV_SQRT2
    else:
        c_even = (state[half:] + mirror) * _INV_SQRT2
        c_odd = (state[half:] - mirror) * _INV_SQRT2

    w_even, v_even = _solve_sector(d_even, e_even)
    w_odd, v_odd = _solve_sector(d_odd, e_odd)
    c_even = v_even @ (np.exp(-1j * tau * w_even) * (v_even.T @ c_even))
    c_odd = v_odd @ (np.exp(-1j * tau * w_odd) * (v_odd.T @ c_odd))

    out = np.empty_like(state)
    if n % 2 == 1:
        out[half] = c_even[0]
        out[half + 1 :] = (c_even[1:] + c_odd) * _INV_SQRT2
        out[half - 1 :: -1] = (c_even[1:] - c_odd) * _INV_SQRT2
    else:
        out[half:] = (c_even + c_odd) * _INV_SQRT2
        out[half - 1 :: -1] = (c_even - c_odd) * _INV_SQRT2
    return out


def initial_ground_state(params: ModelParams) -> np.ndarray:
    """Ground state of H(b0), the polarized starting state of the protocol.

    The global phase is fixed so the largest-magnitude amplitude is real
    positive.  Raises if b0 does not exceed the (coarsely located) critical
    field, since the ramp must start in the polarized phase.
    """
    b_crit = coarse_critical_field(params)
    if params.b0 <= b_crit:
        raise ValueError(
            f"b0 = {params.b0} is not above the critical field ~{b_crit:.3g}"
        )
    eig = diagonalize(build_hamiltonian(params, params.b0))
    state = eig.states[:, 0].astype(np.complex128)
    anchor = state[np.argmax(np.abs(state))]
    state = state * (np.conj(anchor) / abs(anchor))
    return state


def cfet4_step(
    state: np.ndarray,
    ham: SpinHamiltonian,
    schedule: RampSchedule,
    t: float,
    dt: float,
) -> np.ndarray:
    """One fourth-order macro step from t to t + dt.

    ``ham`` supplies the field-independent tridiagonal pieces; its own
    b_field is ignored.
    """
    b_nodes = schedule.field_at(t + _X_NODES * dt)
    b1, b2, b3 = _H_MATRIX @ b_nodes
    state = _apply_exponential(ham, b3, _DT1 * dt, state)
    state = _apply_exponential(ham, b2, _DT2 * dt, state)
    return _apply_exponential(ham, b1, _DT1 * dt, state)


def trotter_midpoint_step(
    state: np.ndarray,
    ham: SpinHamiltonian,
    schedule: RampSchedule,
    t: float,
    dt: float,
) -> np.ndarray:
    """Second-order reference step: one exponential at the midpoint field."""
    b_mid = float(schedule.field_at(t + 0.5 * dt))
    return _apply_exponential(ham, b_mid, dt, state)


_STEPPERS = {"cfet4": cfet4_step, "trotter_midpoint": trotter_midpoint_step}


def propagate_exponential(
    state: np.ndarray,
    h: SpinHamiltonian,
    duration: float,
    eig: EigenSystem | None = None,
) -> np.ndarray:
    """exp(-i duration H) @ state for a frozen Hamiltonian.

    Pass a precomputed ``eig`` to reuse one decomposition across many
    durations (the constant-field measurement window does this).
    """
    if eig is None:
        eig = diagonalize(h)
    v = eig.states
    return v @ (np.exp(-1j * duration * eig.energies) * (v.T @ state))


def ramp_trajectory(params: ModelParams, schedule: RampSchedule, cfg: IntegratorConfig):
    """Generate (t, state) after every macro step, starting from (0, psi0).

    The last yielded time is t_stop itself; the final step is shortened to
    t_stop mod dt when t_stop is not a step multiple.
    """
    cfg.validate_step(params.j0)
    step = _STEPPERS[cfg.method]
    ham = build_hamiltonian(params, 0.0)
    state = initial_ground_state(params)
    t = 0.0
    yield t, state
    n_full = int(np.floor(schedule.t_stop / cfg.dt + _GRID_EPS))
    for k in range(n_full):
        state = step(state, ham, schedule, t, cfg.dt)
        t = (k + 1) * cfg.dt
        yield t, state
    remainder = schedule.t_stop - n_full * cfg.dt
    if remainder > _GRID_EPS:
        state = step(state, ham, schedule, t, remainder)
        yield schedule.t_stop, state


def evolve_ramp(
    params: ModelParams, schedule: RampSchedule, cfg: IntegratorConfig
) -> np.ndarray:
    """State at t_stop after ramping down from the b0 ground state."""
    state = None
    for _, state in ramp_trajectory(params, schedule, cfg):
        pass
    return state


def ramp_states_at_fields(
    params: ModelParams, b_stops, cfg: IntegratorConfig
) -> dict[float, np.ndarray]:
    """States at several stopping fields from a single shared trajectory.

    The ramp is deterministic, so the trajectory to the deepest field passes
    through every shallower stopping time; each snapshot is produced by the
    same full steps plus one shortened step and is bit-identical to an
    independent run stopped there.
    """
    b_stops = sorted(set(float(b) for b in b_stops), reverse=True)
    if not b_stops:
        return {}
    cfg.validate_step(params.j0)
    step = _STEPPERS[cfg.method]
    ham = build_hamiltonian(params, 0.0)
    deepest = RampSchedule.stopping_at(params, b_stops[-1])
    t_stops = [
        float(params.tau_ramp * np.log(params.b0 / b)) for b in b_stops
    ]

    out: dict[float, np.ndarray] = {}
    state = initial_ground_state(params)
    t = 0.0
    k = 0
    for b_target, t_target in zip(b_stops, t_stops):
        while t + cfg.dt <= t_target + _GRID_EPS:
            state = step(state, ham, deepest, t, cfg.dt)
            k += 1
            t = k * cfg.dt
        remainder = t_target - t
        if remainder > _GRID_EPS:
            out[b_target] = step(state.copy(), ham, deepest, t, remainder)
        else:
            out[b_target] = state.copy()
    return out
