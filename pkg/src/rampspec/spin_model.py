"""Uniform-coupling transverse-field Ising model in the maximal total-spin sector.

The Hamiltonian acting on N spin-1/2 particles with identical pairwise
couplings J0/N and a transverse field b,

    H(b) = -(J0/2) [ (S_z_tot)^2 / N - 1/4 ] + b * S_x_tot,

conserves total spin, so the dynamics of the fully polarized sector lives in
the (N+1)-dimensional basis |m>, m = -N/2 ... N/2, of S_z_tot eigenstates.
In that basis H(b) is real symmetric tridiagonal: the coupling term is
diagonal and the field term connects neighbouring m via the angular-momentum
ladder elements.  H also commutes with the spin-reflection m -> -m, which
splits the spectrum into even and odd sectors ("parity" below).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "ModelParams",
    "SpinHamiltonian",
    "EigenSystem",
    "build_hamiltonian",
    "diagonalize",
    "parity_operator",
    "minimum_gap",
    "coarse_critical_field",
    "m_values",
]

# Splitting below which an adjacent eigenpair is treated as degenerate and
# re-mixed into definite-parity combinations before labeling.
_DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Physical definition of the spin system and its ramp.

    Attributes
    ----------
    n_part : int
        Number of spin-1/2 particles, at least 2.
    j0 : float
        Ferromagnetic coupling strength; the unit of all energies.
    b0 : float
        Initial transverse field the ramp starts from.
    tau_ramp : float
        Exponential ramp time constant, in units of 1/j0.
    """

    n_part: int
    j0: float = 1.0
    b0: float = 2.0
    tau_ramp: float = 2.0

    def __post_init__(self):
        if int(self.n_part) != self.n_part or self.n_part < 2:
            raise ValueError(f"n_part must be an integer >= 2, got {self.n_part}")
        if self.j0 <= 0:
            raise ValueError(f"j0 must be > 0, got {self.j0}")
        if self.b0 < 0:
            raise ValueError(f"b0 must be >= 0, got {self.b0}")
        if self.tau_ramp <= 0:
            raise ValueError(f"tau_ramp must be > 0, got {self.tau_ramp}")

    @property
    def dim(self) -> int:
        return self.n_part + 1


@dataclass(frozen=True)
class SpinHamiltonian:
    """Tridiagonal Hamiltonian H(b) = diag + b * ladder on the |m> basis.

    ``diagonal`` holds the field-independent coupling term per basis state,
    ``offdiagonal`` the field-independent ladder elements
    0.5*sqrt(S(S+1) - m(m+1)); the actual off-diagonal matrix elements are
    ``b_field * offdiagonal``.
    """

    diagonal: np.ndarray
    offdiagonal: np.ndarray
    b_field: float

    @property
    def dim(self) -> int:
        return self.diagonal.shape[0]

    def sub_diagonal(self) -> np.ndarray:
        """Effective off-diagonal elements at the current field."""
        return self.b_field * self.offdiagonal

    def with_field(self, b: float) -> "SpinHamiltonian":
        return dataclasses.replace(self, b_field=float(b))

    def to_dense(self) -> np.ndarray:
        off = self.sub_diagonal()
        return np.diag(self.diagonal) + np.diag(off, 1) + np.diag(off, -1)


@dataclass(frozen=True)
class EigenSystem:
    """Full spectrum of a SpinHamiltonian.

    ``energies`` ascending, ``states`` orthonormal with eigenvectors in
    columns, ``parities`` the +/-1 spin-reflection label per eigenstate.
    """

    energies: np.ndarray
    states: np.ndarray
    parities: np.ndarray

    @property
    def dim(self) -> int:
        return self.energies.shape[0]


def m_values(n_part: int) -> np.ndarray:
    """Spin projections m = -N/2 ... N/2 in basis order."""
    return np.arange(n_part + 1) - n_part / 2.0


def build_hamiltonian(params: ModelParams, b: float) -> SpinHamiltonian:
    """Construct H(b) in the maximal-spin |m> basis (m ascending from -N/2)."""
    if b < 0:
        raise ValueError(f"field must be >= 0, got {b}")
    n = params.n_part
    s = n / 2.0
    m = m_values(n)
    diagonal = -(params.j0 / 2.0) * (m**2 / n - 0.25)
    mm = m[:-1]
    offdiagonal = 0.5 * np.sqrt(s * (s + 1.0) - mm * (mm + 1.0))
    return SpinHamiltonian(diagonal=diagonal, offdiagonal=offdiagonal, b_field=float(b))


def parity_operator(dim: int) -> np.ndarray:
    """Index permutation of the spin-reflection m -> -m.

    Returns ``perm`` such that ``(P psi)[i] = psi[perm[i]]``; equivalently the
    anti-diagonal permutation matrix.  P**2 = 1 and [H(b), P] = 0 for every b.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return np.arange(dim)[::-1]


def sector_tridiagonals(
    diagonal: np.ndarray, off_eff: np.ndarray
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Fold the full tridiagonal into its even and odd reflection sectors.

    The symmetric/antisymmetric combinations (|m> +/- |-m>)/sqrt(2) block
    diagonalize any Hamiltonian commuting with the reflection, leaving two
    half-size tridiagonal blocks.  Besides the factor ~4 in eigensolver work,
    each sector has well-separated eigenvalues, so the tunneling doublets of
    the full matrix never degrade the solver or the parity labels.
    """
    n = diagonal.shape[0]
    half = n // 2
    if n % 2 == 1:
        # integer m; m = 0 belongs to the even sector and couples to s_1
        # with a sqrt(2)-enhanced bond
        d_even = diagonal[half:].copy()
        e_even = off_eff[half:].copy()
        if e_even.size:
            e_even[0] *= np.sqrt(2.0)
        d_odd = diagonal[half + 1 :].copy()
        e_odd = off_eff[half + 1 :].copy()
    else:
        # half-integer m; the central bond shifts the first diagonal entry
        d_even = diagonal[half:].copy()
        d_even[0] += off_eff[half - 1]
        d_odd = diagonal[half:].copy()
        d_odd[0] -= off_eff[half - 1]
        e_even = off_eff[half:].copy()
        e_odd = off_eff[half:].copy()
    return (d_even, e_even), (d_odd, e_odd)


def _solve_sector(d: np.ndarray, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if d.size == 1:
        return d.copy(), np.ones((1, 1))
    try:
        return eigh_tridiagonal(d, e, lapack_driver="stemr")
    except np.linalg.LinAlgError as exc:  # pragma: no cover - fatal
        raise RuntimeError(f"tridiagonal eigensolver failed: {exc}") from exc


def _merge_sectors(
    w_even: np.ndarray, w_odd: np.ndarray, lead_parity: int
) -> tuple[np.ndarray, np.ndarray]:
    """Ascending merge of the sector spectra with deterministic doublet order.

    Returns (order, parities) where ``order`` indexes the concatenation
    [even, odd].  Quasi-degenerate tunneling doublets, whose numerical
    splitting is below roundoff, are forced to (lead_parity, -lead_parity)
    order; in exact arithmetic the lower member of every doublet carries the
    ground state's parity (+1 for integer spin projections, -1 for
    half-integer ones, by the sign-alternation of the lowest eigenvector).
    """
    w_all = np.concatenate([w_even, w_odd])
    par_all = np.concatenate(
        [np.ones(w_even.size, dtype=np.int64), -np.ones(w_odd.size, dtype=np.int64)]
    )
    order = np.argsort(w_all, kind="stable")
    w_sorted = w_all[order]
    p_sorted = par_all[order]
    scale = max(float(np.max(np.abs(w_all))), 1.0)
    tol = _DEGENERACY_TOL * scale
    for k in range(w_sorted.size - 1):
        if (
            p_sorted[k] == -lead_parity
            and p_sorted[k + 1] == lead_parity
            and w_sorted[k + 1] - w_sorted[k] < tol
        ):
            order[k], order[k + 1] = order[k + 1], order[k]
            p_sorted[k], p_sorted[k + 1] = lead_parity, -lead_parity
    return order, par_all[order]


def diagonalize(h: SpinHamiltonian) -> EigenSystem:
    """Full eigendecomposition with spin-reflection parity labels.

    Solved sector by sector (see :func:`sector_tridiagonals`), so every
    eigenvector has exact parity even deep in the quasi-degenerate regime.
    """
    n = h.dim
    half = n // 2
    (d_even, e_even), (d_odd, e_odd) = sector_tridiagonals(h.diagonal, h.sub_diagonal())
    w_even, v_even = _solve_sector(d_even, e_even)
    w_odd, v_odd = _solve_sector(d_odd, e_odd)

    order, parities = _merge_sectors(w_even, w_odd, lead_parity=1 if n % 2 else -1)
    w_all = np.concatenate([w_even, w_odd])[order]

    states = np.zeros((n, n))
    n_even = w_even.size
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for col, src in enumerate(order):
        if src < n_even:
            u = v_even[:, src]
            if n % 2 == 1:
                states[half, col] = u[0]
                states[half + 1 :, col] = u[1:] * inv_sqrt2
                states[half - 1 :: -1, col] = u[1:] * inv_sqrt2
            else:
                states[half:, col] = u * inv_sqrt2
                states[half - 1 :: -1, col] = u * inv_sqrt2
        else:
            u = v_odd[:, src - n_even]
            if n % 2 == 1:
                states[half + 1 :, col] = u * inv_sqrt2
                states[half - 1 :: -1, col] = -u * inv_sqrt2
            else:
                states[half:, col] = u * inv_sqrt2
                states[half - 1 :: -1, col] = -u * inv_sqrt2
    return EigenSystem(energies=w_all, states=states, parities=parities)


def first_coupled_gap(eig: EigenSystem) -> float:
    """Energy of the lowest excited state sharing the ground state's parity,
    relative to the ground state (index 2 when parities alternate)."""
    p0 = eig.parities[0]
    for k in range(1, eig.dim):
        if eig.parities[k] == p0:
            return float(eig.energies[k] - eig.energies[0])
    raise RuntimeError("no excited state with ground-state parity found")


def minimum_gap(params: ModelParams, b_grid: np.ndarray) -> tuple[float, float]:
    """Locate the avoided-crossing minimum of the first coupled gap.

    Scans ``b_grid`` (ascending) for the field minimizing E2 - E0 and returns
    ``(b_crit, gap)``.  Raises if the minimum sits on either end of the grid,
    i.e. the grid does not bracket it.
    """
    b_grid = np.asarray(b_grid, dtype=float)
    if b_grid.ndim != 1 or b_grid.size < 3:
        raise ValueError("b_grid must be a 1d grid with at least 3 points")
    if np.any(np.diff(b_grid) <= 0):
        raise ValueError("b_grid must be strictly ascending")

    ham = build_hamiltonian(params, 0.0)
    gaps = np.empty(b_grid.size)
    for i, b in enumerate(b_grid):
        gaps[i] = _coupled_gap_fast(ham, b)
    i_min = int(np.argmin(gaps))
    if i_min == 0 or i_min == b_grid.size - 1:
        raise ValueError("b_grid does not bracket a gap minimum")
    return float(b_grid[i_min]), float(gaps[i_min])


def _coupled_gap_fast(ham: SpinHamiltonian, b: float) -> float:
    """First coupled gap from the ground state's own parity sector alone."""
    sectors = sector_tridiagonals(ham.diagonal, b * ham.offdiagonal)
    d, e = sectors[0] if ham.dim % 2 == 1 else sectors[1]
    w = eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 1))
    return float(w[1] - w[0])


def coarse_critical_field(params: ModelParams, resolution: float = 0.01) -> float:
    """Cheap estimate of the critical field, for precondition checks only.

    Small systems have no avoided crossing at b > 0 (the coupled gap grows
    monotonically with the field); in that case 0 is returned so any positive
    starting field counts as polarized.
    """
    hi = max(1.2 * params.j0, params.b0)
    grid = np.arange(resolution, hi, resolution)
    ham = build_hamiltonian(params, 0.0)
    gaps = np.array([_coupled_gap_fast(ham, b) for b in grid])
    i_min = int(np.argmin(gaps))
    if i_min == 0:
        return 0.0
    return float(grid[i_min])
