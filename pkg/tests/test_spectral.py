import numpy as np
import pytest

from rampspec.observables import TimeSeries
from rampspec.spectral import (
    FrequencyGrid,
    RealPairSensing,
    SpectrumEstimate,
    alias_frequency,
    dft,
    idft,
    low_pass_filter,
    partial_idft_matrix,
    threshold_filter,
)


def random_series(rng, n=None):
    n = n or int(rng.choice([8, 16, 32, 64, 128]))
    dt = float(rng.uniform(0.1, 2.0))
    return TimeSeries(t=np.arange(n) * dt, values=rng.normal(size=n))


def test_grid_layout():
    grid = FrequencyGrid(n_step=8, dt_meas=0.5)
    assert np.array_equal(grid.k_values, [-3, -2, -1, 0, 1, 2, 3, 4])
    assert grid.omega_nyquist == pytest.approx(2 * np.pi)
    assert grid.delta_omega == pytest.approx(2 * np.pi / 4.0)
    with pytest.raises(ValueError):
        FrequencyGrid(n_step=9, dt_meas=0.5)
    with pytest.raises(ValueError):
        FrequencyGrid(n_step=8, dt_meas=0.0)


def test_roundtrip_and_parseval_randomized():
    rng = np.random.default_rng(7)
    for _ in range(300):
        series = random_series(rng)
        spec = dft(series)
        back = idft(spec)
        assert np.max(np.abs(back - series.values)) < 1e-12
        assert abs(np.sum(series.values**2) - np.sum(np.abs(spec.coeffs) ** 2)) < 1e-10


def test_constant_series_is_dc_only():
    n = 32
    series = TimeSeries(t=np.arange(n) * 0.5, values=np.full(n, 0.37))
    spec = dft(series)
    nz = spec.grid.k_values[np.abs(spec.coeffs) > 1e-12]
    assert np.array_equal(nz, [0])
    assert spec.coeffs[spec.grid.k_values == 0][0] == pytest.approx(
        0.37 * np.sqrt(n), abs=1e-12
    )


def test_cosine_lands_on_symmetric_bins():
    n, dt, k = 64, 0.5, 5
    t = np.arange(n) * dt
    series = TimeSeries(t=t, values=np.cos(2 * np.pi * k * t / (n * dt)))
    spec = dft(series)
    mags = np.abs(spec.coeffs)
    hot = spec.grid.k_values[mags > 1e-9]
    assert np.array_equal(hot, [-k, k])
    assert mags[spec.grid.k_values == k] == pytest.approx(
        mags[spec.grid.k_values == -k], abs=1e-12
    )


def test_real_signal_spectrum_is_hermitian():
    rng = np.random.default_rng(3)
    for _ in range(100):
        spec = dft(random_series(rng))
        sym = spec.hermitized()
        assert np.max(np.abs(sym.coeffs - spec.coeffs)) < 1e-12


def test_hermitized_spectrum_inverts_to_real():
    rng = np.random.default_rng(8)
    grid = FrequencyGrid(n_step=64, dt_meas=0.5)
    raw = SpectrumEstimate(
        grid=grid, coeffs=rng.normal(size=64) + 1j * rng.normal(size=64)
    )
    sym = raw.hermitized()
    assert np.max(np.abs(idft(sym).imag)) < 1e-12


def test_alias_frequency():
    wn = 2.0
    assert alias_frequency(1.3, wn) == 1.3
    assert alias_frequency(2 * wn, wn) == pytest.approx(0.0)
    assert alias_frequency(wn, wn) == pytest.approx(wn)
    # reflection: just above Nyquist folds just below
    assert alias_frequency(2.5, wn) == pytest.approx(1.5)
    assert alias_frequency(5.1, wn) == pytest.approx(1.1)
    with pytest.raises(ValueError):
        alias_frequency(-1.0, wn)


def test_alias_produces_identical_samples():
    # a tone above Nyquist and its folded image agree on every grid point
    n, dt = 64, 0.5
    t = np.arange(n) * dt
    wn = np.pi / dt
    w_high = 1.7 * wn
    w_alias = alias_frequency(w_high, wn)
    assert np.max(np.abs(np.cos(w_high * t) - np.cos(w_alias * t))) < 1e-12


def test_low_pass_filter():
    rng = np.random.default_rng(1)
    spec = dft(random_series(rng, n=64))
    assert np.array_equal(
        low_pass_filter(spec, 2 * spec.grid.omega_nyquist).coeffs, spec.coeffs
    )
    dc_only = low_pass_filter(spec, 0.0)
    nz = spec.grid.k_values[np.abs(dc_only.coeffs) > 0]
    assert np.array_equal(nz, [0])


def test_threshold_filter():
    rng = np.random.default_rng(2)
    spec = dft(random_series(rng, n=32))
    assert np.array_equal(threshold_filter(spec, 0.0).coeffs, spec.coeffs)
    wiped = threshold_filter(spec, np.max(np.abs(spec.coeffs)) * 1.01)
    assert np.all(wiped.coeffs == 0)


def _noisy_multitone(rng, n=256, dt=0.5):
    t = np.arange(n) * dt
    delta = 2 * np.pi / (n * dt)
    clean = 0.3 + 0.2 * np.cos(delta * 12 * t) + 0.1 * np.cos(delta * 40 * t + 0.7)
    decayed = clean * np.exp(-t / 60.0)
    noisy = decayed + rng.normal(scale=0.05, size=n)
    return t, decayed, noisy


def test_filters_reduce_time_domain_rms():
    rng = np.random.default_rng(11)
    t, decayed, noisy = _noisy_multitone(rng)
    spec = dft(TimeSeries(t=t, values=noisy))
    rms = lambda x: np.sqrt(np.mean(x**2))
    base = rms(noisy - decayed)
    lp = idft(low_pass_filter(spec, 2 * np.pi * 50 / (256 * 0.5))).real
    assert rms(lp - decayed) < base
    th = idft(threshold_filter(spec, 2.0 * 0.05)).real
    assert rms(th - decayed) < base
    # thresholded reconstruction lands close to the noiseless decayed signal
    assert rms(th - decayed) < 1.2 * 0.05


def test_partial_idft_matrix_contract():
    grid = FrequencyGrid(n_step=64, dt_meas=0.5)
    with pytest.raises(ValueError):
        partial_idft_matrix(grid, [0, 1, 2])  # t = 0 excluded
    with pytest.raises(ValueError):
        partial_idft_matrix(grid, [1, 1, 2])
    with pytest.raises(ValueError):
        partial_idft_matrix(grid, [70])
    m = partial_idft_matrix(grid, np.arange(1, 64))
    assert m.shape == (63, 63)
    # applying it to the no-DC coefficients reproduces the zero-mean series
    rng = np.random.default_rng(0)
    series = random_series(rng, n=64)
    spec = dft(series)
    no_dc = spec.coeffs[spec.grid.k_values != 0]
    recon = m @ no_dc
    centered = series.values - np.mean(series.values)
    assert np.max(np.abs(recon - centered[1:])) < 1e-12


def test_operating_point_shape():
    grid = FrequencyGrid(n_step=2048, dt_meas=0.5)
    rng = np.random.default_rng(5)
    rows = np.sort(rng.choice(np.arange(1, 2048), size=200, replace=False))
    m = partial_idft_matrix(grid, rows)
    assert m.shape == (200, 2047)
    # sample budget comfortably exceeds s log n for s ~ 4 sparse spectra
    assert 200 >= 4 * np.log(2048)


def test_pair_sensing_consistency():
    grid = FrequencyGrid(n_step=128, dt_meas=0.25)
    rng = np.random.default_rng(9)
    rows = np.sort(rng.choice(np.arange(1, 128), size=40, replace=False))
    ops = RealPairSensing(grid, rows)
    full = partial_idft_matrix(grid, rows)
    series = random_series(rng, n=128)
    spec = dft(series)
    pos = spec.coeffs[spec.grid.k_values >= 1]
    got = ops.forward(pos)
    want = (full @ spec.coeffs[spec.grid.k_values != 0]).real
    assert np.max(np.abs(got - want)) < 1e-12
    # adjoint identity over random vectors
    for _ in range(50):
        x = rng.normal(size=ops.n_unknowns) + 1j * rng.normal(size=ops.n_unknowns)
        y = rng.normal(size=ops.n_samples)
        assert abs(np.dot(ops.forward(x), y) - np.real(np.vdot(x, ops.adjoint(y)))) < 1e-10
    # restriction keeps rows aligned
    sub = ops.restrict(np.array([0, 2, 5]))
    assert np.array_equal(sub.sample_times, rows[[0, 2, 5]])
    # symmetric expansion reproduces every non-DC coefficient (DC stays out
    # of the model)
    expanded = ops.spectrum_from_positive(pos)
    not_dc = grid.k_values != 0
    assert np.max(np.abs(expanded.coeffs[not_dc] - spec.coeffs[not_dc])) < 1e-12
    assert expanded.coeffs[~not_dc][0] == 0.0
