"""Closed-form correlation oracles and the uncompressed reference run."""

import numpy as np
import pytest

from jafs.estimate import build_rct, pair_correlations, recover_lags
from jafs.model import ArrayGeometry, inverse_sin_grid
from jafs.oracle import (
    exact_correlations,
    nyquist_reference,
    place_on_grid,
    true_correlation_table,
    true_pair_correlations,
    true_source_autocorr,
    true_vec_ry,
)
from jafs.simulate import (
    CosetPattern,
    SourceSpec,
    design_bandpass,
    spatial_compress,
    temporal_compress,
    ula_snapshots,
)


def smoke_setup():
    geo = ArrayGeometry(8, 0.5, (0, 1, 2, 3, 7))
    grid = inverse_sin_grid(15)
    pattern = CosetPattern(8, (0, 1, 2, 3, 7))
    sources = (
        SourceSpec(float(np.arcsin(-0.4)), (-0.8 * np.pi, -0.5 * np.pi), 5.0),
        SourceSpec(0.0, (-0.1 * np.pi, 0.2 * np.pi), 5.0),
        SourceSpec(float(np.arcsin(8 / 15)), (0.4 * np.pi, 0.75 * np.pi), 5.0),
    )
    return geo, grid, pattern, sources


# ------------------------------------------------------ autocorrelation


def test_autocorr_single_tap():
    np.testing.assert_array_equal(true_source_autocorr([1.0], 5.0), [5.0])


def test_autocorr_two_equal_taps():
    h = np.array([1.0, 1.0]) / np.sqrt(2)
    np.testing.assert_allclose(
        true_source_autocorr(h, 1.0), [1.0, 0.5, 0.5], atol=1e-15
    )


def test_autocorr_matches_numpy_correlate():
    rng = np.random.default_rng(0)
    h = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    var = 2.5
    r = true_source_autocorr(h, var)
    c = var * np.correlate(h, h, mode="full")  # c[11 + m] = sum h[t+m] conj(h[t])
    n_lags = 23
    for m in range(-11, 12):
        assert r[m % n_lags] == pytest.approx(c[11 + m], abs=1e-12)


def test_autocorr_conjugate_symmetry_and_positivity():
    taps = design_bandpass((0.05 * np.pi, 0.125 * np.pi), 32)
    r = true_source_autocorr(taps, 5.0)
    n_lags = 63
    assert r[0].imag == 0
    assert r[0].real > 0
    for m in range(1, 32):
        assert r[-m % n_lags] == pytest.approx(np.conj(r[m]), abs=1e-15)


# -------------------------------------------------------- grid placement


def test_place_on_grid_rows_and_off_grid_rejection():
    geo, grid, pattern, sources = smoke_setup()
    lags = place_on_grid(sources, grid, 8)
    assert lags.shape == (15, 15)
    occupied = np.flatnonzero(np.abs(lags).sum(axis=1))
    np.testing.assert_array_equal(occupied, [4, 7, 11])
    with pytest.raises(ValueError):
        place_on_grid(
            (SourceSpec(0.1, (-0.1 * np.pi, 0.2 * np.pi), 1.0),), grid, 8
        )


def test_place_on_grid_colocated_sources_add():
    geo, grid, _, _ = smoke_setup()
    band = (-0.1 * np.pi, 0.2 * np.pi)
    one = place_on_grid((SourceSpec(0.0, band, 2.0),), grid, 8)
    two = place_on_grid(
        (SourceSpec(0.0, band, 2.0), SourceSpec(0.0, band, 3.0)), grid, 8
    )
    np.testing.assert_allclose(two, one * (5.0 / 2.0), atol=1e-14)


# ------------------------------------------------------------ vec(R_y)


def test_true_vec_ry_noise_only():
    geo, grid, _, _ = smoke_setup()
    lags = np.zeros((15, 15), dtype=complex)
    vec0 = true_vec_ry(geo, grid, lags, 2.0, 0)
    np.testing.assert_allclose(vec0, 2.0 * np.eye(5).flatten(order="F"))
    assert np.abs(true_vec_ry(geo, grid, lags, 2.0, 3)).max() == 0


def test_true_vec_ry_single_source_is_kronecker():
    geo, grid, _, _ = smoke_setup()
    q = 11
    lags = np.zeros((15, 15), dtype=complex)
    lags[q, 2] = 1.5 + 0.5j
    vec = true_vec_ry(geo, grid, lags, 0.0, 2)
    b = np.exp(2j * np.pi * geo.positions * np.sin(grid.angles[q]))
    np.testing.assert_allclose(vec, np.kron(np.conj(b), b) * (1.5 + 0.5j), atol=1e-12)


def test_true_table_diagonal_power():
    geo, grid, pattern, sources = smoke_setup()
    exact = exact_correlations(sources, geo, grid, pattern, 5.0)
    total = sum(
        true_source_autocorr(design_bandpass(s.band, 8), s.input_variance)[0]
        for s in sources
    )
    for i in range(5):
        assert exact.table[i, i, 0] == pytest.approx(total + 5.0, abs=1e-10)


def test_true_pair_correlations_lag_lookup():
    geo, grid, pattern, sources = smoke_setup()
    exact = exact_correlations(sources, geo, grid, pattern, 5.0)
    rows = pattern.rows
    n_lags = 15
    for a in (0, 2, 4):
        for b in (1, 3):
            np.testing.assert_array_equal(
                exact.pair_vecs[:, :, a + b * pattern.m_t],
                exact.table[:, :, (rows[a] - rows[b]) % n_lags],
            )


# --------------------------------------------- oracle vs empirical data


def test_empirical_pairs_converge_to_oracle():
    geo, grid, pattern, sources = smoke_setup()
    exact = exact_correlations(sources, geo, grid, pattern, 5.0)

    def rel_err(n_blocks):
        snaps = ula_snapshots(sources, geo, 5.0, n_blocks, 8, master_seed=6)
        z = temporal_compress(spatial_compress(snaps, geo), pattern)
        pairs = pair_correlations(z)
        return np.linalg.norm(pairs - exact.pair_vecs) / np.linalg.norm(
            exact.pair_vecs
        )

    coarse, fine = rel_err(100), rel_err(6400)
    assert fine < coarse / 4  # 64x data must buy at least 4x accuracy
    assert fine < 0.1


def test_recovered_lags_match_oracle_table():
    geo, grid, pattern, sources = smoke_setup()
    exact = exact_correlations(sources, geo, grid, pattern, 5.0)
    snaps = ula_snapshots(sources, geo, 5.0, 4000, 8, master_seed=1)
    z = temporal_compress(spatial_compress(snaps, geo), pattern)
    corr = recover_lags(build_rct(pattern), pair_correlations(z))
    err = np.linalg.norm(corr.values - exact.table) / np.linalg.norm(exact.table)
    assert err < 0.1


# --------------------------------------------------- uncompressed reference


def test_nyquist_reference_tracks_truth():
    geo, grid, pattern, sources = smoke_setup()
    truth_spec = np.fft.fft(place_on_grid(sources, grid, 8), axis=1)

    def run(n_blocks):
        spec = nyquist_reference(sources, 8, 0.5, grid, 5.0, n_blocks, 8, 0)
        err = np.linalg.norm(spec.values - truth_spec) / np.linalg.norm(truth_spec)
        return spec, err

    spec_fine, err_fine = run(2000)
    _, err_coarse = run(200)
    assert err_fine < 0.15
    assert err_fine < err_coarse
    assert abs(spec_fine.sigma_n_hat - 5.0) / 5.0 < 0.05


def test_nyquist_reference_noiseless_band_mass():
    grid = inverse_sin_grid(15)
    src = SourceSpec(0.0, (-0.1 * np.pi, 0.2 * np.pi), 5.0)
    spec = nyquist_reference((src,), 8, 0.5, grid, 0.0, 600, 8, 3)
    p = spec.clamped_real()
    row = p[7]
    # nearly all recovered power sits in the source row and its band
    assert row.sum() / p.sum() > 0.9
    guard = 4 * np.pi / 8
    inband = (spec.freq_grid >= -0.1 * np.pi - guard) & (
        spec.freq_grid <= 0.2 * np.pi + guard
    )
    assert row[inband].sum() / row.sum() > 0.9
