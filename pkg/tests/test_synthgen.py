"""Generators: banded correlations, ground truths, sampling, genotype fixtures."""

import numpy as np
import pytest

from deepwas import ldcore, synthgen
from deepwas.errors import ArgumentError
from deepwas.iterlinalg import dense_nll_oracle
from deepwas.priors import AnnotationTensor


# ---------------------------------------------------------------------------
# gen_banded_correlation
# ---------------------------------------------------------------------------

def test_bandwidth_zero_identity():
    mat, _ = synthgen.gen_banded_correlation(20, 0, 0.5, 0)
    assert np.allclose(mat.to_dense(), np.eye(20))


def test_decay_zero_identity():
    mat, _ = synthgen.gen_banded_correlation(20, 5, 0.0, 0)
    assert np.allclose(mat.to_dense(), np.eye(20), atol=1e-15)


def test_psd_and_unit_diagonal():
    mat, _ = synthgen.gen_banded_correlation(50, 5, 0.5, 7)
    dense = mat.to_dense()
    assert np.allclose(np.diag(dense), 1.0)
    assert np.linalg.eigvalsh(dense).min() >= -1e-10
    assert np.abs(dense).max() <= 1.0 + 1e-12


def test_matches_loadings_gram():
    mat, load = synthgen.gen_banded_correlation(40, 6, 0.6, 3)
    m = 40
    lam = np.zeros((m, m + 6))
    for i in range(m):
        lam[i, i : i + 7] = load[i]
    assert np.allclose(mat.to_dense(), lam @ lam.T, atol=1e-12)


def test_generator_determinism():
    a, _ = synthgen.gen_banded_correlation(30, 4, 0.5, 9)
    b, _ = synthgen.gen_banded_correlation(30, 4, 0.5, 9)
    assert np.array_equal(a.band, b.band)
    assert np.array_equal(a.positions, b.positions)


# ---------------------------------------------------------------------------
# scale_ground_truth
# ---------------------------------------------------------------------------

def test_scale_target_mean():
    truth = synthgen.scale_ground_truth(np.ones(4000), 400, 4000, 0.5)
    assert truth.f_true.mean() == pytest.approx(0.05, abs=1e-15)
    assert truth.target_mean == pytest.approx(0.05)


def test_scale_constant_input():
    truth = synthgen.scale_ground_truth(np.full(100, 3.3), 200, 100, 0.25)
    assert np.allclose(truth.f_true, (200 / 100) * 0.75)


def test_scale_preserves_ratios_and_argmax():
    rng = np.random.default_rng(5)
    raw = rng.lognormal(0, 1, 500)
    truth = synthgen.scale_ground_truth(raw, 300, 500, 0.5)
    assert truth.f_true.mean() == pytest.approx(truth.target_mean, rel=1e-12)
    assert np.argmax(truth.f_true) == np.argmax(raw)
    ratios = truth.f_true[:10] / truth.f_true[10:20]
    assert np.allclose(ratios, raw[:10] / raw[10:20], rtol=1e-12)


# ---------------------------------------------------------------------------
# threshold ground truth
# ---------------------------------------------------------------------------

def make_flat_annot(m, d_func=13, w=160, d_pred=2, fill=0.0):
    func = np.full((m, d_func, w), fill, dtype=np.float32)
    pred = np.zeros((m, d_pred), dtype=np.float32)
    return AnnotationTensor(func, pred, np.full(m, 0.5), np.ones(m))


def test_threshold_all_zero_features():
    # zero features: only the cuts at -20 and -10 are exceeded
    m = 10
    annot = make_flat_annot(m)
    logf = synthgen.threshold_ground_truth(annot, m)
    assert np.allclose(logf, 1.37 + 0.5 - np.log(m))


def test_threshold_all_indicators_active():
    m = 10
    annot = make_flat_annot(m, fill=1.0)
    logf = synthgen.threshold_ground_truth(annot, m)
    assert np.allclose(logf, 0.7 + 0.5 + 1.37 + 0.5 - np.log(m))
    assert logf[0] == pytest.approx(3.07 - np.log(m))


def test_threshold_window_locality():
    m = 6
    annot = make_flat_annot(m)
    base = synthgen.threshold_ground_truth(annot, m)
    func = annot.func_data.copy()
    func[:, :, :113] = 50.0  # outside the scored position range
    func[:, :, 144:] = -50.0
    poked = AnnotationTensor(func, annot.pred_data, annot.freq, annot.ld_score)
    assert np.array_equal(synthgen.threshold_ground_truth(poked, m), base)


def test_threshold_requires_wide_window():
    annot = make_flat_annot(4, w=100)
    with pytest.raises(ArgumentError):
        synthgen.threshold_ground_truth(annot, 4)


def test_threshold_uses_broadcast_pred_channels():
    m = 8
    annot = make_flat_annot(m, d_func=12, d_pred=2)
    pred = annot.pred_data.copy()
    pred[:4, 0] = -1.0  # channel 12 of the concatenation, sum = 31 * (-1) < -10
    poked = AnnotationTensor(annot.func_data, pred, annot.freq, annot.ld_score)
    logf = synthgen.threshold_ground_truth(poked, m)
    assert np.allclose(logf[4:], 1.37 + 0.5 - np.log(m))
    assert np.allclose(logf[:4], 1.37 - np.log(m))


# ---------------------------------------------------------------------------
# sample_associations
# ---------------------------------------------------------------------------

def test_sample_identity_marginal_variance():
    # R = I: independent components with variance f + sigma2_N
    m, n, sigma2 = 10, 100, 0.5
    mat, load = synthgen.gen_banded_correlation(m, 0, 0.0, 0)
    truth = synthgen.scale_ground_truth(np.ones(m), n, m, sigma2)
    draws = np.stack([
        synthgen.sample_associations(mat, truth, sigma2, n, seed, loadings=load).beta_hat
        for seed in range(4000)
    ])
    var = draws.var(axis=0)
    expect = truth.f_true + sigma2 / n
    se = expect * np.sqrt(2 / 4000)
    assert np.all(np.abs(var - expect) < 3.5 * se)


def test_sample_null_noise_covariance():
    # f ~ 0: sample covariance matches sigma2_N R entrywise within 3 SE
    m, n, sigma2, draws = 10, 100, 0.5, 10_000
    mat, load = synthgen.gen_banded_correlation(m, 3, 0.6, 1)
    truth = synthgen.GroundTruth(np.full(m, 1e-30), "constant", 1.0, 1e-30)
    samples = np.stack([
        synthgen.sample_associations(mat, truth, sigma2, n, seed, loadings=load).beta_hat
        for seed in range(draws)
    ])
    cov = (samples.T @ samples) / draws
    expect = (sigma2 / n) * mat.to_dense()
    d = np.diag(expect)
    se = np.sqrt((np.outer(d, d) + expect**2) / draws)
    assert np.all(np.abs(cov - expect) <= 3.5 * se)


def test_sample_full_covariance_monte_carlo():
    # full pipeline: cov(beta_hat) = RFR + sigma2_N R within 3 MC SEs
    m, n, sigma2, draws = 10, 100, 0.5, 10_000
    mat, load = synthgen.gen_banded_correlation(m, 3, 0.5, 2)
    rng = np.random.default_rng(3)
    truth = synthgen.scale_ground_truth(rng.lognormal(0, 0.4, m), n, m, sigma2)
    samples = np.stack([
        synthgen.sample_associations(mat, truth, sigma2, n, seed, loadings=load).beta_hat
        for seed in range(draws)
    ])
    cov = (samples.T @ samples) / draws
    r = mat.to_dense()
    expect = r @ np.diag(truth.f_true) @ r + (sigma2 / n) * r
    d = np.diag(expect)
    se = np.sqrt((np.outer(d, d) + expect**2) / draws)
    assert np.all(np.abs(cov - expect) <= 3.5 * se)


def test_sample_dense_path_matches_moments():
    # without loadings the clipped spectral square root drives the noise
    m, n, sigma2, draws = 8, 50, 0.4, 6000
    mat, _ = synthgen.gen_banded_correlation(m, 2, 0.5, 4)
    truth = synthgen.scale_ground_truth(np.ones(m), n, m, sigma2)
    samples = np.stack([
        synthgen.sample_associations(mat, truth, sigma2, n, seed).beta_hat
        for seed in range(draws)
    ])
    cov = (samples.T @ samples) / draws
    r = mat.to_dense()
    expect = r @ np.diag(truth.f_true) @ r + (sigma2 / n) * r
    d = np.diag(expect)
    se = np.sqrt((np.outer(d, d) + expect**2) / draws)
    assert np.all(np.abs(cov - expect) <= 3.5 * se)


def test_sample_determinism():
    m, n = 20, 100
    mat, load = synthgen.gen_banded_correlation(m, 3, 0.5, 5)
    truth = synthgen.scale_ground_truth(np.ones(m), n, m, 0.5)
    a = synthgen.sample_associations(mat, truth, 0.5, n, 42, loadings=load)
    b = synthgen.sample_associations(mat, truth, 0.5, n, 42, loadings=load)
    assert np.array_equal(a.beta_hat, b.beta_hat)


# ---------------------------------------------------------------------------
# genotype fixtures and the two-form equivalence
# ---------------------------------------------------------------------------

def y_form_delta_nll(sample, f_model):
    """NLL difference (model minus null) in raw (X, y) space."""
    x, y = sample.x_mat, sample.y_vec
    n = sample.sample_size
    sigma = np.einsum("mi,m,mj->ij", x, f_model, x) + sample.sigma2 * np.eye(n)
    quad = float(y @ np.linalg.solve(sigma, y))
    logdet = float(np.linalg.slogdet(sigma)[1])
    null_quad = float(y @ y) / sample.sigma2
    null_logdet = n * np.log(sample.sigma2)
    return 0.5 * (quad + logdet) - 0.5 * (null_quad + null_logdet)


def beta_form_delta_nll(sample, f_model):
    """Same difference from public statistics with pseudo-inverse semantics."""
    r = sample.corr.to_dense()
    n = sample.sample_size
    s2n = sample.sigma2 / n
    a = r @ np.diag(f_model) @ r + s2n * r
    quad, logpdet = dense_nll_oracle(a, sample.beta_hat)
    quad0, logpdet0 = dense_nll_oracle(s2n * r, sample.beta_hat)
    return 0.5 * (quad + logpdet) - 0.5 * (quad0 + logpdet0)


def test_null_beta_generation():
    # beta ~ 0, sigma2 = 1: y is standard normal, beta_hat is pure noise
    m, n = 20, 100
    truth = synthgen.GroundTruth(np.full(m, 1e-30), "constant", 1.0, 1e-30)
    sample = synthgen.gen_genotype_fixture(m, n, 4, truth, 1.0, 0)
    assert abs(sample.y_vec.mean()) < 0.5
    assert sample.y_vec.var() == pytest.approx(1.0, rel=0.5)
    assert np.allclose(sample.beta_hat, (sample.x_mat @ sample.y_vec) / n)


def test_fixture_empirical_diagonal_exact():
    truth = synthgen.GroundTruth(np.full(20, 0.01), "constant", 1.0, 0.01)
    sample = synthgen.gen_genotype_fixture(20, 100, 4, truth, 0.5, 1)
    r = sample.corr.to_dense()
    assert np.allclose(np.diag(r), 1.0, atol=1e-12)
    assert np.allclose(r, sample.x_mat @ sample.x_mat.T / 100, atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_held_in_out_equivalence(seed):
    m, n = 30, 120
    rng = np.random.default_rng(seed)
    truth = synthgen.scale_ground_truth(rng.lognormal(0, 0.5, m), n, m, 0.5)
    sample = synthgen.gen_genotype_fixture(m, n, 5, truth, 0.5, seed + 10)
    f_model = rng.uniform(0.001, 0.05, m)  # evaluation prior, distinct from the generator truth
    assert y_form_delta_nll(sample, f_model) == pytest.approx(
        beta_form_delta_nll(sample, f_model), abs=1e-6
    )
