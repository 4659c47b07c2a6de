"""Banded storage, DWLD IO, clipping, window planning, and precomputation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepwas import ldcore, synthgen
from deepwas.errors import (
    DegenerateBlockError,
    EmptyInputError,
    FormatError,
    ValidationError,
)

from conftest import make_corpus


# ---------------------------------------------------------------------------
# DWLD IO
# ---------------------------------------------------------------------------

def test_load_identity_matrix(tmp_path):
    band = np.ones((3, 1))
    mat = ldcore.BandedCorrelationMatrix(3, 0, np.array([0, 10, 20]), band)
    path = tmp_path / "id.dwld"
    ldcore.save_banded_matrix(mat, path)
    loaded = ldcore.load_banded_matrix(path)
    assert loaded.bandwidth == 0
    assert np.all(loaded.band[:, 0] == 1.0)


def test_roundtrip_bit_identical(tmp_path):
    mat, _ = synthgen.gen_banded_correlation(50, 7, 0.5, 3)
    path = tmp_path / "r.dwld"
    ldcore.save_banded_matrix(mat, path)
    loaded = ldcore.load_banded_matrix(path)
    path2 = tmp_path / "r2.dwld"
    ldcore.save_banded_matrix(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()
    # loading is exact f32 -> f64 widening
    again = ldcore.load_banded_matrix(path2)
    assert np.array_equal(loaded.band, again.band)


def test_bad_diagonal_rejected(tmp_path):
    band = np.ones((3, 1))
    band[1, 0] = 0.9
    with pytest.raises(ValidationError):
        ldcore.BandedCorrelationMatrix(3, 0, np.array([0, 10, 20]), band)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.dwld"
    path.write_bytes(b"NOPE" + b"\0" * 64)
    with pytest.raises(FormatError):
        ldcore.load_banded_matrix(path)


def test_truncated_file_rejected(tmp_path):
    mat, _ = synthgen.gen_banded_correlation(50, 7, 0.5, 3)
    path = tmp_path / "r.dwld"
    ldcore.save_banded_matrix(mat, path)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(FormatError):
        ldcore.load_banded_matrix(path)


def test_nonincreasing_positions_rejected():
    band = np.ones((3, 1))
    with pytest.raises(ValidationError):
        ldcore.BandedCorrelationMatrix(3, 0, np.array([0, 10, 10]), band)


def test_summary_stats_roundtrip(tmp_path):
    stats = ldcore.SummaryStats(np.array([0.1, -0.2, 0.3]), 400, 0.5)
    ldcore.save_summary_stats(
        stats, np.array([0, 5, 9]), np.array([0.2, 0.4, 0.6]),
        tmp_path / "s.tsv", tmp_path / "s.json",
    )
    loaded = ldcore.load_summary_stats(tmp_path / "s.tsv", tmp_path / "s.json")
    assert np.array_equal(loaded.beta_hat, stats.beta_hat)
    assert loaded.sample_size == 400
    assert loaded.sigma2_N == 0.5 / 400


def test_sigma2_bounds():
    with pytest.raises(ValidationError):
        ldcore.SummaryStats(np.ones(3), 100, 1.5)
    with pytest.raises(ValidationError):
        ldcore.SummaryStats(np.ones(3), 100, 0.0)


# ---------------------------------------------------------------------------
# clip_spectrum
# ---------------------------------------------------------------------------

def test_clip_drops_tiny_negative():
    spec = ldcore.clip_spectrum(np.diag([1.0, -1e-12]), rel_tol=1e-8)
    assert spec.rank == 1
    assert spec.logpdet == 0.0


def test_clip_identity():
    spec = ldcore.clip_spectrum(np.eye(3))
    assert spec.rank == 3
    assert spec.logpdet == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(spec.pinv_dense(), np.eye(3), atol=1e-12)


def test_clip_projector_pinv_equals_itself():
    # Q Q' with orthonormal columns: pseudo-inverse equals the projector.
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    proj = q @ q.T
    spec = ldcore.clip_spectrum(proj)
    assert spec.rank == 3
    # oracle: dense eigendecomposition pseudo-inverse
    oracle = np.linalg.pinv(proj)
    assert np.allclose(spec.pinv_dense(), oracle, atol=1e-10)
    assert np.allclose(spec.pinv_dense(), proj, atol=1e-10)


def test_clip_zero_matrix_degenerate():
    with pytest.raises(DegenerateBlockError):
        ldcore.clip_spectrum(np.zeros((4, 4)))


def test_clip_idempotent():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((12, 6))
    block = a @ a.T  # rank 6
    spec = ldcore.clip_spectrum(block)
    recon = (spec.eigvecs * spec.eigvals) @ spec.eigvecs.T
    spec2 = ldcore.clip_spectrum(recon)
    assert abs(spec.logpdet - spec2.logpdet) < 1e-10


# ---------------------------------------------------------------------------
# plan_windows
# ---------------------------------------------------------------------------

def test_plan_uniform_grid():
    positions = np.arange(1000)
    plan = ldcore.plan_windows(positions, 100, 100)
    assert plan.num_windows == 10
    assert all(c1 - c0 == 100 for c0, c1 in plan.windows)
    interior = plan.flanks[1:-1]
    assert all(f1 - f0 == 300 for f0, f1 in interior)


def test_plan_single_window():
    positions = np.array([0, 10, 20])
    plan = ldcore.plan_windows(positions, 1000, 100)
    assert plan.num_windows == 1
    assert plan.windows[0] == (0, 3)
    assert plan.flanks[0] == (0, 3)


def test_plan_nonuniform_flank_membership():
    positions = np.array([0, 10, 500, 980, 1500])
    plan = ldcore.plan_windows(positions, 1000, 500)
    assert plan.windows == ((0, 4), (4, 5))
    # brute-force membership: variant within flank_span of the second tile [1000, 2000)
    f0, f1 = plan.flanks[1]
    members = set(range(f0, f1))
    expect = {i for i, p in enumerate(positions) if 1000 - 500 <= p < 2000 + 500}
    assert members == expect
    assert 3 in members  # the variant at 980


def test_plan_empty_raises():
    with pytest.raises(EmptyInputError):
        ldcore.plan_windows(np.array([], dtype=np.int64), 100, 10)


@settings(deadline=None, max_examples=30)
@given(
    gaps=st.lists(st.integers(1, 2000), min_size=1, max_size=120),
    span=st.integers(1, 5000),
    flank=st.integers(0, 5000),
)
def test_plan_partition_property(gaps, span, flank):
    positions = np.cumsum(np.asarray(gaps, dtype=np.int64))
    plan = ldcore.plan_windows(positions, span, flank)
    covered = []
    for (c0, c1), (f0, f1) in zip(plan.windows, plan.flanks):
        assert f0 <= c0 <= c1 <= f1
        covered.extend(range(c0, c1))
    assert covered == list(range(len(positions)))


# ---------------------------------------------------------------------------
# ld_scores
# ---------------------------------------------------------------------------

def test_ld_scores_identity():
    band = np.ones((5, 1))
    mat = ldcore.BandedCorrelationMatrix(5, 0, np.arange(5, dtype=np.int64), band)
    assert np.allclose(ldcore.ld_scores(mat), 1.0)


def test_ld_scores_2x2():
    r = 0.6
    band = np.array([[1.0, 0.0], [1.0, r]])
    mat = ldcore.BandedCorrelationMatrix(2, 1, np.array([0, 10]), band)
    assert np.allclose(ldcore.ld_scores(mat), 1 + r**2)


def test_ld_scores_dense_oracle():
    mat, _ = synthgen.gen_banded_correlation(50, 8, 0.5, 11)
    dense = mat.to_dense()
    assert np.allclose(ldcore.ld_scores(mat), (dense**2).sum(axis=1), atol=1e-12)


# ---------------------------------------------------------------------------
# precompute_window
# ---------------------------------------------------------------------------

def test_precompute_identity(identity_window):
    _, stats, plan, w = identity_window
    c0, c1 = plan.windows[w.window_index]
    f0, f1 = plan.flanks[w.window_index]
    selector = np.zeros((f1 - f0, c1 - c0))
    for j in range(c0, c1):
        selector[j - f0, j - c0] = 1.0
    assert np.allclose(w.L_mat, selector, atol=1e-12)
    expect_w = np.zeros((f1 - f0, f1 - f0))
    for j in range(c0, c1):
        expect_w[j - f0, j - f0] = 1.0
    assert np.allclose(w.W_mat, expect_w, atol=1e-12)
    assert w.logpdet_R == pytest.approx(0.0, abs=1e-12)


def test_precompute_flank_equals_core_w_is_projected_block():
    # flank == core: W = R_cc R_cc^+ R_cc, the block projected to its retained span
    mat, load, truth, stats = make_corpus(m=40, bw=6, seed=5)
    plan = ldcore.plan_windows(mat.positions, 10**9, 0)
    w = ldcore.precompute_window(mat, stats, plan, 0)
    rcc = mat.to_dense()
    oracle = rcc @ np.linalg.pinv(rcc) @ rcc
    assert np.allclose(w.W_mat, oracle, atol=1e-8)


def test_precompute_w_matches_dense_oracle():
    mat, load, truth, stats = make_corpus(m=60, bw=10, seed=9)
    span = (mat.positions[-1] - mat.positions[0]) // 3 + 1
    plan = ldcore.plan_windows(mat.positions, int(span), int(span) // 2)
    w = ldcore.precompute_window(mat, stats, plan, 1)
    dense = mat.to_dense()
    c0, c1 = plan.windows[1]
    f0, f1 = plan.flanks[1]
    rcc = dense[c0:c1, c0:c1]
    rfc = dense[f0:f1, c0:c1]
    oracle = rfc @ np.linalg.pinv(rcc, rcond=1e-8) @ rfc.T
    assert np.max(np.abs(w.W_mat - oracle)) < 1e-10
    # PSD up to clip tolerance
    assert np.linalg.eigvalsh(w.W_mat).min() >= -1e-8
    assert w.quad_null >= 0


def test_precompute_parallel_deterministic():
    mat, load, truth, stats = make_corpus(m=80, bw=8, seed=2)
    plan = ldcore.plan_windows(mat.positions, 20_000, 8_000)
    seq = ldcore.precompute_all(mat, stats, plan, threads=1)
    par = ldcore.precompute_all(mat, stats, plan, threads=4)
    for a, b in zip(seq, par):
        assert np.array_equal(a.W_mat, b.W_mat)
        assert np.array_equal(a.L_mat, b.L_mat)
        assert a.logpdet_R == b.logpdet_R


def test_precompute_cache_roundtrip(tmp_path):
    mat, load, truth, stats = make_corpus(m=50, bw=6, seed=4)
    plan = ldcore.plan_windows(mat.positions, 15_000, 5_000)
    windows = ldcore.precompute_all(mat, stats, plan)
    ldcore.save_precomputed(windows, plan, tmp_path / "w.npz")
    loaded, plan2 = ldcore.load_precomputed(tmp_path / "w.npz")
    assert plan2.windows == plan.windows and plan2.flanks == plan.flanks
    for a, b in zip(windows, loaded):
        assert np.array_equal(a.W_mat, b.W_mat)
        assert a.quad_null == pytest.approx(b.quad_null, rel=1e-15)
