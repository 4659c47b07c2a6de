"""Shared fixtures: small synthetic matrices, stats, and precomputed windows."""

import numpy as np
import pytest

from deepwas import ldcore, synthgen


def make_corpus(m=60, bw=10, n=400, sigma2=0.5, decay=0.5, seed=0, f_scale=None):
    """Small matrix + sampled stats + ground truth, all seeded."""
    mat, load = synthgen.gen_banded_correlation(m, bw, decay, seed)
    rng = np.random.default_rng(seed + 1)
    if f_scale is None:
        f_raw = rng.lognormal(0.0, 1.0, m)
    else:
        f_raw = np.full(m, f_scale)
    truth = synthgen.scale_ground_truth(f_raw, n, m, sigma2)
    stats = synthgen.sample_associations(mat, truth, sigma2, n, seed + 2, loadings=load)
    return mat, load, truth, stats


def make_window(m=60, bw=10, n=400, sigma2=0.5, decay=0.5, seed=0, window_span=None):
    """One precomputed mid-sequence window over a random banded matrix."""
    mat, load, truth, stats = make_corpus(m, bw, n, sigma2, decay, seed)
    span = window_span or (mat.positions[-1] - mat.positions[0]) // 3 + 1
    plan = ldcore.plan_windows(mat.positions, int(span), int(span) // 2)
    i = min(1, plan.num_windows - 1)
    window = ldcore.precompute_window(mat, stats, plan, i)
    return mat, stats, truth, plan, window


@pytest.fixture
def small_window():
    return make_window()


@pytest.fixture
def identity_window():
    """Window over R = I (bandwidth 0)."""
    m = 30
    band = np.ones((m, 1))
    positions = np.arange(m, dtype=np.int64) * 1000
    mat = ldcore.BandedCorrelationMatrix(m, 0, positions, band)
    rng = np.random.default_rng(7)
    stats = ldcore.SummaryStats(rng.normal(size=m) * 0.1, 400, 0.5)
    plan = ldcore.plan_windows(mat.positions, 10_000, 5_000)
    window = ldcore.precompute_window(mat, stats, plan, 1)
    return mat, stats, plan, window
