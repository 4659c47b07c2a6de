"""Semi-synthetic data generation.

Banded PSD correlation matrices come from a moving-average latent process:
variant m loads on latents m..m+bandwidth with geometrically decaying,
jittered weights, each loading row normalized so the diagonal is exactly 1.
Associations are sampled from beta ~ N(0, f), beta_hat = R beta + eps with
eps ~ N(0, sigma2_N R); when the loading matrix is available eps = s Lambda g
is exact and O(M * bandwidth), otherwise the clipped spectral square root of
dense R is used. Everything is deterministic given its seed.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ArgumentError, ValidationError
from .ldcore import BandedCorrelationMatrix, SummaryStats, clip_spectrum, ld_scores
from .priors import AnnotationTensor, NetworkSpec, build_network, prior_forward

DENSE_SAMPLING_LIMIT = 4096


@dataclass(frozen=True)
class GroundTruth:
    """Scaled per-variant prior variances used to simulate associations."""

    f_true: np.ndarray
    kind: str  # network | threshold | constant
    scale_applied: float
    target_mean: float


@dataclass(frozen=True)
class TestGenotypeSample:
    """Tiny raw (X, y) fixture with its derived public statistics."""

    x_mat: np.ndarray  # (M, N), rows centered/standardized
    y_vec: np.ndarray  # (N,)
    beta_true: np.ndarray
    corr: BandedCorrelationMatrix  # empirical R = X X' / N, full band
    beta_hat: np.ndarray  # X y / N
    sigma2: float
    sample_size: int


def gen_loadings(num_variants: int, bandwidth: int, decay: float, seed: int) -> np.ndarray:
    """Unit-norm banded loading rows; R = loadings gram matrix."""
    rng = np.random.default_rng(seed)
    width = bandwidth + 1
    base = decay ** np.arange(width) if decay > 0 else np.concatenate(([1.0], np.zeros(width - 1)))
    jitter = rng.uniform(0.5, 1.5, size=(num_variants, width))
    load = base[None, :] * jitter
    load /= np.linalg.norm(load, axis=1, keepdims=True)
    return load


def gen_positions(num_variants: int, seed: int, min_gap: int = 500, max_gap: int = 1500) -> np.ndarray:
    rng = np.random.default_rng(seed)
    gaps = rng.integers(min_gap, max_gap + 1, size=num_variants)
    pos = np.cumsum(gaps)
    return pos - pos[0]


def gen_banded_correlation(
    num_variants: int,
    bandwidth: int,
    decay: float,
    seed: int,
    min_gap: int = 500,
    max_gap: int = 1500,
) -> tuple:
    """Banded correlation matrix, PSD by construction, plus its loadings."""
    if bandwidth >= num_variants:
        raise ArgumentError("bandwidth must be smaller than num_variants")
    load = gen_loadings(num_variants, bandwidth, decay, seed)
    band = _kernels.ma_corr_band(load)
    band[:, 0] = 1.0  # unit rows: exact up to float error anyway
    positions = gen_positions(num_variants, seed + 1, min_gap, max_gap)
    mat = BandedCorrelationMatrix(num_variants, bandwidth, positions, band)
    return mat, load


def scale_ground_truth(f_raw: np.ndarray, sample_size: int, num_variants: int, sigma2: float,
                       kind: str = "network") -> GroundTruth:
    """Rescale raw positive prior values to mean (N/M)(1 - sigma2)."""
    f_raw = np.asarray(f_raw, dtype=np.float64)
    if np.any(f_raw <= 0):
        raise ArgumentError("f_raw must be strictly positive")
    target = (sample_size / num_variants) * (1.0 - sigma2)
    scale = target / float(f_raw.mean())
    return GroundTruth(f_true=f_raw * scale, kind=kind, scale_applied=scale, target_mean=target)


def network_ground_truth(annot: AnnotationTensor, seed: int, hidden: int = 16,
                         init_scale: float = 3.0, log_std: float | None = 1.0) -> np.ndarray:
    """Raw (unscaled) truth values from a freshly seeded window network.

    init_scale controls how nonlinear the random function is; log_std, when
    set, rescales log f to a fixed spread so enrichment contrast is stable
    across seeds (a monotone transform that preserves the function's shape).
    """
    spec = NetworkSpec(
        d_func=annot.func_channels,
        d_pred=annot.pred_channels,
        window_len=annot.window_len,
        hidden=hidden,
        init_scale=init_scale,
    )
    params = build_network(spec, seed)
    f_raw = prior_forward(params, annot, np.arange(annot.num_variants))
    if log_std is not None:
        logf = np.log(f_raw)
        spread = logf.std()
        if spread > 0:
            f_raw = np.exp((logf - logf.mean()) * (log_std / spread))
    return f_raw


THRESHOLD_CHANNELS = (0, 2, 7, 12)
THRESHOLD_WEIGHTS = (0.7, 0.5, 1.37, 0.5)
THRESHOLD_CUTS = (0.0, 0.0, -20.0, -10.0)
THRESHOLD_POSITIONS = (113, 143)  # inclusive window positions entering the sums


def threshold_ground_truth(
    annot: AnnotationTensor,
    num_variants: int,
    channels=THRESHOLD_CHANNELS,
    weights=THRESHOLD_WEIGHTS,
    cuts=THRESHOLD_CUTS,
    positions=THRESHOLD_POSITIONS,
) -> np.ndarray:
    """Sparse indicator-sum ground truth, returned as pre-scaling log f.

    Channels index the concatenation [C_func, C_pred broadcast over the
    window]; each active indicator (position-window sum above its cut) adds
    its weight to log f, minus log M.
    """
    lo, hi = positions
    if annot.window_len < hi + 1:
        raise ArgumentError(
            f"threshold truth needs window_len >= {hi + 1}, got {annot.window_len}"
        )
    n_concat = annot.func_channels + annot.pred_channels
    if n_concat < max(channels) + 1:
        raise ArgumentError(
            f"threshold truth needs >= {max(channels) + 1} concatenated channels, got {n_concat}"
        )
    width = hi - lo + 1
    logf = np.full(annot.num_variants, -np.log(float(num_variants)))
    for d, v, e in zip(channels, weights, cuts):
        if d < annot.func_channels:
            sums = annot.func_data[:, d, lo : hi + 1].sum(axis=1, dtype=np.float64)
        else:
            sums = annot.pred_data[:, d - annot.func_channels].astype(np.float64) * width
        logf += v * (sums > e)
    return logf


def sample_associations(
    mat: BandedCorrelationMatrix,
    truth: GroundTruth,
    sigma2: float,
    sample_size: int,
    seed: int,
    loadings: np.ndarray | None = None,
) -> SummaryStats:
    """Draw beta ~ N(0, f) and beta_hat = R beta + eps, eps ~ N(0, sigma2_N R)."""
    m = mat.num_variants
    if truth.f_true.shape != (m,):
        raise ValidationError("ground truth is not aligned to the matrix")
    rng = np.random.default_rng(seed)
    sigma2_n = sigma2 / sample_size
    beta = rng.normal(size=m) * np.sqrt(truth.f_true)
    signal = mat.matvec(beta)
    if loadings is not None:
        g = rng.normal(size=m + mat.bandwidth)
        eps = np.sqrt(sigma2_n) * _kernels.load_matvec(loadings, g)
    else:
        if m > DENSE_SAMPLING_LIMIT:
            raise ArgumentError(
                f"dense spectral sampling is limited to {DENSE_SAMPLING_LIMIT} variants; pass loadings"
            )
        spec = clip_spectrum(mat.to_dense())
        g = rng.normal(size=spec.rank)
        eps = np.sqrt(sigma2_n) * (spec.eigvecs @ (np.sqrt(spec.eigvals) * g))
    return SummaryStats(signal + eps, sample_size, sigma2)


def gen_annotations(
    num_variants: int,
    d_func: int,
    window_len: int,
    d_pred: int,
    seed: int,
    ld: np.ndarray | None = None,
) -> AnnotationTensor:
    """Standard-normal feature channels plus a uniform frequency column."""
    rng = np.random.default_rng(seed)
    func = rng.standard_normal((num_variants, d_func, window_len)).astype(np.float32)
    pred = rng.standard_normal((num_variants, d_pred)).astype(np.float32)
    freq = rng.uniform(0.01, 0.99, size=num_variants)
    if ld is None:
        ld = np.ones(num_variants)
    return AnnotationTensor(func, pred, freq, ld)


def gen_genotype_fixture(
    num_variants: int,
    sample_size: int,
    bandwidth: int,
    truth: GroundTruth,
    sigma2: float,
    seed: int,
) -> TestGenotypeSample:
    """Small raw (X, y) sample whose empirical R / beta_hat feed both
    likelihood forms; the companion matrix stores the full empirical band so
    R = X X' / N holds exactly."""
    if num_variants > 200 or sample_size > 2000:
        raise ArgumentError("genotype fixtures are desk-scale only (M <= 200)")
    rng = np.random.default_rng(seed)
    load = gen_loadings(num_variants, bandwidth, 0.5, seed)
    latents = rng.standard_normal((num_variants + bandwidth, sample_size))
    x = np.stack([_kernels.load_matvec(load, latents[:, i]) for i in range(sample_size)], axis=1)
    x -= x.mean(axis=1, keepdims=True)
    x /= x.std(axis=1, keepdims=True)
    beta = rng.normal(size=num_variants) * np.sqrt(truth.f_true[:num_variants])
    y = x.T @ beta + rng.normal(size=sample_size) * np.sqrt(sigma2)
    r_dense = (x @ x.T) / sample_size
    band = np.zeros((num_variants, num_variants))
    for k in range(num_variants):
        band[k:, k] = np.diag(r_dense, -k)
    positions = np.arange(num_variants, dtype=np.int64) * 1000
    corr = BandedCorrelationMatrix(num_variants, num_variants - 1, positions, band)
    beta_hat = (x @ y) / sample_size
    return TestGenotypeSample(
        x_mat=x,
        y_vec=y,
        beta_true=beta,
        corr=corr,
        beta_hat=beta_hat,
        sigma2=sigma2,
        sample_size=sample_size,
    )


def make_ground_truth(
    kind: str,
    annot: AnnotationTensor,
    sample_size: int,
    num_variants: int,
    sigma2: float,
    seed: int,
    hidden: int = 16,
    init_scale: float = 3.0,
    log_std: float | None = 1.0,
) -> GroundTruth:
    """Compose the raw truth of the requested kind with mean rescaling."""
    if kind == "network":
        f_raw = network_ground_truth(annot, seed, hidden=hidden, init_scale=init_scale,
                                     log_std=log_std)
    elif kind == "threshold":
        f_raw = np.exp(threshold_ground_truth(annot, num_variants))
    elif kind == "constant":
        f_raw = np.ones(annot.num_variants)
    else:
        raise ArgumentError(f"unknown truth kind {kind!r}")
    return scale_ground_truth(f_raw, sample_size, num_variants, sigma2, kind=kind)


def attach_ld_scores(annot: AnnotationTensor, mat: BandedCorrelationMatrix) -> AnnotationTensor:
    return AnnotationTensor(annot.func_data, annot.pred_data, annot.freq, ld_scores(mat))
