"""Banded LD matrices: storage, IO, windowing, and per-window precomputation.

The correlation matrix R is held in symmetric-packed lower-band form
(``band[m, k] = R[m, m-k]``) together with strictly increasing base-pair
positions. Windows are planned in base-pair coordinates; for each window the
quantities that do not depend on the prior (pseudo-inverse factors of the
core block, the L and W matrices, log-pseudo-determinant, and the observed
quadratic form) are precomputed once and reused at every training step.
"""

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    ArgumentError,
    DegenerateBlockError,
    EmptyInputError,
    FormatError,
    ValidationError,
)

DWLD_MAGIC = b"DWLD"
DWLD_VERSION = 1

#: Relative eigenvalue clip threshold: eigenvalues <= CLIP_REL_TOL * lambda_max
#: are dropped when forming pseudo-inverses and pseudo-determinants.
CLIP_REL_TOL = 1e-8


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BandedCorrelationMatrix:
    """Symmetric banded correlation matrix with variant positions.

    ``band`` has shape (num_variants, bandwidth + 1) in the lower-band layout
    described in the module docstring. Entries for variant pairs outside the
    band are identically zero. Instances are immutable and safe to share
    across threads.
    """

    num_variants: int
    bandwidth: int
    positions: np.ndarray  # int64, strictly increasing base pairs
    band: np.ndarray  # float64 (num_variants, bandwidth + 1)

    def __post_init__(self):
        object.__setattr__(self, "positions", _readonly(np.asarray(self.positions, dtype=np.int64)))
        object.__setattr__(self, "band", _readonly(np.asarray(self.band, dtype=np.float64)))
        if self.positions.shape != (self.num_variants,):
            raise ValidationError("positions length does not match num_variants")
        if self.band.shape != (self.num_variants, self.bandwidth + 1):
            raise ValidationError("band storage shape does not match (M, bandwidth+1)")
        if self.num_variants > 1 and not np.all(np.diff(self.positions) > 0):
            raise ValidationError("positions must be strictly increasing")
        if np.any(np.abs(self.band[:, 0] - 1.0) > 1e-3):
            worst = float(np.abs(self.band[:, 0] - 1.0).max())
            raise ValidationError(f"diagonal deviates from 1 by {worst:.2e} (> 1e-3)")

    @property
    def band_span(self) -> int:
        """Largest |position difference| that can carry a nonzero correlation."""
        if self.bandwidth == 0 or self.num_variants < 2:
            return 0
        d = self.positions[self.bandwidth:] - self.positions[: -self.bandwidth]
        return int(d.max())

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return _kernels.band_matvec(self.band, np.asarray(x, dtype=np.float64))

    def sq_matvec(self, x: np.ndarray) -> np.ndarray:
        """Multiply by the entrywise square R o R."""
        return _kernels.band_sq_matvec(self.band, np.asarray(x, dtype=np.float64))

    def block(self, r0: int, r1: int, c0: int, c1: int) -> np.ndarray:
        """Dense slice R[r0:r1, c0:c1]."""
        return _kernels.band_block(self.band, r0, r1, c0, c1)

    def to_dense(self) -> np.ndarray:
        return self.block(0, self.num_variants, 0, self.num_variants)


@dataclass(frozen=True)
class SummaryStats:
    """Marginal association statistics and their noise scale."""

    beta_hat: np.ndarray
    sample_size: int
    sigma2: float
    sigma2_N: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "beta_hat", _readonly(np.asarray(self.beta_hat, dtype=np.float64)))
        if not 0.0 < self.sigma2 <= 1.0:
            raise ValidationError(f"sigma2 must lie in (0, 1], got {self.sigma2}")
        if self.sample_size <= 0:
            raise ValidationError("sample_size must be positive")
        object.__setattr__(self, "sigma2_N", self.sigma2 / self.sample_size)

    @property
    def num_variants(self) -> int:
        return len(self.beta_hat)


# ---------------------------------------------------------------------------
# DWLD binary format
# ---------------------------------------------------------------------------

def save_banded_matrix(mat: BandedCorrelationMatrix, path) -> None:
    """Write the DWLD binary format (f32 lower band, u64 positions)."""
    with open(path, "wb") as fh:
        fh.write(DWLD_MAGIC)
        fh.write(struct.pack("<IQQ", DWLD_VERSION, mat.num_variants, mat.bandwidth))
        fh.write(mat.band.astype("<f4").tobytes())
        fh.write(mat.positions.astype("<u8").tobytes())


def load_banded_matrix(path) -> BandedCorrelationMatrix:
    """Read a DWLD file and validate it.

    Raises FormatError for structural problems and ValidationError for data
    that parses but violates matrix invariants.
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head != DWLD_MAGIC:
            raise FormatError(f"{path}: bad magic {head!r}, expected {DWLD_MAGIC!r}")
        raw = fh.read(4 + 8 + 8)
        if len(raw) < 20:
            raise FormatError(f"{path}: truncated header")
        version, m, bw = struct.unpack("<IQQ", raw)
        if version != DWLD_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        n_band = m * (bw + 1)
        band_bytes = fh.read(4 * n_band)
        if len(band_bytes) != 4 * n_band:
            raise FormatError(f"{path}: truncated band data")
        pos_bytes = fh.read(8 * m)
        if len(pos_bytes) != 8 * m:
            raise FormatError(f"{path}: truncated positions")
    band = np.frombuffer(band_bytes, dtype="<f4").reshape(m, bw + 1).astype(np.float64)
    positions = np.frombuffer(pos_bytes, dtype="<u8").astype(np.int64)
    return BandedCorrelationMatrix(int(m), int(bw), positions, band)


def save_summary_stats(stats: SummaryStats, positions, freq, tsv_path, meta_path) -> None:
    """Write the stats TSV (variant_id, position, beta_hat, freq) plus metadata."""
    beta = stats.beta_hat
    freq = np.asarray(freq, dtype=np.float64)
    with open(tsv_path, "w") as fh:
        fh.write("variant_id\tposition\tbeta_hat\tfreq\n")
        for i in range(len(beta)):
            fh.write(f"v{i}\t{int(positions[i])}\t{float(beta[i])!r}\t{float(freq[i])!r}\n")
    with open(meta_path, "w") as fh:
        json.dump({"N": stats.sample_size, "sigma2": stats.sigma2}, fh)
        fh.write("\n")


def load_summary_stats(tsv_path, meta_path) -> SummaryStats:
    with open(meta_path) as fh:
        meta = json.load(fh)
    beta = []
    with open(tsv_path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:4] != ["variant_id", "position", "beta_hat", "freq"]:
            raise FormatError(f"{tsv_path}: unexpected header {header}")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            beta.append(float(parts[2]))
    return SummaryStats(np.array(beta), int(meta["N"]), float(meta["sigma2"]))


# ---------------------------------------------------------------------------
# Spectrum clipping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClippedSpectrum:
    """Retained eigenpairs of a symmetric block after relative clipping."""

    eigvecs: np.ndarray  # (n, rank)
    eigvals: np.ndarray  # (rank,), all > clip threshold
    logpdet: float
    rank: int

    def pinv_apply(self, x: np.ndarray) -> np.ndarray:
        t = self.eigvecs.T @ x
        return self.eigvecs @ (t / self.eigvals[:, None] if t.ndim == 2 else t / self.eigvals)

    def pinv_dense(self) -> np.ndarray:
        return (self.eigvecs / self.eigvals) @ self.eigvecs.T

    def quad_pinv(self, x: np.ndarray) -> float:
        t = self.eigvecs.T @ x
        return float(np.sum(t * t / self.eigvals))


def clip_spectrum(block: np.ndarray, rel_tol: float = CLIP_REL_TOL) -> ClippedSpectrum:
    """Eigendecompose a symmetric block and drop eigenvalues <= rel_tol * max.

    The retained pairs define the pseudo-inverse and log-pseudo-determinant
    used throughout; reconstruction from them is the nearest PSD matrix of
    that rank.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise ArgumentError("clip_spectrum expects a square matrix")
    sym_err = np.abs(block - block.T).max() if block.size else 0.0
    if sym_err > 1e-6 * max(1.0, np.abs(block).max()):
        raise ArgumentError(f"block is not symmetric (max asymmetry {sym_err:.2e})")
    eigvals, eigvecs = np.linalg.eigh(0.5 * (block + block.T))
    lam_max = eigvals[-1] if eigvals.size else 0.0
    if lam_max <= 0.0:
        raise DegenerateBlockError("all eigenvalues clipped (block has no positive spectrum)")
    keep = eigvals > rel_tol * lam_max
    if not np.any(keep):
        raise DegenerateBlockError("all eigenvalues clipped")
    vals = eigvals[keep]
    return ClippedSpectrum(
        eigvecs=np.ascontiguousarray(eigvecs[:, keep]),
        eigvals=vals,
        logpdet=float(np.log(vals).sum()),
        rank=int(keep.sum()),
    )


# ---------------------------------------------------------------------------
# Window planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowPlan:
    """Core/flank index ranges tiling the variant axis.

    Cores partition [0, M); each flank is the contiguous index range of
    variants within ``flank_span`` base pairs of the core's tile range.
    """

    windows: tuple  # ((core_start, core_end), ...) half-open index ranges
    flanks: tuple  # ((flank_start, flank_end), ...)
    window_span: int
    flank_span: int

    @property
    def num_windows(self) -> int:
        return len(self.windows)


def plan_windows(positions, window_span: int, flank_span: int) -> WindowPlan:
    """Tile the coordinate range into window_span chunks and attach flanks.

    Variants are assigned to tiles by ``(pos - pos[0]) // window_span``;
    empty tiles are skipped, so the trailing partial chunk is simply part of
    the last window. The flank of a window holds every variant within
    flank_span base pairs of the window's tile range, truncated at the data
    boundaries.
    """
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size == 0:
        raise EmptyInputError("plan_windows: empty positions")
    if window_span <= 0 or flank_span < 0:
        raise ArgumentError("spans must be positive")
    if positions.size > 1 and not np.all(np.diff(positions) > 0):
        raise ValidationError("positions must be strictly increasing")

    base = positions[0]
    tile = (positions - base) // window_span
    # consecutive runs of equal tile id
    boundaries = np.flatnonzero(np.diff(tile)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [positions.size]))

    windows, flanks = [], []
    for s, e in zip(starts, ends):
        t = tile[s]
        lo = base + t * window_span - flank_span
        hi = base + (t + 1) * window_span + flank_span  # exclusive
        f0 = int(np.searchsorted(positions, lo, side="left"))
        f1 = int(np.searchsorted(positions, hi, side="left"))
        windows.append((int(s), int(e)))
        flanks.append((f0, f1))
    return WindowPlan(tuple(windows), tuple(flanks), int(window_span), int(flank_span))


# ---------------------------------------------------------------------------
# Per-window precomputation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrecomputedWindow:
    """Prior-independent quantities for one window (see module docstring).

    ``L_mat`` is R[flank, core] R_core^+ and ``W_mat`` is
    R[flank, core] R_core^+ R[core, flank]; both are computed from the
    clipped spectrum of the core block. ``g_vec = L_mat @ beta_core`` and
    ``quad_null = beta_core' R_core^+ beta_core`` are cached because every
    likelihood evaluation starts from them.
    """

    window_index: int
    core_start: int
    core_end: int
    flank_start: int
    flank_end: int
    pinv_factors: ClippedSpectrum
    L_mat: np.ndarray  # (flank, core)
    W_mat: np.ndarray  # (flank, flank), symmetric PSD
    diag_W: np.ndarray
    logpdet_R: float
    core_rank: int
    beta_core: np.ndarray
    quad_null: float
    g_vec: np.ndarray  # L_mat @ beta_core
    r_core_flank: np.ndarray  # dense R[core, flank] band slice
    ld_core: np.ndarray  # LD scores of core variants

    def __post_init__(self):
        for name in ("L_mat", "W_mat", "diag_W", "beta_core", "g_vec", "r_core_flank", "ld_core"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def core_size(self) -> int:
        return self.core_end - self.core_start

    @property
    def flank_size(self) -> int:
        return self.flank_end - self.flank_start

    def w_spectrum(self) -> tuple:
        """Eigendecomposition of W_mat, computed lazily and cached.

        Theta-independent, so one factorization serves every training step;
        the iterative gradient path uses it to build its control variate.
        A benign race can recompute it concurrently, both writers store the
        same value.
        """
        cached = getattr(self, "_w_spectrum", None)
        if cached is None:
            eigvals, eigvecs = np.linalg.eigh(self.W_mat)
            cached = (np.maximum(eigvals, 0.0), eigvecs)
            object.__setattr__(self, "_w_spectrum", cached)
        return cached

    @property
    def core_indices(self) -> np.ndarray:
        return np.arange(self.core_start, self.core_end)

    @property
    def flank_indices(self) -> np.ndarray:
        return np.arange(self.flank_start, self.flank_end)

    def dense_a_matrix(self, f_flank: np.ndarray, sigma2_N: float) -> np.ndarray:
        """Reconstruct A = R_cf F R_fc + sigma2_N R_cc densely (test/bench use)."""
        rcf = self.r_core_flank
        rcc = rcf[:, self.core_start - self.flank_start : self.core_end - self.flank_start]
        return (rcf * np.asarray(f_flank)) @ rcf.T + sigma2_N * rcc


def ld_scores(mat: BandedCorrelationMatrix) -> np.ndarray:
    """Per-variant sum of squared correlations over the stored band."""
    return mat.sq_matvec(np.ones(mat.num_variants))


def precompute_window(
    mat: BandedCorrelationMatrix,
    stats: SummaryStats,
    plan: WindowPlan,
    i: int,
    rel_tol: float = CLIP_REL_TOL,
    ld: np.ndarray | None = None,
) -> PrecomputedWindow:
    """Build the PrecomputedWindow for window ``i`` of ``plan``."""
    if not 0 <= i < plan.num_windows:
        raise ArgumentError(f"window index {i} out of range [0, {plan.num_windows})")
    if stats.num_variants != mat.num_variants:
        raise ValidationError("summary stats length does not match matrix")
    c0, c1 = plan.windows[i]
    f0, f1 = plan.flanks[i]
    rcc = mat.block(c0, c1, c0, c1)
    rcf = mat.block(c0, c1, f0, f1)
    spec = clip_spectrum(rcc, rel_tol)
    # S = R_fc V; then L = S diag(1/lam) V', W = S diag(1/lam) S'
    s_mat = rcf.T @ spec.eigvecs
    l_mat = (s_mat / spec.eigvals) @ spec.eigvecs.T
    w_mat = (s_mat / spec.eigvals) @ s_mat.T
    w_mat = 0.5 * (w_mat + w_mat.T)
    beta_core = stats.beta_hat[c0:c1]
    quad_null = spec.quad_pinv(beta_core)
    g_vec = l_mat @ beta_core
    if ld is None:
        ld_core = mat.sq_matvec(np.ones(mat.num_variants))[c0:c1]
    else:
        ld_core = np.asarray(ld)[c0:c1]
    return PrecomputedWindow(
        window_index=i,
        core_start=c0,
        core_end=c1,
        flank_start=f0,
        flank_end=f1,
        pinv_factors=spec,
        L_mat=l_mat,
        W_mat=w_mat,
        diag_W=np.diag(w_mat).copy(),
        logpdet_R=spec.logpdet,
        core_rank=spec.rank,
        beta_core=beta_core.copy(),
        quad_null=quad_null,
        g_vec=g_vec,
        r_core_flank=rcf,
        ld_core=ld_core,
    )


def precompute_all(
    mat: BandedCorrelationMatrix,
    stats: SummaryStats,
    plan: WindowPlan,
    rel_tol: float = CLIP_REL_TOL,
    threads: int = 1,
) -> list:
    """Precompute every window, optionally in parallel.

    Output order (and content) is independent of the thread count: each
    window is pure given its inputs and results are collected by index.
    """
    ld = ld_scores(mat)
    if threads <= 1:
        return [precompute_window(mat, stats, plan, i, rel_tol, ld) for i in range(plan.num_windows)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        futs = [ex.submit(precompute_window, mat, stats, plan, i, rel_tol, ld) for i in range(plan.num_windows)]
        return [f.result() for f in futs]


# ---------------------------------------------------------------------------
# Precompute cache IO (npz)
# ---------------------------------------------------------------------------

def save_precomputed(windows, plan: WindowPlan, path) -> None:
    arrays = {
        "plan_windows": np.asarray(plan.windows, dtype=np.int64).reshape(-1, 2),
        "plan_flanks": np.asarray(plan.flanks, dtype=np.int64).reshape(-1, 2),
        "plan_spans": np.asarray([plan.window_span, plan.flank_span], dtype=np.int64),
    }
    for w in windows:
        p = f"w{w.window_index:05d}_"
        arrays[p + "eigvecs"] = w.pinv_factors.eigvecs
        arrays[p + "eigvals"] = w.pinv_factors.eigvals
        arrays[p + "L"] = w.L_mat
        arrays[p + "W"] = w.W_mat
        arrays[p + "beta"] = w.beta_core
        arrays[p + "rcf"] = w.r_core_flank
        arrays[p + "ld"] = w.ld_core
        arrays[p + "meta"] = np.asarray(
            [w.core_start, w.core_end, w.flank_start, w.flank_end], dtype=np.int64
        )
    np.savez_compressed(path, **arrays)


def load_precomputed(path):
    """Load (windows, plan) written by save_precomputed."""
    with np.load(path) as z:
        pw = z["plan_windows"]
        pf = z["plan_flanks"]
        spans = z["plan_spans"]
        plan = WindowPlan(
            tuple((int(a), int(b)) for a, b in pw),
            tuple((int(a), int(b)) for a, b in pf),
            int(spans[0]),
            int(spans[1]),
        )
        out = []
        for i in range(len(pw)):
            p = f"w{i:05d}_"
            eigvecs = z[p + "eigvecs"]
            eigvals = z[p + "eigvals"]
            spec = ClippedSpectrum(eigvecs, eigvals, float(np.log(eigvals).sum()), len(eigvals))
            meta = z[p + "meta"]
            l_mat = z[p + "L"]
            w_mat = z[p + "W"]
            beta = z[p + "beta"]
            out.append(
                PrecomputedWindow(
                    window_index=i,
                    core_start=int(meta[0]),
                    core_end=int(meta[1]),
                    flank_start=int(meta[2]),
                    flank_end=int(meta[3]),
                    pinv_factors=spec,
                    L_mat=l_mat,
                    W_mat=w_mat,
                    diag_W=np.diag(w_mat).copy(),
                    logpdet_R=spec.logpdet,
                    core_rank=spec.rank,
                    beta_core=beta,
                    quad_null=spec.quad_pinv(beta),
                    g_vec=l_mat @ beta,
                    r_core_flank=z[p + "rcf"],
                    ld_core=z[p + "ld"],
                )
            )
    return out, plan
