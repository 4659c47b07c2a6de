"""Hot numeric kernels for banded-matrix work.

Every kernel has a numba ``@njit`` build and a pure-numpy fallback. The
active backend is chosen once at import time: set ``DEEPWAS_NUMBA=0`` to
force the numpy path (any other value, or an importable numba, selects the
jitted path). ``deepwas bench --kernels`` compares the two.

Band layout (shared with the DWLD file format): ``band[m, k] = R[m, m-k]``
for ``k = 0..bandwidth``, zero-padded where ``m - k < 0``. Only the lower
band is stored; the upper triangle is implied by symmetry.
"""

import os

import numpy as np

_env = os.environ.get("DEEPWAS_NUMBA", "").strip().lower()
if _env in ("0", "no", "false", "numpy"):
    HAS_NUMBA = False
else:
    try:
        import numba

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------

def _band_matvec_numpy(band, x):
    m, width = band.shape
    y = band[:, 0] * x
    for k in range(1, width):
        lo = band[k:, k]
        y[k:] += lo * x[:-k]
        y[:-k] += lo * x[k:]
    return y


def _band_sq_matvec_numpy(band, x):
    m, width = band.shape
    sq = band * band
    y = sq[:, 0] * x
    for k in range(1, width):
        lo = sq[k:, k]
        y[k:] += lo * x[:-k]
        y[:-k] += lo * x[k:]
    return y


def _band_block_numpy(band, r0, r1, c0, c1):
    width = band.shape[1]
    rows = np.arange(r0, r1)
    cols = np.arange(c0, c1)
    out = np.zeros((r1 - r0, c1 - c0))
    diff = rows[:, None] - cols[None, :]
    adiff = np.abs(diff)
    inside = adiff < width
    hi = np.maximum(rows[:, None], cols[None, :])
    idx_r = np.where(inside, hi, 0)
    idx_k = np.where(inside, adiff, 0)
    out = np.where(inside, band[idx_r, idx_k], 0.0)
    return out


def _ma_corr_band_numpy(load):
    m, width = load.shape
    band = np.zeros((m, width))
    for k in range(width):
        # row m against row m-k: latents overlap shifted by k
        a = load[k:, : width - k]
        b = load[: m - k, k:]
        band[k:, k] = np.sum(a * b, axis=1)
    return band


def _load_matvec_numpy(load, g):
    m, width = load.shape
    y = np.zeros(m)
    for j in range(width):
        y += load[:, j] * g[j : j + m]
    return y


# ---------------------------------------------------------------------------
# numba builds
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @numba.njit(cache=True)
    def _band_matvec_numba(band, x):
        m, width = band.shape
        y = np.zeros(m)
        for i in range(m):
            acc = band[i, 0] * x[i]
            kmax = min(width - 1, i)
            for k in range(1, kmax + 1):
                acc += band[i, k] * x[i - k]
            kmax = min(width - 1, m - 1 - i)
            for k in range(1, kmax + 1):
                acc += band[i + k, k] * x[i + k]
            y[i] = acc
        return y

    @numba.njit(cache=True)
    def _band_sq_matvec_numba(band, x):
        m, width = band.shape
        y = np.zeros(m)
        for i in range(m):
            acc = band[i, 0] * band[i, 0] * x[i]
            kmax = min(width - 1, i)
            for k in range(1, kmax + 1):
                acc += band[i, k] * band[i, k] * x[i - k]
            kmax = min(width - 1, m - 1 - i)
            for k in range(1, kmax + 1):
                acc += band[i + k, k] * band[i + k, k] * x[i + k]
            y[i] = acc
        return y

    @numba.njit(cache=True)
    def _band_block_numba(band, r0, r1, c0, c1):
        width = band.shape[1]
        out = np.zeros((r1 - r0, c1 - c0))
        for i in range(r0, r1):
            for j in range(c0, c1):
                d = i - j if i >= j else j - i
                if d < width:
                    hi = i if i >= j else j
                    out[i - r0, j - c0] = band[hi, d]
        return out

    @numba.njit(cache=True)
    def _ma_corr_band_numba(load):
        m, width = load.shape
        band = np.zeros((m, width))
        for i in range(m):
            for k in range(min(width - 1, i) + 1):
                acc = 0.0
                for j in range(width - k):
                    acc += load[i, j] * load[i - k, j + k]
                band[i, k] = acc
        return band

    @numba.njit(cache=True)
    def _load_matvec_numba(load, g):
        m, width = load.shape
        y = np.zeros(m)
        for i in range(m):
            acc = 0.0
            for j in range(width):
                acc += load[i, j] * g[i + j]
            y[i] = acc
        return y

    band_matvec = _band_matvec_numba
    band_sq_matvec = _band_sq_matvec_numba
    band_block = _band_block_numba
    ma_corr_band = _ma_corr_band_numba
    load_matvec = _load_matvec_numba
    BACKEND = "numba"
else:
    band_matvec = _band_matvec_numpy
    band_sq_matvec = _band_sq_matvec_numpy
    band_block = _band_block_numpy
    ma_corr_band = _ma_corr_band_numpy
    load_matvec = _load_matvec_numpy
    BACKEND = "numpy"


NUMPY_KERNELS = {
    "band_matvec": _band_matvec_numpy,
    "band_sq_matvec": _band_sq_matvec_numpy,
    "band_block": _band_block_numpy,
    "ma_corr_band": _ma_corr_band_numpy,
    "load_matvec": _load_matvec_numpy,
}

ACTIVE_KERNELS = {
    "band_matvec": band_matvec,
    "band_sq_matvec": band_sq_matvec,
    "band_block": band_block,
    "ma_corr_band": ma_corr_band,
    "load_matvec": load_matvec,
}
