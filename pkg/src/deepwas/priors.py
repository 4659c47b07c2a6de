"""Prior models mapping per-variant annotations to positive prior variances.

Every model factors as f_m = (freq_m (1 - freq_m))^alpha * g_theta(C_m):

* constant -- g = exp(w0)
* glm      -- g = exp(sum_d w_d mean_w C_func[d] + sum w' C_pred + c)
* network  -- per-position linear embedding of the d_func x w grid, mean
  pooling over the window, concatenation with the scalar C_pred channels,
  two GELU hidden layers, softplus head (softplus keeps early-training
  gradients bounded where the GLM's exp would not)

alpha is frozen at 0.7 by default with an opt-in trainable mode (appended as
the last weight). Forward and backward are pure numpy with fixed reduction
order, so batched gradients are deterministic.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ArgumentError, FormatError, NumericalFailureError, ValidationError

DWAN_MAGIC = b"DWAN"
DWAN_VERSION = 1

FREQ_CLAMP = 1e-6  # keeps (freq (1-freq))^alpha away from the monomorphic limit
DEFAULT_ALPHA = 0.7


# ---------------------------------------------------------------------------
# Annotation tensor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnnotationTensor:
    """Per-variant feature channels: a d_func x w grid plus scalar channels."""

    func_data: np.ndarray  # (M, d_func, w) float32
    pred_data: np.ndarray  # (M, d_pred) float32
    freq: np.ndarray  # (M,) in [0, 1]
    ld_score: np.ndarray  # (M,)
    maf: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "func_data", np.asarray(self.func_data, dtype=np.float32))
        object.__setattr__(self, "pred_data", np.asarray(self.pred_data, dtype=np.float32))
        object.__setattr__(self, "freq", np.asarray(self.freq, dtype=np.float64))
        object.__setattr__(self, "ld_score", np.asarray(self.ld_score, dtype=np.float64))
        if self.func_data.ndim != 3 or self.pred_data.ndim != 2:
            raise ValidationError("func_data must be (M, d_func, w) and pred_data (M, d_pred)")
        m = self.func_data.shape[0]
        if self.pred_data.shape[0] != m or self.freq.shape != (m,) or self.ld_score.shape != (m,):
            raise ValidationError("annotation arrays disagree on num_variants")
        object.__setattr__(self, "maf", np.minimum(self.freq, 1.0 - self.freq))

    @property
    def num_variants(self) -> int:
        return self.func_data.shape[0]

    @property
    def func_channels(self) -> int:
        return self.func_data.shape[1]

    @property
    def window_len(self) -> int:
        return self.func_data.shape[2]

    @property
    def pred_channels(self) -> int:
        return self.pred_data.shape[1]


def save_annotations(annot: AnnotationTensor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(DWAN_MAGIC)
        fh.write(
            struct.pack(
                "<IQIII",
                DWAN_VERSION,
                annot.num_variants,
                annot.func_channels,
                annot.window_len,
                annot.pred_channels,
            )
        )
        fh.write(annot.func_data.astype("<f4").tobytes())
        fh.write(annot.pred_data.astype("<f4").tobytes())
        fh.write(annot.freq.astype("<f4").tobytes())
        fh.write(annot.ld_score.astype("<f4").tobytes())


def load_annotations(path) -> AnnotationTensor:
    with open(path, "rb") as fh:
        if fh.read(4) != DWAN_MAGIC:
            raise FormatError(f"{path}: bad magic")
        head = fh.read(4 + 8 + 4 + 4 + 4)
        if len(head) < 24:
            raise FormatError(f"{path}: truncated header")
        version, m, d_func, w, d_pred = struct.unpack("<IQIII", head)
        if version != DWAN_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")

        def read_f32(n):
            raw = fh.read(4 * n)
            if len(raw) != 4 * n:
                raise FormatError(f"{path}: truncated payload")
            return np.frombuffer(raw, dtype="<f4")

        func = read_f32(m * d_func * w).reshape(m, d_func, w)
        pred = read_f32(m * d_pred).reshape(m, d_pred)
        freq = read_f32(m).astype(np.float64)
        ld = read_f32(m).astype(np.float64)
    return AnnotationTensor(func, pred, freq, ld)


@dataclass(frozen=True)
class FeatureStats:
    func_mean: np.ndarray
    func_std: np.ndarray
    pred_mean: np.ndarray
    pred_std: np.ndarray


def normalize_features(raw: AnnotationTensor) -> tuple:
    """Standardize every channel by its genome-wide mean and deviation.

    Zero-variance channels are left at 0 with a recorded std of 1. Applying
    the operation twice is a no-op up to float error.
    """
    if raw.num_variants < 2:
        raise ArgumentError("normalize_features needs at least 2 variants")
    # f64 accumulators, f32 transform: the tensor can be hundreds of MB
    func = raw.func_data
    fm = func.mean(axis=(0, 2), dtype=np.float64)
    fs = np.array([func[:, d, :].std(dtype=np.float64) for d in range(func.shape[1])])
    fs = np.where(fs > 0, fs, 1.0)
    func = (func - fm.astype(np.float32)[None, :, None]) / fs.astype(np.float32)[None, :, None]
    pred = raw.pred_data
    pm = pred.mean(axis=0, dtype=np.float64)
    ps = pred.std(axis=0, dtype=np.float64)
    ps = np.where(ps > 0, ps, 1.0)
    pred = ((pred - pm.astype(np.float32)[None, :]) / ps.astype(np.float32)[None, :])
    out = AnnotationTensor(func.astype(np.float32), pred.astype(np.float32), raw.freq, raw.ld_score)
    return out, FeatureStats(fm, fs, pm, ps)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkSpec:
    d_func: int
    d_pred: int
    window_len: int
    hidden: int
    init_scale: float = 1.0

    def __post_init__(self):
        if min(self.d_func, self.window_len, self.hidden) < 1 or self.d_pred < 0:
            raise ArgumentError(f"invalid network spec {self}")


@dataclass
class PriorParams:
    """Flat parameter vector plus the metadata needed to interpret it."""

    model_kind: str  # constant | glm | network
    alpha: float
    weights: np.ndarray
    spec: NetworkSpec | None = None
    alpha_trainable: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).copy()

    @property
    def param_count(self) -> int:
        return self.weights.size

    def effective_alpha(self) -> float:
        return float(self.weights[-1]) if self.alpha_trainable else self.alpha

    def copy(self) -> "PriorParams":
        return PriorParams(self.model_kind, self.alpha, self.weights.copy(), self.spec, self.alpha_trainable)


def network_param_count(spec: NetworkSpec) -> int:
    h, df, dp = spec.hidden, spec.d_func, spec.d_pred
    return df * h + h + (h + dp) * h + h + h * h + h + h + 1


def build_constant(w0: float = 0.0, alpha: float = DEFAULT_ALPHA, alpha_trainable: bool = False) -> PriorParams:
    w = np.array([w0, alpha]) if alpha_trainable else np.array([w0])
    return PriorParams("constant", alpha, w, None, alpha_trainable)


def build_glm(d_func: int, d_pred: int, alpha: float = DEFAULT_ALPHA, alpha_trainable: bool = False) -> PriorParams:
    n = d_func + d_pred + 1
    w = np.zeros(n + 1 if alpha_trainable else n)
    if alpha_trainable:
        w[-1] = alpha
    return PriorParams("glm", alpha, w, NetworkSpec(d_func, d_pred, 1, 1), alpha_trainable)


def build_network(
    spec: NetworkSpec,
    seed: int,
    alpha: float = DEFAULT_ALPHA,
    alpha_trainable: bool = False,
) -> PriorParams:
    """He-style seeded initialization of the small window network."""
    rng = np.random.default_rng(seed)
    h, df, dp = spec.hidden, spec.d_func, spec.d_pred
    parts = [
        rng.standard_normal(df * h) * (spec.init_scale / np.sqrt(df)),
        np.zeros(h),
        rng.standard_normal((h + dp) * h) * (spec.init_scale / np.sqrt(h + dp)),
        np.zeros(h),
        rng.standard_normal(h * h) * (spec.init_scale / np.sqrt(h)),
        np.zeros(h),
        rng.standard_normal(h) * (spec.init_scale / np.sqrt(h)),
        np.zeros(1),
    ]
    w = np.concatenate(parts)
    if alpha_trainable:
        w = np.concatenate([w, [alpha]])
    params = PriorParams("network", alpha, w, spec, alpha_trainable)
    assert params.param_count - (1 if alpha_trainable else 0) == network_param_count(spec)
    return params


def _unpack_network(params: PriorParams):
    s = params.spec
    h, df, dp = s.hidden, s.d_func, s.d_pred
    w = params.weights
    i = 0

    def take(n, shape):
        nonlocal i
        out = w[i : i + n].reshape(shape)
        i += n
        return out

    w_embed = take(df * h, (df, h))
    b_embed = take(h, (h,))
    w1 = take((h + dp) * h, (h + dp, h))
    b1 = take(h, (h,))
    w2 = take(h * h, (h, h))
    b2 = take(h, (h,))
    w_out = take(h, (h,))
    b_out = take(1, (1,))
    return w_embed, b_embed, w1, b1, w2, b2, w_out, b_out


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x):
    phi = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * phi


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _freq_factor(annot: AnnotationTensor, indices, alpha: float):
    fq = np.clip(annot.freq[indices], FREQ_CLAMP, 1.0 - FREQ_CLAMP)
    het = fq * (1.0 - fq)
    return het**alpha, het


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _forward_cache(params: PriorParams, annot: AnnotationTensor, indices):
    """Model output g (before the frequency factor) plus backprop cache."""
    kind = params.model_kind
    if not np.all(np.isfinite(params.weights)):
        raise NumericalFailureError("non-finite parameters")
    if kind == "constant":
        g = np.full(len(indices), np.exp(params.weights[0]))
        return g, {}
    pooled = annot.func_data[indices].mean(axis=2, dtype=np.float64)  # (n, d_func)
    pred = annot.pred_data[indices].astype(np.float64)
    if kind == "glm":
        df, dp = pooled.shape[1], pred.shape[1]
        w = params.weights
        lin = pooled @ w[:df] + pred @ w[df : df + dp] + w[df + dp]
        g = np.exp(lin)
        return g, {"pooled": pooled, "pred": pred}
    if kind == "network":
        w_embed, b_embed, w1, b1, w2, b2, w_out, b_out = _unpack_network(params)
        emb = pooled @ w_embed + b_embed  # mean pooling commutes with the shared embed
        x1 = np.concatenate([emb, pred], axis=1)
        a1 = x1 @ w1 + b1
        h1 = _gelu(a1)
        a2 = h1 @ w2 + b2
        h2 = _gelu(a2)
        out = h2 @ w_out + b_out[0]
        g = _softplus(out)
        return g, {"pooled": pooled, "pred": pred, "x1": x1, "a1": a1, "h1": h1, "a2": a2, "h2": h2, "out": out}
    raise ArgumentError(f"unknown model kind {kind!r}")


def prior_forward(params: PriorParams, annot: AnnotationTensor, indices) -> np.ndarray:
    """Per-variant prior variances f > 0 on the given index set."""
    indices = np.asarray(indices)
    alpha = params.effective_alpha()
    g, _ = _forward_cache(params, annot, indices)
    factor, _ = _freq_factor(annot, indices, alpha)
    f = factor * g
    if not np.all(np.isfinite(f)):
        raise NumericalFailureError("prior_forward produced non-finite values")
    return f


def prior_backward(params: PriorParams, annot: AnnotationTensor, indices, upstream) -> np.ndarray:
    """Gradient of sum_m upstream_m * f_m with respect to the flat weights."""
    indices = np.asarray(indices)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (len(indices),):
        raise ArgumentError("upstream length must match the index set")
    alpha = params.effective_alpha()
    g, cache = _forward_cache(params, annot, indices)
    factor, het = _freq_factor(annot, indices, alpha)
    # d(sum up * factor * g)/d(model params) = backprop of (up * factor) through g
    ug = upstream * factor
    kind = params.model_kind
    grad = np.zeros_like(params.weights)
    if kind == "constant":
        grad[0] = float(ug @ g)  # d exp(w0)/d w0 = g
    elif kind == "glm":
        pooled, pred = cache["pooled"], cache["pred"]
        df, dp = pooled.shape[1], pred.shape[1]
        ugg = ug * g
        grad[:df] = pooled.T @ ugg
        grad[df : df + dp] = pred.T @ ugg
        grad[df + dp] = ugg.sum()
    elif kind == "network":
        w_embed, b_embed, w1, b1, w2, b2, w_out, b_out = _unpack_network(params)
        d_out = ug * _sigmoid(cache["out"])  # softplus'
        g_wout = cache["h2"].T @ d_out
        g_bout = d_out.sum()
        d_h2 = np.outer(d_out, w_out)
        d_a2 = d_h2 * _gelu_grad(cache["a2"])
        g_w2 = cache["h1"].T @ d_a2
        g_b2 = d_a2.sum(axis=0)
        d_h1 = d_a2 @ w2.T
        d_a1 = d_h1 * _gelu_grad(cache["a1"])
        g_w1 = cache["x1"].T @ d_a1
        g_b1 = d_a1.sum(axis=0)
        h = w_embed.shape[1]
        d_emb = (d_a1 @ w1.T)[:, :h]
        g_wembed = cache["pooled"].T @ d_emb
        g_bembed = d_emb.sum(axis=0)
        flat = np.concatenate(
            [g_wembed.ravel(), g_bembed, g_w1.ravel(), g_b1, g_w2.ravel(), g_b2, g_wout, [g_bout]]
        )
        grad[: flat.size] = flat
    else:
        raise ArgumentError(f"unknown model kind {kind!r}")
    if params.alpha_trainable:
        # d f/d alpha = f log(freq (1-freq))
        grad[-1] = float(np.sum(upstream * factor * g * np.log(het)))
    if not np.all(np.isfinite(grad)):
        raise NumericalFailureError("prior_backward produced non-finite gradient")
    return grad


# ---------------------------------------------------------------------------
# Serialization: JSON header + flat f64 vector
# ---------------------------------------------------------------------------

def save_params(params: PriorParams, path) -> None:
    header = {
        "model_kind": params.model_kind,
        "alpha": params.alpha,
        "alpha_trainable": params.alpha_trainable,
        "spec": None
        if params.spec is None
        else {
            "d_func": params.spec.d_func,
            "d_pred": params.spec.d_pred,
            "window_len": params.spec.window_len,
            "hidden": params.spec.hidden,
            "init_scale": params.spec.init_scale,
        },
        "param_count": params.param_count,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(params.weights.astype("<f8").tobytes())


def load_params(path) -> PriorParams:
    with open(path, "rb") as fh:
        raw = fh.read(4)
        if len(raw) != 4:
            raise FormatError(f"{path}: truncated parameter file")
        (hlen,) = struct.unpack("<I", raw)
        header = json.loads(fh.read(hlen).decode())
        weights = np.frombuffer(fh.read(8 * header["param_count"]), dtype="<f8").copy()
    spec = None
    if header["spec"] is not None:
        spec = NetworkSpec(**header["spec"])
    return PriorParams(header["model_kind"], header["alpha"], weights, spec, header["alpha_trainable"])
