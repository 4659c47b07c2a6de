"""Stochastic training over window mini-batches with AdamW and warmup.

Each optimizer step accumulates gradients over ``accumulation_steps`` windows
(drawn from a seeded per-epoch shuffle), averages them, and applies a
decoupled-weight-decay Adam update with a linear learning-rate ramp over the
first ``warmup_steps`` steps. Window gradients inside one accumulation group
may be computed concurrently; the reduction order is fixed by window order,
so results are identical at any thread count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, NumericalFailureError, ValidationError
from .iterlinalg import derive_seed
from .ldcore import SummaryStats
from .likelihood import (
    SolverSettings,
    ldsr_window_loss,
    null_nll,
    window_nll,
    window_nll_grad,
)
from .priors import AnnotationTensor, PriorParams, prior_backward, prior_forward

DEFAULT_LEARNING_RATES = {"constant": 1e-3, "glm": 1e-3, "network": 1e-4}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float | None = None  # None -> per-model default
    warmup_steps: int = 100
    epochs: int = 10
    accumulation_steps: int = 12
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0
    method: str = "dense"  # dense | iterative window losses
    cg_rel_tol: float = 1e-6
    cg_max_iter: int = 2000
    num_probes: int = 100
    lanczos_steps: int = 30
    probe_dist: str = "rademacher"
    objective: str = "deepwas"  # deepwas | ldsr
    h2_guess: float = 0.5
    heldout_window_ids: tuple = ()
    threads: int = 1

    def __post_init__(self):
        if self.epochs <= 0 or self.warmup_steps <= 0 or self.accumulation_steps < 1:
            raise ArgumentError("epochs/warmup must be positive, accumulation_steps >= 1")
        if self.learning_rate is not None and self.learning_rate < 0:
            raise ArgumentError("learning_rate must be nonnegative")
        if self.objective not in ("deepwas", "ldsr"):
            raise ArgumentError(f"unknown objective {self.objective!r}")

    def resolve_lr(self, model_kind: str) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DEFAULT_LEARNING_RATES[model_kind]

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            cg_rel_tol=self.cg_rel_tol,
            cg_max_iter=self.cg_max_iter,
            num_probes=self.num_probes,
            lanczos_steps=self.lanczos_steps,
            probe_dist=self.probe_dist,
        )


@dataclass
class TrainState:
    step: int
    params: PriorParams
    m_vec: np.ndarray
    v_vec: np.ndarray
    history: list = field(default_factory=list)  # per-epoch dicts


def warmup_lr(base_lr: float, step: int, warmup_steps: int) -> float:
    """Linear ramp: lr * min(1, step / warmup) at 1-based optimizer steps."""
    return base_lr * min(1.0, step / warmup_steps)


def adamw_step(state: TrainState, grad: np.ndarray, lr: float, cfg: TrainConfig) -> None:
    state.step += 1
    t = state.step
    state.m_vec = cfg.beta1 * state.m_vec + (1.0 - cfg.beta1) * grad
    state.v_vec = cfg.beta2 * state.v_vec + (1.0 - cfg.beta2) * grad * grad
    m_hat = state.m_vec / (1.0 - cfg.beta1**t)
    v_hat = state.v_vec / (1.0 - cfg.beta2**t)
    w = state.params.weights
    w -= lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * w)


def _window_param_grad(cfg, window, annot, params, stats, epoch):
    """(nll, parameter gradient) for one window under the configured objective."""
    flank = window.flank_indices
    f = prior_forward(params, annot, flank)
    if cfg.objective == "deepwas":
        seed = derive_seed(cfg.seed, window.window_index, epoch)
        loss = window_nll_grad(
            window,
            f,
            stats.sigma2_N,
            method=cfg.method,
            settings=cfg.solver_settings(),
            seed=seed,
        )
    else:
        loss = ldsr_window_loss(
            window, f, stats.sigma2, stats.sample_size, stats.num_variants, cfg.h2_guess
        )
    grad = prior_backward(params, annot, flank, loss.grad_f_flank)
    return loss.nll, grad


def train(
    cfg: TrainConfig,
    windows: list,
    annot: AnnotationTensor,
    model: PriorParams,
    stats: SummaryStats,
    log_fn=None,
) -> TrainState:
    """Run the full training loop; returns the final TrainState.

    ``windows`` is the complete precomputed list; windows whose index appears
    in cfg.heldout_window_ids are excluded from gradient steps and evaluated
    once per epoch for the history. Non-finite losses abort with a diagnostic
    naming the window and the parameter norm.
    """
    heldout_ids = set(cfg.heldout_window_ids)
    train_windows = [w for w in windows if w.window_index not in heldout_ids]
    heldout_windows = [w for w in windows if w.window_index in heldout_ids]
    if not train_windows:
        raise ArgumentError("no training windows left after removing held-out ids")
    if len(train_windows) + len(heldout_windows) != len(windows):
        raise ValidationError("held-out ids are not disjoint from training windows")

    params = model.copy()
    state = TrainState(
        step=0,
        params=params,
        m_vec=np.zeros(params.param_count),
        v_vec=np.zeros(params.param_count),
    )
    lr_base = cfg.resolve_lr(params.model_kind)
    order_rng = np.random.default_rng(derive_seed(cfg.seed, 0xD5))
    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        for epoch in range(cfg.epochs):
            perm = order_rng.permutation(len(train_windows))
            epoch_nll = 0.0
            for start in range(0, len(perm), cfg.accumulation_steps):
                group = [train_windows[j] for j in perm[start : start + cfg.accumulation_steps]]
                if pool is not None:
                    results = list(
                        pool.map(
                            lambda w: _window_param_grad(cfg, w, annot, params, stats, epoch),
                            group,
                        )
                    )
                else:
                    results = [_window_param_grad(cfg, w, annot, params, stats, epoch) for w in group]
                grad_sum = np.zeros(params.param_count)
                lr = warmup_lr(lr_base, state.step + 1, cfg.warmup_steps)
                for w, (nll, grad) in zip(group, results):
                    if not math.isfinite(nll):
                        raise NumericalFailureError(
                            f"non-finite loss at window {w.window_index}, "
                            f"|params| = {np.linalg.norm(params.weights):.3e}"
                        )
                    grad_sum += grad
                    epoch_nll += nll
                    if log_fn is not None:
                        log_fn(
                            {
                                "step": state.step + 1,
                                "epoch": epoch,
                                "window": w.window_index,
                                "nll": nll,
                                "lr": lr,
                            }
                        )
                adamw_step(state, grad_sum / len(group), lr, cfg)
            record = {"epoch": epoch, "train_nll": epoch_nll, "lr": lr}
            if heldout_windows:
                record["heldout_percent"] = evaluate_heldout(
                    params, heldout_windows, annot, stats, settings=cfg.solver_settings()
                )
            state.history.append(record)
    finally:
        if pool is not None:
            pool.shutdown()
    return state


def evaluate_heldout(
    model: PriorParams,
    heldout_windows: list,
    annot: AnnotationTensor,
    stats: SummaryStats,
    settings: SolverSettings | None = None,
) -> float:
    """Per-person percent likelihood increase over the null on held-out windows.

    100 * (exp((l_model - l_null) / N) - 1) with l the summed window log
    likelihoods (negated NLLs); evaluation always uses the dense route.
    """
    delta = 0.0
    for w in heldout_windows:
        f = prior_forward(model, annot, w.flank_indices)
        loss = window_nll(w, f, stats.sigma2_N, method="dense")
        delta += null_nll(w, stats.sigma2_N) - loss.nll
    return 100.0 * (math.exp(delta / stats.sample_size) - 1.0)


def rmse_log_f(f_hat: np.ndarray, f_true: np.ndarray) -> float:
    """Root mean squared error between log prior vectors."""
    f_hat = np.asarray(f_hat, dtype=np.float64)
    f_true = np.asarray(f_true, dtype=np.float64)
    if f_hat.shape != f_true.shape:
        raise ArgumentError("rmse_log_f arguments must have equal length")
    if np.any(f_hat <= 0) or np.any(f_true <= 0):
        raise ArgumentError("rmse_log_f arguments must be positive")
    d = np.log(f_hat) - np.log(f_true)
    return float(np.sqrt(np.mean(d * d)))
