"""Matrix-free iterative solvers and estimators, plus dense oracles.

Conjugate gradients, Lanczos/SLQ log-determinants, Hutchinson probe pairs,
and a randomized Nystrom preconditioner, all working against a minimal
LinearOperator contract. Every stochastic routine takes an integer seed and
is pure given (operator, seed); counter-based seed derivation keeps results
reproducible under any parallel schedule.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, NumericalFailureError
from .ldcore import CLIP_REL_TOL, clip_spectrum

LANCZOS_BREAKDOWN_TOL = 1e-14


@dataclass(frozen=True)
class LinearOperator:
    """A square operator known only through its matvec."""

    dim: int
    matvec: callable
    is_spd: bool = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matvec(x)

    @staticmethod
    def from_dense(a: np.ndarray, is_spd: bool = False) -> "LinearOperator":
        a = np.asarray(a, dtype=np.float64)
        return LinearOperator(dim=a.shape[0], matvec=lambda v: a @ v, is_spd=is_spd)

    @staticmethod
    def identity(dim: int) -> "LinearOperator":
        return LinearOperator(dim=dim, matvec=lambda v: v.copy(), is_spd=True)


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    final_residual: float
    converged: bool


def derive_seed(base_seed: int, *parts: int) -> int:
    """Counter-based seed: a stable 64-bit stream id from (base, parts).

    Used so per-window / per-epoch randomness is reproducible regardless of
    scheduling order.
    """
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(p) for p in parts))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def probe_matrix(rng: np.random.Generator, dim: int, num: int, dist: str) -> np.ndarray:
    """num x dim probe vectors, Rademacher (default) or Gaussian."""
    if dist == "rademacher":
        return rng.integers(0, 2, size=(num, dim)).astype(np.float64) * 2.0 - 1.0
    if dist == "gaussian":
        return rng.standard_normal((num, dim))
    raise ArgumentError(f"unknown probe distribution {dist!r}")


# ---------------------------------------------------------------------------
# Conjugate gradients
# ---------------------------------------------------------------------------

def cg_solve(
    op: LinearOperator,
    rhs: np.ndarray,
    rel_tol: float = 1e-6,
    max_iter: int = 1000,
    precond: LinearOperator | None = None,
) -> tuple:
    """Preconditioned CG for SPD operators.

    Stops when ||op(x) - rhs|| <= rel_tol * ||rhs||. Exceeding max_iter
    returns converged=False rather than raising; NaNs in the iterates raise
    NumericalFailureError.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (op.dim,):
        raise ArgumentError(f"rhs length {rhs.shape} does not match operator dim {op.dim}")
    rhs_norm = float(np.linalg.norm(rhs))
    x = np.zeros_like(rhs)
    if rhs_norm == 0.0:
        return x, SolverReport(0, 0.0, True)
    r = rhs.copy()
    z = precond(r) if precond is not None else r.copy()
    p = z.copy()
    rz = float(r @ z)
    res = rhs_norm
    it = 0
    for it in range(1, max_iter + 1):
        ap = op(p)
        pap = float(p @ ap)
        if not np.isfinite(pap):
            raise NumericalFailureError("CG: non-finite curvature", SolverReport(it, res / rhs_norm, False))
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = float(np.linalg.norm(r))
        if not np.isfinite(res):
            raise NumericalFailureError("CG: non-finite residual", SolverReport(it, np.inf, False))
        if res <= rel_tol * rhs_norm:
            return x, SolverReport(it, res / rhs_norm, True)
        z = precond(r) if precond is not None else r.copy()
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolverReport(max_iter, res / rhs_norm, False)


# ---------------------------------------------------------------------------
# Lanczos and stochastic Lanczos quadrature
# ---------------------------------------------------------------------------

def lanczos_tridiag(op: LinearOperator, v0: np.ndarray, steps: int) -> tuple:
    """Plain Lanczos (no reorthogonalization) returning (alphas, betas).

    Truncates at breakdown (beta < 1e-14); desk-scale matrices do not need
    reorthogonalization for percent-level quadrature accuracy.
    """
    n = op.dim
    steps = min(steps, n)
    alphas = np.empty(steps)
    betas = np.empty(max(steps - 1, 0))
    q_prev = np.zeros(n)
    q = v0 / np.linalg.norm(v0)
    beta_prev = 0.0
    k = 0
    for j in range(steps):
        w = op(q) - beta_prev * q_prev
        a = float(q @ w)
        w -= a * q
        alphas[j] = a
        k = j + 1
        if j == steps - 1:
            break
        b = float(np.linalg.norm(w))
        if b < LANCZOS_BREAKDOWN_TOL:
            break
        betas[j] = b
        q_prev, q = q, w / b
        beta_prev = b
    return alphas[:k], betas[: k - 1]


def _quadrature_logdet(alphas: np.ndarray, betas: np.ndarray) -> tuple:
    """Gauss quadrature of log over the Lanczos tridiagonal; (value, min ritz)."""
    if len(alphas) == 1:
        theta = alphas
        w0 = np.ones(1)
    else:
        t = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        theta, u = np.linalg.eigh(t)
        w0 = u[0, :] ** 2
    theta = np.maximum(theta, np.finfo(float).tiny)
    return float(np.sum(w0 * np.log(theta))), float(theta.min())


def slq_logdet(
    op: LinearOperator,
    num_probes: int = 100,
    lanczos_steps: int = 30,
    seed: int = 0,
    dist: str = "rademacher",
    return_info: bool = False,
):
    """Stochastic Lanczos quadrature estimate of log|op| for SPD op.

    Unbiased in expectation over probes (up to quadrature truncation);
    deterministic given the seed. With return_info=True also returns the
    smallest Ritz value seen across probes.
    """
    rng = np.random.default_rng(seed)
    probes = probe_matrix(rng, op.dim, num_probes, dist)
    total = 0.0
    min_ritz = np.inf
    for v in probes:
        alphas, betas = lanczos_tridiag(op, v, lanczos_steps)
        val, ritz_lo = _quadrature_logdet(alphas, betas)
        total += op.dim * val
        min_ritz = min(min_ritz, ritz_lo)
    est = total / num_probes
    if return_info:
        return est, min_ritz
    return est


def min_ritz_value(op: LinearOperator, steps: int = 30, seed: int = 0, num_probes: int = 4) -> float:
    """Smallest Ritz value over a few seeded Lanczos runs (spectrum floor probe)."""
    rng = np.random.default_rng(seed)
    lo = np.inf
    for _ in range(num_probes):
        v = rng.standard_normal(op.dim)
        alphas, betas = lanczos_tridiag(op, v, steps)
        _, ritz_lo = _quadrature_logdet(alphas, betas)
        lo = min(lo, ritz_lo)
    return lo


# ---------------------------------------------------------------------------
# Hutchinson probe pairs
# ---------------------------------------------------------------------------

def hutchinson_probe_pairs(
    op: LinearOperator,
    solve_tol: float = 1e-6,
    num_probes: int = 100,
    seed: int = 0,
    dist: str = "rademacher",
    max_iter: int = 1000,
) -> list:
    """Draw probes u and solve op x = u, returning (u, op^-1 u) pairs.

    Downstream contractions give E[(op^-1 u)' (dOp) u] = trace(op^-1 dOp).
    CG failures propagate as NumericalFailureError.
    """
    rng = np.random.default_rng(seed)
    probes = probe_matrix(rng, op.dim, num_probes, dist)
    pairs = []
    for u in probes:
        x, report = cg_solve(op, u, rel_tol=solve_tol, max_iter=max_iter)
        if not report.converged:
            raise NumericalFailureError("hutchinson probe solve did not converge", report)
        pairs.append((u, x))
    return pairs


# ---------------------------------------------------------------------------
# Randomized Nystrom preconditioner
# ---------------------------------------------------------------------------

def nystrom_preconditioner(
    op: LinearOperator,
    rank: int,
    shift: float,
    seed: int = 0,
    power_iters: int = 1,
) -> LinearOperator:
    """Preconditioner from a rank-``rank`` randomized Nystrom approximation.

    Builds U, lam_hat with op ~ U diag(lam_hat) U' and applies

        P^-1 = (lam_r + shift) U (diag(lam_hat) + shift)^-1 U' + (I - U U')

    so the uncaptured subspace is left untouched and the captured one is
    rescaled to the level of the smallest retained eigenvalue. power_iters
    subspace iterations sharpen the capture at the cost of extra matvecs.
    """
    if rank >= op.dim:
        raise ArgumentError(f"nystrom rank {rank} must be < dim {op.dim}")
    if rank < 1:
        raise ArgumentError("nystrom rank must be >= 1")
    rng = np.random.default_rng(seed)
    om = rng.standard_normal((op.dim, rank))
    om, _ = np.linalg.qr(om)
    for _ in range(power_iters):
        om = np.column_stack([op(om[:, i]) for i in range(rank)])
        om, _ = np.linalg.qr(om)
    y = np.column_stack([op(om[:, i]) for i in range(rank)])
    nu = np.sqrt(op.dim) * np.finfo(float).eps * np.linalg.norm(y)
    y_nu = y + nu * om
    gram = om.T @ y_nu
    try:
        c = np.linalg.cholesky(0.5 * (gram + gram.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"nystrom sketch Gram factorization failed: {exc}") from exc
    b1 = np.linalg.solve(c, y_nu.T).T
    u, s, _ = np.linalg.svd(b1, full_matrices=False)
    lam_hat = np.maximum(s**2 - nu, 0.0)
    lam_r = lam_hat[-1]
    scale = lam_r + shift

    def apply(v):
        t = u.T @ v
        return scale * (u @ (t / (lam_hat + shift))) + (v - u @ t)

    return LinearOperator(dim=op.dim, matvec=apply, is_spd=True)


# ---------------------------------------------------------------------------
# Dense oracle
# ---------------------------------------------------------------------------

def dense_nll_oracle(a: np.ndarray, b: np.ndarray, rel_tol: float = CLIP_REL_TOL) -> tuple:
    """(b' A^+ b, log-pseudo-det A) by full eigendecomposition.

    Uses the same clipping rule as clip_spectrum, so it is the reference
    implementation for pseudo-inverse likelihood terms.
    """
    spec = clip_spectrum(np.asarray(a, dtype=np.float64), rel_tol)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.shape[0],):
        raise ArgumentError("rhs length does not match matrix")
    return spec.quad_pinv(b), spec.logpdet
