"""ADMM solver for the relaxed masked decomposition and the additive baseline.

The masked model explains each sample of ``x`` by exactly one component::

    x = (1 - w) * (P1 @ a1) + w * (P2 @ a2),    w in {0, 1}^N

The relaxed problem replaces the binary mask by w in [0, 1]^N and
||w||_0 by ||w||_1, and adds an anisotropic TV penalty on w.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .bases import Subspace
from .errors import (
    ConvergenceError,
    DivergenceError,
    InvalidArgumentError,
    SingularSystemError,
)
from .operators import (
    DiffOperator,
    diff_for_shape,
    project_box01,
    project_top_k,
    soft_threshold,
)

log = logging.getLogger(__name__)

INITS = ("zeros", "half", "gaussian", "uniform01", "p1_residual")
BINARIZE_MODES = ("at_end", "per_step")


@dataclass(frozen=True)
class AdmmConfig:
    lambda1: float = 0.3
    lambda2: float = 10.0
    rho1: float = 1.0
    rho2: float = 1.0
    k1: int = 10
    k2: int = 10
    t_max: int = 20
    tol: float = 1e-6
    init: str = "half"
    seed: int | None = None
    binarize_mode: str = "at_end"
    bin_threshold: float = 0.5
    linsys_tol: float = 1e-10
    gram_eps: float = 1e-8

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidArgumentError("lambda1 and lambda2 must be >= 0")
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise InvalidArgumentError("rho1 and rho2 must be > 0")
        if self.k1 < 1 or self.k2 < 1:
            raise InvalidArgumentError("k1 and k2 must be >= 1")
        if self.t_max < 1:
            raise InvalidArgumentError("t_max must be >= 1")
        if self.tol <= 0 or self.linsys_tol <= 0:
            raise InvalidArgumentError("tolerances must be > 0")
        if self.gram_eps < 0:
            raise InvalidArgumentError("gram_eps must be >= 0")
        if self.init not in INITS:
            raise InvalidArgumentError(f"init must be one of {INITS}")
        if self.init in ("gaussian", "uniform01") and self.seed is None:
            raise InvalidArgumentError(f"init {self.init!r} needs a seed")
        if self.binarize_mode not in BINARIZE_MODES:
            raise InvalidArgumentError(f"binarize_mode must be one of {BINARIZE_MODES}")
        if not 0 < self.bin_threshold < 1:
            raise InvalidArgumentError("bin_threshold must lie in (0, 1)")

    def with_(self, **kw):
        return replace(self, **kw)


# Settings used for 64x64 image blocks (dct2 k1=40 / hadamard k2=8).
IMAGE_BLOCK_CONFIG = AdmmConfig(lambda1=10.0, lambda2=0.2, k1=40, k2=8, t_max=10)
# Settings for the 256-sample sinusoid/Hadamard toy problem.
TOY_1D_CONFIG = AdmmConfig(lambda1=0.3, lambda2=10.0, rho1=10.0, rho2=10.0, k1=10, k2=10, t_max=20)


@dataclass
class Decomposition:
    w_cont: np.ndarray
    w_bin: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    comp1: np.ndarray
    comp2: np.ndarray
    loss_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    initial_loss: float = float("nan")
    objective: float = float("nan")

    @property
    def reconstruction(self):
        return (1 - self.w_bin) * self.comp1 + self.w_bin * self.comp2


def _mat(p):
    return p.matrix if isinstance(p, Subspace) else np.asarray(p, dtype=float)


def _dmat(d):
    return d.matrix if isinstance(d, DiffOperator) else sp.csr_matrix(d)


def loss(x, p1, p2, alpha1, alpha2, w, lambda1, lambda2, d) -> float:
    """Relaxed objective 0.5||x - (1-w)P1a1 - wP2a2||^2 + l1||w||_1 + l2||Dw||_1."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    m1, m2, dm = _mat(p1), _mat(p2), _dmat(d)
    a1 = np.asarray(alpha1, dtype=float).ravel()
    a2 = np.asarray(alpha2, dtype=float).ravel()
    n = x.size
    if (
        w.shape != (n,)
        or m1.shape != (n, a1.size)
        or m2.shape != (n, a2.size)
        or dm.shape[1] != n
    ):
        raise InvalidArgumentError("loss: inconsistent dimensions")
    r = x - (1 - w) * (m1 @ a1) - w * (m2 @ a2)
    return float(0.5 * r @ r + lambda1 * np.abs(w).sum() + lambda2 * np.abs(dm @ w).sum())


def _solve_gram(g, rhs, component):
    """Solve a small SPD system, refusing when it is numerically singular."""
    evals = np.linalg.eigvalsh(g)
    scale = max(float(evals[-1]), 1.0) if evals.size else 1.0
    if evals.size == 0 or evals[0] <= 1e-13 * scale:
        raise SingularSystemError(component)
    return np.linalg.solve(g, rhs)


def alpha_least_squares(x, p_self, p_other, alpha_other, w, which, gram_eps=0.0):
    """Unconstrained coefficient update (before the top-K projection)."""
    if which not in (1, 2):
        raise InvalidArgumentError("which must be 1 or 2")
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    ms, mo = _mat(p_self), _mat(p_other)
    ws = w if which == 2 else 1.0 - w
    wo = 1.0 - ws
    target = x - wo * (mo @ np.asarray(alpha_other, dtype=float))
    weighted = ms * ws[:, None]
    g = weighted.T @ weighted + gram_eps * np.eye(ms.shape[1])
    return _solve_gram(g, weighted.T @ target, which)


def update_alpha(x, p_self, p_other, alpha_other, w, which, k, gram_eps=1e-8):
    """Least-squares coefficients of one component, then keep the top ``k``.

    For ``which=2`` the row weights are ``w``; for ``which=1`` they are
    ``1 - w`` and the other component enters with weights ``w``.
    """
    a = alpha_least_squares(x, p_self, p_other, alpha_other, w, which, gram_eps)
    return project_top_k(a, k)


def w_system(x, p1a1, p2a2, y, z, u1, u2, rho1, rho2, d):
    """Sparse SPD matrix and right-hand side of the unconstrained w-step.

    Returns ``(M, rhs)`` with ``M = C'C + rho2 D'D + rho1 I`` and
    ``rhs = C'h + rho1 y + rho2 D'z - u1 - D'u2``.
    """
    c = np.asarray(p2a2, dtype=float) - np.asarray(p1a1, dtype=float)
    h = np.asarray(x, dtype=float) - np.asarray(p1a1, dtype=float)
    return diagonal_tv_system(c * c, c * h, y, z, u1, u2, rho1, rho2, d)


def diagonal_tv_system(cc, ch, y, z, u1, u2, rho1, rho2, d):
    """``M = diag(cc) + rho1 I + rho2 D'D``, ``rhs = ch + rho1 y + D'(rho2 z - u2) - u1``."""
    dm = _dmat(d)
    m = sp.diags(np.asarray(cc, dtype=float) + rho1) + rho2 * (dm.T @ dm)
    rhs = (
        np.asarray(ch, dtype=float)
        + rho1 * np.asarray(y)
        + dm.T @ (rho2 * np.asarray(z) - np.asarray(u2))
        - np.asarray(u1)
    )
    return sp.csr_matrix(m), rhs


def solve_spd(m, rhs, tol=1e-10, x0=None, maxiter=None):
    """Jacobi-preconditioned CG to relative residual ``tol``."""
    n = rhs.size
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        return np.zeros(n)
    inv_diag = 1.0 / m.diagonal()
    precond = LinearOperator((n, n), matvec=lambda v: inv_diag * v, dtype=float)
    maxiter = maxiter or max(10 * n, 1000)
    sol, info = cg(m, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=precond)
    res = np.linalg.norm(m @ sol - rhs) / bnorm
    if res > tol:
        # CG's recursive residual can drift from the true one; polish once.
        sol, info = cg(m, rhs, x0=sol, rtol=tol * 0.5, atol=0.0, maxiter=maxiter, M=precond)
        res = np.linalg.norm(m @ sol - rhs) / bnorm
        if res > tol:
            raise ConvergenceError(res, tol)
    return sol


def update_w(x, p1a1, p2a2, y, z, u1, u2, rho1, rho2, d, linsys_tol=1e-10, x0=None):
    if rho1 <= 0 or rho2 <= 0:
        raise InvalidArgumentError("rho1 and rho2 must be > 0")
    m, rhs = w_system(x, p1a1, p2a2, y, z, u1, u2, rho1, rho2, d)
    return project_box01(solve_spd(m, rhs, linsys_tol, x0=x0))


def binarize(w_cont, threshold=0.5):
    """1 where ``w_cont >= threshold``, else 0 (as floats)."""
    if not 0 < threshold < 1:
        raise InvalidArgumentError("threshold must lie in (0, 1)")
    return (np.asarray(w_cont) >= threshold).astype(float)


def initial_mask(x, p1, cfg: AdmmConfig):
    """Starting w for each of the supported initialization schemes."""
    n = np.asarray(x).size
    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "zeros":
        return np.zeros(n)
    if cfg.init == "half":
        return np.full(n, 0.5)
    if cfg.init == "gaussian":
        return project_box01(rng.normal(0.5, np.sqrt(0.1), n))
    if cfg.init == "uniform01":
        return rng.uniform(0.0, 1.0, n)
    # p1_residual: least-squares fit on P1 alone, large errors start as foreground
    m1 = _mat(p1)
    coef, *_ = np.linalg.lstsq(m1, x, rcond=None)
    err = np.abs(x - m1 @ coef)
    peak = err.max()
    if peak <= 1e-12 * max(1.0, np.abs(x).max()):
        return np.zeros(n)
    return (err >= cfg.bin_threshold * peak).astype(float)


def _check_inputs(x, p1, p2):
    x = np.asarray(x, dtype=float).ravel()
    m1, m2 = _mat(p1), _mat(p2)
    if m1.shape[0] != x.size or m2.shape[0] != x.size:
        raise InvalidArgumentError(
            f"signal length {x.size} does not match bases {m1.shape}, {m2.shape}"
        )
    return x, m1, m2


def _operator_for(x, p1, d):
    if d is not None:
        return d
    shape = p1.signal_shape if isinstance(p1, Subspace) else (np.asarray(x).size,)
    return diff_for_shape(shape)


def _relative_change(cur, prev):
    if prev == 0:
        return 0.0 if cur == 0 else np.inf
    return abs(cur - prev) / abs(prev)


def admm_solve(x, p1, p2, cfg: AdmmConfig = TOY_1D_CONFIG, d=None) -> Decomposition:
    """Run the alternating updates until the relative loss change drops below ``cfg.tol``.

    Update order per iteration: alpha1, alpha2, w, y, z, u1, u2.  The
    stopping loss is the relaxed objective (not the augmented Lagrangian),
    compared against the previous iteration; the first iteration is compared
    against the loss at initialization but never stops the loop.

    After the loop w is thresholded at ``cfg.bin_threshold`` and both
    coefficient vectors are refit once under the binary mask, so that the
    returned components explain ``x`` under the returned mask.
    """
    x, m1, m2 = _check_inputs(x, p1, p2)
    d = _operator_for(x, p1, d)
    dm = _dmat(d)
    n = x.size

    w = initial_mask(x, m1, cfg)
    a1 = np.zeros(m1.shape[1])
    a2 = np.zeros(m2.shape[1])
    y = w.copy()
    z = dm @ w
    u1 = np.zeros(n)
    u2 = np.zeros(dm.shape[0])

    prev = loss(x, m1, m2, a1, a2, w, cfg.lambda1, cfg.lambda2, dm)
    initial = prev
    trace = []
    converged = False
    for j in range(1, cfg.t_max + 1):
        a1 = update_alpha(x, m1, m2, a2, w, 1, cfg.k1, cfg.gram_eps)
        a2 = update_alpha(x, m2, m1, a1, w, 2, cfg.k2, cfg.gram_eps)
        p1a1, p2a2 = m1 @ a1, m2 @ a2
        w = update_w(x, p1a1, p2a2, y, z, u1, u2, cfg.rho1, cfg.rho2, dm, cfg.linsys_tol, x0=w)
        if cfg.binarize_mode == "per_step":
            w = binarize(w, cfg.bin_threshold)
        dw = dm @ w
        y = soft_threshold(w + u1 / cfg.rho1, cfg.lambda1 / cfg.rho1)
        z = soft_threshold(dw + u2 / cfg.rho2, cfg.lambda2 / cfg.rho2)
        u1 = u1 + cfg.rho1 * (w - y)
        u2 = u2 + cfg.rho2 * (dw - z)

        cur = loss(x, m1, m2, a1, a2, w, cfg.lambda1, cfg.lambda2, dm)
        if not np.isfinite(cur):
            raise DivergenceError(f"non-finite loss at iteration {j}")
        trace.append(cur)
        if j > 1 and _relative_change(cur, prev) <= cfg.tol:
            converged = True
            break
        prev = cur

    w_cont = w
    w_bin = binarize(w_cont, cfg.bin_threshold)
    a1 = update_alpha(x, m1, m2, a2, w_bin, 1, cfg.k1, cfg.gram_eps)
    a2 = update_alpha(x, m2, m1, a1, w_bin, 2, cfg.k2, cfg.gram_eps)
    objective = loss(x, m1, m2, a1, a2, w_bin, cfg.lambda1, cfg.lambda2, dm)
    log.debug("admm_solve: %d iterations, converged=%s, objective=%.6g", len(trace), converged, objective)
    return Decomposition(
        w_cont=w_cont,
        w_bin=w_bin,
        alpha1=a1,
        alpha2=a2,
        comp1=m1 @ a1,
        comp2=m2 @ a2,
        loss_trace=trace,
        iterations=len(trace),
        converged=converged,
        initial_loss=initial,
        objective=objective,
    )


def additive_objective(x, p1, p2, alpha1, alpha2, lambda1, lambda2, d):
    m1, m2, dm = _mat(p1), _mat(p2), _dmat(d)
    c2 = m2 @ alpha2
    r = np.asarray(x) - m1 @ alpha1 - c2
    return float(0.5 * r @ r + lambda1 * np.abs(c2).sum() + lambda2 * np.abs(dm @ c2).sum())


def additive_mask(comp2, threshold=0.5):
    """Threshold |comp2| at ``threshold * max|comp2|``; a vanishing component gives no mask."""
    mag = np.abs(np.asarray(comp2, dtype=float))
    peak = mag.max() if mag.size else 0.0
    if peak <= 1e-8:
        return np.zeros_like(mag)
    return (mag >= threshold * peak).astype(float)


def additive_solve(x, p1, p2, cfg: AdmmConfig = TOY_1D_CONFIG, d=None) -> Decomposition:
    """Additive baseline: x ~ P1 a1 + P2 a2 with l1 and TV penalties on P2 a2.

    Same splitting pattern as :func:`admm_solve` with y = P2 a2 and
    z = D P2 a2.  ``w_cont`` holds |P2 a2| / max|P2 a2|.
    """
    x, m1, m2 = _check_inputs(x, p1, p2)
    d = _operator_for(x, p1, d)
    dm = _dmat(d)
    n = x.size
    r1, r2 = cfg.rho1, cfg.rho2

    a1 = np.zeros(m1.shape[1])
    a2 = np.zeros(m2.shape[1])
    y = np.zeros(n)
    z = np.zeros(dm.shape[0])
    u1 = np.zeros(n)
    u2 = np.zeros(dm.shape[0])
    dp2 = np.asarray(dm @ m2)
    g1 = m1.T @ m1 + cfg.gram_eps * np.eye(m1.shape[1])
    g2 = (1 + r1) * (m2.T @ m2) + r2 * (dp2.T @ dp2) + cfg.gram_eps * np.eye(m2.shape[1])

    prev = additive_objective(x, m1, m2, a1, a2, cfg.lambda1, cfg.lambda2, dm)
    initial = prev
    trace = []
    converged = False
    for j in range(1, cfg.t_max + 1):
        a1 = project_top_k(_solve_gram(g1, m1.T @ (x - m2 @ a2), 1), cfg.k1)
        rhs = m2.T @ (x - m1 @ a1 + r1 * y - u1) + dp2.T @ (r2 * z - u2)
        a2 = project_top_k(_solve_gram(g2, rhs, 2), cfg.k2)
        c2 = m2 @ a2
        dc2 = dm @ c2
        y = soft_threshold(c2 + u1 / r1, cfg.lambda1 / r1)
        z = soft_threshold(dc2 + u2 / r2, cfg.lambda2 / r2)
        u1 = u1 + r1 * (c2 - y)
        u2 = u2 + r2 * (dc2 - z)

        cur = additive_objective(x, m1, m2, a1, a2, cfg.lambda1, cfg.lambda2, dm)
        if not np.isfinite(cur):
            raise DivergenceError(f"non-finite loss at iteration {j}")
        trace.append(cur)
        if j > 1 and _relative_change(cur, prev) <= cfg.tol:
            converged = True
            break
        prev = cur

    c1, c2 = m1 @ a1, m2 @ a2
    mag = np.abs(c2)
    peak = mag.max()
    w_cont = mag / peak if peak > 0 else np.zeros(n)
    w_bin = additive_mask(c2, cfg.bin_threshold)
    return Decomposition(
        w_cont=w_cont,
        w_bin=w_bin,
        alpha1=a1,
        alpha2=a2,
        comp1=c1,
        comp2=c2,
        loss_trace=trace,
        iterations=len(trace),
        converged=converged,
        initial_loss=initial,
        objective=trace[-1],
    )
