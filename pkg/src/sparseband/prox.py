"""Accelerated proximal gradient solver for the sparse regression subproblem.

Solves ``min_B ||XA - XB||_F^2 + lambda * psi(B)`` for the four penalties
used by the basis-learning algorithms.  The loss carries no 1/2 factor, so
the gradient is ``2 X^T (XB - XA)`` and the Lipschitz constant is
``2 ||X||_2^2``; every scaling in this module follows from that convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hsdata import DataMatrix, GroupStructure

__all__ = ["Penalty", "SolverConfig", "ProxResult", "prox", "penalty_value",
           "spectral_norm_sq", "solve_B"]

KINDS = ("l1", "l0", "l21", "group-f1")


@dataclass(frozen=True)
class Penalty:
    """A sparsity penalty: elementwise l1/l0, row-wise l21, or group Frobenius.

    ``weights`` are per-row multipliers for the elementwise and row penalties
    and per-group multipliers for ``group-f1`` (default sqrt of group size).
    """

    kind: str
    groups: GroupStructure | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "group-f1":
            if self.groups is None:
                raise ValueError("group-f1 penalty requires a GroupStructure")
            if self.weights is None:
                object.__setattr__(self, "weights", self.groups.weights)
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (self.groups.num_groups,):
                raise ValueError("group-f1 needs one weight per group")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            object.__setattr__(self, "weights",
                               np.asarray(self.weights, dtype=np.float64))

    @classmethod
    def l1(cls, weights=None) -> "Penalty":
        return cls("l1", weights=weights)

    @classmethod
    def l0(cls, weights=None) -> "Penalty":
        return cls("l0", weights=weights)

    @classmethod
    def l21(cls, weights=None) -> "Penalty":
        return cls("l21", weights=weights)

    @classmethod
    def group_f1(cls, groups: GroupStructure, weights=None) -> "Penalty":
        return cls("group-f1", groups=groups, weights=weights)

    def row_weights(self, p: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(p)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (p,):
            raise ValueError(f"expected {p} row weights, got shape {w.shape}")
        return w


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 500
    rel_tol: float = 1e-7
    lipschitz_power_iters: int = 100
    lipschitz_tol: float = 1e-7

    def __post_init__(self):
        if min(self.max_iters, self.lipschitz_power_iters) < 1:
            raise ValueError("iteration counts must be positive")
        if min(self.rel_tol, self.lipschitz_tol) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class ProxResult:
    B: np.ndarray
    iterations: int
    converged: bool
    mapping_norm: float
    objective: float
    objectives: tuple = ()  # accepted objective after each iteration


def prox(Z: np.ndarray, tau: float, penalty: Penalty) -> np.ndarray:
    """Minimizer of ``(1/2)||Z - B||_F^2 + tau * psi(B)``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    if tau == 0:
        return Z.copy()
    p = Z.shape[0]
    if penalty.kind == "l1":
        thr = tau * penalty.row_weights(p)[:, None]
        return np.sign(Z) * np.maximum(np.abs(Z) - thr, 0.0)
    if penalty.kind == "l0":
        thr = 2.0 * tau * penalty.row_weights(p)[:, None]
        return np.where(Z * Z > thr, Z, 0.0)
    if penalty.kind == "l21":
        w = penalty.row_weights(p)
        norms = np.linalg.norm(Z, axis=1)
        scale = np.zeros(p)
        nz = norms > 0
        scale[nz] = np.maximum(0.0, 1.0 - tau * w[nz] / norms[nz])
        return Z * scale[:, None]
    # group-f1
    out = Z.copy()
    for idx, eta in zip(penalty.groups.group_indices, penalty.weights):
        block_norm = np.linalg.norm(Z[idx])
        if block_norm == 0.0:
            continue
        out[idx] *= max(0.0, 1.0 - tau * eta / block_norm)
    return out


def penalty_value(B: np.ndarray, penalty: Penalty) -> float:
    """psi(B) for the given penalty (used in objective bookkeeping)."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    p = B.shape[0]
    if penalty.kind == "l1":
        return float((penalty.row_weights(p)[:, None] * np.abs(B)).sum())
    if penalty.kind == "l0":
        return float((penalty.row_weights(p)[:, None] * (B != 0.0)).sum())
    if penalty.kind == "l21":
        return float((penalty.row_weights(p) * np.linalg.norm(B, axis=1)).sum())
    return float(sum(eta * np.linalg.norm(B[idx])
                     for idx, eta in zip(penalty.groups.group_indices, penalty.weights)))


def spectral_norm_sq(X: np.ndarray, config: SolverConfig = SolverConfig()) -> float:
    """Squared largest singular value of X, by power iteration on X^T X."""
    X = np.asarray(X, dtype=np.float64)
    if not np.any(X):
        raise ValueError("spectral norm of an all-zero matrix is undefined here")
    G = X.T @ X
    return _gram_spectral_norm(G, config)


def _gram_spectral_norm(G: np.ndarray, config: SolverConfig) -> float:
    p = G.shape[0]
    v = np.ones(p) / np.sqrt(p)
    lam = 0.0
    for _ in range(config.lipschitz_power_iters):
        w = G @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # start vector happened to be orthogonal to the range; perturb
            v = np.random.default_rng(0).standard_normal(p)
            v /= np.linalg.norm(v)
            continue
        v = w / norm
        new_lam = float(v @ (G @ v))
        if abs(new_lam - lam) <= config.lipschitz_tol * max(new_lam, 1e-300):
            return new_lam
        lam = new_lam
    return lam


def solve_B(X, A: np.ndarray, lam: float, penalty: Penalty,
            config: SolverConfig = SolverConfig(), B0: np.ndarray | None = None,
            ) -> ProxResult:
    """FISTA with monotone restart for the regression subproblem.

    ``X`` may be a DataMatrix or a raw centered array; ``A`` must have
    orthonormal columns.  Returns the iterate once the proximal-gradient
    mapping norm falls below ``rel_tol * (1 + ||B||_F)``, or after
    ``max_iters`` iterations (``converged`` reports which).
    """
    Xv = X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if np.isnan(Xv).any() or np.isnan(A).any():
        raise ValueError("NaN in solver inputs")
    k = A.shape[1]
    defect = np.linalg.norm(A.T @ A - np.eye(k))
    if defect > 1e-8 * (1.0 + np.sqrt(k)):
        raise ValueError(f"A must have orthonormal columns (defect {defect:.2e})")
    G = Xv.T @ Xv
    L0 = _gram_spectral_norm(G, config)
    if L0 <= 0:
        raise ValueError("X must be nonzero")
    const = float(np.tensordot(A, G @ A))
    return solve_B_gram(G, G @ A, L0, lam, penalty, config, B0=B0, loss_const=const)


def solve_B_gram(G: np.ndarray, H: np.ndarray, L0: float, lam: float,
                 penalty: Penalty, config: SolverConfig = SolverConfig(),
                 B0: np.ndarray | None = None, loss_const: float = 0.0,
                 ) -> ProxResult:
    """Gram-matrix form of :func:`solve_B`: G = X^T X, H = X^T X A.

    Lets callers amortize the Gram and Lipschitz computations across many
    subproblem solves (alternating fits, per-column solves).  The loss
    ``||X(A-B)||_F^2 = <B,GB> - 2<B,H> + <A,GA>`` needs the constant last
    term only for reporting; pass it as ``loss_const`` for true objectives.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    p, k = H.shape
    # inflate the power-iteration estimate to guard against under-estimation
    step = 1.0 / (2.0 * 1.01 * L0 + 1e-12)
    tau = lam * step

    def grad(B):
        return 2.0 * (G @ B - H)

    def full_obj(B):
        loss = float(np.tensordot(B, G @ B) - 2.0 * np.tensordot(B, H)) + loss_const
        return loss + lam * penalty_value(B, penalty)

    B = np.zeros((p, k)) if B0 is None else np.asarray(B0, dtype=np.float64).copy()
    Y = B.copy()
    t = 1.0
    F_prev = full_obj(B)
    objectives = []
    converged = False
    mapping_norm = np.inf
    it = 0
    for it in range(1, config.max_iters + 1):
        B_new = prox(Y - step * grad(Y), tau, penalty)
        F_new = full_obj(B_new)
        if F_new > F_prev:
            # momentum overshot: restart acceleration with a plain
            # proximal-gradient step from the last accepted iterate
            t = 1.0
            B_new = prox(B - step * grad(B), tau, penalty)
            F_new = full_obj(B_new)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Y = B_new + ((t - 1.0) / t_next) * (B_new - B)
        diff = np.linalg.norm(B_new - B)
        B, t, F_prev = B_new, t_next, F_new
        objectives.append(F_new)
        if diff < config.rel_tol * (1.0 + np.linalg.norm(B)):
            fixed = prox(B - step * grad(B), tau, penalty)
            mapping_norm = float(np.linalg.norm(B - fixed) / step)
            if mapping_norm < config.rel_tol * (1.0 + np.linalg.norm(B)):
                converged = True
                break
    if not converged:
        fixed = prox(B - step * grad(B), tau, penalty)
        mapping_norm = float(np.linalg.norm(B - fixed) / step)
        converged = mapping_norm < config.rel_tol * (1.0 + np.linalg.norm(B))
    return ProxResult(B=B, iterations=it, converged=converged,
                      mapping_norm=mapping_norm, objective=F_prev,
                      objectives=tuple(objectives))
