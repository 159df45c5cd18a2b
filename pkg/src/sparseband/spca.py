"""PCA and the alternating solvers for jointly (group-)sparse bases.

Four algorithms share one alternating skeleton and differ only in the
penalty applied to the regression basis B:

* ``spca``   - elementwise l1 on each basis vector (l0 available as an
  exact hard-threshold variant behind a config flag);
* ``gspca``  - group l2 penalty applied to each basis vector independently
  (realized as per-column subproblem solves sharing one A update);
* ``jspca``  - l21 on the rows of B (whole rows vanish together);
* ``jgspca`` - l1 of group Frobenius norms (whole groups of rows vanish).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .hsdata import DataMatrix, GroupStructure
from .prox import Penalty, SolverConfig, penalty_value, solve_B_gram, _gram_spectral_norm

__all__ = [
    "ALGORITHMS",
    "PcaDecomposition",
    "SparseBasis",
    "AlternationConfig",
    "pca",
    "procrustes",
    "fit",
    "lambda_max",
    "group_cardinality",
    "active_groups",
    "penalty_for",
    "save_basis",
    "load_basis",
]

ALGORITHMS = ("spca", "gspca", "jspca", "jgspca")


@dataclass(frozen=True)
class PcaDecomposition:
    """Full SVD ``X = U diag(S) V[:, :m]^T`` with V square orthonormal."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.S) > 0) or np.any(self.S < 0):
            raise ValueError("singular values must be non-negative and non-increasing")

    def reconstruct(self) -> np.ndarray:
        m = self.S.size
        return self.U @ (self.S[:, None] * self.V[:, :m].T)

    def explained_variance(self, k: int) -> float:
        total = float((self.S ** 2).sum())
        return float((self.S[:k] ** 2).sum() / total) if total > 0 else 0.0


@dataclass(frozen=True)
class SparseBasis:
    """The learned pair (A, B) with fit bookkeeping."""

    A: np.ndarray
    B: np.ndarray
    algorithm: str
    lam: float
    iterations_used: int
    converged: bool
    group_sizes: list = field(default_factory=list)
    history: list = field(default_factory=list)

    def __post_init__(self):
        k = self.A.shape[1]
        defect = np.linalg.norm(self.A.T @ self.A - np.eye(k))
        if defect > 1e-6:
            raise ValueError(f"A is not orthonormal (defect {defect:.2e})")

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class AlternationConfig:
    outer_max: int = 100
    epsilon: float = 1e-6
    inner: SolverConfig = field(default_factory=SolverConfig)
    k: int | None = None          # defaults to p
    spca_exact_l0: bool = False   # hard-threshold mode for spca

    def __post_init__(self):
        if self.outer_max < 1 or self.epsilon <= 0:
            raise ValueError("outer_max and epsilon must be positive")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be positive")


def pca(X) -> PcaDecomposition:
    """Full SVD of a centered matrix."""
    Xv = X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)
    if np.isnan(Xv).any():
        raise ValueError("NaN in input matrix")
    U, s, Vt = np.linalg.svd(Xv, full_matrices=True)
    m = s.size
    return PcaDecomposition(U=U[:, :m], S=s, V=Vt.T)


def procrustes(M: np.ndarray) -> np.ndarray:
    """Column-orthonormal maximizer of Tr(M^T A), via the SVD of M."""
    M = np.asarray(M, dtype=np.float64)
    if not np.any(M):
        raise ValueError("procrustes of a zero matrix is undefined")
    U, _, Vt = np.linalg.svd(M, full_matrices=False)
    return U @ Vt


def penalty_for(algorithm: str, groups: GroupStructure | None,
                exact_l0: bool = False) -> Penalty:
    """The penalty each algorithm applies to B."""
    if algorithm == "spca":
        return Penalty.l0() if exact_l0 else Penalty.l1()
    if algorithm == "gspca" or algorithm == "jgspca":
        if groups is None:
            raise ValueError(f"{algorithm} requires grouped data")
        return Penalty.group_f1(groups)
    if algorithm == "jspca":
        return Penalty.l21()
    raise ValueError(f"unknown algorithm {algorithm!r}")


def fit(X: DataMatrix, algorithm: str, lam: float,
        config: AlternationConfig = AlternationConfig()) -> SparseBasis:
    """Alternate the B subproblem and the procrustes A update to convergence.

    A starts at the first k right singular vectors, B at zero; the loop stops
    when ``||B - Bhat||_F`` falls below ``config.epsilon`` or after
    ``config.outer_max`` rounds.  ``history`` records, per outer round, the
    joint objective ``||XA - XB||_F^2 + lam * psi(B)`` and the orthonormality
    defect of A, both measured after the round's updates.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    Xv = X.values
    p = Xv.shape[1]
    k = config.k if config.k is not None else p
    if k > p:
        raise ValueError("k cannot exceed the number of columns")
    penalty = penalty_for(algorithm, X.groups, exact_l0=config.spca_exact_l0)

    decomp = pca(X)
    A = decomp.V[:, :k].copy()
    B = np.zeros((p, k))
    G = Xv.T @ Xv
    L0 = _gram_spectral_norm(G, config.inner)
    if L0 <= 0:
        raise ValueError("cannot fit an all-zero matrix")

    history = []
    converged = False
    outer = 0
    for outer in range(1, config.outer_max + 1):
        H = G @ A
        if algorithm == "gspca":
            # per-column solves: group sparsity acts within each basis
            # vector, so the subproblem separates column by column
            Bhat = np.empty_like(B)
            its = 0
            for j in range(k):
                res = solve_B_gram(G, H[:, j:j + 1], L0, lam, penalty,
                                   config.inner, B0=B[:, j:j + 1])
                Bhat[:, j] = res.B[:, 0]
                its = max(its, res.iterations)
        else:
            res = solve_B_gram(G, H, L0, lam, penalty, config.inner, B0=B)
            Bhat = res.B

        if not np.any(np.abs(Bhat) > 0):
            # fully shrunk basis: A is unidentifiable, keep the current one
            B = Bhat
            converged = True
            history.append(_round_stats(G, A, B, lam, penalty, algorithm))
            break

        Ahat = procrustes(G @ Bhat)
        delta = np.linalg.norm(B - Bhat)
        B, A = Bhat, Ahat
        history.append(_round_stats(G, A, B, lam, penalty, algorithm))
        if delta < config.epsilon:
            converged = True
            break

    return SparseBasis(A=A, B=B, algorithm=algorithm, lam=float(lam),
                       iterations_used=outer, converged=converged,
                       group_sizes=X.groups.sizes(), history=history)


def _round_stats(G, A, B, lam, penalty, algorithm):
    D = A - B
    loss = float(np.tensordot(D, G @ D))
    k = A.shape[1]
    defect = float(np.linalg.norm(A.T @ A - np.eye(k)))
    if algorithm == "gspca":
        # gspca penalizes each basis vector's group norms independently
        psi = sum(penalty_value(B[:, j:j + 1], penalty) for j in range(k))
    else:
        psi = penalty_value(B, penalty)
    return {"objective": loss + lam * psi, "ortho_defect": defect}


def lambda_max(X, A0: np.ndarray, penalty: Penalty) -> float:
    """Smallest lambda at which B = 0 satisfies first-order optimality.

    For the convex penalties this is the exact subgradient bound at zero;
    for the non-convex l0 mode it is the (slightly conservative) value above
    which the solver's first hard-threshold step keeps nothing.
    """
    Xv = X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)
    A0 = np.asarray(A0, dtype=np.float64)
    M = Xv.T @ (Xv @ A0)
    p = M.shape[0]
    if penalty.kind == "l1":
        return float(2.0 * (np.abs(M) / penalty.row_weights(p)[:, None]).max())
    if penalty.kind == "l21":
        return float(2.0 * (np.linalg.norm(M, axis=1) / penalty.row_weights(p)).max())
    if penalty.kind == "group-f1":
        vals = [2.0 * np.linalg.norm(M[idx]) / eta
                for idx, eta in zip(penalty.groups.group_indices, penalty.weights)]
        return float(max(vals))
    # l0: kill threshold of the first proximal step from zero
    L0 = _gram_spectral_norm(Xv.T @ Xv, SolverConfig())
    if L0 <= 0:
        return 0.0
    return float(((M * M) / penalty.row_weights(p)[:, None]).max() / L0)


def group_cardinality(B: np.ndarray, groups: GroupStructure,
                      zero_tol: float = 1e-9) -> int:
    """Number of groups whose block of rows of B is (relatively) nonzero."""
    return len(active_groups(B, groups, zero_tol))


def active_groups(B: np.ndarray, groups: GroupStructure,
                  zero_tol: float = 1e-9) -> list:
    B = np.asarray(B, dtype=np.float64)
    thr = zero_tol * (1.0 + np.linalg.norm(B))
    return [i for i, idx in enumerate(groups.group_indices)
            if np.linalg.norm(B[idx]) > thr]


# ---------------------------------------------------------------------------
# Basis file format (.sbm)
# ---------------------------------------------------------------------------

def save_basis(path, basis: SparseBasis) -> None:
    """JSON header plus A then B as little-endian f64, column-major."""
    header = {
        "algorithm": basis.algorithm,
        "lambda": basis.lam,
        "p": basis.p,
        "k": basis.k,
        "group_sizes": [int(s) for s in basis.group_sizes],
        "converged": bool(basis.converged),
        "iterations_used": int(basis.iterations_used),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(basis.A.astype("<f8").tobytes(order="F"))
        fh.write(basis.B.astype("<f8").tobytes(order="F"))


def load_basis(path) -> SparseBasis:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        p, k = int(header["p"]), int(header["k"])
        payload = fh.read()
    expected = 2 * p * k * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: basis payload size mismatch")
    half = p * k * 8
    A = np.frombuffer(payload[:half], dtype="<f8").reshape((p, k), order="F")
    B = np.frombuffer(payload[half:], dtype="<f8").reshape((p, k), order="F")
    return SparseBasis(A=A.copy(), B=B.copy(), algorithm=header["algorithm"],
                       lam=float(header["lambda"]),
                       iterations_used=int(header["iterations_used"]),
                       converged=bool(header["converged"]),
                       group_sizes=[int(s) for s in header["group_sizes"]])
