"""Band-selection drivers and compressed-sensing evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .hsdata import DataMatrix, GroupStructure, HyperspectralCube, extract_patches, reassemble_patches
from .spca import AlternationConfig, PcaDecomposition, SparseBasis, active_groups, fit

__all__ = [
    "BandSet",
    "SelectionStep",
    "reconstruction_error",
    "reconstruct_cube",
    "knn_recognition",
    "sfbs",
    "jsbs",
]

JSBS_SUBSET_GUARD = 16


@dataclass(frozen=True)
class SelectionStep:
    band: int
    accuracy: float


@dataclass(frozen=True)
class BandSet:
    """An ordered set of selected band indices (0-based) with provenance."""

    indices: tuple
    provenance: str
    achieved_accuracy: float
    trace: tuple = ()
    reduced_set: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError("band indices must be unique")
        if idx != tuple(sorted(idx)):
            raise ValueError("band indices must be sorted ascending")
        object.__setattr__(self, "indices", idx)


def reconstruction_error(X_test, basis: SparseBasis,
                         decomp: PcaDecomposition | None = None,
                         k: int | None = None) -> float:
    """Relative distance between the rank-k PCA projection and X B A^T.

    With the default k = p the projection is the identity and the error
    reduces to ``||X - X B A^T||_F / ||X||_F``.  ``X_test`` must already be
    centered with the training column means.
    """
    X = X_test.values if isinstance(X_test, DataMatrix) else np.asarray(X_test, dtype=np.float64)
    p = X.shape[1]
    if k is None:
        k = basis.k
    if k == p:
        ref = X
    else:
        if decomp is None:
            raise ValueError("a PcaDecomposition is required when k < p")
        P = decomp.V[:, :k]
        ref = X @ P @ P.T
    den = np.linalg.norm(ref)
    if den == 0.0:
        raise ValueError("all-zero test data: reconstruction error undefined")
    num = np.linalg.norm(ref - X @ basis.B @ basis.A.T)
    return float(num / den)


def _band_fill_means(column_mean: np.ndarray, groups: GroupStructure) -> np.ndarray:
    return np.asarray([column_mean[idx].mean() for idx in groups.group_indices])


def reconstruct_cube(cube: HyperspectralCube, basis: SparseBasis, side: int,
                     train_mean: np.ndarray) -> tuple:
    """Compressively reconstruct a cube through a learned model.

    Patches are centered with the training means, the columns of inactive
    band groups are zeroed (those bands are never sensed), the patch matrix
    is projected through B A^T, un-centered, and reassembled.  Returns
    ``(cube_hat, active_band_indices)``.
    """
    train_mean = np.asarray(train_mean, dtype=np.float64)
    p = side * side * cube.bands
    if train_mean.shape != (p,):
        raise ValueError(
            f"training mean has {train_mean.size} entries, patch matrix needs {p}")
    if basis.p != p:
        raise ValueError(f"model was built for p={basis.p}, patch matrix has p={p}")
    groups_all = extract_patches(cube, side, mean=train_mean)
    groups = groups_all.groups
    act = active_groups(basis.B, groups)
    Xc = groups_all.values.copy()
    inactive = sorted(set(range(groups.num_groups)) - set(act))
    for gi in inactive:
        Xc[:, groups.group_indices[gi]] = 0.0
    Xhat = Xc @ basis.B @ basis.A.T
    rec = DataMatrix(Xhat - Xhat.mean(axis=0), train_mean + Xhat.mean(axis=0), groups)
    cube_hat = reassemble_patches(rec, cube.width, cube.height, cube.bands, side,
                                  wavelengths=cube.wavelengths)
    return cube_hat, act


def knn_recognition(gallery: np.ndarray, gallery_labels, probes: np.ndarray,
                    probe_labels, basis: SparseBasis,
                    train_mean: np.ndarray | None = None) -> float:
    """Nearest-neighbor accuracy of probes reconstructed through the model.

    Each probe is centered with the training (gallery) means, projected
    through B A^T, un-centered, and matched to the closest gallery row in
    Euclidean distance; ties resolve to the lowest gallery index.
    """
    gallery = np.asarray(gallery, dtype=np.float64)
    probes = np.asarray(probes, dtype=np.float64)
    if gallery.shape[0] == 0:
        raise ValueError("empty gallery")
    g_labels = np.asarray(gallery_labels)
    p_labels = np.asarray(probe_labels)
    if train_mean is None:
        train_mean = gallery.mean(axis=0)
    rec = (probes - train_mean) @ basis.B @ basis.A.T + train_mean
    d2 = ((rec[:, None, :] - gallery[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    return float((g_labels[nearest] == p_labels).mean())


def sfbs(spectra, accuracy_fn) -> BandSet:
    """Sequential forward band selection.

    Greedily grows the band set, one band per step, stopping as soon as the
    best extension no longer strictly improves accuracy.  Ties resolve to
    the lowest band index.  ``accuracy_fn(X_cols, labels) -> float`` must be
    deterministic.
    """
    X = spectra.spectra
    y = spectra.labels
    if y is None:
        raise ValueError("sfbs requires labeled spectra")
    p = X.shape[1]
    remaining = list(range(p))
    best_band = None
    best_acc = -np.inf
    for j in remaining:
        a = accuracy_fn(X[:, [j]], y)
        if a > best_acc:
            best_acc, best_band = a, j
    selected = [best_band]
    remaining.remove(best_band)
    trace = [SelectionStep(band=best_band, accuracy=float(best_acc))]
    while remaining:
        step_best_acc = -np.inf
        step_best_band = None
        for j in remaining:
            a = accuracy_fn(X[:, sorted(selected + [j])], y)
            if a > step_best_acc:
                step_best_acc, step_best_band = a, j
        if step_best_acc > best_acc:
            selected.append(step_best_band)
            remaining.remove(step_best_band)
            best_acc = step_best_acc
            trace.append(SelectionStep(band=step_best_band, accuracy=float(best_acc)))
        else:
            break
    return BandSet(indices=tuple(sorted(selected)), provenance="sfbs",
                   achieved_accuracy=float(best_acc), trace=tuple(trace))


def jsbs(spectra, lam: float, accuracy_fn,
         fit_config: AlternationConfig | None = None,
         subset_guard: int = JSBS_SUBSET_GUARD) -> BandSet:
    """Joint sparse band selection.

    Fits a row-sparse basis (l21 penalty) on the centered spectra; the
    surviving rows form the reduced band set R, every non-empty subset of
    which is scored.  The argmax wins, ties resolving to the smaller subset
    and then lexicographic order.
    """
    X = spectra.spectra
    y = spectra.labels
    if y is None:
        raise ValueError("jsbs requires labeled spectra")
    if fit_config is None:
        fit_config = AlternationConfig()
    dm = DataMatrix.from_raw(X, GroupStructure.singletons(X.shape[1]))
    basis = fit(dm, "jspca", lam, fit_config)
    reduced = [i for i in range(X.shape[1])
               if np.linalg.norm(basis.B[i]) > 1e-9 * (1.0 + np.linalg.norm(basis.B))]
    if not reduced:
        raise ValueError("empty reduced set: lambda is too large")
    if len(reduced) > subset_guard:
        raise ValueError(
            f"reduced set has {len(reduced)} bands (> {subset_guard}); use a larger lambda"
        )
    best_acc = -np.inf
    best_subset = None
    for size in range(1, len(reduced) + 1):
        for T in combinations(reduced, size):
            a = accuracy_fn(X[:, list(T)], y)
            if a > best_acc:
                best_acc, best_subset = a, T
    return BandSet(indices=tuple(best_subset), provenance="jsbs",
                   achieved_accuracy=float(best_acc), reduced_set=tuple(reduced))
