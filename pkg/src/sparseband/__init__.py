"""Jointly sparse PCA bases, regularization-path search, hyperspectral band
selection, compressed cube reconstruction, and ink mismatch detection."""

__version__ = "0.1.0"

from .hsdata import (
    DataMatrix,
    GroupStructure,
    HyperspectralCube,
    LabeledSpectra,
    extract_patches,
    load_cube,
    normalize_spectra,
    reassemble_patches,
    save_cube,
)
from .prox import Penalty, ProxResult, SolverConfig, prox, solve_B, spectral_norm_sq
from .spca import (
    ALGORITHMS,
    AlternationConfig,
    PcaDecomposition,
    SparseBasis,
    fit,
    group_cardinality,
    lambda_max,
    load_basis,
    pca,
    procrustes,
    save_basis,
)
from .treesearch import ModelRecord, TreeConfig, model_for, tree_search
from .bandeval import BandSet, jsbs, knn_recognition, reconstruct_cube, reconstruction_error, sfbs
from .ink import (
    BinarizationParams,
    ClusterResult,
    binarize,
    detect,
    extract_ink_spectra,
    kmeans,
    mismatch_accuracy,
)
from .synth import synth_group_lowrank, synth_ink_page, synth_ink_scene
