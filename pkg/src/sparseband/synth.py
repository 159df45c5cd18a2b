"""Deterministic synthetic data generators.

All generators are pure functions of their arguments; the seed fully
determines the output.
"""

from __future__ import annotations

import numpy as np

from .hsdata import (
    DataMatrix,
    GroupStructure,
    HyperspectralCube,
    LabeledSpectra,
    normalize_spectra,
)

__all__ = ["synth_group_lowrank", "synth_ink_scene", "synth_ink_page"]


def synth_group_lowrank(n: int, groups: GroupStructure, active_groups,
                        noise_sigma: float = 0.01, seed: int = 0) -> DataMatrix:
    """Grouped data where only ``active_groups`` carry low-rank signal.

    Each active group receives its own unit-variance latent factor times a
    fixed within-group loading; inactive groups contain nothing but noise, so
    the per-group variance ordering follows the active flags.
    """
    active = sorted(int(a) for a in active_groups)
    if not active:
        raise ValueError("active_groups must be non-empty")
    if active[0] < 0 or active[-1] >= groups.num_groups:
        raise ValueError("active group index out of range")
    rng = np.random.default_rng(seed)
    p = groups.num_columns
    raw = np.zeros((n, p))
    for a in active:
        idx = groups.group_indices[a]
        factor = rng.standard_normal(n)
        loading = rng.standard_normal(idx.size)
        loading /= np.linalg.norm(loading)
        raw[:, idx] += np.outer(factor, loading)
    if noise_sigma > 0:
        raw += noise_sigma * rng.standard_normal((n, p))
    return DataMatrix.from_raw(raw, groups)


def synth_ink_scene(n_per_ink: int, p: int, separable_band: int, gap: float,
                    noise_sigma: float = 0.0, seed: int = 0) -> LabeledSpectra:
    """Two ink classes whose mean spectra differ only at one band.

    Both classes share a flat base response; class 2 is raised by ``gap`` at
    ``separable_band``.  Rows are unit-normalized.  The first ``n_per_ink``
    rows belong to ink 1.
    """
    if gap <= 0:
        raise ValueError("gap must be positive")
    if not 0 <= separable_band < p:
        raise ValueError("separable_band out of range")
    rng = np.random.default_rng(seed)
    base = np.ones(p)
    raw = np.tile(base, (2 * n_per_ink, 1))
    raw[n_per_ink:, separable_band] += gap
    if noise_sigma > 0:
        raw += noise_sigma * rng.standard_normal(raw.shape)
    unit, degenerate = normalize_spectra(raw)
    labels = np.repeat([1, 2], n_per_ink)
    return LabeledSpectra(unit, labels, num_inks=2, degenerate=degenerate)


def _radial_illumination(height: int, width: int, floor: float) -> np.ndarray:
    """Quadratic radial falloff from 1.0 at the center to ``floor`` at corners."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    r2 = ((yy - cy) / max(cy, 1.0)) ** 2 + ((xx - cx) / max(cx, 1.0)) ** 2
    r2 /= r2.max()
    return 1.0 - (1.0 - floor) * r2


def synth_ink_page(width: int = 96, height: int = 96, bands: int = 12,
                   n_strokes: int = 14, ink_bands: tuple | None = None,
                   ink_gap: float = 0.5, paper_value: float = 200.0,
                   ink_value: float = 40.0, illum_floor: float = 0.55,
                   noise_sigma: float = 1.0, seed: int = 0,
                   wavelengths=None):
    """A handwritten-page cube with two inks under non-uniform illumination.

    Strokes are short random line segments, alternately assigned to the two
    inks.  The inks share a flat base reflectance; ink i is raised by
    ``ink_gap`` (relative to the base) at ``ink_bands[i-1]`` only.  The
    symmetric construction gives both inks the same spectral norm, so after
    unit normalization every band outside ``ink_bands`` carries no class
    signal at all.  Observed intensity is reflectance times a radial
    illumination field plus Gaussian noise.

    Returns ``(cube, truth)`` where ``truth`` is the label image
    (0 background, 1 ink 1, 2 ink 2).
    """
    if bands < 3:
        raise ValueError("need at least 3 bands")
    if ink_bands is None:
        ink_bands = (bands // 3, (2 * bands) // 3)
    b1, b2 = (int(b) for b in ink_bands)
    if not (0 <= b1 < bands and 0 <= b2 < bands) or b1 == b2:
        raise ValueError("ink_bands must be two distinct band indices")
    rng = np.random.default_rng(seed)
    truth = np.zeros((height, width), dtype=np.intp)
    for s in range(n_strokes):
        label = 1 + s % 2
        y0 = rng.integers(4, height - 4)
        x0 = rng.integers(4, width - 4)
        angle = rng.uniform(0, np.pi)
        length = int(rng.integers(10, max(11, min(width, height) // 2)))
        thickness = int(rng.integers(1, 3))
        for t in range(length):
            y = int(round(y0 + t * np.sin(angle)))
            x = int(round(x0 + t * np.cos(angle)))
            if 0 <= y < height and 0 <= x < width:
                truth[y : y + thickness, x : x + thickness] = label

    ink1 = np.full(bands, ink_value)
    ink2 = ink1.copy()
    ink1[b1] += ink_gap * ink_value
    ink2[b2] += ink_gap * ink_value
    reflect = np.broadcast_to(np.full(bands, paper_value)[:, None, None],
                              (bands, height, width)).copy()
    reflect[:, truth == 1] = ink1[:, None]
    reflect[:, truth == 2] = ink2[:, None]

    illum = _radial_illumination(height, width, illum_floor)
    data = reflect * illum[None, :, :]
    if noise_sigma > 0:
        data = data + noise_sigma * rng.standard_normal(data.shape)
    data = np.clip(data, 0.0, 255.0)
    return HyperspectralCube(data, wavelengths=wavelengths), truth
