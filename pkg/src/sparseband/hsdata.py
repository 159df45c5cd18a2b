"""Hyperspectral data model: cubes, grouped matrices, spectra, and file formats.

Conventions used throughout the library:

* cube samples are stored band-major, i.e. as an array of shape
  ``(bands, height, width)``;
* band / column indices are 0-based;
* ink labels are 1-based (0 is reserved for "background / unlabeled");
* matrices handed to the solvers are column-centered, and the centering
  mean is kept on the matrix so test data can be centered consistently.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HyperspectralCube",
    "GroupStructure",
    "DataMatrix",
    "LabeledSpectra",
    "load_cube",
    "save_cube",
    "extract_patches",
    "reassemble_patches",
    "normalize_spectra",
    "save_matrix_csv",
    "load_matrix_csv",
    "load_raw_csv",
    "save_labels_csv",
    "load_labels_csv",
    "save_pgm",
    "load_pgm",
]

_HSC_DTYPE = "<f4"


@dataclass(frozen=True)
class HyperspectralCube:
    """A dense reflectance cube with ``data[band, row, col]`` layout."""

    data: np.ndarray
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError("cube data must be 3-D (bands, height, width)")
        object.__setattr__(self, "data", data)
        if self.wavelengths is not None:
            wl = np.asarray(self.wavelengths, dtype=np.float64)
            if wl.shape != (data.shape[0],):
                raise ValueError("wavelengths length must equal the number of bands")
            if not np.all(np.diff(wl) > 0):
                raise ValueError("wavelengths must be strictly increasing")
            object.__setattr__(self, "wavelengths", wl)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def band(self, index: int) -> np.ndarray:
        return self.data[index]


@dataclass(frozen=True)
class GroupStructure:
    """A partition of the p matrix columns into disjoint feature groups."""

    group_indices: tuple
    weights: np.ndarray

    def __post_init__(self):
        groups = tuple(np.asarray(g, dtype=np.intp) for g in self.group_indices)
        if not groups:
            raise ValueError("at least one group is required")
        all_idx = np.concatenate(groups)
        p = all_idx.size
        if np.unique(all_idx).size != p or all_idx.min() != 0 or all_idx.max() != p - 1:
            raise ValueError("groups must be disjoint and cover exactly columns 0..p-1")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(groups),):
            raise ValueError("one weight per group is required")
        if np.any(w <= 0):
            raise ValueError("group weights must be positive")
        object.__setattr__(self, "group_indices", groups)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_sizes(cls, sizes, weights=None) -> "GroupStructure":
        """Contiguous groups of the given sizes, default weight sqrt(size)."""
        sizes = [int(s) for s in sizes]
        if any(s <= 0 for s in sizes):
            raise ValueError("group sizes must be positive")
        edges = np.cumsum([0] + sizes)
        groups = tuple(np.arange(edges[i], edges[i + 1]) for i in range(len(sizes)))
        if weights is None:
            weights = np.sqrt(np.asarray(sizes, dtype=np.float64))
        return cls(groups, weights)

    @classmethod
    def singletons(cls, p: int) -> "GroupStructure":
        return cls.from_sizes([1] * int(p))

    @property
    def num_groups(self) -> int:
        return len(self.group_indices)

    @property
    def num_columns(self) -> int:
        return int(sum(g.size for g in self.group_indices))

    def sizes(self) -> list:
        return [int(g.size) for g in self.group_indices]


@dataclass(frozen=True)
class DataMatrix:
    """A centered observation matrix with its centering mean and groups."""

    values: np.ndarray
    column_mean: np.ndarray
    groups: GroupStructure

    def __post_init__(self):
        X = np.asarray(self.values, dtype=np.float64)
        mean = np.asarray(self.column_mean, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if mean.shape != (X.shape[1],):
            raise ValueError("column_mean length must equal the number of columns")
        if self.groups.num_columns != X.shape[1]:
            raise ValueError("groups must partition exactly the matrix columns")
        object.__setattr__(self, "values", X)
        object.__setattr__(self, "column_mean", mean)

    @classmethod
    def from_raw(cls, raw, groups: GroupStructure, mean=None) -> "DataMatrix":
        """Center ``raw`` by its own column means, or by a supplied mean.

        Self-centered matrices are validated to have column means at zero;
        matrices centered with an external (training) mean are not, since
        their residual means are data.
        """
        raw = np.asarray(raw, dtype=np.float64)
        if mean is None:
            mean = raw.mean(axis=0)
            out = cls(raw - mean, mean, groups)
            scale = 1.0 + (np.abs(out.values).max() if out.values.size else 0.0)
            if out.n > 0 and np.any(np.abs(out.values.mean(axis=0)) > 1e-10 * scale):
                raise ValueError("centering failed to zero the column means")
            return out
        mean = np.asarray(mean, dtype=np.float64)
        return cls(raw - mean, mean, groups)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def uncentered(self) -> np.ndarray:
        return self.values + self.column_mean


@dataclass(frozen=True)
class LabeledSpectra:
    """Unit-normalized ink spectra with optional ground-truth ink labels."""

    spectra: np.ndarray
    labels: np.ndarray | None
    num_inks: int
    degenerate: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.intp))

    def __post_init__(self):
        S = np.asarray(self.spectra, dtype=np.float64)
        if S.ndim != 2:
            raise ValueError("spectra must be a 2-D matrix")
        deg = np.asarray(self.degenerate, dtype=np.intp)
        norms = np.linalg.norm(S, axis=1)
        ok = np.ones(S.shape[0], dtype=bool)
        ok[deg] = False
        if np.any(np.abs(norms[ok] - 1.0) > 1e-9):
            raise ValueError("non-degenerate spectra rows must have unit norm")
        object.__setattr__(self, "spectra", S)
        object.__setattr__(self, "degenerate", deg)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.intp)
            if y.shape != (S.shape[0],):
                raise ValueError("one label per spectrum is required")
            present = np.unique(y)
            if present.min() < 1 or present.max() > self.num_inks:
                raise ValueError("labels must lie in 1..num_inks")
            if not np.array_equal(present, np.arange(1, self.num_inks + 1)):
                raise ValueError("labels must cover the contiguous range 1..num_inks")
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.spectra.shape[0]

    @property
    def num_bands(self) -> int:
        return self.spectra.shape[1]


# ---------------------------------------------------------------------------
# Cube file format (.hsc)
# ---------------------------------------------------------------------------

def save_cube(path, cube: HyperspectralCube) -> None:
    """Write a cube as a one-line JSON header plus little-endian f32 samples."""
    header = {
        "width": cube.width,
        "height": cube.height,
        "bands": cube.bands,
        "dtype": "f32",
        "layout": "band-major",
        "wavelengths": None if cube.wavelengths is None else [float(w) for w in cube.wavelengths],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(cube.data, dtype=np.float64).astype(_HSC_DTYPE).tobytes())


def load_cube(path) -> HyperspectralCube:
    """Read a .hsc cube; round-trips bit-exactly with :func:`save_cube`."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        if not header_line.endswith(b"\n"):
            raise ValueError(f"{path}: malformed header (missing newline)")
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: malformed header ({exc})") from exc
        for key in ("width", "height", "bands", "dtype", "layout"):
            if key not in header:
                raise ValueError(f"{path}: malformed header (missing '{key}')")
        if header["dtype"] != "f32":
            raise ValueError(f"{path}: unsupported dtype {header['dtype']!r}")
        if header["layout"] != "band-major":
            raise ValueError(f"{path}: unsupported layout {header['layout']!r}")
        width, height, bands = (int(header[k]) for k in ("width", "height", "bands"))
        if min(width, height, bands) <= 0:
            raise ValueError(f"{path}: malformed header (non-positive dimensions)")
        payload = fh.read()
    expected = width * height * bands * 4
    if len(payload) != expected:
        raise ValueError(
            f"{path}: sample count mismatch (expected {expected} bytes, found {len(payload)})"
        )
    samples = np.frombuffer(payload, dtype=_HSC_DTYPE).astype(np.float64)
    data = samples.reshape(bands, height, width)
    return HyperspectralCube(data, wavelengths=header.get("wavelengths"))


# ---------------------------------------------------------------------------
# Patch extraction
# ---------------------------------------------------------------------------

def patch_groups(side: int, bands: int) -> GroupStructure:
    """Group layout of a patch matrix: one group of side*side columns per band."""
    return GroupStructure.from_sizes([side * side] * bands)


def extract_patches(cube: HyperspectralCube, side: int, mean=None) -> DataMatrix:
    """Vectorize non-overlapping side x side x bands volumes into matrix rows.

    Row i holds patch i (patch grid scanned row-major); the columns of band b
    occupy the contiguous block ``[b*side**2, (b+1)*side**2)``.  Spatial
    remainders at the right/bottom edges are discarded.  The result is
    column-centered (by its own means, or by ``mean`` when supplied).
    """
    side = int(side)
    if side < 1:
        raise ValueError("side must be >= 1")
    if cube.width < side or cube.height < side:
        raise ValueError(
            f"side {side} exceeds cube spatial dimensions {cube.width}x{cube.height}"
        )
    ny = cube.height // side
    nx = cube.width // side
    d = cube.data[:, : ny * side, : nx * side]
    d = d.reshape(cube.bands, ny, side, nx, side)
    raw = d.transpose(1, 3, 0, 2, 4).reshape(ny * nx, cube.bands * side * side)
    return DataMatrix.from_raw(raw, patch_groups(side, cube.bands), mean=mean)


def reassemble_patches(matrix: DataMatrix, width: int, height: int, bands: int,
                       side: int, wavelengths=None) -> HyperspectralCube:
    """Inverse of :func:`extract_patches` on the covered region.

    The matrix is un-centered with its stored mean before placement; border
    pixels not covered by any patch are filled with the per-band mean of the
    stored column means.
    """
    side = int(side)
    ny = height // side
    nx = width // side
    p = side * side * bands
    if matrix.p != p:
        raise ValueError(f"matrix has {matrix.p} columns, expected {p} for side={side}")
    if matrix.n != ny * nx:
        raise ValueError(f"matrix has {matrix.n} rows, expected {ny * nx} patches")
    raw = matrix.uncentered()
    band_means = matrix.column_mean.reshape(bands, side * side).mean(axis=1)
    data = np.broadcast_to(band_means[:, None, None], (bands, height, width)).copy()
    d = raw.reshape(ny, nx, bands, side, side).transpose(2, 0, 3, 1, 4)
    data[:, : ny * side, : nx * side] = d.reshape(bands, ny * side, nx * side)
    return HyperspectralCube(data, wavelengths=wavelengths)


def normalize_spectra(raw) -> tuple:
    """Scale each row to unit l2 norm.

    Zero rows are left untouched and reported; returns ``(unit, degenerate)``
    where ``degenerate`` holds the indices of the zero rows.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 1:
        raise ValueError("expected a non-empty 2-D matrix")
    norms = np.linalg.norm(raw, axis=1)
    degenerate = np.flatnonzero(norms == 0.0)
    safe = np.where(norms == 0.0, 1.0, norms)
    return raw / safe[:, None], degenerate


# ---------------------------------------------------------------------------
# CSV / PGM interchange
# ---------------------------------------------------------------------------

_GROUP_COL = re.compile(r"^g(\d+)_c\d+$")


def _group_column_names(groups: GroupStructure) -> list:
    names = [""] * groups.num_columns
    for gi, idx in enumerate(groups.group_indices):
        for j, col in enumerate(idx):
            names[col] = f"g{gi:03d}_c{j:04d}"
    return names


def save_matrix_csv(path, raw: np.ndarray, groups: GroupStructure | None = None) -> None:
    """Write an uncentered matrix as RFC-4180 CSV with a one-line header.

    Group membership is encoded in the column names (``g###_c####``) so the
    structure survives the round trip.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if groups is None:
        groups = GroupStructure.singletons(raw.shape[1])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_group_column_names(groups))
    for row in raw:
        writer.writerow([repr(float(v)) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def load_raw_csv(path) -> tuple:
    """Read a matrix CSV as written by :func:`save_matrix_csv`, uncentered.

    Returns ``(raw, groups)``; group structure is recovered from the column
    names when they follow the ``g###_c####`` pattern, else singleton groups.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty CSV")
        rows = [[float(v) for v in row] for row in reader if row]
    raw = np.asarray(rows, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != len(header):
        raise ValueError(f"{path}: inconsistent CSV row widths")
    group_of = []
    for name in header:
        m = _GROUP_COL.match(name)
        if m is None:
            group_of = None
            break
        group_of.append(int(m.group(1)))
    if group_of is None:
        groups = GroupStructure.singletons(raw.shape[1])
    else:
        ids = sorted(set(group_of))
        indices = [np.flatnonzero(np.asarray(group_of) == g) for g in ids]
        groups = GroupStructure(tuple(indices), np.sqrt([idx.size for idx in indices]))
    return raw, groups


def load_matrix_csv(path, mean=None) -> DataMatrix:
    """Read a matrix CSV written by :func:`save_matrix_csv` and center it."""
    raw, groups = load_raw_csv(path)
    return DataMatrix.from_raw(raw, groups, mean=mean)


def save_labels_csv(path, labels) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label"])
    for v in np.asarray(labels).ravel():
        writer.writerow([int(v)])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def load_labels_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["label"]:
            raise ValueError(f"{path}: expected a single 'label' column")
        return np.asarray([int(row[0]) for row in reader if row], dtype=np.intp)


def save_pgm(path, image: np.ndarray) -> None:
    """Write an integer image as binary PGM (P5, maxval 255)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    if img.dtype == bool:
        img = np.where(img, 255, 0)
    img = np.clip(img, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pos += 1
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
    return data.reshape(height, width).copy()
