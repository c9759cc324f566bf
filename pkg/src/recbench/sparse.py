"""Compressed sparse row matrices shared by every recommender.

The interaction matrix is stored in CSR layout with an optional value
array: binary matrices (the dominant implicit-feedback case) carry no
values at all, which halves their memory footprint.  Item-item weight
models reuse the same layout, restricted to square shape with an empty
or zero diagonal.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

OFFSET_DTYPE = np.int64
INDEX_DTYPE = np.int32
VALUE_DTYPE = np.float64

_MATRIX_MAGIC = b"RBSM"
MATRIX_FORMAT_VERSION = 1


class NumericalError(RuntimeError):
    """A linear-algebra step failed (singular system, divergence)."""


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Sparse row-major user x item matrix.

    ``values is None`` means every stored entry is 1.0.  Rows are sorted
    by column index and duplicate-free; instances are immutable and safe
    to share across workers.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.asarray(self.row_offsets, dtype=OFFSET_DTYPE))
        object.__setattr__(self, "col_indices", np.asarray(self.col_indices, dtype=INDEX_DTYPE))
        if self.values is not None:
            object.__setattr__(self, "values", np.asarray(self.values, dtype=VALUE_DTYPE))
        self._check()

    def _check(self):
        off, cols = self.row_offsets, self.col_indices
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("negative matrix dimensions")
        if off.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if off[0] != 0 or off[-1] != len(cols):
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(off) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ValueError("column index out of bounds")
        # strictly increasing within each row <=> sorted and duplicate-free
        if len(cols) > 1:
            same_row = np.repeat(np.arange(self.n_rows), np.diff(off))
            inc = np.diff(cols) > 0
            boundary = np.diff(same_row) != 0
            if not np.all(inc | boundary):
                raise ValueError("row columns must be strictly increasing")
        if self.values is not None and self.values.shape != cols.shape:
            raise ValueError("values length must equal nnz")

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and weights of row ``i`` (copies)."""
        if not 0 <= i < self.n_rows:
            raise IndexError(f"row {i} out of bounds for {self.n_rows} rows")
        lo, hi = int(self.row_offsets[i]), int(self.row_offsets[i + 1])
        cols = self.col_indices[lo:hi].copy()
        if self.values is None:
            return cols, np.ones(hi - lo, dtype=VALUE_DTYPE)
        return cols, self.values[lo:hi].copy()

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def value_array(self) -> np.ndarray:
        """Values as a concrete array (ones for binary matrices)."""
        if self.values is None:
            return np.ones(self.nnz, dtype=VALUE_DTYPE)
        return self.values

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry, in storage order."""
        return np.repeat(np.arange(self.n_rows, dtype=INDEX_DTYPE), np.diff(self.row_offsets))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.value_array().copy(), self.col_indices.copy(), self.row_offsets.copy()),
            shape=(self.n_rows, self.n_cols),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        if (self.n_rows, self.n_cols) != (other.n_rows, other.n_cols):
            return False
        if not np.array_equal(self.row_offsets, other.row_offsets):
            return False
        if not np.array_equal(self.col_indices, other.col_indices):
            return False
        return np.array_equal(self.value_array(), other.value_array())


@dataclass(frozen=True, eq=False)
class SparseWeights(InteractionMatrix):
    """Square item x item weight matrix with an empty or zero diagonal."""

    def _check(self):
        super()._check()
        if self.n_rows != self.n_cols:
            raise ValueError("weight matrix must be square")
        if self.values is not None:
            rows = self.row_ids()
            on_diag = rows == self.col_indices
            if np.any(self.values[on_diag] != 0.0):
                raise ValueError("weight matrix diagonal must be zero")


def build_matrix(records, n_rows: int, n_cols: int) -> InteractionMatrix:
    """Assemble a CSR matrix from (row, col, weight) triples.

    Duplicate (row, col) pairs collapse keeping the last weight seen.
    When every surviving weight is exactly 1.0 the value array is
    dropped (binary storage).
    """
    records = list(records)
    if not records:
        return InteractionMatrix(
            n_rows, n_cols,
            np.zeros(n_rows + 1, dtype=OFFSET_DTYPE),
            np.zeros(0, dtype=INDEX_DTYPE),
        )
    rows = np.fromiter((r[0] for r in records), dtype=np.int64, count=len(records))
    cols = np.fromiter((r[1] for r in records), dtype=np.int64, count=len(records))
    vals = np.fromiter((r[2] for r in records), dtype=VALUE_DTYPE, count=len(records))
    bad = (rows < 0) | (rows >= n_rows) | (cols < 0) | (cols >= n_cols)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"record {records[i]!r} out of bounds for a {n_rows}x{n_cols} matrix"
        )
    # sort by (row, col, insertion order); the last entry of each duplicate
    # group is the survivor
    order = np.lexsort((np.arange(len(records)), cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    last = np.ones(len(rows), dtype=bool)
    last[:-1] = (rows[:-1] != rows[1:]) | (cols[:-1] != cols[1:])
    rows, cols, vals = rows[last], cols[last], vals[last]

    offsets = np.zeros(n_rows + 1, dtype=OFFSET_DTYPE)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
    values = None if np.all(vals == 1.0) else vals
    return InteractionMatrix(n_rows, n_cols, offsets, cols.astype(INDEX_DTYPE), values)


def transpose(m: InteractionMatrix) -> InteractionMatrix:
    """Exact transpose with rows re-sorted; transpose(transpose(m)) == m."""
    rows = m.row_ids()
    order = np.lexsort((rows, m.col_indices))
    new_cols = rows[order]
    offsets = np.zeros(m.n_cols + 1, dtype=OFFSET_DTYPE)
    np.cumsum(np.bincount(m.col_indices, minlength=m.n_cols), out=offsets[1:])
    values = None if m.values is None else m.values[order]
    return InteractionMatrix(m.n_cols, m.n_rows, offsets, new_cols, values)


def row_nonzeros(m: InteractionMatrix, row: int) -> tuple[np.ndarray, np.ndarray]:
    return m.row(row)


def from_scipy(mat: sp.spmatrix, *, binary: bool = False) -> InteractionMatrix:
    """Wrap a scipy sparse matrix (canonicalised: sorted, deduplicated)."""
    m = mat.tocsr().copy()
    m.sum_duplicates()
    m.sort_indices()
    values = None if binary else np.asarray(m.data, dtype=VALUE_DTYPE)
    return InteractionMatrix(
        m.shape[0], m.shape[1],
        np.asarray(m.indptr, dtype=OFFSET_DTYPE),
        np.asarray(m.indices, dtype=INDEX_DTYPE),
        values,
    )


def zero_diagonal(m: InteractionMatrix) -> InteractionMatrix:
    """Drop diagonal entries of a square matrix."""
    if m.n_rows != m.n_cols:
        raise ValueError("zero_diagonal requires a square matrix")
    rows = m.row_ids()
    keep = rows != m.col_indices
    if np.all(keep):
        return m
    offsets = np.zeros(m.n_rows + 1, dtype=OFFSET_DTYPE)
    np.cumsum(np.bincount(rows[keep], minlength=m.n_rows), out=offsets[1:])
    values = None if m.values is None else m.values[keep]
    return InteractionMatrix(m.n_rows, m.n_cols, offsets, m.col_indices[keep], values)


def topk_truncate(m: InteractionMatrix, k: int | None) -> InteractionMatrix:
    """Keep the k largest-magnitude entries of each row.

    Ties are broken toward the lower column index so the result is
    independent of iteration order.  ``k=None`` means unlimited.
    """
    if k is None or m.nnz == 0:
        return m
    if k < 1:
        raise ValueError("k must be >= 1")
    vals = m.value_array()
    keep_cols, keep_vals, counts = [], [], np.zeros(m.n_rows, dtype=np.int64)
    for i in range(m.n_rows):
        lo, hi = int(m.row_offsets[i]), int(m.row_offsets[i + 1])
        if hi - lo <= k:
            sel = slice(lo, hi)
            counts[i] = hi - lo
            keep_cols.append(m.col_indices[sel])
            keep_vals.append(vals[sel])
            continue
        c, v = m.col_indices[lo:hi], vals[lo:hi]
        pick = np.lexsort((c, -np.abs(v)))[:k]
        pick.sort()  # restore ascending column order
        counts[i] = k
        keep_cols.append(c[pick])
        keep_vals.append(v[pick])
    offsets = np.zeros(m.n_rows + 1, dtype=OFFSET_DTYPE)
    np.cumsum(counts, out=offsets[1:])
    cols = np.concatenate(keep_cols) if keep_cols else np.zeros(0, dtype=INDEX_DTYPE)
    values = None if m.values is None else np.concatenate(keep_vals)
    return InteractionMatrix(m.n_rows, m.n_cols, offsets, cols, values)


def sparse_topk_product(
    a: InteractionMatrix,
    b: InteractionMatrix,
    k: int | None = None,
    *,
    drop_diagonal: bool = False,
) -> InteractionMatrix:
    """Exact sparse product a @ b with per-row top-k truncation.

    With ``drop_diagonal`` the diagonal is removed before truncation so
    self-similarity never consumes a top-k slot (the convention for
    item-item weight models).  Entries that cancel to exactly zero are
    dropped from storage.
    """
    if a.n_cols != b.n_rows:
        raise ValueError(
            f"dimension mismatch: {a.n_rows}x{a.n_cols} @ {b.n_rows}x{b.n_cols}"
        )
    prod = (a.to_scipy() @ b.to_scipy()).tocsr()
    prod.eliminate_zeros()
    prod.sort_indices()
    out = from_scipy(prod)
    if drop_diagonal:
        out = zero_diagonal(out)
    return topk_truncate(out, k)


def write_matrix_bytes(m: InteractionMatrix) -> bytes:
    """Versioned little-endian binary serialization."""
    buf = io.BytesIO()
    flags = 1 if m.values is not None else 0
    buf.write(_MATRIX_MAGIC)
    buf.write(struct.pack("<IIQQQ", MATRIX_FORMAT_VERSION, flags, m.n_rows, m.n_cols, m.nnz))
    buf.write(m.row_offsets.astype("<i8").tobytes())
    buf.write(m.col_indices.astype("<i4").tobytes())
    if m.values is not None:
        buf.write(m.values.astype("<f8").tobytes())
    return buf.getvalue()


def read_matrix_bytes(data: bytes) -> InteractionMatrix:
    if data[:4] != _MATRIX_MAGIC:
        raise ValueError("not a matrix file (bad magic bytes)")
    version, flags, n_rows, n_cols, nnz = struct.unpack_from("<IIQQQ", data, 4)
    if version != MATRIX_FORMAT_VERSION:
        raise ValueError(f"unsupported matrix format version {version}")
    pos = 4 + struct.calcsize("<IIQQQ")
    offsets = np.frombuffer(data, dtype="<i8", count=n_rows + 1, offset=pos)
    pos += offsets.nbytes
    cols = np.frombuffer(data, dtype="<i4", count=nnz, offset=pos)
    pos += cols.nbytes
    values = None
    if flags & 1:
        values = np.frombuffer(data, dtype="<f8", count=nnz, offset=pos).copy()
    return InteractionMatrix(int(n_rows), int(n_cols), offsets.copy(), cols.copy(), values)


def write_matrix(m: InteractionMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_matrix_bytes(m))


def read_matrix(path) -> InteractionMatrix:
    with open(path, "rb") as fh:
        return read_matrix_bytes(fh.read())


def dense_to_weights(dense: np.ndarray, *, drop_below: float = 1e-12) -> SparseWeights:
    """Sparsify a dense square weight matrix, dropping tiny entries."""
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise ValueError("expected a square matrix")
    n = dense.shape[0]
    mask = np.abs(dense) >= drop_below
    np.fill_diagonal(mask, False)
    rows, cols = np.nonzero(mask)
    offsets = np.zeros(n + 1, dtype=OFFSET_DTYPE)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return SparseWeights(n, n, offsets, cols.astype(INDEX_DTYPE), dense[rows, cols])


def as_weights(m: InteractionMatrix) -> SparseWeights:
    if isinstance(m, SparseWeights):
        return m
    values = m.value_array() if m.values is None else m.values
    return SparseWeights(m.n_rows, m.n_cols, m.row_offsets, m.col_indices, values)
