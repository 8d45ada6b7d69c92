"""Matrix-free linear operators with exact per-column query accounting.

An operator exposes its matrix only through block products ``A @ X`` and
``A.T @ X``.  Each apply on a block with ``w`` columns charges ``w`` units to
the corresponding direction of the operator's meter, so the cost of any
estimation run can be read off exactly.  Operators are immutable after
construction except for the meter, whose increments are lock-protected.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import DimensionError, InputError, ParameterError, SingularFactorError


class QueryMeter:
    """Thread-safe counter of column queries, split by direction."""

    def __init__(self):
        self._lock = threading.Lock()
        self._forward = 0
        self._transpose = 0

    def add_forward(self, w):
        with self._lock:
            self._forward += w

    def add_transpose(self, w):
        with self._lock:
            self._transpose += w

    def snapshot(self):
        """(forward, transpose) counts as an atomic pair."""
        with self._lock:
            return self._forward, self._transpose

    @property
    def forward(self):
        return self.snapshot()[0]

    @property
    def transpose(self):
        return self.snapshot()[1]

    @property
    def total(self):
        f, t = self.snapshot()
        return f + t


def _as_block(x, expected_rows, what):
    """Coerce input to a float64 column block, returning (block, was_vector)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
        squeeze = True
    elif arr.ndim == 2:
        squeeze = False
    else:
        raise DimensionError(f"{what} expects a vector or a column block, got ndim={arr.ndim}")
    if arr.shape[0] != expected_rows:
        raise DimensionError(
            f"{what} expects blocks with {expected_rows} rows, got shape {arr.shape}"
        )
    if arr.size and not np.all(np.isfinite(arr)):
        raise InputError(f"{what} received non-finite entries")
    return arr, squeeze


class QueryableOperator:
    """Base class: a linear map accessible only through metered block products.

    Subclasses implement ``_apply`` / ``_apply_transpose`` on 2-D float64
    blocks.  ``to_dense`` materializes the matrix for oracles and small-scale
    verification; it never touches the meter.
    """

    def __init__(self, n_rows, n_cols):
        if n_rows < 1 or n_cols < 1:
            raise ParameterError(f"operator shape must be positive, got {n_rows}x{n_cols}")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.meter = QueryMeter()

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def apply(self, x):
        """Compute ``A @ x`` and charge one forward unit per column of ``x``."""
        block, squeeze = _as_block(x, self.n_cols, "apply")
        out = self._apply(block)
        self.meter.add_forward(block.shape[1])
        return out[:, 0] if squeeze else out

    def apply_transpose(self, x):
        """Compute ``A.T @ x`` and charge one transpose unit per column."""
        block, squeeze = _as_block(x, self.n_rows, "apply_transpose")
        out = self._apply_transpose(block)
        self.meter.add_transpose(block.shape[1])
        return out[:, 0] if squeeze else out

    def _apply(self, block):
        raise NotImplementedError

    def _apply_transpose(self, block):
        raise NotImplementedError

    def to_dense(self):
        raise NotImplementedError


class DenseOperator(QueryableOperator):
    """Operator backed by an in-memory dense matrix."""

    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=np.float64, order="C")
        if matrix.ndim != 2:
            raise DimensionError(f"dense backing must be 2-D, got ndim={matrix.ndim}")
        if matrix.size and not np.all(np.isfinite(matrix)):
            raise InputError("dense backing contains non-finite entries")
        super().__init__(*matrix.shape)
        matrix.setflags(write=False)
        self._matrix = matrix

    def _apply(self, block):
        return self._matrix @ block

    def _apply_transpose(self, block):
        return self._matrix.T @ block

    def to_dense(self):
        return self._matrix


class SparseOperator(QueryableOperator):
    """Operator backed by a scipy sparse matrix (kept sparse throughout)."""

    def __init__(self, matrix):
        csr = scipy.sparse.csr_matrix(matrix).astype(np.float64)
        if csr.data.size and not np.all(np.isfinite(csr.data)):
            raise InputError("sparse backing contains non-finite entries")
        super().__init__(*csr.shape)
        self._matrix = csr
        self._matrix_t = csr.T.tocsr()

    def _apply(self, block):
        return np.asarray(self._matrix @ block)

    def _apply_transpose(self, block):
        return np.asarray(self._matrix_t @ block)

    def to_dense(self):
        return self._matrix.toarray()


@dataclass(frozen=True)
class PairSet:
    """Ordered list of row index pairs (i, j), i != j, no duplicates.

    Each pair stands for the implicit difference row ``e_i - e_j``; a pair
    and its reversal measure the same distance, so duplicates are rejected
    regardless of orientation.  Input order is preserved.
    """

    pairs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pairs)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise InputError(f"pairs must form a nonempty (n, 2) array, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            cast = arr.astype(np.int64)
            if np.any(cast != arr):
                raise InputError("pair indices must be integers")
            arr = cast
        arr = arr.astype(np.int64, copy=True)
        if np.any(arr < 0):
            raise InputError("pair indices must be non-negative")
        if np.any(arr[:, 0] == arr[:, 1]):
            raise InputError("pairs must join two distinct rows (i != j)")
        unordered = np.sort(arr, axis=1)
        if np.unique(unordered, axis=0).shape[0] != arr.shape[0]:
            raise InputError("duplicate pairs are not allowed (orientation ignored)")
        arr.setflags(write=False)
        object.__setattr__(self, "pairs", arr)

    @classmethod
    def all_pairs(cls, n_points):
        """All unordered pairs of ``n_points`` rows in lexicographic order."""
        if n_points < 2:
            raise ParameterError(f"need at least 2 points for pairs, got {n_points}")
        ii, jj = np.triu_indices(n_points, k=1)
        return cls(np.column_stack([ii, jj]))

    @property
    def n_pairs(self):
        return self.pairs.shape[0]

    @property
    def left(self):
        return self.pairs[:, 0]

    @property
    def right(self):
        return self.pairs[:, 1]

    def max_index(self):
        return int(self.pairs.max())


@dataclass(frozen=True)
class TriangularFactor:
    """Upper-triangular factor with a numerical-singularity flag.

    ``condition_flag`` is set when the smallest diagonal magnitude falls
    below ``singularity_tol`` times the largest; flagged factors refuse to
    participate in solves.
    """

    r: np.ndarray
    condition_flag: bool
    singularity_tol: float = 1e-12

    @classmethod
    def from_matrix(cls, r, singularity_tol=1e-12):
        r = np.array(r, dtype=np.float64, order="C")
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise DimensionError(f"triangular factor must be square, got shape {r.shape}")
        if np.any(np.tril(r, k=-1) != 0.0):
            raise InputError("factor has nonzero entries below the diagonal")
        if not np.all(np.isfinite(r)):
            raise InputError("triangular factor contains non-finite entries")
        diag = np.abs(np.diag(r))
        dmax = float(diag.max()) if diag.size else 0.0
        flagged = dmax == 0.0 or bool(diag.min() < singularity_tol * dmax)
        r.setflags(write=False)
        return cls(r=r, condition_flag=flagged, singularity_tol=singularity_tol)

    @property
    def dim(self):
        return self.r.shape[0]


class GramOperator(QueryableOperator):
    """The symmetric map ``x -> A.T (A x)``; each column charges the wrapped
    operator one forward plus one transpose unit."""

    def __init__(self, base):
        super().__init__(base.n_cols, base.n_cols)
        self._base = base

    def _apply(self, block):
        return self._base.apply_transpose(self._base.apply(block))

    _apply_transpose = _apply

    def to_dense(self):
        dense = self._base.to_dense()
        return dense.T @ dense


class IncidenceOperator(QueryableOperator):
    """The map ``x -> B (A x)`` where B has one ``e_i - e_j`` row per pair.

    B is never materialized: the forward direction differences rows of the
    wrapped product, the transpose direction scatter-adds pair rows back,
    both in O(n_pairs * w).
    """

    def __init__(self, base, pair_set):
        if pair_set.max_index() >= base.n_rows:
            raise DimensionError(
                f"pair index {pair_set.max_index()} out of range for operator "
                f"with {base.n_rows} rows"
            )
        super().__init__(pair_set.n_pairs, base.n_cols)
        self._base = base
        self._pairs = pair_set

    @property
    def pair_set(self):
        return self._pairs

    def _apply(self, block):
        y = self._base.apply(block)
        return y[self._pairs.left] - y[self._pairs.right]

    def _apply_transpose(self, block):
        z = np.zeros((self._base.n_rows, block.shape[1]))
        np.add.at(z, self._pairs.left, block)
        np.subtract.at(z, self._pairs.right, block)
        return self._base.apply_transpose(z)

    def to_dense(self):
        dense = self._base.to_dense()
        return dense[self._pairs.left] - dense[self._pairs.right]


class RightSolveOperator(QueryableOperator):
    """The map ``x -> A (R^{-1} x)`` realized by back-substitution.

    The transpose direction is ``x -> R^{-T} (A.T x)``.  No inverse is
    formed; flagged factors are refused at construction.
    """

    def __init__(self, base, factor):
        if factor.condition_flag:
            raise SingularFactorError(
                "triangular factor is numerically singular; the matrix must have "
                "full column rank (deflate or preselect independent columns first)"
            )
        if factor.dim != base.n_cols:
            raise DimensionError(
                f"factor dimension {factor.dim} does not match operator columns {base.n_cols}"
            )
        super().__init__(base.n_rows, base.n_cols)
        self._base = base
        self._factor = factor

    def _apply(self, block):
        solved = scipy.linalg.solve_triangular(self._factor.r, block, lower=False)
        return self._base.apply(solved)

    def _apply_transpose(self, block):
        back = self._base.apply_transpose(block)
        return scipy.linalg.solve_triangular(self._factor.r, back, trans="T", lower=False)

    def to_dense(self):
        dense = self._base.to_dense()
        return scipy.linalg.solve_triangular(self._factor.r, dense.T, trans="T", lower=False).T


def compose_gram(op):
    """Wrap ``op`` as the d x d map ``x -> op.T (op x)``."""
    return GramOperator(op)


def compose_incidence(op, pair_set):
    """Wrap ``op`` as the pairwise-difference map over ``pair_set``."""
    return IncidenceOperator(op, pair_set)


def compose_right_solve(op, factor):
    """Wrap ``op`` as ``x -> op (R^{-1} x)`` for an upper-triangular factor."""
    return RightSolveOperator(op, factor)


def as_dense(a):
    """Materialize ``a`` (array or operator) as a float64 matrix.

    Oracle/verification path only; operator meters are not charged.
    """
    if isinstance(a, QueryableOperator):
        return a.to_dense()
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={arr.ndim}")
    return arr
