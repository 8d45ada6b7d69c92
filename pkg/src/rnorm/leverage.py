"""Leverage scores of tall matrices via a sketched orthogonalizer.

The leverage score of row ``i`` is the squared norm of the i-th row of any
orthonormal basis of the column space.  Rather than orthonormalizing the
full matrix, a left Gaussian embedding compresses it, the triangular factor
``R`` of the compressed QR serves as an approximate orthogonalizer, and the
adaptive row-norm estimator runs on the composed operator ``A R^{-1}``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ParameterError
from .operators import TriangularFactor, as_dense, compose_right_solve
from .rownorm import estimate_rownorms_adaptive, row_sq_norms
from .sketch import STREAM_EMBED, STREAM_PROBE, STREAM_RANGE, gaussian_block


@dataclass
class LeverageReport:
    """Per-row leverage estimates with sketch and query provenance.

    ``ose_epsilon_hint`` is the rough one-sigma distortion scale
    ``sqrt(n_cols / embed_rows)`` of the left embedding, for use by
    statistical checks; it is not a guaranteed bound.  Query counts are
    totals against the underlying operator and include the ``embed_rows``
    transpose applications spent building the orthogonalizer.
    """

    scores: np.ndarray
    total: float
    embed_rows: int
    ose_epsilon_hint: float
    range_width: int
    probe_width: int
    seed: int
    queries_forward: int
    queries_transpose: int
    basis_rank: int
    wall_time_s: float
    streams: tuple = field(default=(STREAM_EMBED, STREAM_RANGE, STREAM_PROBE))


def build_orthogonalizer(op, embed_rows, seed):
    """Triangular factor of the left-embedded matrix, usable as R^{-1}.

    Draws a Gaussian embedding with ``embed_rows`` rows and
    N(0, 1/sqrt(embed_rows)) entries, applies it through ``embed_rows``
    transpose queries, and QR-factors the compressed matrix.  Raises
    :class:`SingularFactorError` when the input is numerically
    column-rank-deficient (the method requires full column rank).
    """
    n, d = op.shape
    if n < d or d < 1:
        raise ParameterError(f"operator must be tall (n >= d >= 1), got {n}x{d}")
    if embed_rows < d:
        raise ParameterError(f"embedding needs at least {d} rows, got {embed_rows}")
    embed_t = gaussian_block(
        n, embed_rows, seed, STREAM_EMBED, scale=1.0 / math.sqrt(embed_rows)
    )
    compressed = op.apply_transpose(embed_t).T
    r = scipy.linalg.qr(compressed, mode="r")[0][:d]
    factor = TriangularFactor.from_matrix(np.triu(r))
    if factor.condition_flag:
        from .errors import SingularFactorError

        raise SingularFactorError(
            "embedded matrix is numerically rank-deficient; leverage estimation "
            "requires full column rank (preselect independent columns first)"
        )
    return factor


def estimate_leverage_adaptive(op, embed_rows, range_width, probe_width, seed):
    """Adaptive leverage-score estimates for a tall operator.

    Builds the orthogonalizer, composes ``op`` with the triangular solve,
    and estimates the squared row norms of the composition, which
    approximate the leverage scores.  Zero rows of the input receive an
    exact zero score.
    """
    if range_width >= op.n_cols:
        raise ParameterError(
            f"range width must be below the column count {op.n_cols}, got {range_width}"
        )
    t_start = time.perf_counter()
    fwd0, tr0 = op.meter.snapshot()
    factor = build_orthogonalizer(op, embed_rows, seed)
    composed = compose_right_solve(op, factor)
    inner = estimate_rownorms_adaptive(composed, range_width, probe_width, seed)
    fwd1, tr1 = op.meter.snapshot()
    return LeverageReport(
        scores=inner.estimates,
        total=inner.total,
        embed_rows=embed_rows,
        ose_epsilon_hint=math.sqrt(op.n_cols / embed_rows),
        range_width=range_width,
        probe_width=probe_width,
        seed=seed,
        queries_forward=fwd1 - fwd0,
        queries_transpose=tr1 - tr0,
        basis_rank=inner.basis_rank,
        wall_time_s=time.perf_counter() - t_start,
    )


def exact_leverage(a):
    """Exact leverage scores from a dense orthonormal factor (test oracle).

    Rank-deficient input is handled by truncating the factor at the
    numerical rank, so the scores always sum to rank(a).
    """
    dense = as_dense(a)
    u, s, _ = np.linalg.svd(dense, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(dense.shape[0])
    rank = int(np.count_nonzero(s > s[0] * max(dense.shape) * np.finfo(np.float64).eps))
    return row_sq_norms(u[:, :rank])
