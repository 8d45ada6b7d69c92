"""Seeded Gaussian sketches, QR orthonormalization, and embedding diagnostics.

All randomness in the package flows through :func:`generator`, a
counter-based Philox generator keyed by a ``(seed, stream)`` pair.  Distinct
streams under one seed are independent; the same pair regenerates identical
bits on one platform.  Fixed stream ids keep the different random objects of
one estimation run (range sketch, residual probe, subspace embedding, ...)
independent without seed bookkeeping at call sites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError, ParameterError

# Stream ids, one per random object a run may draw.
STREAM_RANGE = 0  # range-finding sketch (unscaled)
STREAM_PROBE = 1  # residual probe / plain projection (scaled)
STREAM_EMBED = 2  # left subspace embedding for the orthogonalizer
STREAM_ROTATION = 3  # rotations for synthetic test matrices
STREAM_MOMENT = 4  # Monte-Carlo moment checks

_MASK64 = (1 << 64) - 1

#: Relative cutoff under which trailing QR diagonal entries are treated as zero.
RANK_TOL = 1e-12


def generator(seed, stream=0):
    """Return a ``numpy.random.Generator`` for the given (seed, stream) pair.

    The bit generator is Philox with the 128-bit key ``(seed, stream)``;
    Gaussian variates are produced by NumPy's ziggurat ``standard_normal``,
    which is fixed for a given NumPy release line.
    """
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def gaussian_block(rows, cols, seed, stream=0, scale=1.0):
    """Draw a ``rows x cols`` matrix with i.i.d. N(0, scale^2) entries.

    Parameters
    ----------
    rows, cols : int
        Block shape, both at least 1.
    seed, stream : int
        Key of the random stream; identical keys reproduce identical blocks,
        distinct streams are independent under one seed.
    scale : float
        Standard deviation of each entry.
    """
    if rows < 1 or cols < 1:
        raise ParameterError(f"block shape must be positive, got {rows}x{cols}")
    block = generator(seed, stream).standard_normal((rows, cols))
    if scale != 1.0:
        block *= scale
    return block


@dataclass(frozen=True)
class SketchPair:
    """Widths and seed of the paired range-finding and residual-probe sketches.

    The range sketch is left unscaled: only its column span enters the
    estimators, so any positive scaling would produce the same basis.  The
    probe has i.i.d. N(0, 1/sqrt(probe_width)) entries, which makes the
    squared row norms of a probed block unbiased estimates of the squared
    row norms of the probed matrix.

    The analyzed regime keeps ``probe_width <= range_width``; wider probes
    are accepted and simply fall outside the sharpest bounds.
    """

    range_width: int
    probe_width: int
    seed: int

    def __post_init__(self):
        if self.range_width < 1 or self.probe_width < 1:
            raise ParameterError(
                f"sketch widths must be positive, got range_width={self.range_width}, "
                f"probe_width={self.probe_width}"
            )

    @property
    def probe_scale(self):
        return 1.0 / math.sqrt(self.probe_width)

    def draw_range(self, dim):
        """The unscaled range-finding sketch, ``dim x range_width``."""
        return gaussian_block(dim, self.range_width, self.seed, STREAM_RANGE)

    def draw_probe(self, dim):
        """The scaled residual probe, ``dim x probe_width``."""
        return gaussian_block(
            dim, self.probe_width, self.seed, STREAM_PROBE, scale=self.probe_scale
        )


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal columns spanning the numerical range of a sketched block."""

    q: np.ndarray
    rank_used: int

    @property
    def width(self):
        return self.q.shape[1]


def orthonormalize(m, rel_tol=RANK_TOL):
    """Orthonormal basis of the numerical range of ``m`` via pivoted QR.

    Columns whose pivoted R-diagonal falls below ``rel_tol`` times the
    leading diagonal entry are dropped, so rank-deficient input yields a
    thinner basis instead of failing.  The returned columns satisfy
    ``max|Q^T Q - I| <= 1e-10``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise InputError(f"expected a matrix, got {m.ndim}-dimensional input")
    if m.size and not np.all(np.isfinite(m)):
        raise InputError("matrix to orthonormalize contains non-finite entries")
    if m.shape[1] == 0:
        return OrthonormalBasis(np.zeros((m.shape[0], 0)), 0)
    q, r, _ = scipy.linalg.qr(m, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        # pivoting makes the diagonal magnitudes non-increasing
        rank = int(np.count_nonzero(diag > rel_tol * diag[0]))
    return OrthonormalBasis(np.ascontiguousarray(q[:, :rank]), rank)


def check_jl_moment(r, trials, seed):
    """Monte-Carlo estimate of E(||Gx||^2 - 1)^2 for a unit vector x.

    ``G`` has i.i.d. N(0, 1/sqrt(r)) entries; by rotation invariance ``Gx``
    has the same distribution for every unit ``x``, so the estimate is
    computed from ``||g||^2`` with ``g ~ N(0, I_r / r)``.  The analytic
    value is 2/r.
    """
    if r < 1:
        raise ParameterError(f"projection width must be positive, got {r}")
    if trials < 10_000:
        raise ParameterError(f"need at least 10^4 trials, got {trials}")
    gen = generator(seed, STREAM_MOMENT)
    chunk = max(1, 4_000_000 // r)
    acc = 0.0
    remaining = trials
    while remaining > 0:
        take = min(chunk, remaining)
        g = gen.standard_normal((take, r))
        z = np.einsum("ij,ij->i", g, g) / r
        acc += float(np.sum((z - 1.0) ** 2))
        remaining -= take
    return acc / trials


def jlt_distortion_profile(g, vectors):
    """Worst relative distortion of squared lengths under right-projection.

    Parameters
    ----------
    g : ndarray, shape (d, r)
        Projection block with N(0, 1/sqrt(r)) entries.
    vectors : ndarray, shape (n, d)
        Row vectors to project.  Zero rows are excluded from the maximum.

    Returns
    -------
    float
        ``max_i |  ||x_i g||^2 - ||x_i||^2 | / ||x_i||^2`` over nonzero rows,
        or 0.0 if every row is zero.
    """
    g = np.asarray(g, dtype=np.float64)
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if g.ndim != 2 or vectors.shape[1] != g.shape[0]:
        raise InputError(
            f"incompatible shapes: vectors {vectors.shape} vs projection {g.shape}"
        )
    base = np.einsum("ij,ij->i", vectors, vectors)
    proj = vectors @ g
    mapped = np.einsum("ij,ij->i", proj, proj)
    nonzero = base > 0.0
    if not np.any(nonzero):
        return 0.0
    return float(np.max(np.abs(mapped[nonzero] - base[nonzero]) / base[nonzero]))
