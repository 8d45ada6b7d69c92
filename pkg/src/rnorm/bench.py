"""Synthetic power-law test matrices and the error-vs-budget sweep harness.

A sweep runs both estimators over a grid of spectral decays and query
budgets under an equal-budget policy: the adaptive method spends four block
multiplications, so it gets width ``budget // 4`` for each of its sketches
while the plain projection gets the full budget as one block.  Every cell
records the exact meter reading, the worst per-row relative error, and the
relative error of the estimated squared Frobenius norm.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .operators import DenseOperator
from .rownorm import (
    estimate_rownorms_adaptive,
    estimate_rownorms_jl,
    exact_rownorms,
)
from .sketch import STREAM_ROTATION, gaussian_block

#: Fixed default seed so bare invocations are reproducible.
DEFAULT_SEED = 1729
#: Separate fixed seed for synthetic matrix construction.
DEFAULT_MATRIX_SEED = 7

_MASK64 = (1 << 64) - 1

RECORD_CSV_HEADER = "method,c,d,budget,seed,max_elem_err,frob_err,wall_time_s"
SUMMARY_CSV_HEADER = (
    "method,c,d,budget,n_seeds,"
    "mean_max_elem_err,std_max_elem_err,median_max_elem_err,"
    "mean_frob_err,std_frob_err,median_frob_err,mean_wall_time_s"
)


@dataclass(frozen=True)
class SpectrumSpec:
    """Description of a synthetic symmetric matrix with power-law spectrum."""

    d: int
    c: float
    seed: int

    def __post_init__(self):
        if self.d < 2:
            raise ParameterError(f"dimension must be at least 2, got {self.d}")
        if self.c < 0:
            raise ParameterError(f"decay exponent must be non-negative, got {self.c}")


def make_powerlaw_matrix(spec):
    """Symmetric ``d x d`` matrix whose singular values are ``i ** -c``.

    A Haar rotation ``Q`` comes from the sign-fixed QR of a seeded Gaussian
    matrix (forcing a positive R-diagonal makes the distribution the
    rotation-invariant one and the construction reproducible); the matrix is
    ``Q diag(i^-c) Q^T``, symmetrized to round-off.

    Returns the dense matrix and a fresh operator wrapping it.
    """
    z = gaussian_block(spec.d, spec.d, spec.seed, STREAM_ROTATION)
    q, r = np.linalg.qr(z)
    q = q * np.where(np.diag(r) < 0.0, -1.0, 1.0)
    lam = np.arange(1, spec.d + 1, dtype=np.float64) ** (-spec.c)
    a = (q * lam) @ q.T
    a = (a + a.T) / 2.0
    return a, DenseOperator(a)


@dataclass(frozen=True)
class SweepConfig:
    """Grid of sweep cells: spectra x budgets x repetitions x both methods."""

    c_values: tuple
    d: int
    budgets: tuple
    repetitions: int
    seed_base: int = DEFAULT_SEED
    matrix_seed: int = DEFAULT_MATRIX_SEED
    split: str = "quarters"

    def __post_init__(self):
        object.__setattr__(self, "c_values", tuple(float(c) for c in self.c_values))
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if self.split != "quarters":
            raise ParameterError(f"unknown split policy {self.split!r}")
        if not self.c_values or any(c < 0 for c in self.c_values):
            raise ParameterError("need at least one non-negative decay exponent")
        if self.d < 2:
            raise ParameterError(f"dimension must be at least 2, got {self.d}")
        if self.repetitions < 1:
            raise ParameterError(f"repetitions must be positive, got {self.repetitions}")
        if not self.budgets:
            raise ParameterError("need at least one budget")
        for b in self.budgets:
            if b % 4 != 0 or b // 4 < 1:
                raise ParameterError(
                    f"budget {b} not divisible into four positive widths"
                )
            if b // 4 >= self.d:
                raise ParameterError(f"budget {b} too large for dimension {self.d}")


@dataclass(frozen=True)
class ErrorRecord:
    """One sweep cell: errors against the exact oracle plus the meter reading."""

    method: str
    c: float
    d: int
    budget: int
    seed: int
    max_elem_err: float
    frob_err: float
    wall_time_s: float
    queries: int


def _cell_seed(seed_base, c_index, budget_index, rep):
    # deterministic, decorrelated per-cell seeds; shared by both methods of a cell
    return (seed_base + 1_000_003 * c_index + 7_919 * budget_index + 104_729 * rep) & _MASK64


def _error_metrics(estimates, exact, exact_total):
    nonzero = exact > 0.0
    max_elem = float(np.max(np.abs(estimates[nonzero] - exact[nonzero]) / exact[nonzero]))
    frob = float(abs(np.sum(estimates) - exact_total) / exact_total)
    return max_elem, frob


def run_sweep(config, jobs=1):
    """Execute every sweep cell and return records in canonical order.

    Each cell runs on a fresh operator around the shared dense matrix so the
    meter reading belongs to that cell alone; the reading must come out at
    the configured budget (the adaptive method lands on ``4 * (budget // 4)``
    by construction, which equals the budget for the divisible-by-four
    budgets the config enforces).
    """
    cells = []
    for c_index, c in enumerate(config.c_values):
        dense, _ = make_powerlaw_matrix(SpectrumSpec(config.d, c, config.matrix_seed))
        exact = exact_rownorms(dense)
        exact_total = float(np.sum(exact))
        for budget_index, budget in enumerate(config.budgets):
            for rep in range(config.repetitions):
                seed = _cell_seed(config.seed_base, c_index, budget_index, rep)
                for method in ("adaptive", "jl"):
                    cells.append((method, c, budget, seed, dense, exact, exact_total))

    def run_cell(cell):
        method, c, budget, seed, dense, exact, exact_total = cell
        op = DenseOperator(dense)
        t0 = time.perf_counter()
        if method == "adaptive":
            width = budget // 4
            report = estimate_rownorms_adaptive(op, width, width, seed)
        else:
            report = estimate_rownorms_jl(op, budget, seed)
        wall = time.perf_counter() - t0
        consumed = op.meter.total
        if consumed > budget:
            raise RuntimeError(
                f"cell ({method}, c={c}, budget={budget}) consumed {consumed} queries"
            )
        max_elem, frob = _error_metrics(report.estimates, exact, exact_total)
        return ErrorRecord(
            method=method,
            c=c,
            d=config.d,
            budget=budget,
            seed=seed,
            max_elem_err=max_elem,
            frob_err=frob,
            wall_time_s=wall,
            queries=consumed,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_cell, cells))
    else:
        records = [run_cell(cell) for cell in cells]
    records.sort(key=lambda r: (r.method, r.c, r.budget, r.seed))
    return records


@dataclass(frozen=True)
class CellSummary:
    """Per-(method, c, budget) aggregate over repetition seeds."""

    method: str
    c: float
    d: int
    budget: int
    n_seeds: int
    mean_max_elem_err: float
    std_max_elem_err: float
    median_max_elem_err: float
    mean_frob_err: float
    std_frob_err: float
    median_frob_err: float
    mean_wall_time_s: float


def summarize(records):
    """Aggregate records into plotting-ready per-cell mean/std/median rows."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.method, rec.c, rec.d, rec.budget), []).append(rec)
    out = []
    for (method, c, d, budget), recs in sorted(groups.items()):
        max_elem = np.array([r.max_elem_err for r in recs])
        frob = np.array([r.frob_err for r in recs])
        wall = np.array([r.wall_time_s for r in recs])
        ddof = 1 if len(recs) > 1 else 0
        out.append(
            CellSummary(
                method=method,
                c=c,
                d=d,
                budget=budget,
                n_seeds=len(recs),
                mean_max_elem_err=float(max_elem.mean()),
                std_max_elem_err=float(max_elem.std(ddof=ddof)),
                median_max_elem_err=float(np.median(max_elem)),
                mean_frob_err=float(frob.mean()),
                std_frob_err=float(frob.std(ddof=ddof)),
                median_frob_err=float(np.median(frob)),
                mean_wall_time_s=float(wall.mean()),
            )
        )
    return out


def fit_loglog_slope(records, metric="frob_err"):
    """Least-squares slope of log(per-budget mean error) against log(budget).

    ``records`` must already be filtered to a single method; at least three
    distinct budgets are required for a meaningful fit.
    """
    if metric not in ("frob_err", "max_elem_err"):
        raise ParameterError(f"unknown metric {metric!r}")
    if not records:
        raise ParameterError("no records to fit")
    methods = {r.method for r in records}
    if len(methods) != 1:
        raise ParameterError(f"records mix methods {sorted(methods)}; filter to one")
    by_budget = {}
    for rec in records:
        by_budget.setdefault(rec.budget, []).append(getattr(rec, metric))
    if len(by_budget) < 3:
        raise ParameterError(
            f"need at least 3 distinct budgets for a slope, got {len(by_budget)}"
        )
    budgets = np.array(sorted(by_budget), dtype=np.float64)
    means = np.array([np.mean(by_budget[int(b)]) for b in budgets])
    means = np.maximum(means, np.finfo(np.float64).tiny)
    return float(np.polyfit(np.log(budgets), np.log(means), 1)[0])


def _write_csv(path, header, rows, provenance=None):
    with open(path, "w", newline="") as fh:
        for key, value in (provenance or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(header.split(","))
        writer.writerows(rows)


def write_records_csv(path, records, provenance=None):
    """Write one row per sweep cell under the canonical header."""
    rows = [
        (r.method, r.c, r.d, r.budget, r.seed, r.max_elem_err, r.frob_err, r.wall_time_s)
        for r in records
    ]
    _write_csv(path, RECORD_CSV_HEADER, rows, provenance)


def write_summary_csv(path, records, provenance=None):
    """Write per-cell aggregates suitable for direct error-curve plotting."""
    rows = [
        (
            s.method,
            s.c,
            s.d,
            s.budget,
            s.n_seeds,
            s.mean_max_elem_err,
            s.std_max_elem_err,
            s.median_max_elem_err,
            s.mean_frob_err,
            s.std_frob_err,
            s.median_frob_err,
            s.mean_wall_time_s,
        )
        for s in summarize(records)
    ]
    _write_csv(path, SUMMARY_CSV_HEADER, rows, provenance)
