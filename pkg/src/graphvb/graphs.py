"""Core data model: weighted graphs, Laplacians, vertex-sampling operators,
stacked observations, and the block precision built from a Laplacian.

All types are immutable value objects; operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionMismatch, DomainError, InvalidParams, NotPositiveDefinite, ParseError


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected weighted graph held as a symmetric matrix with zero diagonal."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvalidParams(f"weights must be square, got shape {w.shape}")
        if not np.allclose(w, w.T, atol=1e-12):
            raise InvalidParams("weights must be symmetric")
        if np.any(np.diagonal(w) != 0.0):
            raise InvalidParams("weights must have a zero diagonal")
        object.__setattr__(self, "weights", w)

    @property
    def n_vertices(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class LaplacianEstimate:
    """Symmetric matrix with (numerically) zero row sums."""

    values: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.values, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidParams(f"Laplacian must be square, got shape {m.shape}")
        object.__setattr__(self, "values", m)

    @property
    def n_vertices(self) -> int:
        return self.values.shape[0]


def laplacian_from_weights(g: WeightedGraph) -> LaplacianEstimate:
    """L = diag(W 1) - W, with compensated row sums for the degrees."""
    w = g.weights
    degrees = np.array([math.fsum(row) for row in w])
    return LaplacianEstimate(np.diag(degrees) - w)


@dataclass(frozen=True)
class SamplingOperator:
    """Block-diagonal 0/1 selection operator, kept as per-snapshot index lists.

    Row r of block k selects vertex selections[k][r]; indices within one
    snapshot must be distinct so the operator times its adjoint is the
    identity on the observation space.
    """

    n_vertices: int
    selections: tuple[np.ndarray, ...]

    def __post_init__(self):
        sels = []
        for k, idx in enumerate(self.selections):
            a = np.asarray(idx, dtype=np.intp)
            if a.ndim != 1:
                raise InvalidParams(f"snapshot {k}: selection must be 1-D")
            if a.size and (a.min() < 0 or a.max() >= self.n_vertices):
                raise InvalidParams(f"snapshot {k}: vertex index out of range")
            if np.unique(a).size != a.size:
                raise InvalidParams(f"snapshot {k}: duplicate vertex in selection")
            sels.append(a)
        object.__setattr__(self, "selections", tuple(sels))

    @property
    def n_snapshots(self) -> int:
        return len(self.selections)

    @property
    def m_per_snapshot(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.selections)

    @property
    def m_total(self) -> int:
        return sum(self.m_per_snapshot)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for m in self.m_per_snapshot:
            out.append(acc)
            acc += m
        return tuple(out)

    @property
    def uniform(self) -> bool:
        """True when every snapshot samples the same vertex set in order."""
        first = self.selections[0]
        return all(a.shape == first.shape and np.array_equal(a, first) for a in self.selections)

    def gather(self, x: np.ndarray) -> np.ndarray:
        """Apply the operator to a stacked vector of length N*K by indexing."""
        n, k = self.n_vertices, self.n_snapshots
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (n * k,):
            raise DimensionMismatch(f"expected stacked vector of length {n * k}, got {x.shape}")
        return np.concatenate([x[j * n + idx] for j, idx in enumerate(self.selections)])

    def scatter(self, y: np.ndarray) -> np.ndarray:
        """Adjoint: spread observations back to the stacked space, zero-filled."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m_total,):
            raise DimensionMismatch(f"expected observation vector of length {self.m_total}")
        out = np.zeros(self.n_vertices * self.n_snapshots)
        pos = 0
        for j, idx in enumerate(self.selections):
            out[j * self.n_vertices + idx] = y[pos:pos + len(idx)]
            pos += len(idx)
        return out

    def dense_matrix(self) -> np.ndarray:
        """Materialized operator for small-scale testing only."""
        n, k = self.n_vertices, self.n_snapshots
        psi = np.zeros((self.m_total, n * k))
        pos = 0
        for j, idx in enumerate(self.selections):
            for r, v in enumerate(idx):
                psi[pos + r, j * n + v] = 1.0
            pos += len(idx)
        return psi


def apply_sampling(op: SamplingOperator, x: np.ndarray) -> np.ndarray:
    """Gathered product of the sampling operator with a stacked vector."""
    return op.gather(x)


@dataclass(frozen=True)
class StackedObservations:
    """Observed samples stacked across snapshots, with per-snapshot offsets."""

    y: np.ndarray
    operator: SamplingOperator

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != (self.operator.m_total,):
            raise DimensionMismatch(
                f"observations have length {y.shape}, operator expects {self.operator.m_total}"
            )
        object.__setattr__(self, "y", y)

    @property
    def snapshot_offsets(self) -> tuple[int, ...]:
        return self.operator.offsets


@dataclass(frozen=True)
class PrecisionAssembly:
    """Block-diagonal precision: identity(K) kron (L + epsilon I).

    Stores the single N x N block and its Cholesky factor; solves and
    matrix-vector products exploit the block structure.
    """

    epsilon: float
    n_snapshots: int
    block: np.ndarray
    chol: tuple = field(repr=False, default=None)

    @property
    def n_vertices(self) -> int:
        return self.block.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n, k = self.n_vertices, self.n_snapshots
        if x.shape != (n * k,):
            raise DimensionMismatch(f"expected length {n * k}, got {x.shape}")
        return (x.reshape(k, n) @ self.block).reshape(-1)

    def solve(self, x: np.ndarray) -> np.ndarray:
        n, k = self.n_vertices, self.n_snapshots
        if x.shape != (n * k,):
            raise DimensionMismatch(f"expected length {n * k}, got {x.shape}")
        return cho_solve(self.chol, x.reshape(k, n).T).T.reshape(-1)

    def full_matrix(self) -> np.ndarray:
        """Dense N*K x N*K matrix; test-scale use only."""
        return np.kron(np.eye(self.n_snapshots), self.block)


def assemble_precision(L: LaplacianEstimate, epsilon: float, K: int) -> PrecisionAssembly:
    """Build the stacked-signal precision from a Laplacian and jitter epsilon."""
    if epsilon <= 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    block = L.values + epsilon * np.eye(L.n_vertices)
    try:
        chol = cho_factor(block, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"L + {epsilon} I failed to factorize: {exc}") from exc
    return PrecisionAssembly(epsilon=epsilon, n_snapshots=K, block=block, chol=chol)


def save_matrix_csv(path, m: np.ndarray) -> None:
    """Dense matrix as CSV: header line `N,<n>`, then row-major full-precision rows."""
    m = np.asarray(m, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"N,{m.shape[0]}\n")
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    """Inverse of save_matrix_csv."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("N,"):
            raise ParseError(f"{path}: missing N header", row=1)
        n = int(header.split(",")[1])
        rows = []
        for r, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ParseError(f"{path}: bad float on row {r}", row=r) from exc
    m = np.array(rows)
    if m.shape != (n, m.shape[1]) or m.shape[1] != n:
        raise ParseError(f"{path}: expected {n}x{n} body, got {m.shape}")
    return m
