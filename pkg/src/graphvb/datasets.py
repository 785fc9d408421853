"""Data generation and ingestion for the two experiment families:
Kronecker-product random graphs carrying bandlimited signals, and
sensor-network measurements on a Harary communication graph.

Every generator is deterministic given its seed.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import networkx as nx

from .errors import EigenFailure, InvalidParams, ParseError, TooFewSnapshots
from .graphs import LaplacianEstimate, SamplingOperator, WeightedGraph

logger = logging.getLogger(__name__)

# 3x3 seed of connection probabilities used by the synthetic scenario.
DEFAULT_SEED_MATRIX = np.array([
    [0.6, 0.1, 0.7],
    [0.3, 0.1, 0.5],
    [0.0, 1.0, 0.1],
])


@dataclass(frozen=True)
class KroneckerSpec:
    """Kronecker-power random-graph recipe: a probability seed matrix raised
    to a Kronecker power, then Bernoulli-sampled."""

    seed_matrix: np.ndarray = field(default_factory=lambda: DEFAULT_SEED_MATRIX.copy())
    kron_order: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        p0 = np.asarray(self.seed_matrix, dtype=np.float64)
        if p0.ndim != 2 or p0.shape[0] != p0.shape[1]:
            raise InvalidParams("seed matrix must be square")
        if np.any(p0 < 0) or np.any(p0 > 1):
            raise InvalidParams("seed entries must be probabilities in [0, 1]")
        if self.kron_order < 1:
            raise InvalidParams("kron_order must be >= 1")
        object.__setattr__(self, "seed_matrix", p0)


@dataclass(frozen=True)
class BandlimitedSpec:
    """Low-frequency signal recipe: random combinations of the eigenvectors
    of the smallest Laplacian eigenvalues, plus white noise at a target SNR."""

    omega: int
    K: int
    snr_db: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.omega < 1:
            raise InvalidParams("omega must be >= 1")
        if self.K < 1:
            raise InvalidParams("K must be >= 1")


@dataclass(frozen=True)
class SensorDataset:
    """Ingested sensor measurements: one row per snapshot, one column per sensor."""

    n_sensors: int
    snapshots: np.ndarray
    harary_connectivity: int = 0


def kronecker_probability_matrix(spec: KroneckerSpec) -> np.ndarray:
    """kron_order-fold Kronecker power of the seed matrix."""
    p = spec.seed_matrix
    for _ in range(spec.kron_order - 1):
        p = np.kron(p, spec.seed_matrix)
    return p


def sample_adjacency(P: np.ndarray, rng_seed: int) -> WeightedGraph:
    """Independent Bernoulli draw per entry, symmetrized by logical OR and
    with the diagonal zeroed, yielding a simple 0/1 graph."""
    P = np.asarray(P, dtype=np.float64)
    if np.any(P < 0) or np.any(P > 1):
        raise InvalidParams("probabilities must lie in [0, 1]")
    rng = np.random.default_rng(rng_seed)
    draw = (rng.random(P.shape) < P).astype(np.float64)
    w = np.maximum(draw, draw.T)
    np.fill_diagonal(w, 0.0)
    return WeightedGraph(w)


def generate_bandlimited_signals(
    L: LaplacianEstimate, spec: BandlimitedSpec
) -> tuple[np.ndarray, np.ndarray, float]:
    """Clean and noisy snapshot matrices (K x N) plus the noise variance.

    Each clean snapshot is a standard-normal combination of the eigenvectors
    belonging to the omega smallest eigenvalues; the noise variance is chosen
    so the mean per-entry signal power over the generated batch sits at the
    requested SNR.
    """
    m = L.values
    n = L.n_vertices
    if spec.omega > n:
        raise InvalidParams(f"omega={spec.omega} exceeds graph size {n}")
    sym = 0.5 * (m + m.T)
    try:
        eigvals, eigvecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    basis = eigvecs[:, : spec.omega]  # eigh returns ascending eigenvalues
    rng = np.random.default_rng(spec.rng_seed)
    coeffs = rng.standard_normal((spec.K, spec.omega))
    clean = coeffs @ basis.T
    mean_power = float(np.mean(clean * clean))
    noise_var = mean_power / (10.0 ** (spec.snr_db / 10.0))
    noisy = clean + rng.standard_normal(clean.shape) * math.sqrt(noise_var)
    return clean, noisy, noise_var


def harary_graph(n: int, connectivity: int) -> WeightedGraph:
    """Classical minimal P-connected graph on n vertices with unit weights."""
    if not 2 <= connectivity < n:
        raise InvalidParams(f"need 2 <= connectivity < n, got ({connectivity}, {n})")
    g = nx.generators.harary_graph.hkn_harary_graph(connectivity, n)
    w = nx.to_numpy_array(g, nodelist=range(n), dtype=np.float64)
    return WeightedGraph(w)


def load_sensor_csv(path, expected_sensors: int, max_snapshots: int) -> SensorDataset:
    """Read a snapshot-per-row CSV, dropping rows with missing or non-numeric
    cells, truncated to max_snapshots rows."""
    rows: list[list[float]] = []
    dropped = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for rownum, rec in enumerate(reader, start=1):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if len(rec) != expected_sensors:
                if rownum == 1:
                    # tolerate a header line
                    continue
                dropped += 1
                logger.warning("%s: row %d has %d cells, expected %d; dropped",
                               path, rownum, len(rec), expected_sensors)
                continue
            try:
                values = [float(cell) for cell in rec]
            except ValueError:
                if rownum == 1:
                    continue
                dropped += 1
                logger.warning("%s: row %d has a non-numeric cell; dropped", path, rownum)
                continue
            if any(not math.isfinite(v) for v in values):
                dropped += 1
                logger.warning("%s: row %d has a non-finite cell; dropped", path, rownum)
                continue
            rows.append(values)
            if len(rows) >= max_snapshots:
                break
    if dropped:
        logger.warning("%s: dropped %d malformed rows", path, dropped)
    if not rows:
        raise TooFewSnapshots(f"{path}: no usable snapshot rows")
    return SensorDataset(n_sensors=expected_sensors, snapshots=np.array(rows))


def random_sampling_operator(n: int, K: int, M: int, rng_seed: int) -> SamplingOperator:
    """Uniformly select M distinct vertices once and reuse the selection for
    every snapshot."""
    if not 1 <= M <= n:
        raise InvalidParams(f"need 1 <= M <= n, got M={M}, n={n}")
    if K < 1:
        raise InvalidParams("K must be >= 1")
    rng = np.random.default_rng(rng_seed)
    chosen = rng.choice(n, size=M, replace=False)
    return SamplingOperator(n_vertices=n, selections=tuple(chosen.copy() for _ in range(K)))
