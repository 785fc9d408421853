"""Evaluation metrics: normalized reconstruction errors and empirical SNR."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, ZeroReference


@dataclass
class ExperimentResult:
    """Metrics and provenance for one experiment cell."""

    nmse_signal: float
    nmse_laplacian: float
    iterations: int
    noise_var_estimate: float
    trace: list = field(default_factory=list)


def nmse_signal(estimates: np.ndarray, truth: np.ndarray) -> float:
    """Snapshot-averaged normalized squared error:
    mean over k of ||est_k - true_k||^2 / ||true_k||^2."""
    est = np.asarray(estimates, dtype=np.float64)
    ref = np.asarray(truth, dtype=np.float64)
    if est.shape != ref.shape:
        raise DimensionMismatch(f"shape mismatch: {est.shape} vs {ref.shape}")
    if est.ndim == 1:
        est = est[None, :]
        ref = ref[None, :]
    denom = np.sum(ref * ref, axis=1)
    if np.any(denom == 0.0):
        raise ZeroReference("a reference snapshot is identically zero")
    num = np.sum((est - ref) ** 2, axis=1)
    return float(np.mean(num / denom))


def nmse_laplacian(estimate, truth) -> float:
    """Squared Frobenius error of the estimate normalized by the reference."""
    est = np.asarray(getattr(estimate, "values", estimate), dtype=np.float64)
    ref = np.asarray(getattr(truth, "values", truth), dtype=np.float64)
    if est.shape != ref.shape:
        raise DimensionMismatch(f"shape mismatch: {est.shape} vs {ref.shape}")
    denom = float(np.sum(ref * ref))
    if denom == 0.0:
        raise ZeroReference("reference matrix is identically zero")
    return float(np.sum((est - ref) ** 2)) / denom


def empirical_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    """10 log10 of total signal energy over total perturbation energy."""
    c = np.asarray(clean, dtype=np.float64)
    n = np.asarray(noisy, dtype=np.float64)
    if c.shape != n.shape:
        raise DimensionMismatch(f"shape mismatch: {c.shape} vs {n.shape}")
    noise_energy = float(np.sum((n - c) ** 2))
    if noise_energy == 0.0:
        raise ZeroReference("noise is identically zero")
    return 10.0 * np.log10(float(np.sum(c * c)) / noise_energy)
