"""Declarative experiment runner: sweeps sampling sizes, bandwidths, and
seeds over the synthetic and sensor-network scenarios, with two internal
reference baselines (known-topology inference and zero-filled samples), and
writes deterministic, plot-ready artifacts.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .datasets import (
    BandlimitedSpec,
    KroneckerSpec,
    generate_bandlimited_signals,
    harary_graph,
    kronecker_probability_matrix,
    load_sensor_csv,
    random_sampling_operator,
    sample_adjacency,
)
from .engine import VBConfig, run_vb, trace_to_csv
from .errors import ConfigError, GraphVBError
from .graphs import StackedObservations, laplacian_from_weights
from .metrics import empirical_snr_db, nmse_laplacian, nmse_signal

logger = logging.getLogger(__name__)

SCENARIOS = ("synthetic_kronecker", "temperature_harary", "custom_csv")

# Seed-stream separation offsets so the graph, signal, and sampling draws
# come from distinct generator states even with the same base seed.
_SIGNAL_SEED_OFFSET = 10_000
_SAMPLING_SEED_OFFSET = 20_000


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    sweep: tuple[int, ...]
    omegas: tuple[int, ...]
    K: int
    snr_db: float
    seeds: tuple[int, ...]
    vb: VBConfig = field(default_factory=VBConfig)
    output_dir: str = "results"
    kron_order: int = 4
    harary_connectivities: tuple[int, ...] = (5,)
    ks: tuple[int, ...] = ()  # snapshot-count sweep; defaults to (K,)
    n_sensors: int = 54
    csv_path: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not self.sweep:
            raise ConfigError("sweep must contain at least one sample count")
        if not self.seeds:
            raise ConfigError("seeds must contain at least one seed")
        if not self.omegas:
            raise ConfigError("omegas must contain at least one bandwidth")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        n = self.n_vertices
        for m in self.sweep:
            if not 1 <= m <= n:
                raise ConfigError(f"sweep value {m} outside [1, {n}]")
        for w in self.omegas:
            if not 1 <= w <= n:
                raise ConfigError(f"omega {w} outside [1, {n}]")
        if self.scenario == "custom_csv" and not self.csv_path:
            raise ConfigError("custom_csv scenario requires csv_path")

    @property
    def n_vertices(self) -> int:
        if self.scenario == "synthetic_kronecker":
            return 3 ** self.kron_order
        return self.n_sensors

    @property
    def snapshot_counts(self) -> tuple[int, ...]:
        return self.ks if self.ks else (self.K,)


@dataclass(frozen=True)
class CellSpec:
    """One experiment cell: everything needed to run it in isolation."""

    scenario: str
    m: int
    omega: int
    harary_p: int
    k: int
    seed: int
    n: int
    snr_db: float
    kron_order: int
    csv_path: str | None
    vb: VBConfig

    @property
    def cell_id(self) -> str:
        return f"M{self.m}_w{self.omega}_P{self.harary_p}_K{self.k}_s{self.seed}"


_ROW_FIELDS = (
    "scenario", "M", "omega", "harary_p", "K", "seed", "status",
    "nmse_vb", "nmse_laplacian", "nmse_zero_fill", "nmse_oracle_laplacian",
    "iterations", "noise_var_estimate", "noise_var_true", "snr_db_empirical",
    "N", "vb_epsilon", "vb_lambda_init", "vb_rho_e", "vb_xi_e",
    "vb_max_iters", "vb_rel_tol", "vb_lambda_mode",
)


@dataclass
class ResultRow:
    scenario: str
    M: int
    omega: int
    harary_p: int
    K: int
    seed: int
    status: str = "ok"
    nmse_vb: float | None = None
    nmse_laplacian: float | None = None
    nmse_zero_fill: float | None = None
    nmse_oracle_laplacian: float | None = None
    iterations: int | None = None
    noise_var_estimate: float | None = None
    noise_var_true: float | None = None
    snr_db_empirical: float | None = None
    N: int = 0
    vb_epsilon: float = 0.0
    vb_lambda_init: float = 0.0
    vb_rho_e: float = 0.0
    vb_xi_e: float = 0.0
    vb_max_iters: int = 0
    vb_rel_tol: float = 0.0
    vb_lambda_mode: str = ""
    trace: list = field(default_factory=list)


def _cell_data(spec: CellSpec):
    """Ground-truth Laplacian plus clean/noisy snapshot matrices for a cell."""
    if spec.scenario == "synthetic_kronecker":
        prob = kronecker_probability_matrix(
            KroneckerSpec(kron_order=spec.kron_order, rng_seed=spec.seed)
        )
        graph = sample_adjacency(prob, spec.seed)
        lap = laplacian_from_weights(graph)
        clean, noisy, noise_var = generate_bandlimited_signals(
            lap,
            BandlimitedSpec(omega=spec.omega, K=spec.k, snr_db=spec.snr_db,
                            rng_seed=spec.seed + _SIGNAL_SEED_OFFSET),
        )
        return lap, clean, noisy, noise_var

    graph = harary_graph(spec.n, spec.harary_p)
    lap = laplacian_from_weights(graph)
    if spec.csv_path:
        data = load_sensor_csv(spec.csv_path, spec.n, max_snapshots=spec.k)
        clean = data.snapshots[: spec.k]
        if clean.shape[0] < spec.k:
            logger.warning("csv supplied only %d snapshots, cell wants %d",
                           clean.shape[0], spec.k)
        rng = np.random.default_rng(spec.seed + _SIGNAL_SEED_OFFSET)
        mean_power = float(np.mean(clean * clean))
        noise_var = mean_power / (10.0 ** (spec.snr_db / 10.0))
        noisy = clean + rng.standard_normal(clean.shape) * math.sqrt(noise_var)
    else:
        clean, noisy, noise_var = generate_bandlimited_signals(
            lap,
            BandlimitedSpec(omega=spec.omega, K=spec.k, snr_db=spec.snr_db,
                            rng_seed=spec.seed + _SIGNAL_SEED_OFFSET),
        )
    return lap, clean, noisy, noise_var


def run_cell(spec: CellSpec) -> ResultRow:
    """Run one (M, omega, connectivity, K, seed) cell: data generation, the
    full inference run, the known-topology reference run, and the zero-fill
    baseline. Failures are captured in the status column."""
    vb = spec.vb
    row = ResultRow(
        scenario=spec.scenario, M=spec.m, omega=spec.omega, harary_p=spec.harary_p,
        K=spec.k, seed=spec.seed, N=spec.n,
        vb_epsilon=vb.epsilon, vb_lambda_init=vb.lambda_init, vb_rho_e=vb.rho_e,
        vb_xi_e=vb.xi_e, vb_max_iters=vb.max_iters, vb_rel_tol=vb.rel_tol,
        vb_lambda_mode=vb.lambda_mode,
    )
    try:
        lap_true, clean, noisy, noise_var = _cell_data(spec)
        k_actual = clean.shape[0]
        op = random_sampling_operator(spec.n, k_actual, spec.m,
                                      spec.seed + _SAMPLING_SEED_OFFSET)
        obs = StackedObservations(op.gather(noisy.reshape(-1)), op)

        zero_fill = op.scatter(obs.y).reshape(k_actual, spec.n)
        row.nmse_zero_fill = nmse_signal(zero_fill, clean)
        row.noise_var_true = noise_var
        row.snr_db_empirical = empirical_snr_db(clean, noisy)

        state = run_vb(obs, op, vb, truth=clean)
        row.nmse_vb = nmse_signal(state.signal.mu_matrix(), clean)
        row.nmse_laplacian = nmse_laplacian(state.laplacian, lap_true)
        row.iterations = state.iteration
        row.noise_var_estimate = state.noise.variance_estimate
        row.trace = state.trace

        oracle = run_vb(obs, op, vb, laplacian_init=lap_true, update_edges=False)
        row.nmse_oracle_laplacian = nmse_signal(oracle.signal.mu_matrix(), clean)
    except GraphVBError as exc:
        row.status = f"failed: {type(exc).__name__}: {exc}"
    return row


def build_cells(config: ExperimentConfig) -> list[CellSpec]:
    """Canonically ordered cell list for a config."""
    cells = []
    if config.scenario == "synthetic_kronecker":
        for m in sorted(config.sweep):
            for w in sorted(config.omegas):
                for seed in sorted(config.seeds):
                    cells.append(CellSpec(
                        scenario=config.scenario, m=m, omega=w, harary_p=0,
                        k=config.K, seed=seed, n=config.n_vertices,
                        snr_db=config.snr_db, kron_order=config.kron_order,
                        csv_path=None, vb=config.vb,
                    ))
    else:
        for m in sorted(config.sweep):
            for p in sorted(config.harary_connectivities):
                for k in sorted(config.snapshot_counts):
                    for seed in sorted(config.seeds):
                        cells.append(CellSpec(
                            scenario=config.scenario, m=m, omega=config.omegas[0],
                            harary_p=p, k=k, seed=seed, n=config.n_vertices,
                            snr_db=config.snr_db, kron_order=config.kron_order,
                            csv_path=config.csv_path, vb=config.vb,
                        ))
    return cells


def run_experiment(config: ExperimentConfig, max_parallelism: int = 1) -> list[ResultRow]:
    """Run every cell of the config; cells are independent and may run in
    parallel, but the returned rows are always in canonical order."""
    cells = build_cells(config)
    if max_parallelism > 1:
        with ProcessPoolExecutor(max_workers=max_parallelism) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(cell) for cell in cells]
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(rows: list[ResultRow], output_dir) -> dict:
    """Write results.csv (one row per cell), summary.json (per-sweep-point
    medians over seeds), and one per-iteration trace CSV per successful cell.
    Returns the summary dictionary."""
    if not rows:
        raise ConfigError("no result rows to report")
    os.makedirs(output_dir, exist_ok=True)
    results_path = os.path.join(output_dir, "results.csv")
    with open(results_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_ROW_FIELDS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(getattr(row, f)) for f in _ROW_FIELDS) + "\n")

    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.scenario, row.M, row.omega, row.harary_p, row.K), []).append(row)
    summary = {"groups": []}
    for key in sorted(groups):
        members = groups[key]
        ok = [r for r in members if r.status == "ok"]

        def median(attr):
            vals = [getattr(r, attr) for r in ok if getattr(r, attr) is not None]
            return float(np.median(vals)) if vals else None

        summary["groups"].append({
            "scenario": key[0], "M": key[1], "omega": key[2],
            "harary_p": key[3], "K": key[4],
            "n_seeds": len(members), "n_ok": len(ok),
            "median_nmse_vb": median("nmse_vb"),
            "median_nmse_laplacian": median("nmse_laplacian"),
            "median_nmse_zero_fill": median("nmse_zero_fill"),
            "median_nmse_oracle_laplacian": median("nmse_oracle_laplacian"),
            "median_noise_var_estimate": median("noise_var_estimate"),
        })
    with open(os.path.join(output_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for row in rows:
        if row.trace:
            cell_id = f"M{row.M}_w{row.omega}_P{row.harary_p}_K{row.K}_s{row.seed}"
            trace_to_csv(row.trace, os.path.join(output_dir, f"trace_{cell_id}.csv"))
    return summary


_CONFIG_KEYS = {
    "scenario", "sweep", "omegas", "K", "snr_db", "seeds", "vb", "output_dir",
    "kron_order", "harary_connectivities", "ks", "n_sensors", "csv_path",
}
_VB_KEYS = {"epsilon", "lambda_init", "rho_e", "xi_e", "max_iters", "rel_tol", "lambda_mode"}


def load_config(path) -> ExperimentConfig:
    """Parse a JSON config file; unknown keys are rejected so typos fail loudly."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    vb_raw = raw.pop("vb", {})
    if not isinstance(vb_raw, dict):
        raise ConfigError("vb must be an object")
    unknown_vb = set(vb_raw) - _VB_KEYS
    if unknown_vb:
        raise ConfigError(f"vb: unknown keys {sorted(unknown_vb)}")
    try:
        vb = VBConfig(**vb_raw)
        for key in ("sweep", "omegas", "seeds", "harary_connectivities", "ks"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return ExperimentConfig(vb=vb, **raw)
    except (TypeError, GraphVBError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def override_seeds(config: ExperimentConfig, seeds: tuple[int, ...]) -> ExperimentConfig:
    return replace(config, seeds=seeds)
