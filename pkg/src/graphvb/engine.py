"""Coordinate-ascent inference: iterative updates of the signal posterior,
the noise-precision posterior, and every off-diagonal Laplacian entry.

One sweep runs Gauss-Seidel style: each edge update reads the partially
updated Laplacian, writes its symmetric pair, and refreshes the two affected
diagonal entries so the zero-row-sum invariant holds after every write.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DomainError,
    EdgeUpdateSkipped,
    NonConvergent,
    NotPositiveDefinite,
    QuadratureFailure,
)
from .gcch import (
    EdgeCaseTag,
    classify_edge_case,
    edge_posterior_mean,
    linear_det_posterior_stats,
)
from .graphs import (
    LaplacianEstimate,
    PrecisionAssembly,
    SamplingOperator,
    StackedObservations,
    assemble_precision,
)
from .metrics import nmse_signal

_LAMBDA_MODES = ("positive_only", "signed")
_EDGE_PARAMETERIZATIONS = ("coupled_diagonal", "fixed_diagonal")


@dataclass(frozen=True)
class VBConfig:
    """Hyperparameters and loop controls for a run.

    edge_parameterization selects how the per-edge determinant term treats
    the diagonal entries while one off-diagonal pair varies:

    * "coupled_diagonal" (default): the diagonal follows the zero-row-sum
      constraint, making the determinant linear in the edge weight. The edge
      posterior is then the shifted-Gamma-kernel taxonomy case with the
      cross-moment data tilt kept explicit. This variant learns the topology
      at the data's scale.
    * "fixed_diagonal": all other entries (diagonal included) are held at
      their current values, making the determinant quadratic in the edge
      weight; the posterior is the bounded-support closed form with the
      precision substitution. Kept selectable for fidelity to the published
      update; its support width is proportional to the current topology
      scale, which traps the estimate near its initialization scale.

    lambda_mode selects the guard applied to the per-edge precision
    substitution (fixed_diagonal only): "positive_only" accepts the
    data-driven value only when it is positive, "signed" accepts any finite
    value (the bounded-support posterior remains proper for nonpositive
    values).

    max_mean_degree caps the trace of the learned topology at
    max_mean_degree * N after each sweep: the log-determinant barrier fixes
    the shape but not the overall scale, which is capped by convention as in
    trace-constrained Laplacian learning. Set to inf to disable.
    """

    epsilon: float = 1e-2
    lambda_init: float = 1e-2
    rho_e: float = 1e-6
    xi_e: float = 1e-6
    max_iters: int = 50
    rel_tol: float = 1e-6
    lambda_mode: str = "positive_only"
    edge_parameterization: str = "coupled_diagonal"
    max_mean_degree: float = 2.0

    def __post_init__(self):
        for name in ("epsilon", "lambda_init", "rho_e", "xi_e", "rel_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if self.lambda_mode not in _LAMBDA_MODES:
            raise DomainError(f"lambda_mode must be one of {_LAMBDA_MODES}")
        if self.edge_parameterization not in _EDGE_PARAMETERIZATIONS:
            raise DomainError(
                f"edge_parameterization must be one of {_EDGE_PARAMETERIZATIONS}"
            )
        if not self.max_mean_degree > 0:
            raise DomainError("max_mean_degree must be positive")


@dataclass(frozen=True)
class SignalPosterior:
    """Gaussian posterior of the stacked signal: mean vector and the
    block-diagonal covariance stored one N x N block per snapshot."""

    mu: np.ndarray
    sigma_blocks: np.ndarray

    @property
    def n_snapshots(self) -> int:
        return self.sigma_blocks.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.sigma_blocks.shape[1]

    def mu_matrix(self) -> np.ndarray:
        """Mean reshaped to (snapshots, vertices)."""
        return self.mu.reshape(self.n_snapshots, self.n_vertices)

    def sigma_entry(self, k: int, i: int, j: int) -> float:
        """Covariance of vertices i and j within snapshot k."""
        return float(self.sigma_blocks[k, i, j])

    def sigma_full(self) -> np.ndarray:
        """Dense stacked covariance; test-scale use only."""
        n, k = self.n_vertices, self.n_snapshots
        out = np.zeros((n * k, n * k))
        for b in range(k):
            out[b * n:(b + 1) * n, b * n:(b + 1) * n] = self.sigma_blocks[b]
        return out


@dataclass(frozen=True)
class NoisePosterior:
    """Gamma posterior of the observation-noise precision."""

    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise DomainError(f"Gamma parameters must be positive, got {self}")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance_estimate(self) -> float:
        """Point estimate of the noise variance (inverse of the mean precision)."""
        return self.rate / self.shape


@dataclass
class EdgeQuadratic:
    """Quadratic expansion of det(L + eps I) in one symmetric off-diagonal slot.

    c, d, g are the true-scale coefficients (they may saturate to 0 or inf
    for large graphs); c_n, d_n, g_n are the same coefficients rescaled by
    exp(-log_scale) so their largest magnitude is 1. Every downstream
    quantity (u, z, the posterior) is invariant under that common rescaling.
    """

    c: float
    d: float
    g: float
    c_n: float
    d_n: float
    g_n: float
    log_scale: float
    u: float
    z: float
    lam: float = math.nan


@dataclass
class IterationRecord:
    iteration: int
    rel_change: float
    alpha_mean: float
    noise_variance: float
    nmse: float | None = None
    edges_skipped: int = 0


@dataclass
class VBState:
    """Mutable state owned by a single run."""

    signal: SignalPosterior
    noise: NoisePosterior
    laplacian: LaplacianEstimate
    lam: np.ndarray
    iteration: int = 0
    trace: list[IterationRecord] = field(default_factory=list)
    tuple_sink: list | None = None
    _moment_cache: np.ndarray | None = field(default=None, repr=False)
    _moment_owner: SignalPosterior | None = field(default=None, repr=False)

    def second_moment(self) -> np.ndarray:
        """Sum over snapshots of the posterior second moment of the signal,
        an N x N matrix; cached until the signal posterior is replaced."""
        if self._moment_owner is not self.signal:
            mu2 = self.signal.mu_matrix()
            m2 = mu2.T @ mu2 + np.sum(self.signal.sigma_blocks, axis=0)
            self._moment_cache = m2
            self._moment_owner = self.signal
        return self._moment_cache


def _slogdet_with_slot(m: np.ndarray, i: int, j: int, value: float) -> tuple[float, float]:
    work = m.copy()
    work[i, j] = value
    work[j, i] = value
    sign, logabs = np.linalg.slogdet(work)
    return float(sign), float(logabs)


def extract_edge_quadratic(L: LaplacianEstimate, epsilon: float, i: int, j: int,
                           h: float = 1.0) -> EdgeQuadratic:
    """Coefficients (c, d, g) with det(L + eps I) = c l^2 + d l + g in the
    symmetric slot (i, j), all other entries (diagonal included) held fixed.

    Evaluates the determinant at slot values {0, +h, -h} and solves the
    Vandermonde system. Determinants are taken in sign/log form and shifted
    by a common scale so the coefficients stay representable at any N.
    """
    if i == j:
        raise DomainError("edge endpoints must differ")
    m = L.values + epsilon * np.eye(L.n_vertices)
    evals = [_slogdet_with_slot(m, i, j, val) for val in (0.0, h, -h)]
    finite_logs = [la for s, la in evals if s != 0.0]
    if not finite_logs:
        return EdgeQuadratic(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, math.nan, math.nan)
    log_scale = max(finite_logs)
    d0, dp, dm = (s * math.exp(la - log_scale) if s != 0.0 else 0.0 for s, la in evals)
    g_n = d0
    c_n = (dp + dm - 2.0 * d0) / (2.0 * h * h)
    d_n = (dp - dm) / (2.0 * h)

    def true_scale(x: float) -> float:
        if x == 0.0:
            return 0.0
        lg = log_scale + math.log(abs(x))
        if lg > 709.0:
            return math.copysign(math.inf, x)
        return math.copysign(math.exp(lg), x)

    scale_max = max(abs(c_n), abs(d_n), abs(g_n))
    if scale_max > 0 and abs(c_n) > 1e-12 * scale_max:
        u = d_n / (2.0 * c_n)
        z = g_n / c_n - u * u
    else:
        u = math.nan
        z = math.nan
    return EdgeQuadratic(
        c=true_scale(c_n), d=true_scale(d_n), g=true_scale(g_n),
        c_n=c_n, d_n=d_n, g_n=g_n, log_scale=log_scale, u=u, z=z,
    )


def update_signal(obs: StackedObservations, op: SamplingOperator,
                  B_mean: PrecisionAssembly, alpha_mean: float) -> SignalPosterior:
    """Gaussian-posterior refresh: covariance is the inverse of the prior
    precision plus alpha times the diagonal sampling indicator; the mean is
    that covariance applied to the scaled zero-filled observations."""
    if alpha_mean <= 0:
        raise DomainError(f"alpha_mean must be positive, got {alpha_mean}")
    n, k = op.n_vertices, op.n_snapshots
    rhs = (alpha_mean * op.scatter(obs.y)).reshape(k, n)

    def posterior_block(idx: np.ndarray) -> tuple[np.ndarray, tuple]:
        a = B_mean.block.copy()
        a[idx, idx] += alpha_mean
        try:
            chol = cho_factor(a, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"posterior precision not PD: {exc}") from exc
        sigma = cho_solve(chol, np.eye(n))
        return 0.5 * (sigma + sigma.T), chol

    if op.uniform:
        sigma, chol = posterior_block(op.selections[0])
        mu = cho_solve(chol, rhs.T).T.reshape(-1)
        sigma_blocks = np.broadcast_to(sigma, (k, n, n))
    else:
        sigma_blocks = np.empty((k, n, n))
        mu = np.empty(k * n)
        for b in range(k):
            sigma, chol = posterior_block(op.selections[b])
            sigma_blocks[b] = sigma
            mu[b * n:(b + 1) * n] = cho_solve(chol, rhs[b])
    return SignalPosterior(mu=mu, sigma_blocks=sigma_blocks)


def update_noise(obs: StackedObservations, op: SamplingOperator,
                 post: SignalPosterior, cfg: VBConfig) -> NoisePosterior:
    """Gamma-posterior refresh from the residual and the sampled covariance
    diagonal.

    The shape increment counts the observed entries (M_total / 2), treating
    the noise as i.i.d. over the observations: under full sampling this
    equals N*K/2. Counting all N*K stacked entries while the rate only sees
    M_total residuals makes the precision estimate grow by roughly N/M per
    iteration without bound when M < N.
    """
    resid = obs.y - op.gather(post.mu)
    trace_term = 0.0
    for b, idx in enumerate(op.selections):
        trace_term += float(np.sum(post.sigma_blocks[b][idx, idx]))
    shape = cfg.rho_e + 0.5 * op.m_total
    rate = cfg.xi_e + 0.5 * float(resid @ resid) + 0.5 * trace_term
    return NoisePosterior(shape=shape, rate=rate)


def _write_edge(values: np.ndarray, i: int, j: int, ell: float) -> None:
    values[i, j] = ell
    values[j, i] = ell
    for v in (i, j):
        row = values[v]
        values[v, v] = 0.0
        values[v, v] = -math.fsum(row)


def _update_edge_fixed(i: int, j: int, state: VBState, cfg: VBConfig) -> float:
    """Quadratic-determinant update: all other entries held fixed, precision
    refreshed by the cross-moment substitution, posterior evaluated by the
    bounded closed form or its quadrature fallback."""
    post = state.signal
    k = post.n_snapshots
    mu2 = post.mu_matrix()
    s_val = float(mu2[:, i] @ mu2[:, j] + np.sum(post.sigma_blocks[:, i, j]))

    quad = extract_edge_quadratic(state.laplacian, cfg.epsilon, i, j)
    lam = float(state.lam[i, j])
    if math.isfinite(quad.u) and quad.u != 0.0:
        candidate = s_val / quad.u
        if cfg.lambda_mode == "signed":
            if math.isfinite(candidate):
                lam = candidate
        elif candidate > 0 and math.isfinite(candidate):
            lam = candidate
    quad.lam = lam
    state.lam[i, j] = lam
    state.lam[j, i] = lam

    case = classify_edge_case(quad.c_n, quad.d_n, quad.g_n, k, lam)
    if state.tuple_sink is not None and case.tag is EdgeCaseTag.FULL_GCCH and case.params is not None:
        state.tuple_sink.append(case.params)
    try:
        w_mean = edge_posterior_mean(quad.c_n, quad.d_n, quad.g_n, lam, k)
    except (QuadratureFailure, NonConvergent, DomainError) as exc:
        raise EdgeUpdateSkipped(f"edge ({i},{j}): {exc}") from exc
    ell = -w_mean
    _write_edge(state.laplacian.values, i, j, ell)
    return ell


def _update_edge_coupled(i: int, j: int, state: VBState, cfg: VBConfig) -> float:
    """Linear-determinant update: the diagonal tracks the zero-row-sum
    constraint, so removing the edge leaves det(M_rest) times (1 + q w) with
    q the effective resistance of the pair. The data enters through the
    expected squared signal difference across the edge."""
    post = state.signal
    k = post.n_snapshots
    values = state.laplacian.values
    n = values.shape[0]
    w_cur = -values[i, j]

    m_rest = values + cfg.epsilon * np.eye(n)
    m_rest[i, j] += w_cur
    m_rest[j, i] += w_cur
    m_rest[i, i] -= w_cur
    m_rest[j, j] -= w_cur
    sign, _ = np.linalg.slogdet(m_rest)
    if sign <= 0:
        raise EdgeUpdateSkipped(f"edge ({i},{j}): remainder matrix not positive definite")
    e = np.zeros(n)
    e[i] = 1.0
    e[j] = -1.0
    try:
        q_ij = float(e @ np.linalg.solve(m_rest, e))
    except np.linalg.LinAlgError as exc:
        raise EdgeUpdateSkipped(f"edge ({i},{j}): {exc}") from exc
    if q_ij <= 0:
        raise EdgeUpdateSkipped(f"edge ({i},{j}): nonpositive determinant slope")

    m2 = state.second_moment()
    t_coeff = float(m2[i, i] + m2[j, j] - 2.0 * m2[i, j])
    lam = float(state.lam[i, j])
    try:
        w_mean, w_moment2 = linear_det_posterior_stats(q_ij, t_coeff, lam, k)
    except (QuadratureFailure, DomainError) as exc:
        raise EdgeUpdateSkipped(f"edge ({i},{j}): {exc}") from exc
    # data-driven precision refresh: noninformative-hyperprior update sets
    # the edge precision to the inverse posterior second moment of its weight
    lam_new = min(max(1.0 / max(w_moment2, 1e-12), 1e-8), 1e12)
    state.lam[i, j] = lam_new
    state.lam[j, i] = lam_new
    ell = -w_mean
    _write_edge(values, i, j, ell)
    return ell


def update_edge(i: int, j: int, state: VBState, cfg: VBConfig) -> float:
    """One coordinate update of the symmetric pair (i, j), dispatching on
    cfg.edge_parameterization. Writes the negated posterior-mean weight into
    both off-diagonal slots and re-derives the two affected diagonal entries.

    Raises EdgeUpdateSkipped when the posterior cannot be evaluated; the
    previous entry is left untouched in that case.
    """
    if not i < j:
        raise DomainError("update_edge requires i < j")
    if cfg.edge_parameterization == "coupled_diagonal":
        return _update_edge_coupled(i, j, state, cfg)
    return _update_edge_fixed(i, j, state, cfg)


def _restore_laplacian_invariants(values: np.ndarray) -> None:
    values += values.T
    values *= 0.5
    np.fill_diagonal(values, 0.0)
    diag = -np.array([math.fsum(row) for row in values])
    np.fill_diagonal(values, diag)


def run_vb(
    obs: StackedObservations,
    op: SamplingOperator,
    cfg: VBConfig,
    *,
    laplacian_init: LaplacianEstimate | None = None,
    update_edges: bool = True,
    truth: np.ndarray | None = None,
    tuple_sink: list | None = None,
) -> VBState:
    """Full coordinate-ascent loop: per iteration, sweep all edges, refresh
    the noise posterior, then refresh the signal posterior; stop when the
    relative l2 change of the posterior mean drops below cfg.rel_tol or
    max_iters is reached.

    The mean starts at the zero-filled observations and the covariance at
    the prior covariance; the topology starts from an empty graph unless
    laplacian_init is given (e.g. a fixed known topology combined with
    update_edges=False). truth, when given as a (K, N) matrix of clean
    snapshots, adds a reconstruction-error column to the trace.
    """
    n, k = op.n_vertices, op.n_snapshots
    if laplacian_init is not None:
        lap = LaplacianEstimate(laplacian_init.values.copy())
    else:
        lap = LaplacianEstimate(np.zeros((n, n)))

    prior = assemble_precision(lap, cfg.epsilon, k)
    prior_block_inv = cho_solve(prior.chol, np.eye(n))
    signal = SignalPosterior(
        mu=op.scatter(obs.y),
        sigma_blocks=np.broadcast_to(0.5 * (prior_block_inv + prior_block_inv.T), (k, n, n)),
    )
    noise = NoisePosterior(shape=cfg.rho_e, rate=cfg.xi_e)
    lam = np.full((n, n), cfg.lambda_init, dtype=np.float64)
    np.fill_diagonal(lam, 0.0)
    state = VBState(signal=signal, noise=noise, laplacian=lap, lam=lam,
                    tuple_sink=tuple_sink)

    for it in range(1, cfg.max_iters + 1):
        skipped = 0
        if update_edges:
            for i in range(n):
                for j in range(i + 1, n):
                    try:
                        update_edge(i, j, state, cfg)
                    except EdgeUpdateSkipped:
                        skipped += 1
            _restore_laplacian_invariants(state.laplacian.values)
            trace_cap = cfg.max_mean_degree * n
            current_trace = float(np.trace(state.laplacian.values))
            if math.isfinite(trace_cap) and current_trace > trace_cap:
                state.laplacian.values[...] *= trace_cap / current_trace

        state.noise = update_noise(obs, op, state.signal, cfg)
        alpha = state.noise.mean
        try:
            precision = assemble_precision(state.laplacian, cfg.epsilon, k)
            new_signal = update_signal(obs, op, precision, alpha)
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(str(exc), iteration=it) from exc

        prev_norm = float(np.linalg.norm(state.signal.mu))
        rel = float(np.linalg.norm(new_signal.mu - state.signal.mu)) / max(prev_norm, 1e-300)
        state.signal = new_signal
        state.iteration = it
        nmse = None
        if truth is not None:
            nmse = nmse_signal(new_signal.mu_matrix(), truth)
        state.trace.append(IterationRecord(
            iteration=it, rel_change=rel, alpha_mean=alpha,
            noise_variance=state.noise.variance_estimate, nmse=nmse,
            edges_skipped=skipped,
        ))
        if rel < cfg.rel_tol:
            break
    return state


def trace_to_csv(trace: list[IterationRecord], path) -> None:
    """Per-iteration diagnostics as CSV for external plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,rel_change,alpha_mean,noise_variance,nmse,edges_skipped\n")
        for rec in trace:
            nmse = "" if rec.nmse is None else repr(rec.nmse)
            fh.write(
                f"{rec.iteration},{repr(rec.rel_change)},{repr(rec.alpha_mean)},"
                f"{repr(rec.noise_variance)},{nmse},{rec.edges_skipped}\n"
            )
