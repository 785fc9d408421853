"""Coordinate-ascent engine: determinant quadratic extraction against a
direct determinant oracle, conjugate posterior updates against dense-formula
and Monte-Carlo oracles, and loop behavior of the full run."""

import math

import numpy as np
import pytest

import graphvb.engine as engine_mod
from graphvb.engine import (
    NoisePosterior,
    SignalPosterior,
    VBConfig,
    VBState,
    extract_edge_quadratic,
    run_vb,
    trace_to_csv,
    update_edge,
    update_noise,
    update_signal,
)
from graphvb.errors import DomainError, NotPositiveDefinite
from graphvb.graphs import (
    LaplacianEstimate,
    SamplingOperator,
    StackedObservations,
    WeightedGraph,
    assemble_precision,
    laplacian_from_weights,
)


def _random_laplacian(n, seed, density=0.6):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.2, 1.5, (n, n)) * (rng.random((n, n)) < density)
    w = np.triu(w, 1)
    w = w + w.T
    return laplacian_from_weights(WeightedGraph(w))


class TestExtractEdgeQuadratic:
    def test_two_vertex_closed_form(self):
        # diagonal (2, 3) held fixed: det = 6 - l^2
        lap = LaplacianEstimate(np.array([[2.0, 0.0], [0.0, 3.0]]))
        quad = extract_edge_quadratic(lap, 0.0, 0, 1)
        assert quad.c == pytest.approx(-1.0, rel=1e-12)
        assert quad.d == pytest.approx(0.0, abs=1e-12)
        assert quad.g == pytest.approx(6.0, rel=1e-12)

    def test_polynomial_identity_random(self):
        """c l^2 + d l + g equals the determinant with the slot set to l."""
        rng = np.random.default_rng(14)
        for seed in range(8):
            lap = _random_laplacian(6, seed=seed)
            i, j = sorted(rng.choice(6, size=2, replace=False))
            quad = extract_edge_quadratic(lap, 0.01, i, j)
            m = lap.values + 0.01 * np.eye(6)
            for _ in range(5):
                ell = float(rng.uniform(-3, 3))
                m[i, j] = ell
                m[j, i] = ell
                det = np.linalg.det(m)
                poly = quad.c * ell * ell + quad.d * ell + quad.g
                assert poly == pytest.approx(det, rel=1e-9, abs=1e-12)

    def test_constant_term_positive_for_diag_dominant(self):
        lap = _random_laplacian(6, seed=99)
        quad = extract_edge_quadratic(lap, 0.01, 1, 4)
        m = lap.values + 0.01 * np.eye(6)
        m[1, 4] = 0.0
        m[4, 1] = 0.0
        np.linalg.cholesky(m)  # factorization succeeds: zeroed-slot matrix is PD
        assert quad.g > 0.0

    def test_vertex_offset_identity(self):
        lap = _random_laplacian(5, seed=21)
        quad = extract_edge_quadratic(lap, 0.01, 0, 3)
        assert quad.u == pytest.approx(quad.d_n / (2 * quad.c_n), rel=1e-12)
        assert quad.z == pytest.approx(
            quad.g_n / quad.c_n - quad.d_n**2 / (4 * quad.c_n**2), rel=1e-12
        )

    def test_log_scaled_coefficients_at_large_n(self):
        """At N=200 the raw determinant underflows double precision, but the
        normalized coefficients still give the exact vertex and offset."""
        n, eps = 200, 0.01
        lap = LaplacianEstimate(np.zeros((n, n)))
        quad = extract_edge_quadratic(lap, eps, 3, 7)
        assert quad.g == 0.0  # eps^200 is below the double range
        assert quad.u == pytest.approx(0.0, abs=1e-12)
        assert quad.z == pytest.approx(-eps * eps, rel=1e-9)
        assert quad.c_n < 0.0

    def test_same_endpoints_rejected(self):
        with pytest.raises(DomainError):
            extract_edge_quadratic(LaplacianEstimate(np.zeros((3, 3))), 0.01, 1, 1)


class TestUpdateSignal:
    def test_scalar_case(self):
        b, a, y = 0.7, 2.0, 1.3
        op = SamplingOperator(1, (np.array([0]),))
        obs = StackedObservations(np.array([y]), op)
        asm = assemble_precision(LaplacianEstimate(np.array([[b - 0.01]])), 0.01, 1)
        post = update_signal(obs, op, asm, a)
        assert post.sigma_blocks[0, 0, 0] == pytest.approx(1.0 / (a + b), rel=1e-12)
        assert post.mu[0] == pytest.approx(a * y / (a + b), rel=1e-12)

    def test_no_samples_returns_prior(self):
        op = SamplingOperator(3, (np.array([], dtype=int), np.array([], dtype=int)))
        obs = StackedObservations(np.zeros(0), op)
        lap = _random_laplacian(3, seed=2)
        asm = assemble_precision(lap, 0.5, 2)
        post = update_signal(obs, op, asm, 1.0)
        assert np.allclose(post.mu, 0.0)
        assert np.allclose(post.sigma_blocks[0], np.linalg.inv(asm.block), atol=1e-10)

    def test_matches_dense_conjugate_oracle(self):
        """Independent dense-formula posterior on a small instance."""
        rng = np.random.default_rng(3)
        n, k, alpha = 4, 2, 1.7
        lap = _random_laplacian(n, seed=5)
        sels = tuple(rng.choice(n, size=3, replace=False) for _ in range(k))
        op = SamplingOperator(n, sels)
        y = rng.standard_normal(op.m_total)
        obs = StackedObservations(y, op)
        asm = assemble_precision(lap, 0.05, k)
        post = update_signal(obs, op, asm, alpha)

        psi = op.dense_matrix()
        b_full = np.kron(np.eye(k), lap.values + 0.05 * np.eye(n))
        sigma_full = np.linalg.inv(b_full + alpha * psi.T @ psi)
        mu_full = sigma_full @ (alpha * psi.T @ y)
        assert np.max(np.abs(post.mu - mu_full)) < 1e-10
        assert np.max(np.abs(post.sigma_full() - sigma_full)) < 1e-10

    def test_nonpositive_alpha_rejected(self):
        op = SamplingOperator(1, (np.array([0]),))
        obs = StackedObservations(np.array([1.0]), op)
        asm = assemble_precision(LaplacianEstimate(np.zeros((1, 1))), 0.01, 1)
        with pytest.raises(DomainError):
            update_signal(obs, op, asm, 0.0)


class TestUpdateNoise:
    def test_shape_uses_full_stacked_count(self):
        n, k = 81, 20
        cfg = VBConfig(rho_e=1e-6)
        op = SamplingOperator(n, tuple(np.arange(n) for _ in range(k)))
        obs = StackedObservations(np.zeros(n * k), op)
        post = SignalPosterior(mu=np.zeros(n * k),
                               sigma_blocks=np.zeros((k, n, n)))
        noise = update_noise(obs, op, post, cfg)
        assert noise.shape == pytest.approx(810.000001, abs=1e-12)

    def test_exact_fit_keeps_prior_rate(self):
        n, k = 3, 2
        cfg = VBConfig()
        op = SamplingOperator(n, (np.array([0, 2]), np.array([1])))
        mu = np.arange(6.0)
        obs = StackedObservations(op.gather(mu), op)
        post = SignalPosterior(mu=mu, sigma_blocks=np.zeros((k, n, n)))
        noise = update_noise(obs, op, post, cfg)
        assert noise.rate == pytest.approx(cfg.xi_e, rel=1e-12)

    def test_matches_monte_carlo_oracle(self):
        """xi' - xi equals half the Monte-Carlo average of the squared
        residual under x ~ N(mu, Sigma)."""
        rng = np.random.default_rng(4)
        n, k = 3, 2
        cfg = VBConfig()
        op = SamplingOperator(n, (np.array([0, 2]), np.array([1, 2])))
        mu = rng.standard_normal(n * k)
        blocks = np.empty((k, n, n))
        chols = []
        for b in range(k):
            a = rng.standard_normal((n, n))
            blocks[b] = a @ a.T + 0.5 * np.eye(n)
            chols.append(np.linalg.cholesky(blocks[b]))
        post = SignalPosterior(mu=mu, sigma_blocks=blocks)
        y = rng.standard_normal(op.m_total)
        obs = StackedObservations(y, op)
        noise = update_noise(obs, op, post, cfg)

        draws = 1_000_000
        total = 0.0
        for b in range(k):
            xs = mu[b * n:(b + 1) * n] + rng.standard_normal((draws, n)) @ chols[b].T
            idx = op.selections[b]
            pos = op.offsets[b]
            resid = y[pos:pos + len(idx)] - xs[:, idx]
            total += float(np.mean(np.sum(resid * resid, axis=1)))
        expected_rate = cfg.xi_e + 0.5 * total
        assert noise.rate == pytest.approx(expected_rate, rel=0.01)

    def test_posterior_mean_and_variance(self):
        noise = NoisePosterior(shape=4.0, rate=2.0)
        assert noise.mean == 2.0
        assert noise.variance_estimate == 0.5
        with pytest.raises(DomainError):
            NoisePosterior(shape=0.0, rate=1.0)


def _make_state(lap, mu_matrix, cfg, sigma_scale=0.0):
    n = lap.n_vertices
    k = mu_matrix.shape[0]
    blocks = np.broadcast_to(sigma_scale * np.eye(n), (k, n, n))
    signal = SignalPosterior(mu=mu_matrix.reshape(-1).astype(float),
                             sigma_blocks=blocks)
    lam = np.full((n, n), cfg.lambda_init)
    np.fill_diagonal(lam, 0.0)
    return VBState(signal=signal, noise=NoisePosterior(cfg.rho_e, cfg.xi_e),
                   laplacian=LaplacianEstimate(lap.values.copy()), lam=lam)


class TestUpdateEdge:
    def test_substitution_sets_lambda_when_positive(self):
        cfg = VBConfig(edge_parameterization="fixed_diagonal")
        lap = _random_laplacian(4, seed=8, density=1.0)
        quad = extract_edge_quadratic(lap, cfg.epsilon, 0, 1)
        assert quad.u < 0  # vertex is nonpositive for diagonally dominant input
        mu = np.zeros((2, 4))
        mu[:, 0] = 1.0
        mu[:, 1] = -1.0  # S = -2 so S/u > 0
        state = _make_state(lap, mu, cfg)
        update_edge(0, 1, state, cfg)
        assert state.lam[0, 1] == pytest.approx(-2.0 / quad.u, rel=1e-12)
        assert state.lam[1, 0] == state.lam[0, 1]

    def test_guard_keeps_previous_lambda(self):
        cfg = VBConfig(lambda_mode="positive_only", edge_parameterization="fixed_diagonal")
        lap = _random_laplacian(4, seed=8, density=1.0)
        mu = np.ones((2, 4))  # S > 0 while u < 0: candidate is negative
        state = _make_state(lap, mu, cfg)
        update_edge(0, 1, state, cfg)
        assert state.lam[0, 1] == cfg.lambda_init

    def test_signed_mode_accepts_negative_lambda(self):
        cfg = VBConfig(lambda_mode="signed", edge_parameterization="fixed_diagonal")
        lap = _random_laplacian(4, seed=8, density=1.0)
        quad = extract_edge_quadratic(lap, cfg.epsilon, 0, 1)
        mu = np.ones((2, 4))
        state = _make_state(lap, mu, cfg)
        update_edge(0, 1, state, cfg)
        assert state.lam[0, 1] == pytest.approx(2.0 / quad.u, rel=1e-12)
        assert state.lam[0, 1] < 0

    def test_writes_symmetric_pair_and_rederives_diagonal(self):
        cfg = VBConfig()
        lap = _random_laplacian(5, seed=12)
        mu = np.random.default_rng(0).standard_normal((3, 5))
        state = _make_state(lap, mu, cfg)
        ell = update_edge(1, 3, state, cfg)
        values = state.laplacian.values
        assert values[1, 3] == ell
        assert values[3, 1] == ell
        assert np.max(np.abs(values @ np.ones(5))) < 1e-12

    def test_matches_quadrature_oracle(self):
        """The written entry equals the negated quadrature mean of the
        log-posterior built from the same quadratic (fixed-diagonal mode)."""
        cfg = VBConfig(edge_parameterization="fixed_diagonal")
        lap = _random_laplacian(5, seed=23)
        rng = np.random.default_rng(5)
        mu = rng.standard_normal((4, 5))
        state = _make_state(lap, mu, cfg, sigma_scale=0.01)
        i, j = 0, 2
        quad = extract_edge_quadratic(lap, cfg.epsilon, i, j)
        ell = update_edge(i, j, state, cfg)
        lam = float(state.lam[i, j])
        w = np.linspace(quad.u, quad.u + math.sqrt(-quad.z), 400001)
        with np.errstate(divide="ignore"):
            logf = (0.5 * 4 * np.log(quad.c_n * (w - quad.u) ** 2 + quad.c_n * quad.z)
                    - 0.5 * lam * (w - quad.u) ** 2)
        f = np.exp(logf - logf[np.isfinite(logf)].max())
        oracle = float(np.trapezoid(w * f, w) / np.trapezoid(f, w))
        assert -ell == pytest.approx(oracle, rel=1e-5)

    def test_requires_ordered_endpoints(self):
        cfg = VBConfig()
        lap = _random_laplacian(4, seed=1)
        state = _make_state(lap, np.ones((1, 4)), cfg)
        with pytest.raises(DomainError):
            update_edge(2, 1, state, cfg)


def _bandlimited_instance(n, k, seed, noise_sd=0.0, m=None):
    lap = _random_laplacian(n, seed=seed)
    rng = np.random.default_rng(seed + 100)
    eigvals, eigvecs = np.linalg.eigh(lap.values)
    clean = rng.standard_normal((k, 3)) @ eigvecs[:, :3].T
    noisy = clean + noise_sd * rng.standard_normal(clean.shape)
    m = n if m is None else m
    sel = rng.choice(n, size=m, replace=False)
    op = SamplingOperator(n, tuple(sel.copy() for _ in range(k)))
    obs = StackedObservations(op.gather(noisy.reshape(-1)), op)
    return lap, clean, obs, op


class TestRunVB:
    def test_noiseless_full_sampling_pins_to_data(self):
        """With exact data, a fixed true topology, and no edge updates, the
        posterior mean approaches the observations as the noise precision
        estimate grows."""
        lap, clean, obs, op = _bandlimited_instance(5, 3, seed=31)
        cfg = VBConfig(max_iters=60, rel_tol=1e-12)
        state = run_vb(obs, op, cfg, laplacian_init=lap, update_edges=False, truth=clean)
        alphas = [rec.alpha_mean for rec in state.trace]
        assert alphas[-1] > alphas[0] * 100
        errors = [rec.nmse for rec in state.trace]
        assert errors[-1] < errors[2] < errors[0]
        rel_err = np.linalg.norm(state.signal.mu - clean.reshape(-1)) / np.linalg.norm(clean)
        assert rel_err < 0.02

    def test_laplacian_invariants_after_run(self):
        lap, clean, obs, op = _bandlimited_instance(6, 3, seed=7, noise_sd=0.3, m=5)
        cfg = VBConfig(max_iters=4)
        state = run_vb(obs, op, cfg)
        values = state.laplacian.values
        assert np.array_equal(values, values.T)
        assert np.max(np.abs(values @ np.ones(6))) < 1e-12

    def test_update_order_is_edges_noise_signal(self):
        calls = []
        orig_noise, orig_signal, orig_edge = (
            engine_mod.update_noise, engine_mod.update_signal, engine_mod.update_edge,
        )

        def spy(name, fn):
            def wrapper(*args, **kwargs):
                calls.append(name)
                return fn(*args, **kwargs)
            return wrapper

        lap, clean, obs, op = _bandlimited_instance(3, 2, seed=2, noise_sd=0.2)
        cfg = VBConfig(max_iters=2)
        try:
            engine_mod.update_noise = spy("noise", orig_noise)
            engine_mod.update_signal = spy("signal", orig_signal)
            engine_mod.update_edge = spy("edge", orig_edge)
            run_vb(obs, op, cfg)
        finally:
            engine_mod.update_noise = orig_noise
            engine_mod.update_signal = orig_signal
            engine_mod.update_edge = orig_edge
        condensed = [c for c in calls if c != "edge"]
        assert condensed == ["noise", "signal"] * 2
        assert calls[0] == "edge"  # sweep precedes the first noise update

    def test_trace_records_and_csv(self, tmp_path):
        lap, clean, obs, op = _bandlimited_instance(4, 2, seed=9, noise_sd=0.2)
        cfg = VBConfig(max_iters=3)
        state = run_vb(obs, op, cfg, truth=clean)
        assert len(state.trace) == state.iteration
        assert all(rec.nmse is not None for rec in state.trace)
        path = tmp_path / "trace.csv"
        trace_to_csv(state.trace, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iteration,rel_change,alpha_mean,noise_variance,nmse,edges_skipped"
        assert len(lines) == 1 + len(state.trace)

    def test_noise_variance_recovery_small_instance(self):
        """Full inference on small instances recovers the generative noise
        variance within a factor of two for most seeds."""
        hits = 0
        for seed in range(20):
            noise_sd = 0.4
            lap, clean, obs, op = _bandlimited_instance(6, 3, seed=seed, noise_sd=noise_sd)
            cfg = VBConfig(max_iters=12)
            state = run_vb(obs, op, cfg)
            est = state.noise.variance_estimate
            if noise_sd**2 / 2 <= est <= noise_sd**2 * 2:
                hits += 1
        assert hits >= 16

    def test_not_positive_definite_raised(self):
        lap, clean, obs, op = _bandlimited_instance(3, 2, seed=2)
        bad = LaplacianEstimate(np.diag([-5.0, -5.0, -5.0]))
        with pytest.raises(NotPositiveDefinite):
            run_vb(obs, op, VBConfig(), laplacian_init=bad, update_edges=False)

    def test_fixed_alpha_signal_update_is_exact_conjugate(self):
        """One signal update with fixed topology reproduces the dense
        conjugate posterior."""
        lap, clean, obs, op = _bandlimited_instance(4, 2, seed=13, noise_sd=0.1, m=3)
        alpha = 3.7
        asm = assemble_precision(lap, 0.01, 2)
        post = update_signal(obs, op, asm, alpha)
        psi = op.dense_matrix()
        sigma = np.linalg.inv(asm.full_matrix() + alpha * psi.T @ psi)
        mu = sigma @ (alpha * psi.T @ obs.y)
        assert np.max(np.abs(post.mu - mu)) < 1e-10
