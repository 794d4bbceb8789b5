import numpy as np
import pytest

from scorepnp import (
    AdaptedDenoiser, BlurKernel, CallableOperator, CirculantBlurOperator,
    ConfigError, GmmPrior, IdentityOperator, ParameterError,
    PatchGmmImagePrior, QuadraticDataTerm, SigmaRangeError, SolverConfig,
    VESchedule, conjugate_gradient, diffpir_sample, dpir_hqs,
    emulate_ve_network, emulate_vp_network, grad_quadratic,
    make_log_sigma_schedule, pnp_admm, prox_quadratic, red,
    vp_schedule_for_sigmas,
)
from conftest import dense_circulant_matrix

SIGMAS = np.geomspace(0.008, 2.2, 12)


def pixel_gaussian_prior(mu, rho):
    """Pixel-wise Gaussian prior as a 1-component, 1-D patch GMM."""
    gmm = GmmPrior([1.0], np.array([[mu]]), np.array([[[rho**2]]]))
    return PatchGmmImagePrior(gmm, patch=1, channels=1)


def random_blur_problem(rng, h=8, w=8, invertible=False, noise=0.02, seed=5):
    weights = rng.random((3, 3))
    if invertible:
        weights[1, 1] += 6.0  # delta-dominated kernel, spectrum bounded away from 0
    kern = BlurKernel(weights).normalized()
    op = CirculantBlurOperator(kern, (h, w))
    x_true = rng.random((h, w, 1))
    e = noise * rng.standard_normal((h, w, 1)) if noise > 0 else 0.0
    y = op.forward(x_true) + e
    return op, kern, x_true, y


class TestProx:
    def test_identity_scalar_case(self):
        dt = QuadraticDataTerm(IdentityOperator(), np.ones((1, 1, 1)))
        out = prox_quadratic(dt, np.zeros((1, 1, 1)), 1.0)
        assert out[0, 0, 0] == pytest.approx(0.5)

    def test_gamma_to_zero_returns_z(self, rng):
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        z = rng.random((8, 8, 1))
        out = prox_quadratic(dt, z, 1e-12)
        assert np.max(np.abs(out - z)) < 1e-9

    def test_frequency_solution_matches_dense_solve(self, rng):
        for _ in range(5):
            op, kern, _, y = random_blur_problem(rng)
            dt = QuadraticDataTerm(op, y)
            z = rng.standard_normal((8, 8, 1))
            gamma = 10 ** rng.uniform(-2, 2)
            got = prox_quadratic(dt, z, gamma)
            mat = dense_circulant_matrix(kern.weights, 8, 8)
            lhs = np.eye(64) + gamma * mat.T @ mat
            rhs = z.ravel() + gamma * mat.T @ y.ravel()
            want = np.linalg.solve(lhs, rhs)
            assert np.max(np.abs(got.ravel() - want)) < 1e-8

    def test_cg_fallback_matches_dense_solve(self, rng):
        op, kern, _, y = random_blur_problem(rng)
        wrapped = CallableOperator(op.forward, op.adjoint)  # hides the spectrum
        dt = QuadraticDataTerm(wrapped, y)
        z = rng.standard_normal((8, 8, 1))
        got = prox_quadratic(dt, z, 2.5)
        mat = dense_circulant_matrix(kern.weights, 8, 8)
        want = np.linalg.solve(np.eye(64) + 2.5 * mat.T @ mat,
                               z.ravel() + 2.5 * mat.T @ y.ravel())
        assert np.max(np.abs(got.ravel() - want)) < 1e-8

    def test_cg_failure_reports_residual(self):
        # badly conditioned diagonal system, far too few iterations
        diag = np.geomspace(1.0, 1e12, 16).reshape(4, 4, 1)
        from scorepnp.errors import NumericsError
        with pytest.raises(NumericsError, match="residual"):
            conjugate_gradient(lambda v: diag * v, np.ones((4, 4, 1)), max_iter=2)

    def test_gamma_must_be_positive(self, rng):
        dt = QuadraticDataTerm(IdentityOperator(), np.zeros((2, 2, 1)))
        with pytest.raises(ParameterError):
            prox_quadratic(dt, np.zeros((2, 2, 1)), 0.0)


class TestGrad:
    def test_zero_at_solution(self, rng):
        op, _, x_true, _ = random_blur_problem(rng, noise=0.0)
        y = op.forward(x_true)
        dt = QuadraticDataTerm(op, y)
        assert np.max(np.abs(grad_quadratic(dt, x_true))) < 1e-12

    def test_identity_scalar(self):
        dt = QuadraticDataTerm(IdentityOperator(), np.ones((1, 1, 1)))
        out = grad_quadratic(dt, 2 * np.ones((1, 1, 1)))
        assert out[0, 0, 0] == pytest.approx(1.0)

    def test_matches_finite_differences(self, rng):
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        x = rng.random((8, 8, 1))
        g = grad_quadratic(dt, x)
        h = 1e-6
        for _ in range(10):
            i, j = rng.integers(0, 8, 2)
            e = np.zeros_like(x)
            e[i, j, 0] = h
            fd = (dt.value(x + e) - dt.value(x - e)) / (2 * h)
            assert abs(g[i, j, 0] - fd) / max(1.0, abs(fd)) < 1e-6


class TestLogSchedule:
    def test_two_points(self):
        assert np.array_equal(make_log_sigma_schedule(0.5, 0.1, 2), [0.5, 0.1])

    def test_geometric_midpoint(self):
        seq = make_log_sigma_schedule(0.4, 0.1, 3)
        assert seq[1] == pytest.approx(0.2)

    def test_constant_ratio(self):
        seq = make_log_sigma_schedule(1.3, 0.007, 25)
        ratios = seq[1:] / seq[:-1]
        assert np.max(np.abs(ratios - ratios[0])) < 1e-12

    def test_rejects_bad_ordering(self):
        with pytest.raises(ParameterError):
            make_log_sigma_schedule(0.1, 0.5, 5)


GRID_SIGMA = float(SIGMAS[np.argmin(np.abs(SIGMAS - 0.1))])


def linear_denoiser_fixture(rng, mu=0.4, rho=0.3):
    """Pixel-Gaussian prior wrapped through the VE adaptation chain."""
    prior = pixel_gaussian_prior(mu, rho)
    sched = VESchedule(SIGMAS)
    den = AdaptedDenoiser(emulate_ve_network(prior, sched))
    return den, mu, rho


class TestPnpAdmm:
    def test_identity_denoiser_recovers_exact_solution(self, rng):
        op, _, x_true, _ = random_blur_problem(rng, invertible=True, noise=0.0)
        y = op.forward(x_true)
        dt = QuadraticDataTerm(op, y)
        provider = lambda sigma: (lambda v: v)
        cfg = SolverConfig(method="pnp-admm", K=200, gamma=50.0, sigma=0.0, seed=0)
        state = pnp_admm(dt, provider, cfg)
        assert np.linalg.norm(op.forward(state.reconstruction) - y) <= 1e-8

    def test_linear_denoiser_fixed_point_matches_dense_solve(self, rng):
        sigma = GRID_SIGMA
        den, mu, rho = linear_denoiser_fixture(rng)
        gamma = 1.0
        for _ in range(5):
            op, kern, _, y = random_blur_problem(rng)
            dt = QuadraticDataTerm(op, y)
            cfg = SolverConfig(method="pnp-admm", K=500, gamma=gamma, sigma=sigma)
            state = pnp_admm(dt, den, cfg)
            mat = dense_circulant_matrix(kern.weights, 8, 8)
            lam = sigma**2 / rho**2
            lhs = gamma * mat.T @ mat + lam * np.eye(64)
            rhs = gamma * mat.T @ y.ravel() + lam * mu
            want = np.linalg.solve(lhs, rhs)
            assert np.max(np.abs(state.reconstruction.ravel() - want)) < 1e-6
            assert state.trace[-1].residual < 1e-6

    def test_gamma_over_sigma_sq_rule(self, rng):
        den, _, _ = linear_denoiser_fixture(rng)
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        cfg = SolverConfig(method="pnp-admm", K=20, gamma_scale=0.43,
                           sigma1=120 / 255, sigmaK=10 / 255)
        state = pnp_admm(dt, den, cfg)
        # gamma rule recorded in the trace: gamma_k = 0.43 / sigma_k^2
        for row in state.trace:
            assert row.gamma_k == pytest.approx(0.43 / row.sigma_k**2)

    def test_strict_range_error_carries_iteration(self, rng):
        den, _, _ = linear_denoiser_fixture(rng)
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        cfg = SolverConfig(method="pnp-admm", K=5, gamma=1.0, sigma=5.0)  # above range
        with pytest.raises(SigmaRangeError, match="k=1"):
            pnp_admm(dt, den, cfg)


class TestRed:
    def test_tau_zero_is_gradient_descent_on_g(self, rng):
        y = rng.random((6, 6, 1))
        dt = QuadraticDataTerm(IdentityOperator(), y)
        den = lambda sigma: (lambda v: v)
        cfg = SolverConfig(method="red", K=300, gamma=0.5, tau=0.0, sigma=0.1)
        state = red(dt, den, cfg)
        assert np.max(np.abs(state.reconstruction - y)) < 1e-10

    def test_linear_denoiser_fixed_point_matches_dense_solve(self, rng):
        sigma = GRID_SIGMA
        den, mu, rho = linear_denoiser_fixture(rng)
        gamma, tau = 0.8, 1.0
        w = sigma**2 / (rho**2 + sigma**2)  # 1 - m
        for _ in range(5):
            op, kern, _, y = random_blur_problem(rng)
            dt = QuadraticDataTerm(op, y)
            cfg = SolverConfig(method="red", K=500, gamma=gamma, tau=tau, sigma=sigma)
            state = red(dt, den, cfg)
            mat = dense_circulant_matrix(kern.weights, 8, 8)
            lhs = mat.T @ mat + tau * w * np.eye(64)
            rhs = mat.T @ y.ravel() + tau * w * mu
            want = np.linalg.solve(lhs, rhs)
            # the stationarity point is the s-variable's limit
            assert np.max(np.abs(state.s.ravel() - want)) < 1e-6

    def test_fixed_sigma_config_accepted(self, rng):
        den, _, _ = linear_denoiser_fixture(rng)
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        cfg = SolverConfig(method="red", K=10, gamma=0.28, tau=3.57, sigma=SIGMAS[3])
        state = red(dt, den, cfg)
        assert state.config.gamma == 0.28 and state.config.tau == 3.57


class TestDpirHqs:
    def test_fixed_sigma_fixed_point_matches_dense_solve(self, rng):
        sigma = GRID_SIGMA
        den, mu, rho = linear_denoiser_fixture(rng)
        lam = 0.27
        gamma = sigma**2 / lam
        w = sigma**2 / (rho**2 + sigma**2)
        for _ in range(5):
            op, kern, _, y = random_blur_problem(rng)
            dt = QuadraticDataTerm(op, y)
            cfg = SolverConfig(method="dpir", K=500, lam=lam, sigma=sigma)
            state = dpir_hqs(dt, den, cfg)
            mat = dense_circulant_matrix(kern.weights, 8, 8)
            lhs = w * np.eye(64) + gamma * mat.T @ mat
            rhs = gamma * mat.T @ y.ravel() + w * mu
            want = np.linalg.solve(lhs, rhs)
            # x-variable satisfies the HQS fixed-point system
            assert np.max(np.abs(state.x.ravel() - want)) < 1e-6

    def test_log_schedule_and_gamma_rule(self, rng):
        den, _, _ = linear_denoiser_fixture(rng)
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        cfg = SolverConfig(method="dpir", K=30, lam=0.27,
                           sigma1=130 / 255, sigmaK=3 / 255)
        state = dpir_hqs(dt, den, cfg)
        sig = np.array([r.sigma_k for r in state.trace])
        assert sig[0] == pytest.approx(130 / 255)
        assert sig[-1] == pytest.approx(3 / 255)
        ratios = sig[1:] / sig[:-1]
        assert np.max(np.abs(ratios - ratios[0])) < 1e-12
        for row in state.trace:
            assert row.gamma_k == pytest.approx(row.sigma_k**2 / 0.27)


class TestDiffPir:
    def make_denoiser(self, mu=0.3, rho=0.25):
        prior = pixel_gaussian_prior(mu, rho)
        sched = vp_schedule_for_sigmas(np.geomspace(0.003, 2.5, 24))
        return AdaptedDenoiser(emulate_vp_network(prior, sched))

    def test_zeta_zero_bit_deterministic_across_seeds(self, rng):
        den = self.make_denoiser()
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        out = []
        for seed in (1, 999):
            cfg = SolverConfig(method="diffpir", K=30, lam=3.0, zeta=0.0,
                               sigma1=1.0, sigmaK=0.01, seed=seed)
            out.append(diffpir_sample(dt, den, cfg).reconstruction)
        assert np.array_equal(out[0], out[1])

    def test_same_seed_bit_identical(self, rng):
        den = self.make_denoiser()
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        cfg = SolverConfig(method="diffpir", K=30, lam=3.0, zeta=0.9,
                           sigma1=1.0, sigmaK=0.01, seed=7)
        a = diffpir_sample(dt, den, cfg).reconstruction
        b = diffpir_sample(dt, den, cfg).reconstruction
        assert np.array_equal(a, b)

    def test_lambda_zeta_recorded(self, rng):
        den = self.make_denoiser()
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        cfg = SolverConfig(method="diffpir", K=10, lam=3.0, zeta=0.9,
                           sigma1=1.0, sigmaK=0.01, seed=0)
        state = diffpir_sample(dt, den, cfg)
        assert state.config.lam == 3.0 and state.config.zeta == 0.9

    def test_requires_vp_score(self, rng):
        prior = pixel_gaussian_prior(0.3, 0.25)
        den = AdaptedDenoiser(emulate_ve_network(prior, VESchedule(SIGMAS)))
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        cfg = SolverConfig(method="diffpir", K=5, lam=3.0, sigma1=1.0, sigmaK=0.05)
        with pytest.raises(ConfigError):
            diffpir_sample(dt, den, cfg)

    def test_conjugate_gaussian_ensemble_mean(self):
        # each pixel is an independent 1-D chain; 40x40 = 1600 runs
        mu, rho, sigma_e = 0.3, 0.25, 0.1
        y_val = 0.55
        den = self.make_denoiser(mu, rho)
        h = w = 40
        y = np.full((h, w, 1), y_val)
        dt = QuadraticDataTerm(IdentityOperator(), y)
        cfg = SolverConfig(method="diffpir", K=60, lam=sigma_e**2, zeta=1.0,
                           sigma1=1.2, sigmaK=0.004, seed=21)
        state = diffpir_sample(dt, den, cfg)
        post_mean = (rho**2 * y_val + sigma_e**2 * mu) / (rho**2 + sigma_e**2)
        samples = state.reconstruction.ravel()
        se = samples.std(ddof=1) / np.sqrt(samples.size)
        assert abs(samples.mean() - post_mean) <= 3 * se


class TestStateAndConfig:
    def test_trace_csv_shape(self, rng):
        den, _, _ = linear_denoiser_fixture(rng)
        op, _, x_true, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        cfg = SolverConfig(method="dpir", K=5, lam=0.27, sigma1=0.4, sigmaK=0.05)
        state = dpir_hqs(dt, den, cfg, ground_truth=x_true)
        csv = state.trace_csv()
        lines = csv.strip().split("\n")
        comments = [l for l in lines if l.startswith("#")]
        assert any("config:" in c for c in comments)  # exact config recorded
        data = [l for l in lines if not l.startswith("#")]
        assert data[0] == "k,sigma_k,gamma_k,objective,residual,psnr,wall_ms"
        assert len(data) == 6
        assert all(len(l.split(",")) == 7 for l in data[1:])

    def test_traces_bit_identical_without_timing(self, rng):
        den, _, _ = linear_denoiser_fixture(rng)
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)

        def run():
            cfgs = [
                SolverConfig(method="pnp-admm", K=8, gamma=1.0, sigma=0.1),
                SolverConfig(method="red", K=8, gamma=0.5, tau=1.0, sigma=0.1),
                SolverConfig(method="dpir", K=8, lam=0.27, sigma1=0.4, sigmaK=0.05),
            ]
            from scorepnp import run_solver
            return [run_solver(dt, den, c).trace_csv(include_timing=False)
                    for c in cfgs]

        assert run() == run()

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            SolverConfig(method="bogus", sigma=0.1).validate()
        with pytest.raises(ConfigError):
            SolverConfig(method="red", sigma=0.1).validate()  # missing gamma/tau
        with pytest.raises(ConfigError):
            SolverConfig(method="dpir", lam=0.27, sigma1=0.1, sigmaK=0.4).validate()
        with pytest.raises(ConfigError):
            SolverConfig(method="pnp-admm", gamma=1.0).validate()  # no sigma

    def test_nonfinite_iterate_aborts_with_index(self, rng):
        op, _, _, y = random_blur_problem(rng)
        dt = QuadraticDataTerm(op, y)
        exploding = lambda sigma: (lambda v: v * np.inf)
        cfg = SolverConfig(method="dpir", K=5, lam=0.27, sigma=0.1)
        from scorepnp.errors import NumericsError
        with pytest.raises(NumericsError, match="k=1"):
            dpir_hqs(dt, exploding, cfg)
