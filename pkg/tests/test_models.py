"""Model families: local gradients, bookkeeping quantities, simulation."""

import math

import numpy as np
import pytest

from viterbipar import (
    GammaWeight,
    ModelSpec,
    NeuralExact,
    NeuralPseudo,
    PathVector,
    StudentTEmission,
    alpha_gamma_n,
    beta_m,
    eta_bound,
    eval_U,
    finite_diff_grad,
    grad_phi,
    grad_phi_tilde,
    neural_pseudo_field,
    simulate,
)
from viterbipar.errors import ShapeError, UnsupportedBoundError

from conftest import (
    balanced_spikes,
    gaussian_model_with_obs,
    huber_signal,
    lg_signal,
    neural_model,
    random_spikes,
    stochvol_model,
    student_model,
)


def _phi_value(model, xs, n):
    """Interior local sum, assembled from the model's density pieces."""
    sig = model.signal
    val = sig.log_f_sum(xs[n - 1 : n + 2])  # both transitions touching block n
    val += float(model.log_g_terms(xs[n : n + 1], t0=n)[0])
    return val


def _phi_tilde_value(model, xs, n):
    sig = model.signal
    if n == 0:
        val = sig.log_mu(xs[0])
        if xs.shape[0] > 1:
            val += sig.log_f_sum(xs[0:2])
    else:
        val = sig.log_f_sum(xs[n - 1 : n + 1])
    return val + float(model.log_g_terms(xs[n : n + 1], t0=n)[0])


def _fd_wrt_block(fn, xs, n, eps=1e-6):
    g = np.empty(xs.shape[1])
    for i in range(xs.shape[1]):
        xp = xs.copy()
        xp[n, i] += eps
        xm = xs.copy()
        xm[n, i] -= eps
        g[i] = (fn(xp) - fn(xm)) / (2 * eps)
    return g


class TestLocalGradients:
    def test_boundary_gradient_hand_value(self):
        # A=0.5, b=0, Sigma=1, b0=0, Sigma0=1, C=R=1, y=(1,1), x=(0,0):
        # the block-0 boundary gradient is 0 + 0 + 1
        model = gaussian_model_with_obs([1.0, 1.0], a=0.5)
        x = PathVector(np.zeros((2, 1)))
        assert grad_phi_tilde(model, x, 0)[0] == pytest.approx(1.0, abs=1e-14)

    def test_decoupled_conjugate_stationary_point(self):
        ys = np.array([0.4, -1.2, 0.7])
        model = gaussian_model_with_obs(ys, a=0.0)
        x = PathVector((ys / 2.0)[:, None])
        assert grad_phi_tilde(model, x, 0)[0] == pytest.approx(0.0, abs=1e-14)
        assert grad_phi(model, x, 1)[0] == pytest.approx(0.0, abs=1e-14)
        assert grad_phi_tilde(model, x, 2)[0] == pytest.approx(0.0, abs=1e-14)

    def test_student_t_emission_gradient_hand_value(self):
        # dof=1, y=0, x=1: derivative of the log density is -2x/(1+x^2) = -1
        lik = StudentTEmission(dof=1.0)
        g = lik.grad(np.array([[1.0]]), np.array([[0.0]]))
        assert g[0, 0] == pytest.approx(-1.0, abs=1e-14)

    @pytest.mark.parametrize("family", ["gaussian", "student", "stochvol", "pseudo", "exact"])
    def test_grad_phi_matches_finite_differences(self, family, rng):
        n = 6
        if family == "gaussian":
            model = gaussian_model_with_obs(rng.standard_normal(n + 1), a=0.5)
        elif family == "student":
            model = student_model(n=n)
        elif family == "stochvol":
            model = stochvol_model(n=n)
        else:
            model = neural_model(N=3, R=2, n=n, exact=(family == "exact"))
        d = model.dim
        for trial in range(5):
            xs = rng.standard_normal((n + 1, d))
            for idx in (1, n // 2, n - 1):
                got = grad_phi(model, xs, idx)
                want = _fd_wrt_block(lambda z: _phi_value(model, z, idx), xs, idx)
                np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-8)
            for idx in (0, n):
                got = grad_phi_tilde(model, xs, idx)
                want = _fd_wrt_block(lambda z: _phi_tilde_value(model, z, idx), xs, idx)
                np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-8)

    def test_huber_signal_gradients_match_finite_differences(self, rng):
        n, d = 5, 2
        sig = huber_signal(d=d)
        model = student_model(n=n, d=d, signal=sig)
        for trial in range(5):
            xs = rng.standard_normal((n + 1, d)) * 2.0
            got = grad_phi(model, xs, 2)
            want = _fd_wrt_block(lambda z: _phi_value(model, z, 2), xs, 2)
            np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-7)

    def test_index_out_of_range(self):
        model = gaussian_model_with_obs([1.0, 1.0, 1.0])
        xs = np.zeros((3, 1))
        with pytest.raises(IndexError):
            grad_phi(model, xs, 0)
        with pytest.raises(IndexError):
            grad_phi(model, xs, 2)
        with pytest.raises(IndexError):
            grad_phi_tilde(model, xs, 3)

    def test_log_densities_finite_at_random_points(self, rng):
        models = [
            gaussian_model_with_obs(rng.standard_normal(8)),
            student_model(n=7),
            stochvol_model(n=7),
            neural_model(N=3, R=2, n=7),
            neural_model(N=3, R=2, n=7, exact=True),
        ]
        for model in models:
            for _ in range(20):
                xs = rng.standard_normal((model.horizon + 1, model.dim)) * 5.0
                assert math.isfinite(eval_U(model, xs))


def _stochvol_fixed_residuals(residual, n=3):
    """Factor model with B = 0 so the residual equals the observation."""
    ys = np.tile(np.asarray(residual, dtype=float), (n + 1, 1))
    d = ys.shape[1]
    return stochvol_model(
        d=d,
        n=n,
        signal=lg_signal(d=d, a=0.5, stationary=True),
        factors=np.zeros((n + 1, 1)),
        ys=ys,
        B=np.zeros((d, 1)),
    )


class TestBetaAlpha:
    def test_stochvol_zero_residual(self):
        # residual (1, 1) at every index, b = b0 = 0 -> beta = 0
        model = _stochvol_fixed_residuals([1.0, 1.0])
        assert beta_m(model, 1) == pytest.approx(0.0, abs=1e-14)

    def test_stochvol_hand_value(self):
        # residual (2, 0): 0.25 * [(4-1)^2 + (0-1)^2] = 2.5
        model = _stochvol_fixed_residuals([2.0, 0.0])
        assert beta_m(model, 2) == pytest.approx(2.5, abs=1e-12)

    def test_gaussian_zero_observations(self):
        model = gaussian_model_with_obs(np.zeros(5))
        for m in range(5):
            assert beta_m(model, m) == 0.0

    def test_alpha_discounted_sum(self):
        model = gaussian_model_with_obs(np.ones(3), a=0.0)  # beta = 1 everywhere
        assert alpha_gamma_n(model, GammaWeight(0.5), 2) == pytest.approx(1.75, abs=1e-14)
        assert alpha_gamma_n(model, GammaWeight(1.0), 2) == pytest.approx(3.0, abs=1e-14)

    def test_alpha_of_zero_beta(self):
        model = gaussian_model_with_obs(np.zeros(4))
        assert alpha_gamma_n(model, GammaWeight(0.7), 3) == 0.0

    def test_beta_branch_selection_with_nonzero_drift(self):
        # b != 0 separates the two branches at the zero path: interior
        # indices take the max, the data horizon keeps only the backward
        # branch, index 0 the initial-density branch
        model = gaussian_model_with_obs(np.zeros(6), a=-0.5, b=1.0)
        assert beta_m(model, 0) == pytest.approx(0.25, abs=1e-12)
        assert beta_m(model, 2) == pytest.approx(2.25, abs=1e-12)
        assert beta_m(model, 5) == pytest.approx(1.0, abs=1e-12)
        # the truncation horizon of the internal pass must not change values
        assert beta_m(model.prefix(4), 2) == pytest.approx(2.25, abs=1e-12)

    def test_beta_depends_on_data_only_through_emission_gradient(self):
        # with b = b0 = 0 the transition terms vanish at the zero path, so
        # beta_m = y_m^2 and permuting the observations permutes beta
        ys = np.array([0.3, -1.0, 2.0, 0.1, -0.4])
        perm = [2, 0, 3, 4, 1]
        permuted = gaussian_model_with_obs(ys[perm], a=0.5)
        got = [beta_m(permuted, m) for m in range(5)]
        assert got == pytest.approx((ys[perm] ** 2).tolist(), rel=1e-12)


class TestEtaBound:
    def test_radius_zero_returns_beta(self):
        model = gaussian_model_with_obs([1.0, 2.0, 0.5])
        w = GammaWeight(0.5)
        assert eta_bound(model, 1, 0.0, w) == pytest.approx(beta_m(model, 1), rel=1e-12)

    def test_generic_hand_value(self):
        # beta = 2, chi = 3, gamma = 0.5, r = 1 -> 2 + 3*1/0.5 = 8
        model = gaussian_model_with_obs([math.sqrt(2.0)] * 3, a=0.0)
        model.chi = 3.0
        assert eta_bound(model, 1, 1.0, GammaWeight(0.5)) == pytest.approx(8.0, abs=1e-12)

    def test_stochvol_zero_radius_zero_residual(self):
        model = _stochvol_fixed_residuals([1.0, 1.0])
        assert eta_bound(model, 1, 0.0, GammaWeight(0.5)) == pytest.approx(0.0, abs=1e-14)

    def test_stochvol_dominates_sampled_gradients(self, rng):
        from viterbipar import weighted_norm_at

        model = stochvol_model(n=8)
        w = GammaWeight(0.6)
        for n_idx in (2, 5):
            beta = beta_m(model, n_idx)
            for r in (0.25, 1.0, 4.0):
                bound = eta_bound(model, n_idx, r, w)
                assert bound >= beta - 1e-12
                # sampled paths inside the centered ball stay below the bound
                for _ in range(50):
                    xs = np.zeros((model.horizon + 1, model.dim))
                    xs[n_idx - 1 : n_idx + 2] = rng.standard_normal((3, model.dim))
                    wn = weighted_norm_at(PathVector(xs), n_idx, w)
                    xs *= math.sqrt(r) * rng.random() / wn
                    g_int = grad_phi(model, xs, n_idx)
                    g_bnd = grad_phi_tilde(model, xs, n_idx)
                    worst = max(float(g_int @ g_int), float(g_bnd @ g_bnd))
                    assert worst <= bound + 1e-9

    def test_unsupported_without_chi(self):
        model = student_model(n=4)
        with pytest.raises(UnsupportedBoundError):
            eta_bound(model, 1, 1.0, GammaWeight(0.5))

    def test_conjugate_chi_certifies_eta_at_bound_radii(self, rng):
        # the auto-computed quadratic-growth constant must make
        # beta_n + chi r / gamma dominate sampled local gradients at every
        # radius the accuracy bounds evaluate (r >= beta_n / lambda^2)
        from viterbipar import alpha_gamma_n, certify_linear_gaussian, weighted_norm_at

        model = gaussian_model_with_obs(rng.standard_normal(12), a=0.5)
        cert = certify_linear_gaussian(model.signal, lambda_g=0.0)
        w = GammaWeight(cert.chosen_gamma)
        lam2 = cert.chosen_lambda**2
        n_idx = 5
        alpha = alpha_gamma_n(model, w, n_idx)
        for r in (beta_m(model, n_idx) / lam2, alpha / lam2, w.gamma * alpha / lam2):
            bound = eta_bound(model, n_idx, r, w)
            for _ in range(200):
                xs = np.zeros((model.horizon + 1, model.dim))
                xs[n_idx - 1 : n_idx + 2] = rng.standard_normal((3, model.dim))
                wn = weighted_norm_at(PathVector(xs), n_idx, w)
                xs *= math.sqrt(r) * rng.random() / wn
                g_int = grad_phi(model, xs, n_idx)
                g_bnd = grad_phi_tilde(model, xs, n_idx)
                worst = max(float(g_int @ g_int), float(g_bnd @ g_bnd))
                assert worst <= bound * (1 + 1e-12)


class TestNeuralField:
    def test_hand_value(self):
        spikes = np.array([[[1.0, 0.0]]])  # one bin, one trial, N=2
        lik = NeuralPseudo(2, 1, rates_c=[0.5, 0.5], spikes=spikes)
        z = neural_pseudo_field(lik, np.array([1.0]), 0, 0)
        np.testing.assert_allclose(z, [-0.5, 0.5], atol=1e-15)

    def test_zero_coupling_zero_field(self):
        spikes = random_spikes(3, 2, 4)
        lik = NeuralPseudo(3, 2, spikes=spikes)
        z = neural_pseudo_field(lik, np.zeros(3), 1, 0)
        np.testing.assert_allclose(z, 0.0)

    def test_trial_count_scaling(self):
        spikes1 = np.array([[[1.0, 0.0]]])
        spikes2 = np.array([[[1.0, 0.0], [1.0, 0.0]]])
        lik1 = NeuralPseudo(2, 1, rates_c=[0.5, 0.5], spikes=spikes1)
        lik2 = NeuralPseudo(2, 2, rates_c=[0.5, 0.5], spikes=spikes2)
        z1 = neural_pseudo_field(lik1, np.array([1.0]), 0, 0)
        z2 = neural_pseudo_field(lik2, np.array([1.0]), 0, 0)
        np.testing.assert_allclose(z2, z1 / 2.0)

    @pytest.mark.parametrize("N", [2, 3, 4])
    def test_pseudo_and_exact_gradients_coincide_decoupled(self, N):
        # balanced spikes (per-bin rates exactly one half) make the two
        # emission gradients coincide coordinate-wise at zero coupling
        spikes = balanced_spikes(N, 4, 5)
        pseudo = NeuralPseudo(N, 4, spikes=spikes)
        exact = NeuralExact(N, 4, spikes=spikes)
        np.testing.assert_allclose(pseudo.rates_c, 0.5)
        x0 = np.zeros((1, N * (N - 1) // 2))
        for t in range(5):
            gp = pseudo.grad(x0, spikes[t : t + 1])
            ge = exact.grad(x0, spikes[t : t + 1])
            np.testing.assert_allclose(gp, ge, atol=1e-12)


class TestModelSpecPrefix:
    def test_prefix_truncates_observations(self, rng):
        model = gaussian_model_with_obs(rng.standard_normal(12), a=0.5)
        short = model.prefix(5)
        assert short.horizon == 5
        np.testing.assert_array_equal(short.observations, model.observations[:6])
        assert short.chi == model.chi

    def test_prefix_slices_neural_spikes(self):
        model = neural_model(N=3, R=2, n=9)
        short = model.prefix(4)
        assert short.horizon == 4
        assert short.likelihood.spikes.shape[0] == 5
        np.testing.assert_array_equal(
            short.likelihood.spikes, model.likelihood.spikes[:5]
        )

    def test_prefix_slices_factor_series(self):
        model = stochvol_model(n=10)
        short = model.prefix(6)
        assert short.likelihood.factors.shape[0] == 7
        # values of the truncated problem match the full one on the prefix
        xs = np.zeros((7, model.dim))
        np.testing.assert_allclose(
            short.log_g_terms(xs, 0), model.log_g_terms(xs, 0)
        )

    def test_prefix_beyond_horizon_rejected(self, rng):
        model = gaussian_model_with_obs(rng.standard_normal(4))
        with pytest.raises(ShapeError):
            model.prefix(9)


class TestSimulate:
    def test_deterministic_per_seed(self):
        model = gaussian_model_with_obs(np.zeros(10), a=0.8)
        x1, y1 = simulate(model, 50, seed=7)
        x2, y2 = simulate(model, 50, seed=7)
        assert np.array_equal(x1.blocks, x2.blocks)
        assert np.array_equal(y1, y2)
        x3, _ = simulate(model, 50, seed=8)
        assert not np.array_equal(x1.blocks, x3.blocks)

    def test_white_noise_autocorrelation(self):
        model = gaussian_model_with_obs(np.zeros(10), a=0.0)
        xs, _ = simulate(model, 10_000, seed=11)
        v = xs.blocks[:, 0]
        rho = np.corrcoef(v[:-1], v[1:])[0, 1]
        assert abs(rho) < 0.05

    def test_ar_autocorrelation(self):
        model = gaussian_model_with_obs(np.zeros(10), a=0.95, stationary=True)
        xs, _ = simulate(model, 10_000, seed=12)
        v = xs.blocks[:, 0]
        rho = np.corrcoef(v[:-1], v[1:])[0, 1]
        assert rho == pytest.approx(0.95, abs=0.02)

    def test_huber_signal_noise_distribution(self):
        # noise density ~ exp(-huber): compare sample mean of |w| <= c mass
        # against the exact core probability
        sig = huber_signal(d=1, scale=0.0, c=1.0)
        rng_model = student_model(n=3, d=1, signal=sig)
        xs, _ = simulate(rng_model, 40_000, seed=13)
        w = xs.blocks[:, 0]  # zero drift -> every block is a fresh noise draw
        from scipy.special import ndtr

        core = math.sqrt(2 * math.pi) * (2 * ndtr(1.0) - 1)
        tails = 2 * math.exp(-0.5)
        p_core = core / (core + tails)
        assert np.mean(np.abs(w) <= 1.0) == pytest.approx(p_core, abs=0.01)

    def test_neural_exact_size_cap(self):
        with pytest.raises(ShapeError):
            NeuralExact(11, 2, spikes=np.zeros((3, 2, 11)))

    def test_spike_simulation_matches_rates_at_zero_coupling(self):
        # zero coupling makes the field uniform over configurations -> rate 1/2
        lik = NeuralPseudo(3, 40, rates_c=[0.5] * 3, spikes=np.zeros((1, 40, 3)))
        rng_local = np.random.default_rng(14)
        spikes = lik.sample(np.zeros((201, 3)), 0, rng_local)
        assert spikes.shape == (201, 40, 3)
        assert spikes.mean() == pytest.approx(0.5, abs=0.02)
