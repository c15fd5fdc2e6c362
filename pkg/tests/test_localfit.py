import mpmath
import numpy as np
import pytest
import scipy.linalg

from drrbfpu import localfit
from drrbfpu.errors import LocalFitError, NotPositiveDefiniteError, VanishingDenominatorError
from drrbfpu.kernels import kernel_matrix, matern_c6_value
from drrbfpu.linalg import sign_normalize
from drrbfpu.localfit import (
    FitConfig,
    eval_local,
    eval_local_derivative,
    eval_local_lagrange,
    fit_local_rational,
    model_from_denominator,
    rational_system,
)


def brute_force_fit(nodes, f, c, mu):
    """Explicit inverses and a QZ generalized eigensolve."""
    A = kernel_matrix(nodes, c, mu)
    Ainv = np.linalg.inv(A)
    D = np.diag(f)
    s = f @ f
    Lambda = D @ Ainv @ D / s + Ainv
    Theta = D @ D / s + np.eye(len(f))
    w, V = scipy.linalg.eig(Lambda, Theta)
    k = np.argmin(w.real)
    q = sign_normalize(V[:, k].real)
    return w[k].real, q, Ainv @ (f * q), Ainv @ q


def separated_nodes(rng, n, sep, radius=0.3, center=(0.5, 0.5)):
    pts = []
    while len(pts) < n:
        p = np.asarray(center) + rng.uniform(-radius, radius, 2)
        if all(np.linalg.norm(p - q) >= sep for q in pts):
            pts.append(p)
    return np.array(pts)


def smooth_data(x):
    return np.exp(x[:, 0]) * np.cos(2 * x[:, 1]) + 0.5


def angle(u, v):
    return np.arccos(min(1.0, abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))))


class TestFit:
    def test_constant_reproduction(self):
        rng = np.random.default_rng(0)
        nodes = separated_nodes(rng, 12, 0.03, radius=0.05)
        model = fit_local_rational(nodes, np.full(12, 3.25), FitConfig(c=35.0))
        x = nodes.mean(axis=0) + rng.uniform(-0.04, 0.04, (50, 2))
        np.testing.assert_allclose(eval_local(model, x), 3.25, rtol=1e-10)
        np.testing.assert_allclose(eval_local_derivative(model, x, "x"), 0.0, atol=1e-6 * 3.25)
        np.testing.assert_allclose(eval_local_derivative(model, x, "y"), 0.0, atol=1e-6 * 3.25)

    def test_two_node_oracle(self):
        nodes = np.array([[0.2, 0.3], [0.6, 0.1]])
        f = np.array([1.0, 2.0])
        model = fit_local_rational(nodes, f, FitConfig(c=1.0, mu=0.0))
        lam, q, alpha, beta = brute_force_fit(nodes, f, 1.0, 0.0)
        assert model.lambda_min == pytest.approx(lam, abs=1e-9)
        assert angle(model.q_values, q) <= 1e-6
        np.testing.assert_allclose(model.alpha, alpha, rtol=1e-8)
        np.testing.assert_allclose(model.beta, beta, rtol=1e-8)

    @pytest.mark.parametrize("seed", range(8))
    def test_small_patch_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = rng.integers(3, 13)
        nodes = separated_nodes(rng, n, 0.05)
        f = smooth_data(nodes) * rng.choice([-1, 1])
        model = fit_local_rational(nodes, f, FitConfig(c=5.0, mu=0.0))
        lam, q, alpha, beta = brute_force_fit(nodes, f, 5.0, 0.0)
        assert model.lambda_min == pytest.approx(lam, abs=1e-9 * max(1, abs(lam)))
        assert angle(model.q_values, q) <= 1e-6
        np.testing.assert_allclose(model.alpha, alpha, rtol=1e-8, atol=1e-8 * np.abs(alpha).max())
        np.testing.assert_allclose(model.beta, beta, rtol=1e-8, atol=1e-8 * np.abs(beta).max())

    def test_invariants_of_coefficients(self):
        rng = np.random.default_rng(3)
        nodes = separated_nodes(rng, 15, 0.04)
        f = smooth_data(nodes)
        cfg = FitConfig(c=10.0, mu=1e-8)
        model = fit_local_rational(nodes, f, cfg)
        A = kernel_matrix(nodes, cfg.c, model.mu_used)
        assert np.linalg.norm(model.q_values) == pytest.approx(1.0)
        assert model.q_values[np.argmax(np.abs(model.q_values))] > 0
        np.testing.assert_allclose(A @ model.beta, model.q_values, atol=1e-10)
        np.testing.assert_allclose(A @ model.alpha, f * model.q_values, atol=1e-10)

    def test_rayleigh_optimal(self):
        rng = np.random.default_rng(4)
        nodes = separated_nodes(rng, 10, 0.05)
        f = smooth_data(nodes)
        cfg = FitConfig(c=8.0)
        Lambda, Theta, _, _ = rational_system(nodes, f, cfg)
        q = fit_local_rational(nodes, f, cfg).q_values
        rq = (q @ Lambda @ q) / (q @ Theta @ q)
        for _ in range(100):
            v = rng.standard_normal(10)
            v /= np.linalg.norm(v)
            assert rq <= (v @ Lambda @ v) / (v @ Theta @ v) + 1e-9

    def test_zero_data(self):
        nodes = np.array([[0.1, 0.1], [0.2, 0.1], [0.1, 0.25]])
        model = fit_local_rational(nodes, np.zeros(3))
        assert model.is_zero
        assert eval_local(model, [0.15, 0.15]) == 0.0
        assert eval_local_derivative(model, [0.15, 0.15], "y") == 0.0

    def test_too_few_nodes(self):
        with pytest.raises(LocalFitError):
            fit_local_rational([[0.5, 0.5]], [1.0])

    def test_duplicate_nodes(self):
        with pytest.raises(LocalFitError):
            fit_local_rational([[0.5, 0.5], [0.5, 0.5]], [1.0, 2.0])

    def test_mu_escalation(self, monkeypatch):
        calls = []
        real = localfit.cholesky_factor

        def flaky(M):
            calls.append(M[0, 0])
            if len(calls) == 1:
                raise NotPositiveDefiniteError(0)
            return real(M)

        monkeypatch.setattr(localfit, "cholesky_factor", flaky)
        nodes = np.array([[0.1, 0.1], [0.2, 0.1], [0.1, 0.25]])
        model = fit_local_rational(nodes, [1.0, 2.0, 3.0], FitConfig(mu=1e-8))
        assert model.mu_used == pytest.approx(1e-6)
        assert calls[1] - calls[0] == pytest.approx(1e-6 - 1e-8)

    def test_failure_after_escalation(self, monkeypatch):
        def broken(M):
            raise NotPositiveDefiniteError(2)

        monkeypatch.setattr(localfit, "cholesky_factor", broken)
        with pytest.raises(LocalFitError) as info:
            fit_local_rational([[0.1, 0.1], [0.2, 0.1], [0.1, 0.25]], [1.0, 2.0, 3.0])
        assert info.value.diagnostics["mu"] == pytest.approx(1e-6)
        assert info.value.diagnostics["pivot"] == 2


class TestInterpolation:
    @pytest.mark.parametrize("seed", range(6))
    def test_exact_at_nodes(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 31))
        nodes = separated_nodes(rng, n, 0.05)
        f = smooth_data(nodes)
        model = fit_local_rational(nodes, f, FitConfig(c=35.0, mu=0.0))
        assert np.max(np.abs(eval_local(model, nodes) - f)) <= 1e-8 * np.abs(f).max()
        model = fit_local_rational(nodes, f, FitConfig(c=35.0, mu=1e-8))
        assert np.max(np.abs(eval_local(model, nodes) - f)) <= 1e-4 * np.abs(f).max()

    def test_extended_precision_sum(self):
        rng = np.random.default_rng(7)
        nodes = separated_nodes(rng, 20, 0.04)
        model = fit_local_rational(nodes, smooth_data(nodes), FitConfig(c=20.0))
        mpmath.mp.dps = 40
        try:
            for x in nodes.mean(axis=0) + rng.uniform(-0.2, 0.2, (10, 2)):
                p = q = mpmath.mpf(0)
                for a, b, xj in zip(model.alpha, model.beta, model.nodes):
                    r = mpmath.sqrt((mpmath.mpf(x[0]) - xj[0]) ** 2 + (mpmath.mpf(x[1]) - xj[1]) ** 2)
                    cr = 20 * r
                    phi = mpmath.exp(-cr) * (15 + 15 * cr + 6 * cr**2 + cr**3)
                    p += mpmath.mpf(a) * phi
                    q += mpmath.mpf(b) * phi
                assert eval_local(model, x) == pytest.approx(float(p / q), rel=1e-10)
        finally:
            mpmath.mp.dps = 15


class TestDerivative:
    def test_against_finite_differences(self):
        rng = np.random.default_rng(8)
        nodes = separated_nodes(rng, 25, 0.015, radius=0.05)
        model = fit_local_rational(nodes, smooth_data(nodes), FitConfig(c=35.0))
        h = 1e-6
        for x in nodes.mean(axis=0) + rng.uniform(-0.04, 0.04, (40, 2)):
            for axis, e in (("x", np.array([h, 0])), ("y", np.array([0, h]))):
                fd = (eval_local(model, x + e) - eval_local(model, x - e)) / (2 * h)
                d = eval_local_derivative(model, x, axis)
                assert abs(d - fd) <= 1e-5 * max(1.0, abs(fd))

    def test_mirror_symmetry(self):
        half = np.array([[0.1, 0.2], [0.3, 0.35], [0.2, 0.6], [0.4, 0.8], [0.05, 0.9]])
        nodes = np.vstack([half, np.column_stack([1 - half[:, 0], half[:, 1]])])
        f = np.tile(np.sin(3 * half[:, 1]) + half[:, 0] + 1.0, 2)
        model = fit_local_rational(nodes, f, FitConfig(c=4.0))
        for x in np.random.default_rng(9).random((20, 2)):
            xm = np.array([1 - x[0], x[1]])
            assert eval_local(model, x) == pytest.approx(eval_local(model, xm), rel=1e-8)
            dx, dxm = eval_local_derivative(model, x, "x"), eval_local_derivative(model, xm, "x")
            assert dx == pytest.approx(-dxm, rel=1e-7, abs=1e-9)

    def test_bad_axis(self):
        model = fit_local_rational([[0.1, 0.1], [0.2, 0.2]], [1.0, 2.0])
        with pytest.raises(ValueError):
            eval_local_derivative(model, [0.1, 0.1], "z")


class TestScaleInvariance:
    @pytest.mark.parametrize("t", [-3.0, 1e-3, 250.0])
    def test_q_scaling(self, t):
        rng = np.random.default_rng(10)
        nodes = separated_nodes(rng, 12, 0.05)
        f = smooth_data(nodes)
        cfg = FitConfig(c=10.0)
        Lambda, Theta, L, mu = rational_system(nodes, f, cfg)
        base = fit_local_rational(nodes, f, cfg)
        scaled = model_from_denominator(nodes, f, t * base.q_values, L, mu, cfg)
        x = nodes.mean(axis=0) + rng.uniform(-0.25, 0.25, (30, 2))
        np.testing.assert_allclose(eval_local(scaled, x), eval_local(base, x), rtol=1e-12)
        np.testing.assert_allclose(
            eval_local_derivative(scaled, x, "y"), eval_local_derivative(base, x, "y"), rtol=1e-12
        )


class TestLagrange:
    def test_equivalent_to_quotient(self):
        rng = np.random.default_rng(11)
        nodes = separated_nodes(rng, 15, 0.02, radius=0.06)
        f = smooth_data(nodes)
        model = fit_local_rational(nodes, f, FitConfig(c=35.0))
        x = nodes.mean(axis=0) + rng.uniform(-0.05, 0.05, (100, 2))
        np.testing.assert_allclose(eval_local_lagrange(model, x, f), eval_local(model, x), rtol=1e-8)

    def test_constant(self):
        nodes = np.array([[0.1, 0.1], [0.2, 0.1], [0.1, 0.25], [0.3, 0.3]])
        model = fit_local_rational(nodes, np.full(4, -2.0), FitConfig(c=5.0))
        assert eval_local_lagrange(model, [0.2, 0.2], np.full(4, -2.0)) == pytest.approx(-2.0, rel=1e-10)

    def test_unavailable_for_vanishing_node_value(self):
        nodes = np.array([[0.1, 0.1], [0.3, 0.1], [0.2, 0.3]])
        cfg = FitConfig(c=5.0)
        _, _, L, mu = rational_system(nodes, [1.0, 2.0, 3.0], cfg)
        model = model_from_denominator(nodes, [1.0, 2.0, 3.0], [0.8, 0.6, 0.0], L, mu, cfg)
        assert eval_local_lagrange(model, [0.2, 0.2], [1.0, 2.0, 3.0]) is None


def test_vanishing_denominator_raises():
    nodes = np.array([[0.2, 0.5], [0.8, 0.5]])
    cfg = FitConfig(c=3.0)
    _, _, L, mu = rational_system(nodes, [1.0, 1.0], cfg)
    model = model_from_denominator(nodes, [1.0, 1.0], [1.0, -1.0], L, mu, cfg)
    with pytest.raises(VanishingDenominatorError) as info:
        eval_local(model, [0.5, 0.5])
    assert info.value.point == (0.5, 0.5)
