import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imagine import gaussian as ga
from imagine.errors import DimensionError


def rng(seed=0):
    return np.random.default_rng(seed)


def random_gaussian(r, d=3, spread=2.0):
    return ga.DiagGaussian(r.normal(0, spread, d), r.uniform(-2, 2, d))


# ---------------------------------------------------------------------------
# poe_product


def grid_product_moments(experts, include_prior, lo=-12.0, hi=12.0, n=120001):
    """Numeric-integration oracle: multiply densities on a 1-d grid per
    dimension, normalize, and read off mean and variance."""
    d = experts[0].dim if experts else 1
    means, variances = [], []
    zs = np.linspace(lo, hi, n)
    for i in range(d):
        log_density = np.zeros_like(zs)
        if include_prior:
            log_density += -0.5 * zs**2
        for e in experts:
            log_density += -0.5 * (zs - e.mean[i]) ** 2 / e.var[i]
        density = np.exp(log_density - log_density.max())
        density /= np.trapezoid(density, zs)
        mean = np.trapezoid(zs * density, zs)
        var = np.trapezoid((zs - mean) ** 2 * density, zs)
        means.append(mean)
        variances.append(var)
    return np.array(means), np.array(variances)


def test_poe_no_experts_prior_is_standard_normal():
    out = ga.poe_product([], include_prior=True, dim=5)
    np.testing.assert_array_equal(out.mean, np.zeros(5))
    np.testing.assert_array_equal(out.var, np.ones(5))


def test_poe_two_standard_experts_plus_prior():
    e = ga.DiagGaussian.standard(2)
    out = ga.poe_product([e, e], include_prior=True)
    np.testing.assert_allclose(out.var, 1.0 / 3.0, atol=1e-15)
    np.testing.assert_allclose(out.mean, 0.0, atol=1e-15)
    mean_oracle, var_oracle = grid_product_moments([e, e], True)
    np.testing.assert_allclose(out.mean, mean_oracle, atol=1e-6)
    np.testing.assert_allclose(out.var, var_oracle, atol=1e-6)


def test_poe_single_shifted_expert_plus_prior():
    e = ga.DiagGaussian(np.array([2.0]), np.array([0.0]))
    out = ga.poe_product([e], include_prior=True)
    assert out.var[0] == pytest.approx(0.5, abs=1e-15)
    assert out.mean[0] == pytest.approx(1.0, abs=1e-15)
    mean_oracle, var_oracle = grid_product_moments([e], True)
    assert out.mean[0] == pytest.approx(mean_oracle[0], abs=1e-7)
    assert out.var[0] == pytest.approx(var_oracle[0], abs=1e-7)


def test_poe_random_experts_against_grid_oracle():
    r = rng(42)
    for _ in range(5):
        experts = [random_gaussian(r, d=2, spread=1.5) for _ in range(3)]
        out = ga.poe_product(experts, include_prior=True)
        mean_oracle, var_oracle = grid_product_moments(experts, True)
        np.testing.assert_allclose(out.mean, mean_oracle, atol=1e-5)
        np.testing.assert_allclose(out.var, var_oracle, atol=1e-5)


def test_poe_identical_standard_normals_variance():
    for k in range(1, 11):
        out = ga.poe_product([ga.DiagGaussian.standard(4)] * k, include_prior=True)
        np.testing.assert_allclose(out.var, 1.0 / (k + 1), atol=1e-12)


def test_poe_empty_without_prior_rejected():
    with pytest.raises(DimensionError):
        ga.poe_product([], include_prior=False)


def test_poe_dimension_mismatch():
    with pytest.raises(DimensionError):
        ga.poe_product([ga.DiagGaussian.standard(2), ga.DiagGaussian.standard(3)])


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_poe_order_independent(seed):
    r = rng(seed)
    experts = [random_gaussian(r) for _ in range(r.integers(1, 5))]
    out = ga.poe_product(experts, include_prior=True)
    perm = list(r.permutation(len(experts)))
    out_perm = ga.poe_product([experts[i] for i in perm], include_prior=True)
    np.testing.assert_allclose(out.mean, out_perm.mean, atol=1e-12)
    np.testing.assert_allclose(out.var, out_perm.var, atol=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_poe_precision_monotone(seed):
    r = rng(seed)
    experts = [random_gaussian(r) for _ in range(r.integers(1, 5))]
    base = ga.poe_product(experts, include_prior=True)
    extended = ga.poe_product(experts + [random_gaussian(r)], include_prior=True)
    assert np.all(1.0 / extended.var >= 1.0 / base.var - 1e-12)


# ---------------------------------------------------------------------------
# KL


def test_kl_identity_zero():
    for seed in range(10):
        a = random_gaussian(rng(seed))
        assert ga.kl_diag(a, a) == pytest.approx(0.0, abs=1e-12)


def test_kl_known_values():
    std = ga.DiagGaussian.standard(1)
    shifted = ga.DiagGaussian(np.array([1.0]), np.array([0.0]))
    wide = ga.DiagGaussian(np.array([0.0]), np.array([np.log(4.0)]))
    assert ga.kl_diag(shifted, std) == pytest.approx(0.5, abs=1e-12)
    assert ga.kl_diag(wide, std) == pytest.approx(0.5 * (4 - 1 - np.log(4)), abs=1e-12)
    assert ga.kl_diag(wide, std) == pytest.approx(0.8069, abs=1e-4)


def test_kl_nonnegative_random_pairs():
    r = rng(7)
    for _ in range(1000):
        assert ga.kl_diag(random_gaussian(r), random_gaussian(r)) >= -1e-12


def test_kl_monte_carlo_identity():
    a = ga.DiagGaussian.standard(3)
    est, stderr = ga.kl_monte_carlo(a, a, 20_000, rng(1))
    assert est == pytest.approx(0.0, abs=1e-12)
    assert stderr == pytest.approx(0.0, abs=1e-12)


def test_kl_monte_carlo_matches_closed_form():
    r = rng(3)
    for seed in range(5):
        a = random_gaussian(rng(seed), spread=1.0)
        b = random_gaussian(rng(seed + 100), spread=1.0)
        est, stderr = ga.kl_monte_carlo(a, b, 200_000, r)
        exact = ga.kl_diag(a, b)
        assert abs(est - exact) < 3 * stderr + 1e-9


def test_kl_monte_carlo_mixture_stderr_shrinks():
    mix = ga.GaussianMixture.equal_weight(
        [ga.DiagGaussian(np.array([-2.0]), np.array([0.0])), ga.DiagGaussian(np.array([2.0]), np.array([0.0]))]
    )
    target = ga.DiagGaussian.standard(1)
    est1, err1 = ga.kl_monte_carlo(mix, target, 4_000, rng(0))
    est2, err2 = ga.kl_monte_carlo(mix, target, 64_000, rng(0))
    assert np.isfinite(est1) and np.isfinite(est2)
    assert err2 < err1 / 2.5  # ~1/sqrt(16) = 1/4 expected


def test_kl_monte_carlo_minimum_samples():
    a = ga.DiagGaussian.standard(1)
    with pytest.raises(DimensionError):
        ga.kl_monte_carlo(a, a, 100, rng(0))


# ---------------------------------------------------------------------------
# sample_reparam


def test_reparam_degenerate_variance_returns_mean():
    g = ga.DiagGaussian(np.array([3.0, -1.0]), np.array([-50.0, -50.0]))  # clamps to -20
    z = ga.sample_reparam(g, rng(0), 1000)
    np.testing.assert_allclose(z, np.broadcast_to(g.mean, z.shape), rtol=0, atol=1e-3)


def test_reparam_sample_mean():
    g = ga.DiagGaussian(np.array([1.0, -2.0, 0.5]), np.array([0.4, -0.3, 0.0]))
    n = 100_000
    z = ga.sample_reparam(g, rng(5), n)
    tol = 3.0 * np.sqrt(g.var / n)
    assert np.all(np.abs(z.mean(axis=0) - g.mean) < tol)


def test_reparam_gradient_of_mean_is_one():
    from imagine import autodiff as ad

    mean = ad.parameter("mean", np.array([0.3, -0.7]))
    log_var = ad.parameter("log_var", np.array([0.1, 0.2]))
    eps = ad.constant(rng(9).standard_normal((50, 2)))

    def build():
        z = ad.add(mean, ad.mul(ad.exp(ad.scale(log_var, 0.5)), eps))
        return ad.mean_all(ad.sum_axis(z, 1))

    graph = ad.Graph(build, {"mean": mean, "log_var": log_var})
    _, grads = ad.forward_backward(graph)
    # averaging sum_i z_i over draws leaves d/d mu_i = 1 per dimension
    np.testing.assert_allclose(grads["mean"], np.ones(2), atol=1e-12)
    assert ad.grad_check(graph, 1e-6) < 1e-8


# ---------------------------------------------------------------------------
# mixture_moment_match


def test_moment_match_single_component_identity():
    c = random_gaussian(rng(11))
    matched = ga.mixture_moment_match(ga.GaussianMixture(np.array([1.0]), (c,)))
    np.testing.assert_allclose(matched.mean, c.mean, atol=1e-12)
    np.testing.assert_allclose(matched.var, c.var, rtol=1e-12)


def test_moment_match_two_components():
    mix = ga.GaussianMixture(
        np.array([0.5, 0.5]),
        (ga.DiagGaussian(np.array([0.0]), np.array([0.0])), ga.DiagGaussian(np.array([2.0]), np.array([0.0]))),
    )
    matched = ga.mixture_moment_match(mix)
    assert matched.mean[0] == pytest.approx(1.0, abs=1e-12)
    assert matched.var[0] == pytest.approx(2.0, abs=1e-12)
    z = mix.sample(rng(2), 200_000)
    assert matched.mean[0] == pytest.approx(z.mean(), abs=3 * z.std() / np.sqrt(z.size))
    assert matched.var[0] == pytest.approx(z.var(), rel=0.02)


def test_moment_match_degenerate_weight():
    a, b = random_gaussian(rng(1)), random_gaussian(rng(2))
    matched = ga.mixture_moment_match(ga.GaussianMixture(np.array([1.0, 0.0]), (a, b)))
    np.testing.assert_allclose(matched.mean, a.mean, atol=1e-12)
    np.testing.assert_allclose(matched.var, a.var, rtol=1e-9)


def test_moment_match_against_sampling_oracle():
    r = rng(17)
    comps = tuple(random_gaussian(rng(s), d=2, spread=1.5) for s in range(3))
    w = r.dirichlet(np.ones(3))
    mix = ga.GaussianMixture(w, comps)
    matched = ga.mixture_moment_match(mix)
    z = mix.sample(r, 400_000)
    se_mean = z.std(axis=0) / np.sqrt(z.shape[0])
    assert np.all(np.abs(matched.mean - z.mean(axis=0)) < 3.5 * se_mean)
    np.testing.assert_allclose(matched.var, z.var(axis=0), rtol=0.03)


# ---------------------------------------------------------------------------
# slerp


def test_slerp_endpoints():
    z1 = np.array([1.0, 2.0, 3.0])
    z2 = np.array([-1.0, 0.5, 2.0])
    np.testing.assert_allclose(ga.slerp(z1, z2, 0.0), z1, atol=1e-12)
    np.testing.assert_allclose(ga.slerp(z1, z2, 1.0), z2, atol=1e-12)


def test_slerp_orthonormal_midpoint():
    z1 = np.array([1.0, 0.0])
    z2 = np.array([0.0, 1.0])
    np.testing.assert_allclose(ga.slerp(z1, z2, 0.5), (z1 + z2) / np.sqrt(2.0), atol=1e-12)


def test_slerp_collinear_falls_back_to_linear():
    z1 = np.array([1.0, 1.0])
    z2 = 2.0 * z1
    np.testing.assert_allclose(ga.slerp(z1, z2, 0.25), 1.25 * z1, atol=1e-9)


def test_slerp_zero_vector_rejected():
    with pytest.raises(DimensionError):
        ga.slerp(np.zeros(3), np.ones(3), 0.5)
