import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_sums, central_diff, quad_loglik, random_log, random_network, random_params
from prodhawkes.core import EventLog, ModelParams, Network, ParameterDomainError
from prodhawkes.estimate import (FitConfig, PrecomputedSums, cross_validate, feasible_start,
                                 fit_all, fit_subproblem, log_likelihood, log_likelihood_gradient,
                                 objective, precompute_sums, solve_subproblem, user_kernel_sums)
from prodhawkes.evaluate import param_mse
from prodhawkes.simulate import SimConfig, simulate


def _sums_poisson(n, T, P=1):
    return PrecomputedSums(np.zeros((n, P)), np.zeros((n, P)), T, np.zeros(P), np.zeros(P))


def test_config_validation():
    with pytest.raises(ParameterDomainError):
        FitConfig(beta=-1)
    with pytest.raises(ParameterDomainError):
        FitConfig(omega_grid=())
    with pytest.raises(ParameterDomainError):
        FitConfig(validation_fraction=1.0)


def test_precompute_trivial():
    log = EventLog([], [], [], 2, 2, 0.0, 5.0)
    s = precompute_sums(log, Network(2, ()), 0, 0, 1.0)
    assert s.num_events == 0 and s.g_own.sum() == 0 and s.g_exp.sum() == 0
    log = EventLog([1.0, 3.0], [0, 0], [1, 0], 1, 2, 0.0, 5.0)
    s = precompute_sums(log, Network(1, ()), 0, 0, 1.0)
    np.testing.assert_allclose(s.k_own, [[0.0, np.exp(-2.0)]])
    np.testing.assert_allclose(s.k_exp, [[0.0, 0.0]])


def test_precompute_matches_quadratic_oracle():
    rng = np.random.default_rng(7)
    net = random_network(6, 0.4, rng)
    log = random_log(6, 3, 500, 50.0, rng)
    for u in range(6):
        us = user_kernel_sums(log, net, u, 0.7, 10.0, 40.0)
        ko, ke, prods = brute_sums(log, net, u, 0.7, 10.0, 40.0)
        np.testing.assert_array_equal(us.products, prods)
        np.testing.assert_allclose(us.k_own, ko, rtol=1e-9, atol=1e-300)
        np.testing.assert_allclose(us.k_exp, ke, rtol=1e-9, atol=1e-300)


@given(st.integers(0, 10_000))
def test_precompute_ties_excluded(seed):
    rng = np.random.default_rng(seed)
    net = random_network(4, 0.5, rng)
    log = random_log(4, 2, 40, 10.0, rng, integer_times=True)
    us = user_kernel_sums(log, net, 1, 1.0)
    ko, ke, _ = brute_sums(log, net, 1, 1.0, 0.0, 10.0)
    np.testing.assert_allclose(us.k_own, ko, rtol=1e-9, atol=1e-300)
    np.testing.assert_allclose(us.k_exp, ke, rtol=1e-9, atol=1e-300)


def test_loglik_trivial():
    assert log_likelihood([1.0, 0, 0], _sums_poisson(1, 1.0)) == pytest.approx(-1.0)
    assert log_likelihood([0.5, 0, 0], _sums_poisson(0, 4.0)) == pytest.approx(-2.0)


def test_loglik_quadrature_general():
    rng = np.random.default_rng(2)
    net = random_network(3, 0.6, rng)
    p = random_params(3, 2, rng, scale=0.3)
    p.A = np.abs(p.A)
    p.B = np.abs(p.B)
    log = simulate(net, p, SimConfig(T=200.0, max_events=50, rng_seed=1))
    for u in range(3):
        us = user_kernel_sums(log, net, u, p.omega)
        for q in range(2):
            want = quad_loglik(p, log, net, u, q, log.t0, log.T, clamp=True)
            got = log_likelihood(p.row(u, q), us.for_product(q))
            assert got == pytest.approx(want, rel=1e-6)


def test_gradient_trivial():
    s = _sums_poisson(7, 2.0)
    g = log_likelihood_gradient([0.5, 0, 0], s)
    assert g[0] == pytest.approx(7 / 0.5 - 2.0)
    assert log_likelihood_gradient([3.5, 0, 0], s)[0] == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_objective_convex(seed):
    rng = np.random.default_rng(seed)
    net = random_network(4, 0.5, rng)
    log = random_log(4, 2, 60, 20.0, rng)
    s = precompute_sums(log, net, 0, 1, 1.0)
    x = feasible_start(s, rng.uniform(0, 1, 5))
    y = feasible_start(s, rng.uniform(0, 1, 5))
    th = rng.uniform()
    lhs = objective(th * x + (1 - th) * y, s, 0.5)
    assert lhs <= th * objective(x, s, 0.5) + (1 - th) * objective(y, s, 0.5) + 1e-9


def _toy(seed, V=6, P=2, T=300.0):
    rng = np.random.default_rng(seed)
    net = random_network(V, 0.4, rng)
    p = ModelParams(rng.uniform(0.1, 0.5, (V, P)), rng.uniform(0, 0.3, (V, P, P)),
                    rng.uniform(0, 0.1, (V, P, P)), 1.0)
    return net, p, simulate(net, p, SimConfig(T=T, rng_seed=seed))


def test_zero_events_all_zero():
    s = precompute_sums(EventLog([], [], [], 1, 2, 0.0, 10.0), Network(1, ()), 0, 0, 1.0)
    res = solve_subproblem(s, 1.0)
    assert res.converged
    np.testing.assert_allclose(res.x, 0.0, atol=1e-8)


def test_poisson_restricted_recovers_rate():
    s = _sums_poisson(37, 12.5, P=2)
    free = np.array([True, False, False, False, False])
    res = solve_subproblem(s, 0.0, free=free)
    assert res.converged
    assert res.x[0] == pytest.approx(37 / 12.5, rel=1e-7)
    assert np.all(res.x[1:] == 0)


def test_multistart_agree():
    net, p, log = _toy(3)
    rng = np.random.default_rng(0)
    for u in range(3):
        s = precompute_sums(log, net, u, 0, 1.0)
        vals = []
        for _ in range(5):
            x0 = feasible_start(s, np.concatenate(([rng.uniform(0.1, 1)], rng.uniform(-0.5, 0.5, 4))))
            res = solve_subproblem(s, 1.0, x0=x0)
            assert res.converged
            vals.append(res.objective)
        assert max(vals) - min(vals) <= 1e-5 * abs(min(vals))


def test_norm_non_increasing_in_beta():
    net, p, log = _toy(4)
    s = precompute_sums(log, net, 1, 1, 1.0)
    norms = [np.linalg.norm(solve_subproblem(s, b).x) for b in (0.01, 0.1, 1, 10, 100)]
    assert all(a >= b - 1e-8 for a, b in zip(norms, norms[1:]))


def test_fit_all_single_user_equals_subproblem():
    rng = np.random.default_rng(1)
    net = Network(1, ())
    p = ModelParams(np.array([[0.5]]), np.array([[[0.4]]]), np.zeros((1, 1, 1)), 1.0)
    log = simulate(net, p, SimConfig(T=200.0, rng_seed=2))
    cfg = FitConfig()
    fitted = fit_all(log, net, cfg, 1.0)
    res = fit_subproblem(log, net, 0, 0, cfg, 1.0)
    np.testing.assert_array_equal(fitted.row(0, 0), res.x)


def test_fit_all_permutation_equivariant():
    net, p, log = _toy(5, V=5)
    perm = np.array([3, 0, 4, 1, 2])
    net2 = Network(5, tuple((int(perm[v]), int(perm[u])) for v, u in net.edges))
    log2 = EventLog(log.times, perm[log.users], log.products, 5, 2, log.t0, log.T)
    cfg = FitConfig()
    a, b = fit_all(log, net, cfg), fit_all(log2, net2, cfg)
    np.testing.assert_allclose(b.mu[perm], a.mu, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(b.A[perm], a.A, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(b.B[perm], a.B, rtol=1e-6, atol=1e-9)


def test_parallel_matches_serial():
    net, p, log = _toy(6, V=5)
    cfg = FitConfig()
    a, b = fit_all(log, net, cfg), fit_all(log, net, cfg, jobs=2)
    assert a == b


def test_recovery_improves_with_data():
    # well-specified regime: non-negative weights, no regulariser
    rng = np.random.default_rng(0)
    V, P = 12, 2
    net = random_network(V, 0.25, rng)
    true = ModelParams(rng.uniform(0.2, 0.6, (V, P)), rng.uniform(0, 0.3, (V, P, P)),
                       rng.uniform(0, 0.1, (V, P, P)), 1.0)
    cfg = FitConfig(beta=0.0)
    mses = []
    for T in (250.0, 1000.0, 4000.0):
        log = simulate(net, true, SimConfig(T=T, rng_seed=1))
        mses.append(param_mse(true, fit_all(log, net, cfg)))
    assert mses[0] > mses[1] > mses[2]
    assert mses[2] < 0.01


def test_cross_validation_grid_rules():
    net, p, log = _toy(7, V=4, T=100.0)
    one = cross_validate(log, net, FitConfig(omega_grid=(2.0,), beta_grid=(10.0,)))
    assert (one.beta, one.omega) == (10.0, 2.0)
    assert one.params == fit_all(log, net, FitConfig(beta=10.0), 2.0, beta=10.0)
    dup = cross_validate(log, net, FitConfig(omega_grid=(1.0, 1.0), beta_grid=(1.0, 1.0)))
    assert (dup.beta, dup.omega) == (1.0, 1.0)
    assert len(dup.scores) == 1


def test_cross_validation_selects_true_omega():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        V = 4
        net = random_network(V, 0.5, rng)
        true = ModelParams(rng.uniform(0.2, 0.5, (V, 1)), rng.uniform(0.5, 0.7, (V, 1, 1)),
                           np.zeros((V, 1, 1)), 1.0)
        log = simulate(net, true, SimConfig(T=400.0, rng_seed=seed))
        cv = cross_validate(log, net, FitConfig(omega_grid=(0.25, 1.0, 4.0), beta_grid=(0.1,)))
        hits += cv.omega == 1.0
    assert hits >= 16
