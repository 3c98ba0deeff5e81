import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prodhawkes.baselines import (PoissonModel, RecencyModel, WeibullModel, WeibullParams,
                                  fit_poisson, fit_recency, fit_weibull, poisson_loglik,
                                  predict_recency, weibull_gap_loglik, weibull_window_loglik)
from prodhawkes.core import EventLog, ParameterDomainError


def test_poisson_fit():
    assert fit_poisson(10, (0.0, 5.0)) == 2.0
    assert fit_poisson(0, (0.0, 5.0)) == 0.0
    with pytest.raises(ParameterDomainError):
        fit_poisson(3, (1.0, 1.0))


@given(st.integers(0, 200), st.floats(0.5, 100))
def test_poisson_mle_beats_perturbed(n, T):
    rate = fit_poisson(n, (0.0, T))
    best = poisson_loglik(rate, n, T)
    for f in (0.9, 1.1):
        assert best >= poisson_loglik(rate * f, n, T)


def test_weibull_exponential_gaps():
    gaps = np.random.default_rng(0).exponential(0.5, 20000)
    w = fit_weibull(gaps)
    assert abs(w.k - 1) < 0.1
    assert w.lam == pytest.approx(2.0, rel=0.1)


def test_weibull_constant_gaps_large_shape():
    assert fit_weibull(np.full(30, 2.0)).k > 5
    assert fit_weibull([1.0]) is None


def test_weibull_score_is_zero_at_fit():
    gaps = np.random.default_rng(1).weibull(1.7, 300) * 3
    w = fit_weibull(gaps)
    for dk in (-1e-4, 1e-4):
        lam = (len(gaps) / np.sum(gaps ** (w.k + dk))) ** (1 / (w.k + dk))
        assert weibull_gap_loglik(w, gaps) >= weibull_gap_loglik(WeibullParams(w.k + dk, lam), gaps)


@given(st.lists(st.floats(0.01, 9.99), max_size=20), st.floats(0.1, 5))
def test_weibull_k1_equals_poisson(raw, rate):
    times = np.sort(raw)
    got = weibull_window_loglik(WeibullParams(1.0, rate), times, 0.0, 10.0)
    assert got == pytest.approx(poisson_loglik(rate, len(times), 10.0), rel=1e-10, abs=1e-10)
    got = weibull_window_loglik(WeibullParams(1.0, rate), times, 0.0, 10.0, last_before=-3.0)
    assert got == pytest.approx(poisson_loglik(rate, len(times), 10.0), rel=1e-10, abs=1e-10)


def test_recency_repeated_product():
    probs = []
    for n in (5, 50, 500):
        rp = fit_recency([2] * n)
        probs.append(predict_recency(rp, [2] * n, 3)[2])
    assert probs[0] < probs[1] < probs[2] and probs[2] > 0.99


def test_recency_uniform_weights_near_flat():
    seq = np.random.default_rng(0).integers(0, 2, 20000).tolist()
    w = np.array(fit_recency(seq).weights[:-1])
    assert np.ptp(w) / w.mean() < 0.05


def test_recency_empty_history_uniform():
    rp = fit_recency([0, 1, 0, 0, 1])
    np.testing.assert_allclose(predict_recency(rp, [], 4), 0.25)


@given(st.lists(st.integers(0, 3), max_size=40), st.lists(st.integers(0, 3), max_size=8))
def test_recency_is_distribution(train, recent):
    pr = predict_recency(fit_recency(train), recent, 4)
    assert np.all(pr >= 0) and pr.sum() == pytest.approx(1.0)


def _log():
    return EventLog([0.5, 1.0, 2.0, 2.5, 4.0, 6.0, 6.5, 8.0], [0, 0, 1, 0, 1, 0, 0, 1],
                    [0, 1, 0, 0, 0, 1, 0, 0], 2, 2, 0.0, 10.0)


def test_models_fit_and_score():
    log = _log()
    pm = PoissonModel.fit(log, 0.0, 5.0)
    np.testing.assert_allclose(pm.rates, [[2 / 5, 1 / 5], [2 / 5, 0.0]])
    truth, sc = pm.scores(log, 0, 5.0, 10.0)
    assert truth.tolist() == [1, 0] and sc.shape == (2, 2)
    ll, n = pm.loglik(log, 0, 5.0, 10.0)
    assert n == 2
    assert ll == pytest.approx(math.log(0.4) - 2 + math.log(0.2) - 1)
    wm = WeibullModel.fit(log, 0.0, 10.0)
    assert wm.params[(0, 0)] is not None and wm.params[(1, 1)] is None
    assert wm.num_params(0) == 3  # two for (0, 0), Poisson fallback for (0, 1)
    assert wm.loglik(log, 0, 5.0, 10.0)[1] == 2
    rm = RecencyModel.fit(log, 0.0, 5.0)
    truth, sc = rm.scores(log, 0, 5.0, 10.0)
    np.testing.assert_allclose(sc.sum(axis=1), 1.0)
