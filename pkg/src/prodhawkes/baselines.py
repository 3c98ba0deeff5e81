"""Comparison models: homogeneous Poisson, Weibull renewal and a lag-weight Recency model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import ParameterDomainError

WEIBULL_MAX_SHAPE = 100.0
RECENCY_MEMORY = 5


def fit_poisson(num_events: int, window: tuple[float, float]) -> float:
    t0, T = window
    if not T > t0:
        raise ParameterDomainError("window length must be positive")
    return num_events / (T - t0)


def poisson_loglik(rate: float, num_events: int, length: float) -> float:
    if num_events == 0:
        return -rate * length
    if rate <= 0:
        return -math.inf
    return num_events * math.log(rate) - rate * length


@dataclass(frozen=True)
class WeibullParams:
    k: float
    lam: float

    def __post_init__(self):
        if not (self.k > 0 and self.lam > 0):
            raise ParameterDomainError("Weibull shape and rate must be positive")

    def intensity(self, elapsed):
        """Hazard ``k * elapsed**(k-1) * lam**k`` since the last event."""
        elapsed = np.asarray(elapsed, dtype=float)
        with np.errstate(divide="ignore"):
            return self.k * elapsed ** (self.k - 1) * self.lam ** self.k

    def cumulative(self, elapsed):
        return (self.lam * np.asarray(elapsed, dtype=float)) ** self.k


def _weibull_score(k, logx, x_scaled):
    xk = x_scaled ** k
    return 1.0 / k + logx.mean() - np.sum(xk * logx) / np.sum(xk)


def fit_weibull(gaps) -> WeibullParams | None:
    """Maximum likelihood for i.i.d. Weibull gaps; ``None`` with fewer than two gaps.

    The rate is profiled out (``lam**k = n / sum x**k``) and the shape solved
    from the profile score. Gaps of (near) identical length have no finite
    maximiser; the shape is then capped at ``WEIBULL_MAX_SHAPE``.
    """
    x = np.asarray(gaps, dtype=float)
    x = x[x > 0]
    if len(x) < 2:
        return None
    # rescaling by the geometric mean keeps x**k finite for large k
    gm = math.exp(np.log(x).mean())
    xs = x / gm
    logx = np.log(xs)
    lo, hi = 1e-3, WEIBULL_MAX_SHAPE
    if _weibull_score(hi, logx, xs) > 0:
        k = hi
    elif _weibull_score(lo, logx, xs) < 0:
        k = lo
    else:
        k = brentq(_weibull_score, lo, hi, args=(logx, xs), xtol=1e-12)
    lam = (len(x) / np.sum(xs ** k)) ** (1.0 / k) / gm
    return WeibullParams(float(k), float(lam))


def weibull_gap_loglik(params: WeibullParams, gaps) -> float:
    x = np.asarray(gaps, dtype=float)
    k, lam = params.k, params.lam
    return float(np.sum(np.log(k) + k * np.log(lam) + (k - 1) * np.log(x) - (lam * x) ** k))


def weibull_window_loglik(params: WeibullParams, times, start: float, end: float,
                          last_before: float | None = None) -> float:
    """Renewal log-likelihood of ``times`` on ``[start, end)``.

    The clock starts at ``last_before`` (the last earlier event) or at ``start``
    and restarts at each event; the tail after the last event is censored.
    """
    times = np.asarray(times, dtype=float)
    origin = start if last_before is None else last_before
    anchors = np.concatenate(([origin], times))
    gaps = np.diff(anchors)
    k, lam = params.k, params.lam
    # the censored pieces are measured from the window start
    first_offset = start - origin
    total = 0.0
    if len(times):
        with np.errstate(divide="ignore"):
            total += float(np.sum(np.log(params.intensity(gaps))))
        total -= float(np.sum(params.cumulative(gaps))) - float(params.cumulative(first_offset))
    tail_start = anchors[-1]
    total -= float(params.cumulative(end - tail_start))
    if not len(times):
        total += float(params.cumulative(first_offset))
    return total


@dataclass(frozen=True)
class RecencyParams:
    """Weights for lags ``1..memory`` followed by the mass reserved for unseen products."""

    memory: int
    weights: tuple

    def __post_init__(self):
        if self.memory < 1:
            raise ParameterDomainError("memory must be a positive integer")
        if len(self.weights) != self.memory + 1:
            raise ParameterDomainError("need memory + 1 weights")
        if any(w < 0 for w in self.weights):
            raise ParameterDomainError("weights must be non-negative")


def fit_recency(products, memory: int = RECENCY_MEMORY, smoothing: float = 1.0) -> RecencyParams:
    """Lag weights from how often the next product repeats the one ``j`` steps back.

    ``w_j`` is proportional to ``hits_j + smoothing``; the last weight is the
    smoothed count of uses of a product absent from the preceding window.
    """
    seq = list(products)
    hits = np.zeros(memory)
    novel = 0
    for i in range(1, len(seq)):
        window = seq[max(0, i - memory):i][::-1]
        for j, q in enumerate(window):
            if q == seq[i]:
                hits[j] += 1
        if seq[i] not in window:
            novel += 1
    counts = np.concatenate((hits, [novel])) + smoothing
    return RecencyParams(memory, tuple((counts / counts.sum()).tolist()))


def predict_recency(params: RecencyParams, recent, num_products: int) -> np.ndarray:
    """Distribution over products given the most recent products (latest last)."""
    window = list(recent)[-params.memory:][::-1]
    w = np.asarray(params.weights)
    score = np.zeros(num_products)
    for j, q in enumerate(window):
        score[q] += w[j]
    absent = np.ones(num_products, dtype=bool)
    absent[list(set(window))] = False
    if absent.any():
        score[absent] += w[-1] / absent.sum()
    total = score.sum()
    if total <= 0:
        return np.full(num_products, 1.0 / num_products)
    return score / total


def _last_before(times: np.ndarray, t: float):
    i = np.searchsorted(times, t, side="left")
    return times[i - 1] if i > 0 else None


class PoissonModel:
    name = "poisson"

    def __init__(self, rates):
        self.rates = np.asarray(rates, dtype=float)

    @classmethod
    def fit(cls, log, start: float | None = None, end: float | None = None) -> "PoissonModel":
        start = log.t0 if start is None else start
        end = log.T if end is None else end
        counts = log.window(start, end).counts()
        return cls(counts / (end - start))

    def num_params(self, u: int) -> int:
        return self.rates.shape[1]

    def scores(self, log, u, start, end):
        w = log.window(start, end)
        sel = w.users == u
        n = int(sel.sum())
        return w.products[sel], np.tile(self.rates[u], (n, 1))

    def loglik(self, log, u, start, end):
        w = log.window(start, end)
        counts = np.bincount(w.products[w.users == u], minlength=self.rates.shape[1])
        ll = sum(poisson_loglik(r, int(c), end - start) for r, c in zip(self.rates[u], counts))
        return ll, int(counts.sum())


class WeibullModel:
    """Per (user, product) Weibull renewal process; pairs with too few gaps fall back to Poisson."""

    name = "weibull"

    def __init__(self, params: dict, fallback_rates):
        self.params = params
        self.fallback = np.asarray(fallback_rates, dtype=float)

    @classmethod
    def fit(cls, log, start: float | None = None, end: float | None = None) -> "WeibullModel":
        start = log.t0 if start is None else start
        end = log.T if end is None else end
        w = log.window(start, end)
        params = {}
        for u in range(log.num_users):
            for p in range(log.num_products):
                times = w.times[(w.users == u) & (w.products == p)]
                params[(u, p)] = fit_weibull(np.diff(times))
        return cls(params, PoissonModel.fit(log, start, end).rates)

    def num_params(self, u: int) -> int:
        P = self.fallback.shape[1]
        return sum(1 if self.params.get((u, p)) is None else 2 for p in range(P))

    def _pair_times(self, log, u, p):
        return log.times[(log.users == u) & (log.products == p)]

    def scores(self, log, u, start, end):
        w = log.window(start, end)
        sel = w.users == u
        times, prods = w.times[sel], w.products[sel]
        P = self.fallback.shape[1]
        out = np.zeros((len(times), P))
        for p in range(P):
            wp = self.params.get((u, p))
            if wp is None:
                out[:, p] = self.fallback[u, p]
                continue
            hist = self._pair_times(log, u, p)
            idx = np.searchsorted(hist, times, side="left")
            last = np.where(idx > 0, hist[np.maximum(idx - 1, 0)], log.t0)
            out[:, p] = wp.intensity(times - last)
        return prods, out

    def loglik(self, log, u, start, end):
        total = 0.0
        n = 0
        for p in range(self.fallback.shape[1]):
            hist = self._pair_times(log, u, p)
            inside = hist[(hist >= start) & (hist < end)]
            n += len(inside)
            wp = self.params.get((u, p))
            if wp is None:
                total += poisson_loglik(self.fallback[u, p], len(inside), end - start)
            else:
                total += weibull_window_loglik(wp, inside, start, end, _last_before(hist, start))
        return total, n


class RecencyModel:
    name = "recency"

    def __init__(self, params: dict, num_products: int):
        self.params = params
        self.num_products = num_products

    @classmethod
    def fit(cls, log, start: float | None = None, end: float | None = None,
            memory: int = RECENCY_MEMORY) -> "RecencyModel":
        start = log.t0 if start is None else start
        end = log.T if end is None else end
        w = log.window(start, end)
        params = {u: fit_recency(w.products[w.users == u].tolist(), memory)
                  for u in range(log.num_users)}
        return cls(params, log.num_products)

    def scores(self, log, u, start, end):
        sel = log.users == u
        times, prods = log.times[sel], log.products[sel]
        inside = np.flatnonzero((times >= start) & (times < end))
        rp = self.params[u]
        out = np.zeros((len(inside), self.num_products))
        for row, i in enumerate(inside):
            # events sharing the timestamp are not part of the history
            j = np.searchsorted(times, times[i], side="left")
            out[row] = predict_recency(rp, prods[max(0, j - rp.memory):j], self.num_products)
        return prods[inside], out
