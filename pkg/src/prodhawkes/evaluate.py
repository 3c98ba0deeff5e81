"""Evaluation measures: parameter error, prediction probability, held-out
likelihood, AIC, per-user win rates and detection of regime changes.

Models are duck-typed. Every model provides ``scores(log, u, start, end)``
returning the true products of the user's events in the window and a
``(n, P)`` score matrix; continuous-time models also provide
``loglik(log, u, start, end) -> (total, n_events)`` and ``num_params(u)``.
"""

from __future__ import annotations

import math
from decimal import Decimal
from typing import Mapping, Sequence

import numpy as np

from .core import ModelParams, Network, as_model_params
from .estimate import DEFAULT_FLOOR, user_kernel_sums, window_loglik


class HawkesModel:
    name = "hawkes"

    def __init__(self, params, net: Network, first_edge_time: Mapping | None = None,
                 floor: float = DEFAULT_FLOOR):
        self.params = as_model_params(params)
        self.net = net
        self.first_edge_time = first_edge_time
        self.floor = floor

    def num_params(self, u: int) -> int:
        P = self.params.num_products
        return P * (1 + 2 * P)

    def _sums(self, log, u, start, end):
        return user_kernel_sums(log, self.net, u, self.params.omega, start, end, self.first_edge_time)

    def scores(self, log, u, start, end):
        us = self._sums(log, u, start, end)
        return us.products, np.maximum(us.intensities(self.params, u), 0.0)

    def loglik(self, log, u, start, end):
        """Log-likelihood of the clamped process: floored log terms minus the exact
        integral of ``max(0, lambda)``. Equals the fitting objective's likelihood
        whenever the intensity stays positive."""
        ll, n = window_loglik(self.params, log, self.net, start, end, [u], self.floor,
                              self.first_edge_time)
        return ll[u], n[u]


def param_mse(true, est) -> float:
    true, est = as_model_params(true), as_model_params(est)
    a, b = true.flat(), est.flat()
    if true.mu.shape != est.mu.shape:
        raise ValueError(f"shape mismatch: {true.mu.shape} vs {est.mu.shape}")
    return float(np.mean((a - b) ** 2))


def top1(scores: np.ndarray) -> np.ndarray:
    """Highest-scoring product per row; ties go to the lowest index."""
    return np.argmax(scores, axis=1)


def user_prediction_probability(model, log, start: float, end: float,
                                users: Sequence[int] | None = None) -> dict:
    """Per-user fraction of events whose top-ranked product is the true one (``None`` if no events)."""
    users = range(log.num_users) if users is None else users
    out = {}
    for u in users:
        truth, scores = model.scores(log, u, start, end)
        out[u] = float(np.mean(top1(scores) == truth)) if len(truth) else None
    return out


def prediction_probability(model, log, start: float, end: float,
                           users: Sequence[int] | None = None) -> float | None:
    """Fraction of all events in ``[start, end)`` whose top-1 product is correct."""
    users = range(log.num_users) if users is None else users
    hits = n = 0
    for u in users:
        truth, scores = model.scores(log, u, start, end)
        hits += int(np.sum(top1(scores) == truth))
        n += len(truth)
    return hits / n if n else None


def user_avg_loglik(model, log, start: float, end: float, users: Sequence[int] | None = None) -> dict:
    users = range(log.num_users) if users is None else users
    out = {}
    for u in users:
        ll, n = model.loglik(log, u, start, end)
        out[u] = ll / n if n else None
    return out


def avg_test_loglik(model, log, start: float, end: float, users: Sequence[int] | None = None):
    """Total log-likelihood of ``[start, end)`` per event, earlier events as history.

    ``None`` when the window holds no events.
    """
    users = range(log.num_users) if users is None else users
    total = 0.0
    n = 0
    for u in users:
        ll, k = model.loglik(log, u, start, end)
        total += ll
        n += k
    return total / n if n else None


def aic(num_params: int, train_avg_loglik: float) -> float:
    """``2 N_p - 2 L`` with ``L`` the average training log-likelihood per event.

    Evaluated in decimal on the shortest repr of ``L`` so that e.g.
    ``aic(2, -1.18) == 6.36``; only the final conversion rounds.
    """
    if num_params < 1:
        raise ValueError("num_params must be >= 1")
    if not math.isfinite(train_avg_loglik):
        return 2 * num_params - 2 * train_avg_loglik
    return float(2 * Decimal(num_params) - 2 * Decimal(repr(float(train_avg_loglik))))


def user_aic(model, log, start: float, end: float, users: Sequence[int] | None = None) -> dict:
    avg = user_avg_loglik(model, log, start, end, users)
    return {u: (aic(model.num_params(u), v) if v is not None else None) for u, v in avg.items()}


def win_percentages(table: Mapping[str, Sequence], maximize: bool = True) -> dict:
    """Share of users (in %) on which each model attains the best value.

    ``table`` maps model name to per-user values aligned by position; ``None``
    or NaN marks a missing value. Tied models all win, so the shares can sum
    to more than 100. Users with no value at all are skipped.
    """
    names = list(table)
    if not names:
        return {}
    vals = np.array([[np.nan if v is None else float(v) for v in table[m]] for m in names])
    if not maximize:
        vals = -vals
    present = ~np.all(np.isnan(vals), axis=0)
    vals = vals[:, present]
    if vals.shape[1] == 0:
        return {m: 0.0 for m in names}
    best = np.nanmax(vals, axis=0)
    wins = np.sum(vals == best, axis=1)
    return {m: 100.0 * int(w) / vals.shape[1] for m, w in zip(names, wins)}


# nats per event; calibrated on stationary synthetic streams
DEFAULT_DROP_THRESHOLD = 0.5


def rolling_loglik(model, log, start: float, window_length: float, end: float | None = None,
                   users: Sequence[int] | None = None):
    """Average per-event log-likelihood over consecutive windows from ``start``.

    Returns ``(window_starts, values)``; windows without events give NaN.
    """
    end = log.T if end is None else end
    users = range(log.num_users) if users is None else users
    starts = []
    values = []
    t = start
    while t + window_length <= end + 1e-12 * max(1.0, abs(end)):
        v = avg_test_loglik(model, log, t, t + window_length, users)
        starts.append(t)
        values.append(np.nan if v is None else v)
        t += window_length
    return np.array(starts), np.array(values)


def detect_intervention(model, log, start: float, window_length: float,
                        drop_threshold: float = DEFAULT_DROP_THRESHOLD, end: float | None = None,
                        users: Sequence[int] | None = None) -> list:
    """Start times of windows where the per-event log-likelihood collapses.

    A window is flagged when its value falls below the median of the earlier
    unflagged windows minus ``drop_threshold`` (nats per event). Only the
    first window of each run of flagged windows is reported.
    """
    if len(log) == 0:
        return []
    starts, values = rolling_loglik(model, log, start, window_length, end, users)
    changes = []
    history = []
    prev_flag = False
    for t, v in zip(starts, values):
        if np.isnan(v):
            prev_flag = False
            continue
        flagged = bool(history) and v < np.median(history) - drop_threshold
        if flagged:
            if not prev_flag:
                changes.append(float(t))
        else:
            history.append(v)
        prev_flag = flagged
    return changes


METRICS = ("prediction_probability", "avg_test_loglik", "aic")


def evaluation_rows(models: Mapping[str, object], log, train: tuple, test: tuple,
                    users: Sequence[int] | None = None) -> list:
    """Per-user metric rows plus aggregate rows (mean over users, win percentage).

    Rows are ``(user, model, metric, value)`` with ``user`` an index, ``"mean"``
    or ``"win_pct"``. Recency-like models without ``loglik`` only get the
    prediction metric.
    """
    users = list(range(log.num_users)) if users is None else list(users)
    per = {}
    for name, m in models.items():
        per[(name, "prediction_probability")] = user_prediction_probability(m, log, *test, users)
        if hasattr(m, "loglik"):
            per[(name, "avg_test_loglik")] = user_avg_loglik(m, log, *test, users)
            per[(name, "aic")] = user_aic(m, log, *train, users)
    rows = []
    for (name, metric), vals in sorted(per.items()):
        for u in users:
            if vals[u] is not None:
                rows.append((u, name, metric, vals[u]))
    for metric in METRICS:
        names = [n for n in models if (n, metric) in per]
        if not names:
            continue
        for n in names:
            got = [v for v in per[(n, metric)].values() if v is not None]
            if got:
                rows.append(("mean", n, metric, float(np.mean(got))))
        table = {n: [per[(n, metric)][u] for u in users] for n in names}
        for n, pct in win_percentages(table, maximize=(metric != "aic")).items():
            rows.append(("win_pct", n, metric, pct))
    return rows
