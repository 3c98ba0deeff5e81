"""Slow, direct reference implementations used as test oracles."""

import math

import numpy as np
from scipy import integrate

from prodhawkes.core import EventLog, ModelParams, Network


def brute_intensity(params: ModelParams, log: EventLog, net: Network, u, p, t):
    """Double loop over the full log; no vectorisation, no shared code."""
    neigh = {v for (v, w) in net.edges if w == u}
    om = params.omega
    val = params.mu[u, p]
    for s, v, l in zip(log.times.tolist(), log.users.tolist(), log.products.tolist()):
        if s >= t:
            continue
        g = math.exp(-om * (t - s))
        if v == u:
            val += params.A[u, l, p] * g
        elif v in neigh:
            val += params.B[u, l, p] * g
    return val


def brute_sums(log, net, u, omega, start, end):
    """Per-event decayed counts of u's events in [start, end), quadratic time."""
    neigh = {v for (v, w) in net.edges if w == u}
    P = log.num_products
    rows_own, rows_exp, prods = [], [], []
    T, U, L = log.times.tolist(), log.users.tolist(), log.products.tolist()
    for t, v, p in zip(T, U, L):
        if v != u or not start <= t < end:
            continue
        ko, ke = np.zeros(P), np.zeros(P)
        for s, w, l in zip(T, U, L):
            if s >= t:
                continue
            if w == u:
                ko[l] += math.exp(-omega * (t - s))
            elif w in neigh:
                ke[l] += math.exp(-omega * (t - s))
        rows_own.append(ko)
        rows_exp.append(ke)
        prods.append(p)
    return np.array(rows_own).reshape(-1, P), np.array(rows_exp).reshape(-1, P), np.array(prods, int)


def quad_loglik(params, log, net, u, p, start, end, clamp=False, floor=1e-10):
    """Log terms at events plus the compensator by adaptive quadrature between events."""
    f = lambda t: brute_intensity(params, log, net, u, p, t)
    g = (lambda t: max(0.0, f(t))) if clamp else f
    knots = sorted({start, end, *[t for t in log.times.tolist() if start < t < end]})
    comp = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        val, _ = integrate.quad(g, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        comp += val
    logs = 0.0
    for t, v, q in zip(log.times.tolist(), log.users.tolist(), log.products.tolist()):
        if v == u and q == p and start <= t < end:
            logs += math.log(max(f(t), floor))
    return logs - comp


def central_diff(fun, x, h=1e-6):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        step = h * max(1.0, abs(x[i]))
        e[i] = step
        g[i] = (fun(x + e) - fun(x - e)) / (2 * step)
    return g


def random_network(n, p_edge, rng):
    edges = [(v, u) for v in range(n) for u in range(n) if v != u and rng.random() < p_edge]
    return Network(n, tuple(edges))


def random_log(n_users, n_prod, n_events, T, rng, integer_times=False):
    times = rng.uniform(0, T, n_events)
    if integer_times:
        times = np.floor(times)
    return EventLog(times, rng.integers(0, n_users, n_events), rng.integers(0, n_prod, n_events),
                    n_users, n_prod, 0.0, T)


def random_params(n_users, n_prod, rng, omega=1.0, scale=1.0):
    return ModelParams(rng.uniform(0, 1, (n_users, n_prod)),
                       scale * rng.uniform(-1, 1, (n_users, n_prod, n_prod)),
                       scale * rng.uniform(-1, 1, (n_users, n_prod, n_prod)), omega)
