"""Ogata thinning for the competing-products process.

Each (user, product) intensity is ``mu + c * exp(-omega * dt)`` between events,
so it moves monotonically towards ``mu``. The dominating rate of a pair is
``mu + max(c, 0) * exp(-omega * dt)``, which never falls below the clamped
intensity until the next accepted event. The total of these is kept in two
Fenwick trees (static base rates and decaying positive excesses) so a proposal
costs O(log |V||P|) and an accepted event O(out-degree * |P| * log |V||P|).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (EventLog, IntensityState, ModelParams, Network, ParameterDomainError,
                   as_model_params, clamped_integral)

# Proposals whose clamped intensity exceeded the dominating rate, summed over
# every simulation run in this process. Must stay zero.
UNDER_BOUND_RETRIES = 0

_RENORM_BELOW = 1e-150
_REFRESH_EVERY = 4096


@dataclass(frozen=True)
class SimConfig:
    t0: float = 0.0
    T: float = 1.0
    max_events: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not self.t0 < self.T:
            raise ParameterDomainError(f"need t0 < T, got [{self.t0}, {self.T})")
        if self.max_events is not None and self.max_events <= 0:
            raise ParameterDomainError("max_events must be positive")


class _Fenwick:
    """Prefix sums over non-negative weights with weighted search."""

    def __init__(self, weights):
        self.n = len(weights)
        self.leaf = [float(w) for w in weights]
        self.rebuild()

    def rebuild(self):
        n = self.n
        tree = [0.0] * (n + 1)
        for i, w in enumerate(self.leaf):
            tree[i + 1] += w
            j = (i + 1) + ((i + 1) & -(i + 1))
            if j <= n:
                tree[j] += tree[i + 1]
        self.tree = tree
        self.total = math.fsum(self.leaf)
        top = 1
        while top * 2 <= n:
            top *= 2
        self.top = top

    def set(self, i, w):
        delta = w - self.leaf[i]
        if delta == 0.0:
            return
        self.leaf[i] = w
        self.total += delta
        tree = self.tree
        n = self.n
        i += 1
        while i <= n:
            tree[i] += delta
            i += i & -i

    def find(self, r):
        """Index ``i`` with ``prefix(i) <= r < prefix(i + 1)`` (clipped to a positive leaf)."""
        tree = self.tree
        pos = 0
        step = self.top
        while step:
            nxt = pos + step
            if nxt <= self.n and tree[nxt] <= r:
                pos = nxt
                r -= tree[nxt]
            step >>= 1
        if pos >= self.n or self.leaf[pos] <= 0.0:
            # rounding pushed r past the last positive weight
            pos = min(pos, self.n - 1)
            while pos > 0 and self.leaf[pos] <= 0.0:
                pos -= 1
        return pos


def explosion_proxy(params: ModelParams, net: Network) -> float:
    """``max_{u,p} sum_l max(0, a_lp + d b_lp) / omega`` with ``d`` the largest in-degree."""
    d = max((len(x) for x in net.observed), default=0)
    jump = np.maximum(params.A + d * params.B, 0.0).sum(axis=1)
    return float(jump.max() / params.omega) if jump.size else 0.0


def thinning_upper_bound(state: IntensityState, params, net: Network | None = None,
                         last_event=None) -> float:
    """Total dominating rate ``sum_{u,p} (mu_up + max(0, c_up))`` at ``state.last_update``.

    Valid until the next accepted event: each clamped intensity decays towards
    its base rate from above or climbs towards it from below. If ``last_event``
    is given it is assumed not yet registered and its jumps are added first.
    """
    params = as_model_params(params)
    c = np.einsum("ul,ulp->up", state.s_own, params.A) + np.einsum("ul,ulp->up", state.s_exposed, params.B)
    if last_event is not None:
        net = net or state.net
        c = c.copy()
        c[last_event.user] += params.A[last_event.user, last_event.product]
        for w in net.observers[last_event.user]:
            c[w] += params.B[w, last_event.product]
    return float(np.sum(params.mu) + np.sum(np.maximum(c, 0.0)))


def _preload(state_arrays, history: EventLog, net: Network, omega: float, t0: float):
    own, exp_ = state_arrays
    if history is None or len(history) == 0:
        return
    idx = history.history(t0)
    g = np.exp(-omega * (t0 - history.times[idx]))
    np.add.at(own, (history.users[idx], history.products[idx]), g)
    for k, e in zip(idx, g):
        obs = net.observers[history.users[k]]
        exp_[obs, history.products[k]] += e


def simulate(net: Network, params, cfg: SimConfig, history: EventLog | None = None) -> EventLog:
    """Draw one realisation on ``[cfg.t0, cfg.T)``.

    ``history`` optionally supplies events before ``t0`` that the process is
    conditioned on. If ``cfg.max_events`` is hit the log is flagged
    ``truncated`` and its horizon ends just after the last event.
    """
    global UNDER_BOUND_RETRIES
    params = as_model_params(params)
    V, P = params.num_users, params.num_products
    if V != net.num_users:
        raise ParameterDomainError(f"{V} parameter sets for {net.num_users} users")
    omega = params.omega
    proxy = explosion_proxy(params, net)
    if proxy >= 1:
        warnings.warn(f"branching proxy {proxy:.3g} >= 1; the process may explode", RuntimeWarning,
                      stacklevel=2)

    rng = np.random.default_rng(cfg.rng_seed)
    buf = rng.random(8192)
    pos = 0

    mu = params.mu
    A, B = params.A, params.B
    own = np.zeros((V, P))
    expo = np.zeros((V, P))
    _preload((own, expo), history, net, omega, cfg.t0)
    ref = cfg.t0
    c = np.einsum("ul,ulp->up", own, A) + np.einsum("ul,ulp->up", expo, B)
    c_flat = c.ravel().tolist()
    mu_tree = _Fenwick(mu.ravel())
    w_tree = _Fenwick(np.maximum(c, 0.0).ravel())
    M = mu_tree.total
    observers = [x.tolist() for x in net.observers]
    mu_flat = mu.ravel().tolist()
    A_rows = A.tolist()  # A_rows[u][l] -> list over p
    B_rows = B.tolist()

    times, users, prods = [], [], []
    retries = rejected = 0
    rewrites = 0
    truncated = False
    t = cfg.t0
    T = cfg.T
    max_events = cfg.max_events
    since_refresh = 0
    exp_ = math.exp
    log_ = math.log

    while True:
        scale = exp_(-omega * (t - ref))
        bound = M + scale * w_tree.total
        if bound <= 0.0:
            break
        if pos + 3 > len(buf):
            buf = rng.random(8192)
            pos = 0
        s = t - log_(1.0 - buf[pos]) / bound
        pos += 1
        if s >= T:
            break
        scale = exp_(-omega * (s - ref))
        r = buf[pos] * bound
        pos += 1
        if r < M:
            k = mu_tree.find(r)
        else:
            xw = scale * w_tree.total
            if r - M >= xw:
                rejected += 1
                t = s
                continue
            k = w_tree.find((r - M) / scale)
        dom = mu_flat[k] + scale * w_tree.leaf[k]
        lam = mu_flat[k] + scale * c_flat[k]
        if lam > dom * (1.0 + 1e-9):
            retries += 1
        if buf[pos] * dom >= lam:
            pos += 1
            rejected += 1
            t = s
            continue
        pos += 1

        t = s
        u, p = divmod(k, P)
        times.append(s)
        users.append(u)
        prods.append(p)
        inc = 1.0 / scale
        # own history of u: every product of u shifts by A[u][p, :]
        row = A_rows[u][p]
        base = u * P
        for q in range(P):
            val = c_flat[base + q] + inc * row[q]
            c_flat[base + q] = val
            w_tree.set(base + q, val if val > 0.0 else 0.0)
        own[u, p] += inc
        obs = observers[u]
        for x in obs:
            row = B_rows[x][p]
            base = x * P
            for q in range(P):
                val = c_flat[base + q] + inc * row[q]
                c_flat[base + q] = val
                w_tree.set(base + q, val if val > 0.0 else 0.0)
        if obs:
            expo[obs, p] += inc
        rewrites += (1 + len(obs)) * P
        if max_events is not None and len(times) >= max_events:
            truncated = True
            break
        since_refresh += 1
        if scale < _RENORM_BELOW or since_refresh >= _REFRESH_EVERY:
            since_refresh = 0
            f = exp_(-omega * (t - ref))
            own *= f
            expo *= f
            ref = t
            c = np.einsum("ul,ulp->up", own, A) + np.einsum("ul,ulp->up", expo, B)
            c_flat = c.ravel().tolist()
            w_tree.leaf = np.maximum(c, 0.0).ravel().tolist()
            w_tree.rebuild()

    UNDER_BOUND_RETRIES += retries
    horizon = T
    if truncated:
        horizon = float(np.nextafter(times[-1], np.inf))
    out = EventLog(times, users, prods, V, P, cfg.t0, horizon, truncated=truncated)
    out.diagnostics = {"under_bound_retries": retries, "rejected": rejected,
                       "rewrites": rewrites, "branching_proxy": proxy}
    return out


def compensator_increments(log: EventLog, net: Network, params):
    """Clamped compensator between consecutive events of each (user, product).

    Replays the whole log from ``t0``, integrating ``max(0, lambda_up)`` exactly
    between successive event times; the first increment of a pair starts at
    ``t0``. Returns a dict ``(u, p) -> increments``; under the true parameters
    every increment is Exp(1).
    """
    params = as_model_params(params)
    V, P = params.num_users, params.num_products
    state = IntensityState(net, P, params.omega, log.t0)
    acc = np.zeros((V, P))
    out: dict[tuple[int, int], list] = {}
    i = 0
    n = len(log)
    while i < n:
        t = log.times[i]
        dt = t - state.last_update
        excess = (np.einsum("ul,ulp->up", state.s_own, params.A)
                  + np.einsum("ul,ulp->up", state.s_exposed, params.B))
        acc += clamped_integral(params.mu, excess, params.omega, dt)
        state.advance_to(t)
        j = i
        while j < n and log.times[j] == t:
            j += 1
        for k in range(i, j):
            u, p = int(log.users[k]), int(log.products[k])
            out.setdefault((u, p), []).append(acc[u, p])
            acc[u, p] = 0.0
        for k in range(i, j):
            state.register(log[k])
        i = j
    return {key: np.array(v) for key, v in out.items()}


def draw_synthetic_params(num_users: int, num_products: int, rng_seed: int,
                          mu_fraction: float = 0.1, omega: float = 1.0) -> ModelParams:
    """Random per-user parameters for synthetic experiments.

    Same-product effects ``a_pp, b_pp ~ U(0, 1)``, cross-product effects
    ``~ U(-1, 1)``; a ``mu_fraction`` share of users gets ``mu_p ~ U(0, 1)``,
    the rest ``mu = 0``.
    """
    if not 0 <= mu_fraction <= 1:
        raise ParameterDomainError("mu_fraction must lie in [0, 1]")
    rng = np.random.default_rng(rng_seed)
    V, P = num_users, num_products
    A = rng.uniform(-1, 1, (V, P, P))
    B = rng.uniform(-1, 1, (V, P, P))
    diag = np.arange(P)
    A[:, diag, diag] = rng.uniform(0, 1, (V, P))
    B[:, diag, diag] = rng.uniform(0, 1, (V, P))
    mu = np.zeros((V, P))
    chosen = rng.random(V) < mu_fraction
    mu[chosen] = rng.uniform(0, 1, (int(chosen.sum()), P))
    return ModelParams(mu, A, B, omega)
