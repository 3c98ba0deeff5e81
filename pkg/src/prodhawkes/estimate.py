"""Regularised maximum likelihood, one convex subproblem per (user, product).

For a subproblem the intensity at each of the user's events is affine in the
parameter row ``x = (mu_p, A[:, p], B[:, p])``, ``lambda_i = phi_i . x``, and so
is the integrated intensity over the window, ``psi . x``. Everything the
solver needs is therefore the feature matrix ``phi`` and the vector ``psi``,
both built in one pass over the events the user is exposed to.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .core import EventLog, ModelParams, Network, ParameterDomainError
from .network import exposure_history

log = logging.getLogger(__name__)

DEFAULT_FLOOR = 1e-10


@dataclass(frozen=True)
class FitConfig:
    beta: float = 10.0
    omega_grid: tuple = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
    beta_grid: tuple = (0.1, 1.0, 10.0, 100.0)
    intensity_floor: float = DEFAULT_FLOOR
    max_iterations: int = 200
    tolerance: float = 1e-7
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.beta < 0:
            raise ParameterDomainError("beta must be non-negative")
        if not self.omega_grid or not self.beta_grid:
            raise ParameterDomainError("grids must be non-empty")
        if any(w <= 0 for w in self.omega_grid) or any(b < 0 for b in self.beta_grid):
            raise ParameterDomainError("omega grid must be positive and beta grid non-negative")
        if not self.intensity_floor > 0 or not self.tolerance > 0:
            raise ParameterDomainError("intensity_floor and tolerance must be positive")
        if not 0 < self.validation_fraction < 1:
            raise ParameterDomainError("validation_fraction must lie in (0, 1)")


@dataclass
class PrecomputedSums:
    """Kernel sums for one (user, product) on a window of length ``length``.

    ``k_own[i, l]`` / ``k_exp[i, l]`` are the decayed counts of product ``l`` in
    the user's own / observed history at the i-th event; ``g_own[l]`` and
    ``g_exp[l]`` are the kernel integrals over the window.
    """

    k_own: np.ndarray
    k_exp: np.ndarray
    length: float
    g_own: np.ndarray
    g_exp: np.ndarray

    @property
    def num_events(self) -> int:
        return len(self.k_own)

    @property
    def features(self) -> np.ndarray:
        return np.hstack([np.ones((len(self.k_own), 1)), self.k_own, self.k_exp])

    @property
    def compensator_coef(self) -> np.ndarray:
        return np.concatenate(([self.length], self.g_own, self.g_exp))


@dataclass
class UserSums:
    """Kernel sums for every event of one user inside a window."""

    times: np.ndarray
    products: np.ndarray
    k_own: np.ndarray
    k_exp: np.ndarray
    length: float
    g_own: np.ndarray
    g_exp: np.ndarray

    def for_product(self, p: int) -> PrecomputedSums:
        sel = self.products == p
        return PrecomputedSums(self.k_own[sel], self.k_exp[sel], self.length, self.g_own, self.g_exp)

    def intensities(self, params: ModelParams, u: int) -> np.ndarray:
        """Unclamped intensities of all products at each event, shape ``(n, P)``."""
        return params.mu[u] + self.k_own @ params.A[u] + self.k_exp @ params.B[u]


@njit(cache=True)
def _decayed_sums(times, prods, own, query, omega, num_products):
    n = len(times)
    nq = 0
    for i in range(n):
        if query[i]:
            nq += 1
    k_own = np.zeros((nq, num_products))
    k_exp = np.zeros((nq, num_products))
    s_own = np.zeros(num_products)
    s_exp = np.zeros(num_products)
    t_prev = times[0] if n else 0.0
    q = 0
    i = 0
    while i < n:
        t = times[i]
        f = math.exp(-omega * (t - t_prev))
        for l in range(num_products):
            s_own[l] *= f
            s_exp[l] *= f
        t_prev = t
        j = i
        while j < n and times[j] == t:
            j += 1
        # events sharing a timestamp do not see each other
        for k in range(i, j):
            if query[k]:
                for l in range(num_products):
                    k_own[q, l] = s_own[l]
                    k_exp[q, l] = s_exp[l]
                q += 1
        for k in range(i, j):
            if own[k]:
                s_own[prods[k]] += 1.0
            else:
                s_exp[prods[k]] += 1.0
        i = j
    return k_own, k_exp


@njit(cache=True)
def _clamped_piece(mu, c, omega, dt):
    # integral of max(0, mu + c exp(-omega s)) over [0, dt]
    s0 = 0.0
    if c < 0.0 and mu + c < 0.0:
        s0 = dt if mu <= 0.0 else min(math.log(-c / mu) / omega, dt)
    length = dt - s0
    out = mu * length - c * math.exp(-omega * s0) * math.expm1(-omega * length) / omega
    return out if out > 0.0 else 0.0


@njit(cache=True)
def _clamped_compensator(times, jumps, mu, omega, start, end):
    num_products = len(mu)
    c = np.zeros(num_products)
    total = np.zeros(num_products)
    t = start
    for k in range(len(times)):
        if times[k] < start:
            f = math.exp(-omega * (start - times[k]))
            for q in range(num_products):
                c[q] += jumps[k, q] * f
            continue
        dt = times[k] - t
        f = math.exp(-omega * dt)
        for q in range(num_products):
            total[q] += _clamped_piece(mu[q], c[q], omega, dt)
            c[q] = c[q] * f + jumps[k, q]
        t = times[k]
    for q in range(num_products):
        total[q] += _clamped_piece(mu[q], c[q], omega, end - t)
    return total


def clamped_compensator(params: ModelParams, log_: EventLog, net: Network, u: int,
                        start: float | None = None, end: float | None = None,
                        first_edge_time: Mapping | None = None) -> np.ndarray:
    """Exact integral of ``max(0, lambda_up)`` over ``[start, end)`` for every product.

    This is the compensator of the process the simulator draws from. Unlike the
    closed form used for fitting it is not linear in the parameters.
    """
    start = log_.t0 if start is None else float(start)
    end = log_.T if end is None else float(end)
    if end < start:
        raise ParameterDomainError("window end precedes start")
    idx = exposure_history(log_, net, u, end, first_edge_time)
    prods = log_.products[idx]
    own = (log_.users[idx] == u)[:, None]
    jumps = np.where(own, params.A[u][prods], params.B[u][prods])
    return _clamped_compensator(np.ascontiguousarray(log_.times[idx]), np.ascontiguousarray(jumps),
                                np.ascontiguousarray(params.mu[u], dtype=float), float(params.omega),
                                start, end)


def user_kernel_sums(log_: EventLog, net: Network, u: int, omega: float,
                     start: float | None = None, end: float | None = None,
                     first_edge_time: Mapping | None = None) -> UserSums:
    """Kernel sums for user ``u`` on ``[start, end)``; earlier events act as history.

    Runs in time linear in the number of events ``u`` is exposed to.
    """
    if not omega > 0:
        raise ParameterDomainError(f"omega must be positive, got {omega}")
    start = log_.t0 if start is None else float(start)
    end = log_.T if end is None else float(end)
    if end < start:
        raise ParameterDomainError("window end precedes start")
    P = log_.num_products
    idx = exposure_history(log_, net, u, end, first_edge_time)
    times = log_.times[idx]
    prods = log_.products[idx]
    own = log_.users[idx] == u
    query = own & (times >= start)
    k_own, k_exp = _decayed_sums(np.ascontiguousarray(times), np.ascontiguousarray(prods),
                                 own, query, float(omega), P)
    lo = np.maximum(start - times, 0.0)
    hi = end - times
    mass = (np.exp(-omega * lo) - np.exp(-omega * hi)) / omega
    g_own = np.bincount(prods[own], weights=mass[own], minlength=P)
    g_exp = np.bincount(prods[~own], weights=mass[~own], minlength=P)
    return UserSums(times[query], prods[query], k_own, k_exp, end - start, g_own, g_exp)


def precompute_sums(log_: EventLog, net: Network, u: int, p: int, omega: float,
                    start: float | None = None, end: float | None = None,
                    first_edge_time: Mapping | None = None) -> PrecomputedSums:
    return user_kernel_sums(log_, net, u, omega, start, end, first_edge_time).for_product(p)


def log_likelihood(x, sums: PrecomputedSums, floor: float | None = DEFAULT_FLOOR) -> float:
    """Event log-likelihood of one subproblem; ``floor=None`` disables flooring."""
    x = np.asarray(x, dtype=float)
    lam = sums.features @ x
    if floor is not None:
        lam = np.maximum(lam, floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.sum(np.log(lam))
    return float(logs - sums.compensator_coef @ x)


def log_likelihood_gradient(x, sums: PrecomputedSums, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Gradient of :func:`log_likelihood`; floored events contribute nothing."""
    x = np.asarray(x, dtype=float)
    phi = sums.features
    lam = phi @ x
    live = lam > floor
    return phi[live].T @ (1.0 / lam[live]) - sums.compensator_coef


def objective(x, sums: PrecomputedSums, beta: float, floor: float = DEFAULT_FLOOR) -> float:
    x = np.asarray(x, dtype=float)
    return -log_likelihood(x, sums, floor) + beta * float(x @ x)


@dataclass
class SubproblemResult:
    x: np.ndarray
    objective: float
    converged: bool
    iterations: int
    pg_norm: float


def _barrier_objective(x, phi, psi, beta):
    lam = phi @ x
    if lam.size and lam.min() <= 0:
        return math.inf, lam
    return float(-np.sum(np.log(lam)) + psi @ x + beta * (x @ x)), lam


def _projected_gradient(x, g, free):
    pg = np.where(free, g, 0.0)
    if free[0] and x[0] <= 0 and g[0] > 0:
        pg[0] = 0.0
    return pg


def feasible_start(sums: PrecomputedSums, x=None) -> np.ndarray:
    """A point with ``mu >= 0`` and positive intensity at every event.

    Starting from ``x`` (default the Poisson fit), excitation weights are
    shrunk towards zero until every event intensity is positive.
    """
    n = sums.num_events
    dim = 1 + 2 * len(sums.g_own)
    mu0 = n / sums.length if sums.length > 0 else 0.0
    if x is None:
        x = np.zeros(dim)
        x[0] = mu0
        return x
    x = np.array(x, dtype=float)
    x[0] = max(x[0], 0.0)
    if n and x[0] <= 0:
        x[0] = mu0
    phi = sums.features
    for _ in range(200):
        if n == 0 or (phi @ x).min() > 0:
            return x
        x[1:] *= 0.5
    x[1:] = 0.0
    return x


def solve_subproblem(sums: PrecomputedSums, beta: float, *, x0=None, free=None,
                     max_iterations: int = 200, tolerance: float = 1e-7) -> SubproblemResult:
    """Minimise ``-loglik + beta * |x|^2`` subject to ``mu >= 0``.

    Projected Newton with an Armijo backtracking search that also keeps every
    event intensity strictly positive, so the log term is never floored along
    the path. ``free`` masks coordinates that may move; the others stay at
    their ``x0`` values.
    """
    phi = sums.features
    psi = sums.compensator_coef
    dim = phi.shape[1]
    free = np.ones(dim, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    x = feasible_start(sums, x0)
    if x0 is not None:
        x = np.where(free, x, np.asarray(x0, dtype=float))
    f, lam = _barrier_objective(x, phi, psi, beta)
    if not math.isfinite(f):
        raise ParameterDomainError("initial point is infeasible")
    converged = False
    pg_norm = math.inf
    it = 0
    for it in range(1, max_iterations + 1):
        inv = 1.0 / lam
        g = -(phi.T @ inv) + psi + 2 * beta * x
        pg = _projected_gradient(x, g, free)
        pg_norm = float(np.linalg.norm(pg))
        if pg_norm <= tolerance:
            converged = True
            break
        move = free.copy()
        if move[0] and x[0] <= 0 and g[0] > 0:
            move[0] = False
        H = (phi * inv[:, None] ** 2).T @ phi + 2 * beta * np.eye(dim)
        Hm = H[np.ix_(move, move)]
        d = np.zeros(dim)
        try:
            d[move] = -np.linalg.solve(Hm + 1e-12 * np.eye(move.sum()), g[move])
        except np.linalg.LinAlgError:
            d[move] = -g[move]
        if g @ d >= 0:
            d = -np.where(move, g, 0.0)
        step = 1.0
        accepted = False
        decrement = -(g @ d)
        if decrement <= 1e-9 * (1 + abs(f)):
            # objective changes are below its rounding; take the Newton step if feasible
            xn = x + d
            if free[0]:
                xn[0] = max(xn[0], 0.0)
            fn, lamn = _barrier_objective(xn, phi, psi, beta)
            accepted = math.isfinite(fn)
        while not accepted and step > 1e-20:
            xn = x + step * d
            if free[0]:
                xn[0] = max(xn[0], 0.0)
            fn, lamn = _barrier_objective(xn, phi, psi, beta)
            if fn <= f + 1e-4 * (g @ (xn - x)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no descent left at machine precision
            converged = pg_norm <= max(tolerance, 1e-6 * (1 + abs(f)))
            break
        if abs(f - fn) <= 1e-15 * (1 + abs(f)) and np.allclose(xn, x, rtol=0, atol=1e-15):
            x, f, lam = xn, fn, lamn
            break
        x, f, lam = xn, fn, lamn
    return SubproblemResult(x, f, converged, it, pg_norm)


def fit_subproblem(log_: EventLog, net: Network, u: int, p: int, cfg: FitConfig,
                   omega: float, *, sums: PrecomputedSums | None = None, beta: float | None = None,
                   x0=None, free=None, first_edge_time: Mapping | None = None) -> SubproblemResult:
    """Fit ``(mu_p, A[:, p], B[:, p])`` of user ``u`` on the log's full window."""
    if sums is None:
        sums = precompute_sums(log_, net, u, p, omega, first_edge_time=first_edge_time)
    beta = cfg.beta if beta is None else beta
    res = solve_subproblem(sums, beta, x0=x0, free=free, max_iterations=cfg.max_iterations,
                           tolerance=cfg.tolerance)
    if not res.converged:
        log.info("subproblem u=%d p=%d not converged: pg=%.3g after %d iterations",
                 u, p, res.pg_norm, res.iterations)
    return res


def _fit_users(args):
    log_, net, users, omega, beta, cfg, start, end, first_edge_time = args
    out = []
    for u in users:
        us = user_kernel_sums(log_, net, u, omega, start, end, first_edge_time)
        rows = []
        for p in range(log_.num_products):
            res = solve_subproblem(us.for_product(p), beta, max_iterations=cfg.max_iterations,
                                   tolerance=cfg.tolerance)
            rows.append((res.x, res.converged))
        out.append((u, rows))
    return out


def fit_all(log_: EventLog, net: Network, cfg: FitConfig, omega: float = 1.0, *,
            beta: float | None = None, jobs: int = 1, start: float | None = None,
            end: float | None = None, first_edge_time: Mapping | None = None) -> ModelParams:
    """Fit every (user, product) subproblem; ``jobs > 1`` uses worker processes.

    The returned parameters carry ``fit_info`` with the unconverged subproblems.
    """
    beta = cfg.beta if beta is None else beta
    V, P = log_.num_users, log_.num_products
    if V != net.num_users:
        raise ParameterDomainError("log and network disagree on the number of users")
    params = ModelParams.zeros(V, P, omega)
    users = list(range(V))
    if jobs <= 1:
        chunks = [users]
    else:
        chunks = [users[i::jobs] for i in range(jobs)]
    tasks = [(log_, net, chunk, omega, beta, cfg, start, end, first_edge_time) for chunk in chunks]
    if jobs <= 1:
        results = map(_fit_users, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        results = pool.map(_fit_users, tasks)
    unconverged = []
    for chunk in results:
        for u, rows in chunk:
            for p, (x, ok) in enumerate(rows):
                params.set_row(u, p, x)
                if not ok:
                    unconverged.append((u, p))
    if jobs > 1:
        pool.shutdown()
    unconverged.sort()
    if unconverged:
        log.info("%d of %d subproblems did not converge", len(unconverged), V * P)
    params.fit_info = {"unconverged": unconverged, "beta": beta, "omega": omega}
    return params


def window_loglik(params: ModelParams, log_: EventLog, net: Network, start: float, end: float,
                  users: Sequence[int] | None = None, floor: float = DEFAULT_FLOOR,
                  first_edge_time: Mapping | None = None, clamped: bool = True):
    """Per-user log-likelihood on ``[start, end)`` and event counts, with prior history.

    ``clamped`` integrates ``max(0, lambda)`` exactly (the likelihood of the
    simulated process); otherwise the linear closed form used for fitting.
    """
    users = range(log_.num_users) if users is None else users
    ll = {}
    counts = {}
    for u in users:
        us = user_kernel_sums(log_, net, u, params.omega, start, end, first_edge_time)
        if clamped:
            lam = us.intensities(params, u)[np.arange(len(us.times)), us.products]
            comp = clamped_compensator(params, log_, net, u, start, end, first_edge_time)
            total = float(np.sum(np.log(np.maximum(lam, floor))) - comp.sum())
        else:
            total = 0.0
            for p in range(log_.num_products):
                total += log_likelihood(params.row(u, p), us.for_product(p), floor)
        ll[u] = total
        counts[u] = len(us.times)
    return ll, counts


@dataclass
class CrossValidation:
    beta: float
    omega: float
    params: ModelParams
    scores: dict = field(default_factory=dict)
    empty_validation_users: int = 0


def cross_validate(log_: EventLog, net: Network, cfg: FitConfig, *, jobs: int = 1,
                   first_edge_time: Mapping | None = None) -> CrossValidation:
    """Pick ``(beta, omega)`` by held-out likelihood on the last part of the window.

    Each grid point is fitted on the first ``1 - validation_fraction`` of the
    window and scored on the rest by the clamped-process likelihood (earlier
    events condition the validation intensities). Ties go to the first grid point in ``omega``-major order.
    The winner is refitted on the whole window.
    """
    t0, T = log_.t0, log_.T
    split = t0 + (1 - cfg.validation_fraction) * (T - t0)
    best = None
    scores = {}
    empty = 0
    for omega in cfg.omega_grid:
        for beta in cfg.beta_grid:
            fitted = fit_all(log_, net, cfg, omega, beta=beta, jobs=jobs, start=t0, end=split,
                             first_edge_time=first_edge_time)
            ll, counts = window_loglik(fitted, log_, net, split, T, floor=cfg.intensity_floor,
                                       first_edge_time=first_edge_time)
            score = sum(ll.values())
            empty = sum(1 for c in counts.values() if c == 0)
            scores[(beta, omega)] = score
            if best is None or score > best[0]:
                best = (score, beta, omega)
    _, beta, omega = best
    if empty:
        log.info("%d users have no validation events; scored on the compensator alone", empty)
    params = fit_all(log_, net, cfg, omega, beta=beta, jobs=jobs, first_edge_time=first_edge_time)
    return CrossValidation(beta, omega, params, scores, empty)
