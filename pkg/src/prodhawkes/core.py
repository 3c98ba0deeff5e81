"""Domain types, the exponential kernel and intensity evaluation.

The intensity of user ``u`` for product ``p`` is

    lambda_up(t) = mu_p + sum_l a_lp * S_own[u, l](t) + sum_l b_lp * S_exp[u, l](t)

where ``S_own[u, l]`` is the exponentially decayed count of the user's own past
uses of product ``l`` and ``S_exp[u, l]`` the same quantity over everything the
user observes. All kernels share one decay rate ``omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class ParameterDomainError(ValueError):
    """A parameter is outside its admissible domain."""


class SequencingError(RuntimeError):
    """Intensity state used out of time order."""


def kernel_eval(omega: float, dt):
    """Causal exponential kernel ``exp(-omega * dt)`` for ``dt >= 0``, else 0."""
    if not omega > 0:
        raise ParameterDomainError(f"omega must be positive, got {omega}")
    dt = np.asarray(dt, dtype=float)
    out = np.where(dt >= 0, np.exp(-omega * np.maximum(dt, 0.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def kernel_integral(omega: float, dt):
    """Integral of the kernel over ``[0, dt]``: ``(1 - exp(-omega dt)) / omega``."""
    if not omega > 0:
        raise ParameterDomainError(f"omega must be positive, got {omega}")
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ParameterDomainError("kernel_integral needs dt >= 0")
    out = -np.expm1(-omega * dt) / omega
    return float(out) if out.ndim == 0 else out


def clamped_integral(mu, excess, omega: float, dt):
    """Integral of ``max(0, mu + excess * exp(-omega s))`` over ``s in [0, dt]``.

    ``mu >= 0`` is assumed. With ``excess < 0`` the integrand is zero until the
    crossing time ``log(-excess / mu) / omega`` and increases afterwards.
    """
    mu, excess, dt = np.broadcast_arrays(
        np.asarray(mu, float), np.asarray(excess, float), np.asarray(dt, float)
    )
    start = np.zeros_like(dt)
    neg = (excess < 0) & (mu + excess < 0)
    if np.any(neg):
        with np.errstate(divide="ignore", over="ignore"):
            cross = np.where(
                mu[neg] > 0, np.log(-excess[neg] / np.where(mu[neg] > 0, mu[neg], 1.0)) / omega, np.inf
            )
        start[neg] = np.minimum(cross, dt[neg])
    length = dt - start
    out = mu * length + excess * np.exp(-omega * start) * (-np.expm1(-omega * length)) / omega
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Event:
    user: int
    product: int
    time: float

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time >= 0):
            raise ParameterDomainError(f"event time must be finite and >= 0, got {self.time}")
        if self.user < 0 or self.product < 0:
            raise IndexError("user and product indices must be non-negative")


class EventLog:
    """Time-ordered events observed on the window ``[t0, T)``.

    Stored column-wise; ties keep their input order (stable sort).
    """

    def __init__(self, times, users, products, num_users: int, num_products: int,
                 t0: float = 0.0, T: float | None = None, truncated: bool = False):
        times = np.asarray(times, dtype=float).reshape(-1)
        users = np.asarray(users, dtype=np.int64).reshape(-1)
        products = np.asarray(products, dtype=np.int64).reshape(-1)
        if not (len(times) == len(users) == len(products)):
            raise ValueError("times, users and products must have equal length")
        if len(times) and not np.all(np.isfinite(times)):
            raise ParameterDomainError("event times must be finite")
        order = np.argsort(times, kind="stable")
        self.times = times[order]
        self.users = users[order]
        self.products = products[order]
        for arr in (self.times, self.users, self.products):
            arr.flags.writeable = False
        self.num_users = int(num_users)
        self.num_products = int(num_products)
        self.t0 = float(t0)
        if T is None:
            T = float(np.nextafter(self.times[-1], np.inf)) if len(self.times) else self.t0
        self.T = float(T)
        self.truncated = truncated
        if len(self.times):
            if self.times[0] < self.t0 or self.times[-1] >= self.T:
                raise ParameterDomainError("event times must lie in [t0, T)")
            if self.users.min() < 0 or self.users.max() >= self.num_users:
                raise IndexError("user index out of range")
            if self.products.min() < 0 or self.products.max() >= self.num_products:
                raise IndexError("product index out of range")

    @classmethod
    def from_events(cls, events: Sequence[Event], num_users: int, num_products: int,
                    t0: float = 0.0, T: float | None = None) -> "EventLog":
        return cls([e.time for e in events], [e.user for e in events],
                   [e.product for e in events], num_users, num_products, t0, T)

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[Event]:
        for t, u, p in zip(self.times, self.users, self.products):
            yield Event(int(u), int(p), float(t))

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.users[i]), int(self.products[i]), float(self.times[i]))

    def _before(self, t: float | None) -> int:
        if t is None:
            return len(self.times)
        return int(np.searchsorted(self.times, t, side="left"))

    def history(self, t: float | None = None) -> np.ndarray:
        """Indices of all events strictly before ``t``."""
        return np.arange(self._before(t))

    def user_history(self, u: int, t: float | None = None) -> np.ndarray:
        n = self._before(t)
        return np.flatnonzero(self.users[:n] == u)

    def user_product_history(self, u: int, p: int, t: float | None = None) -> np.ndarray:
        n = self._before(t)
        return np.flatnonzero((self.users[:n] == u) & (self.products[:n] == p))

    def window(self, start: float, end: float) -> "EventLog":
        """Events in ``[start, end)`` as a new log with that horizon."""
        lo = np.searchsorted(self.times, start, side="left")
        hi = np.searchsorted(self.times, end, side="left")
        return EventLog(self.times[lo:hi], self.users[lo:hi], self.products[lo:hi],
                        self.num_users, self.num_products, start, end)

    def counts(self) -> np.ndarray:
        """Event counts per (user, product)."""
        out = np.zeros((self.num_users, self.num_products), dtype=np.int64)
        np.add.at(out, (self.users, self.products), 1)
        return out


@dataclass(frozen=True, eq=False)
class Network:
    """Directed observation graph. An edge ``(v, u)`` means ``u`` observes ``v``."""

    num_users: int
    edges: tuple = ()
    observed: tuple = field(init=False, repr=False)
    observers: tuple = field(init=False, repr=False)

    def __post_init__(self):
        seen = set()
        for v, u in self.edges:
            if v == u:
                raise ValueError(f"self-edge ({v}, {u}) not allowed")
            if not (0 <= v < self.num_users and 0 <= u < self.num_users):
                raise IndexError(f"edge ({v}, {u}) out of range")
            if (v, u) in seen:
                raise ValueError(f"duplicate edge ({v}, {u})")
            seen.add((v, u))
        edges = tuple(sorted((int(v), int(u)) for v, u in self.edges))
        observed = [[] for _ in range(self.num_users)]
        observers = [[] for _ in range(self.num_users)]
        for v, u in edges:
            observed[u].append(v)
            observers[v].append(u)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "observed", tuple(np.array(x, dtype=np.int64) for x in observed))
        object.__setattr__(self, "observers", tuple(np.array(x, dtype=np.int64) for x in observers))

    @classmethod
    def empty(cls, num_users: int) -> "Network":
        return cls(num_users, ())

    def neighbors(self, u: int) -> np.ndarray:
        """N(u): the nodes whose events ``u`` observes."""
        return self.observed[u]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def csr(self, direction: str = "observers") -> tuple[np.ndarray, np.ndarray]:
        """Compressed adjacency ``(indptr, indices)`` of ``observers`` or ``observed``."""
        lists = getattr(self, direction)
        indptr = np.zeros(self.num_users + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(x) for x in lists])
        indices = np.concatenate(lists) if self.num_users else np.zeros(0, np.int64)
        return indptr, indices.astype(np.int64)

    def __eq__(self, other):
        return isinstance(other, Network) and self.num_users == other.num_users and self.edges == other.edges

    def __hash__(self):
        return hash((self.num_users, self.edges))


@dataclass(frozen=True, eq=False)
class UserParams:
    """Parameters of one user: ``mu[p]``, ``A[l, p]`` (own), ``B[l, p]`` (neighbors)."""

    mu: np.ndarray
    A: np.ndarray
    B: np.ndarray
    omega: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        P = len(mu)
        A = np.asarray(self.A, dtype=float).reshape(P, P)
        B = np.asarray(self.B, dtype=float).reshape(P, P)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        _check_params(mu, A, B, self.omega)

    @property
    def num_products(self) -> int:
        return len(self.mu)


def _check_params(mu, A, B, omega):
    if not (np.isfinite(omega) and omega > 0):
        raise ParameterDomainError(f"omega must be positive and finite, got {omega}")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ParameterDomainError("parameters must be finite")
    if np.any(mu < 0):
        raise ParameterDomainError("base intensities must be non-negative")


class ModelParams:
    """Per-user parameters stacked into arrays: ``mu (V, P)``, ``A, B (V, P, P)``."""

    def __init__(self, mu, A, B, omega: float):
        self.mu = np.array(mu, dtype=float, ndmin=2)
        V, P = self.mu.shape
        self.A = np.array(A, dtype=float).reshape(V, P, P)
        self.B = np.array(B, dtype=float).reshape(V, P, P)
        self.omega = float(omega)
        _check_params(self.mu, self.A, self.B, self.omega)

    @classmethod
    def from_users(cls, users: Sequence[UserParams]) -> "ModelParams":
        omegas = {float(p.omega) for p in users}
        if len(omegas) != 1:
            raise ParameterDomainError("all users must share one omega")
        return cls(np.stack([p.mu for p in users]), np.stack([p.A for p in users]),
                   np.stack([p.B for p in users]), omegas.pop())

    @classmethod
    def zeros(cls, num_users: int, num_products: int, omega: float) -> "ModelParams":
        P = num_products
        return cls(np.zeros((num_users, P)), np.zeros((num_users, P, P)), np.zeros((num_users, P, P)), omega)

    @property
    def num_users(self) -> int:
        return self.mu.shape[0]

    @property
    def num_products(self) -> int:
        return self.mu.shape[1]

    def __len__(self) -> int:
        return self.num_users

    def __getitem__(self, u: int) -> UserParams:
        return UserParams(self.mu[u], self.A[u], self.B[u], self.omega)

    def __iter__(self):
        return (self[u] for u in range(self.num_users))

    def copy(self) -> "ModelParams":
        return ModelParams(self.mu.copy(), self.A.copy(), self.B.copy(), self.omega)

    def row(self, u: int, p: int) -> np.ndarray:
        """Flat parameter vector ``(mu_p, A[:, p], B[:, p])`` of one subproblem."""
        return np.concatenate(([self.mu[u, p]], self.A[u, :, p], self.B[u, :, p]))

    def set_row(self, u: int, p: int, x) -> None:
        P = self.num_products
        x = np.asarray(x, dtype=float)
        self.mu[u, p] = x[0]
        self.A[u, :, p] = x[1:1 + P]
        self.B[u, :, p] = x[1 + P:]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mu.ravel(), self.A.ravel(), self.B.ravel()])

    def __eq__(self, other):
        return (isinstance(other, ModelParams) and self.omega == other.omega
                and np.array_equal(self.mu, other.mu) and np.array_equal(self.A, other.A)
                and np.array_equal(self.B, other.B))


def as_model_params(params) -> ModelParams:
    if isinstance(params, ModelParams):
        return params
    if isinstance(params, UserParams):
        return ModelParams.from_users([params])
    return ModelParams.from_users(list(params))


def _user_params(params, u: int) -> UserParams:
    if isinstance(params, UserParams):
        return params
    return params[u]


def intensity_naive(params, log: EventLog, net: Network, u: int, p: int, t: float) -> float:
    """Direct evaluation of the intensity by summing over the history before ``t``.

    ``params`` is one :class:`UserParams` (used for ``u``) or per-user parameters.
    The value may be negative; no clamping happens here.
    """
    if not (0 <= u < net.num_users):
        raise IndexError(f"user {u} out of range")
    up = _user_params(params, u)
    if not (0 <= p < up.num_products):
        raise IndexError(f"product {p} out of range")
    omega = up.omega
    value = up.mu[p]
    idx = log.user_history(u, t)
    if len(idx):
        g = np.exp(-omega * (t - log.times[idx]))
        value += np.sum(up.A[log.products[idx], p] * g)
    for v in net.neighbors(u):
        idx = log.user_history(int(v), t)
        if len(idx):
            g = np.exp(-omega * (t - log.times[idx]))
            value += np.sum(up.B[log.products[idx], p] * g)
    return float(value)


# Rescale the lazily decayed sums once the pending factor gets this small.
_RENORM_BELOW = 1e-150


class IntensityState:
    """Decayed kernel sums ``S_own`` and ``S_exp`` for every (user, product).

    Decay is kept as one global factor so that advancing time is O(1); the
    stored arrays are rescaled only when that factor becomes tiny.
    """

    def __init__(self, net: Network, num_products: int, omega: float, t: float = 0.0):
        if not omega > 0:
            raise ParameterDomainError(f"omega must be positive, got {omega}")
        self.net = net
        self.omega = float(omega)
        self.last_update = float(t)
        self._own = np.zeros((net.num_users, num_products))
        self._exp = np.zeros((net.num_users, num_products))
        self._ref = float(t)  # stored sums are values at time _ref
        self.rewrites = 0  # entries touched by register(); locality diagnostics

    @property
    def scale(self) -> float:
        return math.exp(-self.omega * (self.last_update - self._ref))

    @property
    def s_own(self) -> np.ndarray:
        return self._own * self.scale

    @property
    def s_exposed(self) -> np.ndarray:
        return self._exp * self.scale

    def advance(self, dt: float) -> "IntensityState":
        if dt < 0:
            raise ParameterDomainError(f"cannot advance by negative dt={dt}")
        self.last_update += dt
        if self.scale < _RENORM_BELOW:
            self._renormalize()
        return self

    def advance_to(self, t: float) -> "IntensityState":
        self.advance(t - self.last_update)
        self.last_update = float(t)  # exact, so register() at t matches
        return self

    def _renormalize(self) -> None:
        s = self.scale
        self._own *= s
        self._exp *= s
        self._ref = self.last_update

    def register(self, e: Event) -> "IntensityState":
        if e.time != self.last_update:
            raise SequencingError(f"state is at {self.last_update}, event at {e.time}")
        inc = 1.0 / self.scale
        self._own[e.user, e.product] += inc
        obs = self.net.observers[e.user]
        self._exp[obs, e.product] += inc
        self.rewrites += 1 + len(obs)
        return self

    def excess(self, params, u: int) -> np.ndarray:
        """History-driven part ``lambda_u(t) - mu`` for all products of ``u``."""
        up = _user_params(params, u)
        s = self.scale
        return s * (self._own[u] @ up.A + self._exp[u] @ up.B)

    def intensity(self, params, u: int, p: int | None = None):
        up = _user_params(params, u)
        lam = up.mu + self.excess(up, u)
        return lam if p is None else float(lam[p])


def state_advance(state: IntensityState, dt: float) -> IntensityState:
    return state.advance(dt)


def state_register_event(state: IntensityState, e: Event, net: Network | None = None) -> IntensityState:
    if net is not None and net is not state.net and net != state.net:
        raise ValueError("event registered against a different network")
    return state.register(e)


def intensity_from_state(params, state: IntensityState, u: int, p: int) -> float:
    if not (0 <= u < state.net.num_users):
        raise IndexError(f"user {u} out of range")
    return state.intensity(params, u, p)
