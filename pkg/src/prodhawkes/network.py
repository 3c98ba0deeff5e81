"""Graph construction: stochastic Kronecker graphs and mention-log ingestion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .core import EventLog, Network, ParameterDomainError

log = logging.getLogger(__name__)

CORE_PERIPHERY = ((0.9, 0.5), (0.5, 0.3))
HIERARCHICAL = ((0.9, 0.1), (0.1, 0.9))
RANDOM = ((0.5, 0.5), (0.5, 0.5))


@dataclass(frozen=True)
class KroneckerSeed:
    theta: tuple
    iterations: int

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (2, 2):
            raise ParameterDomainError("Kronecker seed must be a 2x2 matrix")
        if np.any(~np.isfinite(theta)) or np.any(theta < 0) or np.any(theta > 1):
            raise ParameterDomainError("Kronecker seed entries must lie in [0, 1]")
        if self.iterations < 1:
            raise ParameterDomainError("iterations must be >= 1")
        object.__setattr__(self, "theta", tuple(map(tuple, theta.tolist())))

    @property
    def num_nodes(self) -> int:
        return 2 ** self.iterations

    def expected_edges(self) -> float:
        """Expected edge count including self-edges, ``(sum theta) ** k``."""
        return float(np.sum(self.theta)) ** self.iterations


def kronecker_row_probabilities(seed: KroneckerSeed, rows: np.ndarray) -> np.ndarray:
    """Edge probabilities ``P[i, :]`` for the given source rows."""
    theta = np.asarray(seed.theta)
    n = seed.num_nodes
    cols = np.arange(n)
    prob = np.ones((len(rows), n))
    for level in range(seed.iterations):
        bi = (rows >> level) & 1
        bj = (cols >> level) & 1
        prob *= theta[bi[:, None], bj[None, :]]
    return prob


def kronecker_probabilities(seed: KroneckerSeed) -> np.ndarray:
    return kronecker_row_probabilities(seed, np.arange(seed.num_nodes))


def kronecker_generate(seed: KroneckerSeed, rng_seed: int, block_rows: int = 256) -> Network:
    """Sample a stochastic Kronecker graph; each edge is an independent Bernoulli draw.

    Uniforms are consumed in row-major order, so the result does not depend on
    ``block_rows``. Self-edges are dropped.
    """
    rng = np.random.default_rng(rng_seed)
    n = seed.num_nodes
    edges = []
    for start in range(0, n, block_rows):
        rows = np.arange(start, min(start + block_rows, n))
        prob = kronecker_row_probabilities(seed, rows)
        hit = rng.random(prob.shape) < prob
        hit[np.arange(len(rows)), rows] = False
        ii, jj = np.nonzero(hit)
        edges.extend(zip((rows[ii]).tolist(), jj.tolist()))
    return Network(n, tuple(edges))


def build_mention_network(interactions: Iterable[tuple], num_users: int | None = None):
    """Directed edge ``(i, j)`` once ``j`` mentions ``i``; remembers the first mention time.

    ``interactions`` yields ``(mentioner, mentioned, time)`` with non-decreasing
    times. Returns ``(network, first_edge_time, self_mentions)``.
    """
    first: dict[tuple[int, int], float] = {}
    self_mentions = 0
    last_t = -np.inf
    max_id = -1
    for j, i, t in interactions:
        j, i, t = int(j), int(i), float(t)
        if t < last_t:
            raise ValueError("interaction times must be non-decreasing")
        last_t = t
        max_id = max(max_id, i, j)
        if i == j:
            self_mentions += 1
            continue
        key = (i, j)
        if key not in first or t < first[key]:
            first[key] = t
    if self_mentions:
        log.warning("ignored %d self-mentions", self_mentions)
    if num_users is None:
        num_users = max_id + 1
    return Network(num_users, tuple(first)), first, self_mentions


def exposure_history(log_: EventLog, net: Network, u: int, t: float | None = None,
                     first_edge_time: Mapping[tuple[int, int], float] | None = None) -> np.ndarray:
    """Indices of the events ``u`` is exposed to before ``t``: its own and its neighbors'.

    With ``first_edge_time``, a neighbor's events before the edge formed are hidden.
    """
    n = log_._before(t)
    users = log_.users[:n]
    keep = users == u
    for v in net.neighbors(u):
        mask = users == v
        if first_edge_time is not None:
            mask &= log_.times[:n] > first_edge_time.get((int(v), u), -np.inf)
        keep |= mask
    return np.flatnonzero(keep)
