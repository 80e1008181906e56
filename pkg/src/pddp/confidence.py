"""Transition confidence sets and the relaxed occupancy polytope they induce."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from pddp.core import LayeredTopology, _readonly


def log_term(topology: LayeredTopology, horizon: int, delta: float) -> float:
    """``ln(T |X| |A| / delta)`` shared by every radius of a run."""
    return math.log(horizon * topology.n_states * max(1, topology.n_action_labels) / delta)


def radius(p_bar: np.ndarray, n_sa: np.ndarray, log_t: float) -> np.ndarray:
    """Bernstein-style radius for each edge given its row's visit count."""
    denom = np.maximum(1.0, np.asarray(n_sa, dtype=float) - 1.0)
    return 2.0 * np.sqrt(np.asarray(p_bar) * log_t / denom) + 14.0 * log_t / (3.0 * denom)


@dataclass(frozen=True, eq=False)
class ConfidenceSet:
    """Box ``|P(x'|x,a) - p_bar| <= eps`` around the empirical transition of an epoch."""

    topology: LayeredTopology
    epoch: int
    p_bar: np.ndarray
    eps: np.ndarray
    delta: float
    horizon: int
    # counts the set was built from; zeros for the initial vacuous set
    n_sa: np.ndarray = field(repr=False, default=None)

    def __post_init__(self) -> None:
        _readonly(np.asarray(self.p_bar))
        _readonly(np.asarray(self.eps))

    @classmethod
    def vacuous(cls, topology: LayeredTopology, horizon: int, delta: float) -> "ConfidenceSet":
        return cls(
            topology, 1, topology.uniform_rows(), np.ones(topology.n_edges), delta, horizon,
            np.zeros(topology.n_pairs),
        )

    @classmethod
    def from_counts(cls, topology: LayeredTopology, n_sa: np.ndarray, n_sas: np.ndarray,
                    epoch: int, horizon: int, delta: float) -> "ConfidenceSet":
        n_row = np.asarray(n_sa, dtype=float)[topology.edge_pair]
        p_bar = np.where(n_row > 0, np.asarray(n_sas) / np.maximum(1.0, n_row), topology.uniform_rows())
        eps = radius(p_bar, n_row, log_term(topology, horizon, delta))
        return cls(topology, epoch, p_bar, eps, delta, horizon, np.array(n_sa, dtype=float))

    @cached_property
    def lo(self) -> np.ndarray:
        return _readonly(np.clip(self.p_bar - self.eps, 0.0, 1.0))

    @cached_property
    def hi(self) -> np.ndarray:
        return _readonly(np.clip(self.p_bar + self.eps, 0.0, 1.0))

    def contains(self, prob: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(np.asarray(prob) - self.p_bar) <= self.eps + tol))

    @cached_property
    def constraints(self) -> tuple[np.ndarray, np.ndarray, int]:
        return polytope_constraints(self.topology, self.p_bar, self.eps)


def polytope_constraints(topology: LayeredTopology, p_bar: np.ndarray | None = None,
                         eps: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Linear description ``A_eq q = b, A_in q <= 0`` of the relaxed occupancy polytope.

    Equalities: unit mass on the first layer and flow conservation at every
    internal state (the other layer masses follow).  Inequalities: the two faces
    of every non-vacuous box edge written as ``q(x,a,x') <= hi * q(x,a)`` and
    ``lo * q(x,a) <= q(x,a,x')``.  Rows of single-successor pairs are vacuous.
    """
    t = topology
    n = t.n_edges
    rows: list[np.ndarray] = []
    first = np.zeros(n)
    first[t.edge_layer == 0] = 1.0
    rows.append(first)
    for s in range(t.n_states):
        if 1 <= t.state_layer[s] < t.n_layers - 1:
            r = np.zeros(n)
            r[t.edge_state == s] += 1.0
            r[t.edge_next == s] -= 1.0
            rows.append(r)
    n_eq = len(rows)
    if p_bar is not None:
        hi = np.asarray(p_bar) + np.asarray(eps)
        lo = np.asarray(p_bar) - np.asarray(eps)
        for p in range(t.n_pairs):
            e0, e1 = t.pair_edge_ptr[p], t.pair_edge_ptr[p + 1]
            if e1 - e0 < 2:
                continue
            for e in range(e0, e1):
                if hi[e] < 1.0:
                    r = np.zeros(n)
                    r[e0:e1] -= hi[e]
                    r[e] += 1.0
                    rows.append(r)
                if lo[e] > 0.0:
                    r = np.zeros(n)
                    r[e0:e1] += lo[e]
                    r[e] -= 1.0
                    rows.append(r)
    A = np.ascontiguousarray(np.vstack(rows))
    b = np.zeros(len(rows))
    b[0] = 1.0
    A.flags.writeable = False
    b.flags.writeable = False
    return A, b, n_eq
