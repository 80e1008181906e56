"""Loop-free layered MDP structure and occupancy-measure arithmetic.

Every vector in the package is a flat dense array indexed by the topology:
edge vectors (transitions, occupancies) by ``(x, a, x')`` triples, pair vectors
(policies, rewards, constraints) by ``(x, a)`` pairs.  States are ordered by
layer, pairs by state and edges by pair, so a single forward sweep over pairs
visits the MDP layer by layer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from pddp import _kernels

NOOP = "noop"

CONDITION_LAYER_MASS = "layer-mass"
CONDITION_FLOW = "flow-conservation"
CONDITION_TRANSITION = "transition-match"


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LayeredTopology:
    """States partitioned into layers with edges only between consecutive layers."""

    state_names: tuple[str, ...]
    state_layer: np.ndarray
    pair_state: np.ndarray
    pair_action: tuple[str, ...]
    state_pair_ptr: np.ndarray
    pair_edge_ptr: np.ndarray
    edge_pair: np.ndarray
    edge_next: np.ndarray
    n_layers: int
    # derived index maps
    _state_index: dict = field(repr=False, default_factory=dict)
    _pair_index: dict = field(repr=False, default_factory=dict)
    _edge_index: dict = field(repr=False, default_factory=dict)
    edge_state: np.ndarray = field(repr=False, default=None)
    edge_layer: np.ndarray = field(repr=False, default=None)
    pair_layer: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, str, str, str]]) -> "LayeredTopology":
        """Build a topology from ``(layer, state, action, successor)`` records."""
        records = [(int(k), str(x), str(a), str(y)) for k, x, a, y in edges]
        if not records:
            raise ValueError("topology needs at least one edge")
        layer_of: dict[str, int] = {}
        order: list[str] = []

        def place(name: str, layer: int) -> None:
            if name in layer_of:
                if layer_of[name] != layer:
                    raise ValueError(f"state {name!r} appears in layers {layer_of[name]} and {layer}")
            else:
                layer_of[name] = layer
                order.append(name)

        for k, x, a, y in records:
            place(x, k)
            place(y, k + 1)
        n_layers = max(layer_of.values()) + 1
        names = sorted(order, key=lambda s: (layer_of[s], order.index(s)))
        sidx = {s: i for i, s in enumerate(names)}

        # group edges by state then action in order of first appearance
        actions: dict[str, list[str]] = {s: [] for s in names}
        succ: dict[tuple[str, str], list[str]] = {}
        for k, x, a, y in records:
            if a not in actions[x]:
                actions[x].append(a)
            lst = succ.setdefault((x, a), [])
            if y in lst:
                raise ValueError(f"duplicate edge {(x, a, y)}")
            lst.append(y)

        pair_state, pair_action, state_ptr = [], [], [0]
        edge_pair, edge_next, edge_ptr = [], [], [0]
        for s in names:
            for a in actions[s]:
                p = len(pair_state)
                pair_state.append(sidx[s])
                pair_action.append(a)
                for y in sorted(succ[(s, a)], key=lambda n: sidx[n]):
                    edge_pair.append(p)
                    edge_next.append(sidx[y])
                edge_ptr.append(len(edge_pair))
            state_ptr.append(len(pair_state))

        topo = cls(
            state_names=tuple(names),
            state_layer=np.array([layer_of[s] for s in names], dtype=np.int64),
            pair_state=np.array(pair_state, dtype=np.int64),
            pair_action=tuple(pair_action),
            state_pair_ptr=np.array(state_ptr, dtype=np.int64),
            pair_edge_ptr=np.array(edge_ptr, dtype=np.int64),
            edge_pair=np.array(edge_pair, dtype=np.int64),
            edge_next=np.array(edge_next, dtype=np.int64),
            n_layers=n_layers,
        )
        topo._check()
        return topo

    def __post_init__(self) -> None:
        for name in ("state_layer", "pair_state", "state_pair_ptr", "pair_edge_ptr", "edge_pair", "edge_next"):
            _readonly(getattr(self, name))
        object.__setattr__(self, "edge_state", _readonly(self.pair_state[self.edge_pair]))
        object.__setattr__(self, "pair_layer", _readonly(self.state_layer[self.pair_state]))
        object.__setattr__(self, "edge_layer", _readonly(self.pair_layer[self.edge_pair]))
        self._state_index.update({s: i for i, s in enumerate(self.state_names)})
        for p, (s, a) in enumerate(zip(self.pair_state, self.pair_action)):
            self._pair_index[(self.state_names[s], a)] = p
            for e in range(self.pair_edge_ptr[p], self.pair_edge_ptr[p + 1]):
                self._edge_index[(self.state_names[s], a, self.state_names[self.edge_next[e]])] = e

    def _check(self) -> None:
        layers = self.layers
        if len(layers[0]) != 1 or len(layers[-1]) != 1:
            raise ValueError("first and last layers must be singletons")
        for s in range(self.n_states):
            k = self.state_layer[s]
            n_act = self.state_pair_ptr[s + 1] - self.state_pair_ptr[s]
            if k < self.n_layers - 1 and n_act == 0:
                raise ValueError(f"non-terminal state {self.state_names[s]!r} has no action")
            if k == self.n_layers - 1 and n_act:
                raise ValueError("terminal layer states cannot have actions")
        if np.any(self.state_layer[self.edge_next] != self.edge_layer + 1):
            raise ValueError("edges must cross exactly one layer boundary")

    # sizes -------------------------------------------------------------
    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_state)

    @property
    def n_edges(self) -> int:
        return len(self.edge_pair)

    @property
    def root(self) -> int:
        return 0

    @property
    def layers(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_layers)]
        for s, k in enumerate(self.state_layer):
            out[k].append(s)
        return out

    @property
    def n_action_labels(self) -> int:
        """Distinct action labels across decision states (the ``|A|`` of the log terms)."""
        return len({a for a in self.pair_action if a != NOOP})

    # lookups -----------------------------------------------------------
    def state(self, name: str) -> int:
        return self._state_index[name]

    def pair(self, state: str, action: str) -> int:
        return self._pair_index[(state, action)]

    def edge(self, state: str, action: str, successor: str) -> int:
        return self._edge_index[(state, action, successor)]

    def pairs_of(self, state: int) -> range:
        return range(self.state_pair_ptr[state], self.state_pair_ptr[state + 1])

    def edges_of(self, pair: int) -> range:
        return range(self.pair_edge_ptr[pair], self.pair_edge_ptr[pair + 1])

    def actions_of(self, state: int) -> list[str]:
        return [self.pair_action[p] for p in self.pairs_of(state)]

    # serialization -----------------------------------------------------
    def to_text(self) -> str:
        lines = ["# layer state action successor"]
        for e in range(self.n_edges):
            p = self.edge_pair[e]
            lines.append(
                f"{self.edge_layer[e]} {self.state_names[self.pair_state[p]]} "
                f"{self.pair_action[p]} {self.state_names[self.edge_next[e]]}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LayeredTopology":
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 'layer state action successor', got {line!r}")
            records.append((int(parts[0]), parts[1], parts[2], parts[3]))
        return cls.from_edges(records)

    # vector helpers ----------------------------------------------------
    def pair_sums(self, edge_vec: np.ndarray) -> np.ndarray:
        return np.bincount(self.edge_pair, weights=edge_vec, minlength=self.n_pairs)

    def state_sums(self, pair_vec: np.ndarray) -> np.ndarray:
        return np.bincount(self.pair_state, weights=pair_vec, minlength=self.n_states)

    def uniform_rows(self) -> np.ndarray:
        return self._uniform_rows.copy()

    def uniform_policy_vec(self) -> np.ndarray:
        return self._uniform_policy.copy()

    @cached_property
    def _uniform_rows(self) -> np.ndarray:
        return _readonly(1.0 / np.diff(self.pair_edge_ptr)[self.edge_pair])

    @cached_property
    def _uniform_policy(self) -> np.ndarray:
        return _readonly(1.0 / np.diff(self.state_pair_ptr)[self.pair_state])


def _same(a: LayeredTopology, b: LayeredTopology) -> None:
    if a is not b and a.to_text() != b.to_text():
        raise ValueError("topology mismatch")


@dataclass(frozen=True, eq=False)
class TransitionFn:
    topology: LayeredTopology
    prob: np.ndarray  # per edge

    def __post_init__(self) -> None:
        p = np.array(self.prob, dtype=float)
        if p.shape != (self.topology.n_edges,):
            raise ValueError("transition vector has wrong length")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("transition probabilities must lie in [0, 1]")
        rows = self.topology.pair_sums(p)
        if np.max(np.abs(rows - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1")
        object.__setattr__(self, "prob", _readonly(p))

    def row(self, pair: int) -> np.ndarray:
        return self.prob[self.topology.pair_edge_ptr[pair]:self.topology.pair_edge_ptr[pair + 1]]


@dataclass(frozen=True, eq=False)
class Policy:
    topology: LayeredTopology
    dist: np.ndarray  # per pair

    def __post_init__(self) -> None:
        d = np.array(self.dist, dtype=float)
        if d.shape != (self.topology.n_pairs,):
            raise ValueError("policy vector has wrong length")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("policy probabilities must be nonnegative")
        sums = self.topology.state_sums(d)
        active = np.diff(self.topology.state_pair_ptr) > 0
        if np.max(np.abs(sums[active] - 1.0)) > 1e-12:
            raise ValueError("policy distributions must sum to 1")
        object.__setattr__(self, "dist", _readonly(d))

    @classmethod
    def _trusted(cls, topology: LayeredTopology, dist: np.ndarray) -> "Policy":
        # internal fast path for vectors already known to be valid
        obj = object.__new__(cls)
        object.__setattr__(obj, "topology", topology)
        object.__setattr__(obj, "dist", _readonly(dist))
        return obj

    @classmethod
    def uniform(cls, topology: LayeredTopology) -> "Policy":
        return cls(topology, topology.uniform_policy_vec())

    def at(self, state: int) -> np.ndarray:
        t = self.topology
        return self.dist[t.state_pair_ptr[state]:t.state_pair_ptr[state + 1]]


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    topology: LayeredTopology
    q: np.ndarray  # per edge
    q_sa: np.ndarray = field(init=False, repr=False)
    q_s: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        q = np.array(self.q, dtype=float)
        if q.shape != (self.topology.n_edges,):
            raise ValueError("occupancy vector has wrong length")
        if not np.all(np.isfinite(q)) or np.any(q < 0) or np.any(q > 1 + 1e-6):
            raise ValueError("occupancy entries must lie in [0, 1]")
        object.__setattr__(self, "q", _readonly(q))
        q_sa = self.topology.pair_sums(q)
        object.__setattr__(self, "q_sa", _readonly(q_sa))
        object.__setattr__(self, "q_s", _readonly(self.topology.state_sums(q_sa)))

    @classmethod
    def _trusted(cls, topology: LayeredTopology, q: np.ndarray) -> "OccupancyMeasure":
        obj = object.__new__(cls)
        object.__setattr__(obj, "topology", topology)
        object.__setattr__(obj, "q", _readonly(q))
        q_sa = topology.pair_sums(q)
        object.__setattr__(obj, "q_sa", _readonly(q_sa))
        object.__setattr__(obj, "q_s", _readonly(topology.state_sums(q_sa)))
        return obj

    def layer_mass(self) -> np.ndarray:
        t = self.topology
        return np.bincount(t.edge_layer, weights=self.q, minlength=t.n_layers - 1)[: t.n_layers - 1]


@dataclass(frozen=True)
class Violation:
    condition: str
    location: str
    residual: float


@dataclass(frozen=True)
class ValidityReport:
    violated_conditions: tuple[Violation, ...]

    @property
    def valid(self) -> bool:
        return not self.violated_conditions

    def conditions(self) -> set[str]:
        return {v.condition for v in self.violated_conditions}


def occupancy_from(P: TransitionFn, pi: Policy) -> OccupancyMeasure:
    """Exact occupancy of ``pi`` under ``P`` by a forward sweep over the layers."""
    _same(P.topology, pi.topology)
    t = P.topology
    q = _kernels.forward_occupancy(t.pair_state, t.pair_edge_ptr, t.edge_next, t.n_states, pi.dist, P.prob)
    return OccupancyMeasure(t, np.minimum(q, 1.0))


def validate_occupancy(q: OccupancyMeasure, P_or_set, tol: float = 1e-9) -> ValidityReport:
    """Check the three validity conditions of a loop-free occupancy.

    ``P_or_set`` is either a :class:`TransitionFn` (exact match of the induced
    transition) or any object with per-edge ``p_bar`` and ``eps`` arrays (box
    membership).  Transition conditions are checked in the linear form
    ``|q(x,a,x') - P(x'|x,a) q(x,a)|``, which is well defined on rows with no mass.
    """
    t = q.topology
    out: list[Violation] = []
    for k, mass in enumerate(q.layer_mass()):
        if abs(mass - 1.0) > tol:
            out.append(Violation(CONDITION_LAYER_MASS, f"layer {k}", abs(mass - 1.0)))
    inflow = np.bincount(t.edge_next, weights=q.q, minlength=t.n_states)
    for s in range(t.n_states):
        k = t.state_layer[s]
        if 1 <= k < t.n_layers - 1:
            r = abs(q.q_s[s] - inflow[s])
            if r > tol:
                out.append(Violation(CONDITION_FLOW, t.state_names[s], r))
    q_row = q.q_sa[t.edge_pair]
    if isinstance(P_or_set, TransitionFn):
        _same(P_or_set.topology, t)
        resid = np.abs(q.q - P_or_set.prob * q_row)
    else:
        p_bar = np.asarray(P_or_set.p_bar)
        eps = np.asarray(P_or_set.eps)
        hi = q.q - (p_bar + eps) * q_row
        lo = (p_bar - eps) * q_row - q.q
        resid = np.maximum(np.maximum(hi, lo), 0.0)
    for e in np.flatnonzero(resid > tol):
        p = t.edge_pair[e]
        loc = f"({t.state_names[t.pair_state[p]]},{t.pair_action[p]},{t.state_names[t.edge_next[e]]})"
        out.append(Violation(CONDITION_TRANSITION, loc, float(resid[e])))
    return ValidityReport(tuple(out))


def induced_policy(q: OccupancyMeasure) -> Policy:
    t = q.topology
    q_s = q.q_s[t.pair_state]
    with np.errstate(invalid="ignore", divide="ignore"):
        pi = np.where(q_s > 0, q.q_sa / q_s, t._uniform_policy)
    # rows are stochastic to rounding after renormalizing, so skip re-validation
    return Policy._trusted(t, _renormalize(t.pair_state, pi, t.n_states))


def induced_transition(q: OccupancyMeasure) -> TransitionFn:
    t = q.topology
    q_row = q.q_sa[t.edge_pair]
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(q_row > 0, q.q / q_row, t.uniform_rows())
    return TransitionFn(t, _renormalize(t.edge_pair, p, t.n_pairs))


def _renormalize(groups: np.ndarray, vec: np.ndarray, n: int) -> np.ndarray:
    # division leaves ~1 ulp row error; fold it back so rows sum to 1 to 1e-15
    sums = np.bincount(groups, weights=vec, minlength=n)
    return np.clip(vec / sums[groups], 0.0, 1.0)


def expected_value(q: OccupancyMeasure, v: Sequence[float] | np.ndarray) -> float:
    """Return the occupancy-weighted sum of a per-pair vector."""
    v = np.asarray(v, dtype=float)
    if v.shape != (q.topology.n_pairs,):
        raise ValueError(f"expected a vector over {q.topology.n_pairs} state-action pairs, got shape {v.shape}")
    return float(q.q_sa @ v)
