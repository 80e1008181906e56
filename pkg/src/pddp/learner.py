"""Primal-dual occupancy-measure learner for constrained loop-free MDPs with bandit feedback.

Each round the learner

1. turns the observed trajectory into a Lagrangian loss ``g * lambda - r``,
2. divides it by an optimistic upper occupancy bound (plus ``eta``),
3. updates visit counters and, on a doubling, the transition confidence set,
4. takes an OMD step on the occupancy measure (exponential step + KL projection
   onto the occupancy polytope relaxed to the confidence box),
5. takes a projected gradient step on the multiplier,
6. reads off the next policy, merging the two ancillary states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from pddp import _kernels
from pddp.confidence import ConfidenceSet
from pddp.core import LayeredTopology, OccupancyMeasure, Policy, induced_policy
from pddp.environment import EpisodeOutcome

PROJECTION_TOL = 1e-8
PROJECTION_MAX_ITER = 10_000


class ProjectionError(RuntimeError):
    """The KL projection did not reach stationarity within its iteration cap."""


def default_eta(topology: LayeredTopology, horizon: int) -> float:
    return math.sqrt(math.log(topology.n_states * max(1, topology.n_action_labels)) / horizon)


@dataclass(frozen=True, eq=False)
class Counters:
    """Running visit totals and their snapshot at the start of the current epoch."""

    n_sa: np.ndarray
    n_sas: np.ndarray
    snap_sa: np.ndarray
    snap_sas: np.ndarray

    @classmethod
    def zeros(cls, topology: LayeredTopology) -> "Counters":
        z_sa, z_sas = np.zeros(topology.n_pairs), np.zeros(topology.n_edges)
        return cls(z_sa, z_sas, z_sa.copy(), z_sas.copy())

    def add(self, outcome: EpisodeOutcome) -> "Counters":
        n_sa, n_sas = self.n_sa.copy(), self.n_sas.copy()
        n_sa[list(outcome.pairs)] += 1
        n_sas[list(outcome.edges)] += 1
        return replace(self, n_sa=n_sa, n_sas=n_sas)

    def doubled(self, pairs: Sequence[int]) -> bool:
        idx = list(pairs)
        return bool(np.any(self.n_sa[idx] >= np.maximum(1.0, 2.0 * self.snap_sa[idx])))

    def snapshot(self) -> "Counters":
        return replace(self, snap_sa=self.n_sa.copy(), snap_sas=self.n_sas.copy())


@dataclass(frozen=True, eq=False)
class LearnerState:
    topology: LayeredTopology
    horizon: int
    eta: float
    delta: float
    q_hat: OccupancyMeasure
    lam: float
    counters: Counters
    conf: ConfidenceSet
    policy: Policy
    # "dynamic" or a fixed weight in [0, 1]
    alpha_mode: str | float = "dynamic"
    # (branch state, merged state 1, merged state 2); None disables merging
    merge: tuple[int, int, int] | None = None
    t: int = 0
    alpha: float = 0.5
    # warm start for the projection, valid for ``conf`` only
    multipliers: np.ndarray | None = field(default=None, repr=False)

    @property
    def epoch(self) -> int:
        return self.conf.epoch

    def layer_residual(self) -> float:
        return float(np.max(np.abs(self.q_hat.layer_mass() - 1.0)))


def initial_occupancy(topology: LayeredTopology) -> OccupancyMeasure:
    """``1 / (|X_k| |A(x)| |X_{k+1}|)`` on every edge out of ``x`` in layer ``k``."""
    t = topology
    layer_size = np.bincount(t.state_layer, minlength=t.n_layers).astype(float)
    n_act = np.diff(t.state_pair_ptr).astype(float)
    k = t.edge_layer
    return OccupancyMeasure(t, 1.0 / (layer_size[k] * n_act[t.edge_state] * layer_size[k + 1]))


def init(topology: LayeredTopology, horizon: int, eta: float | None = None, delta: float = 0.01,
         alpha_mode: str | float = "dynamic", merge: tuple[str, str, str] | None = None) -> LearnerState:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if eta is None:
        eta = default_eta(topology, horizon)
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if alpha_mode != "dynamic" and not 0.0 <= float(alpha_mode) <= 1.0:
        raise ValueError("fixed alpha must lie in [0, 1]")
    merge_idx = tuple(topology.state(s) for s in merge) if merge else None
    q1 = initial_occupancy(topology)
    conf = ConfidenceSet.vacuous(topology, horizon, delta)
    state = LearnerState(
        topology=topology, horizon=horizon, eta=float(eta), delta=float(delta), q_hat=q1, lam=0.0,
        counters=Counters.zeros(topology), conf=conf, policy=Policy.uniform(topology),
        alpha_mode=alpha_mode, merge=merge_idx,
    )
    policy, alpha = extract_policy(q1, conf, None, state)
    return replace(state, policy=policy, alpha=alpha)


# --- per-round operations ---------------------------------------------------

def compose_loss(outcome: EpisodeOutcome, lam: float) -> np.ndarray:
    """Lagrangian loss at each visited pair, aligned with ``outcome.pairs``."""
    return np.asarray(outcome.constraints) * lam - np.asarray(outcome.rewards)


def comp_uob(policy: Policy, pair: int, conf: ConfidenceSet) -> float:
    """Largest occupancy of ``pair`` under ``policy`` over all transitions in ``conf``."""
    return float(comp_uob_many(policy, [pair], conf)[0])


def comp_uob_many(policy: Policy, pairs: Sequence[int], conf: ConfidenceSet) -> np.ndarray:
    t = policy.topology
    return _kernels.upper_occupancy_many(
        np.asarray(pairs, dtype=np.int64), t.pair_state, t.pair_layer, t.pair_edge_ptr, t.edge_next,
        t.n_states, policy.dist, conf.lo, conf.hi,
    )


def estimate_loss(loss: np.ndarray, u: np.ndarray, eta: float, outcome: EpisodeOutcome,
                  n_pairs: int) -> np.ndarray:
    """Optimistically biased importance-weighted loss, zero off the trajectory."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("occupancy bounds must be nonnegative")
    est = np.zeros(n_pairs)
    est[list(outcome.pairs)] = np.asarray(loss) / (u + eta)
    return est


def update_counters_and_epoch(state: LearnerState, outcome: EpisodeOutcome) -> LearnerState:
    counters = state.counters.add(outcome)
    conf = state.conf
    if counters.doubled(outcome.pairs):
        counters = counters.snapshot()
        conf = ConfidenceSet.from_counts(
            state.topology, counters.snap_sa, counters.snap_sas, conf.epoch + 1, state.horizon, state.delta,
        )
    return replace(state, counters=counters, conf=conf)


def project(q_tilde: np.ndarray, conf: ConfidenceSet, warm_start: np.ndarray | None = None,
            tol: float = PROJECTION_TOL, max_iter: int = PROJECTION_MAX_ITER) -> tuple[np.ndarray, np.ndarray]:
    """KL projection of a positive edge vector onto the occupancy polytope of ``conf``.

    Returns the projected vector and the constraint multipliers (reusable as a
    warm start while ``conf`` is unchanged).
    """
    A, b, n_eq = conf.constraints
    y0 = np.zeros(A.shape[0]) if warm_start is None or warm_start.shape[0] != A.shape[0] else warm_start
    q, y, _, pg = _kernels.kl_project(np.asarray(q_tilde, dtype=float), A, b, n_eq, y0, tol, max_iter)
    if not pg <= tol:
        raise ProjectionError(f"KL projection stalled at stationarity {pg:.3e} (tol {tol:.1e})")
    return q, y


def omd_update(q_hat: OccupancyMeasure, loss_hat: np.ndarray, eta: float, conf: ConfidenceSet,
               warm_start: np.ndarray | None = None) -> OccupancyMeasure:
    return _omd(q_hat, loss_hat, eta, conf, warm_start)[0]


def _omd(q_hat, loss_hat, eta, conf, warm_start):
    if not eta > 0:
        raise ValueError("eta must be positive")
    t = q_hat.topology
    q_tilde = q_hat.q * np.exp(-eta * np.asarray(loss_hat)[t.edge_pair])
    q, y = project(q_tilde, conf, warm_start)
    # exp() output is positive and finite, so only the upper clip is needed
    return OccupancyMeasure._trusted(t, np.minimum(q, 1.0)), y


def dual_update(lam: float, outcome: EpisodeOutcome, q_hat: OccupancyMeasure, eta: float) -> float:
    """Projected gradient step on the multiplier using the played trajectory."""
    if lam < 0:
        raise ValueError("multiplier must be nonnegative")
    grad = float(np.asarray(outcome.constraints) @ q_hat.q_sa[list(outcome.pairs)])
    return max(0.0, lam + eta * grad)


def mixing_weight(conf: ConfidenceSet, main_pair: int | None, merge: tuple[int, int, int]) -> float:
    """Estimated chance that a customer on the shared page bought the main item."""
    if main_pair is None:
        return 0.5
    t = conf.topology
    _, s1, s2 = merge
    p1 = p2 = 0.0
    for e in range(t.pair_edge_ptr[main_pair], t.pair_edge_ptr[main_pair + 1]):
        if t.edge_next[e] == s1:
            p1 += conf.p_bar[e]
        elif t.edge_next[e] == s2:
            p2 += conf.p_bar[e]
    return 0.5 if p1 + p2 == 0.0 else float(p1 / (p1 + p2))


def extract_policy(q_hat: OccupancyMeasure, conf: ConfidenceSet, last_main_pair: int | None,
                   state: LearnerState) -> tuple[Policy, float]:
    """Induced policy of ``q_hat`` with the merged states sharing one distribution."""
    pi = induced_policy(q_hat)
    if state.merge is None:
        return pi, 0.5
    if state.alpha_mode == "dynamic":
        alpha = mixing_weight(conf, last_main_pair, state.merge)
    else:
        alpha = float(state.alpha_mode)
    t = q_hat.topology
    _, s1, s2 = state.merge
    r1, r2 = t.pairs_of(s1), t.pairs_of(s2)
    dist = pi.dist.copy()
    mixed = alpha * pi.dist[r1.start:r1.stop] + (1 - alpha) * pi.dist[r2.start:r2.stop]
    mixed /= mixed.sum()
    dist[r1.start:r1.stop] = mixed
    dist[r2.start:r2.stop] = mixed
    return Policy._trusted(t, dist), alpha


def _main_pair(state: LearnerState, outcome: EpisodeOutcome) -> int | None:
    if state.merge is None:
        return None
    return outcome.pairs[0]


def step(state: LearnerState, outcome: EpisodeOutcome, played: Policy | None = None) -> LearnerState:
    """One learner round on a trajectory played under ``played`` (default: ``state.policy``)."""
    played = played or state.policy
    loss = compose_loss(outcome, state.lam)
    u = comp_uob_many(played, outcome.pairs, state.conf)
    loss_hat = estimate_loss(loss, u, state.eta, outcome, state.topology.n_pairs)
    return _primal_dual(state, [outcome], loss_hat, dual_grad=None, outcome=outcome)


def _primal_dual(state: LearnerState, outcomes: Sequence[EpisodeOutcome], loss_hat: np.ndarray,
                 dual_grad: float | None, outcome: EpisodeOutcome) -> LearnerState:
    q_prev = state.q_hat
    new = state
    for o in outcomes:
        new = update_counters_and_epoch(new, o)
    warm = state.multipliers if new.conf is state.conf else None
    q_next, y = _omd(q_prev, loss_hat, state.eta, new.conf, warm)
    if dual_grad is None:
        lam = dual_update(state.lam, outcome, q_prev, state.eta)
    else:
        lam = max(0.0, state.lam + state.eta * dual_grad)
    policy, alpha = extract_policy(q_next, new.conf, _main_pair(state, outcome), state)
    return replace(new, q_hat=q_next, lam=lam, policy=policy, alpha=alpha, multipliers=y,
                   t=state.t + len(outcomes))


def batch_step_delayed(state: LearnerState, outcomes: Sequence[EpisodeOutcome]) -> LearnerState:
    """Replay a batch collected under the policy frozen at batch start."""
    if not outcomes:
        raise ValueError("batch must hold at least one outcome")
    frozen = state.policy
    for o in outcomes:
        state = step(state, o, played=frozen)
    return state


def batch_step_mean(state: LearnerState, outcomes: Sequence[EpisodeOutcome]) -> LearnerState:
    """One primal and one dual update from per-pair batch means of rewards and constraints.

    Counters, epochs and confidence sets still see every trajectory.
    """
    if not outcomes:
        raise ValueError("batch must hold at least one outcome")
    n = state.topology.n_pairs
    visits = np.zeros(n)
    r_sum = np.zeros(n)
    g_sum = np.zeros(n)
    for o in outcomes:
        idx = list(o.pairs)
        visits[idx] += 1
        r_sum[idx] += o.rewards
        g_sum[idx] += o.constraints
    seen = np.flatnonzero(visits)
    r_mean = r_sum[seen] / visits[seen]
    g_mean = g_sum[seen] / visits[seen]
    loss = g_mean * state.lam - r_mean
    u = comp_uob_many(state.policy, seen, state.conf)
    loss_hat = np.zeros(n)
    loss_hat[seen] = loss / (u + state.eta)
    dual_grad = float(g_mean @ state.q_hat.q_sa[seen])
    return _primal_dual(state, outcomes, loss_hat, dual_grad=dual_grad, outcome=outcomes[-1])
