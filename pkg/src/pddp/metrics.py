"""Ground-truth performance measures: benchmark occupancy, regret, violation, mean reward.

All per-round quantities are expectations under the true transition of the
round and the policy actually played, never the learner's internal estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pddp import lp
from pddp.confidence import polytope_constraints
from pddp.core import OccupancyMeasure, TransitionFn

EXPECTED, REALIZED = "expected", "realized"


@dataclass(frozen=True, eq=False)
class Benchmark:
    q: OccupancyMeasure
    value: float
    feasible: bool
    # least achievable expected constraint value; <= 0 exactly when feasible
    min_violation: float


def occupancy_lp(P: TransitionFn) -> tuple[np.ndarray, np.ndarray]:
    """Equality system whose nonnegative solutions are exactly the occupancies under ``P``."""
    t = P.topology
    A_flow, b_flow, n_eq = polytope_constraints(t)
    rows = [A_flow[:n_eq]]
    for p in range(t.n_pairs):
        e0, e1 = t.pair_edge_ptr[p], t.pair_edge_ptr[p + 1]
        # the last successor of each row is implied by the others
        for e in range(e0, e1 - 1):
            r = np.zeros(t.n_edges)
            r[e0:e1] -= P.prob[e]
            r[e] += 1.0
            rows.append(r[None, :])
    A = np.vstack(rows)
    b = np.zeros(A.shape[0])
    b[:n_eq] = b_flow[:n_eq]
    return A, b


def optimal_constrained_occupancy(r_bar, g_bar, P: TransitionFn) -> Benchmark:
    """Best expected reward over occupancies under ``P`` with ``g_bar^T q <= 0``.

    If no occupancy meets the constraint, returns the least-violating one with
    the highest reward among those, flagged infeasible.
    """
    t = P.topology
    r_e = np.asarray(r_bar, dtype=float)[t.edge_pair]
    g_e = np.asarray(g_bar, dtype=float)[t.edge_pair]
    A, b = occupancy_lp(P)
    low = lp.solve(-g_e, A, b)
    if low.status != lp.OPTIMAL:
        raise lp.LPError(f"occupancy polytope LP returned {low.status}")
    g_min = -low.value
    feasible = g_min <= 0.0
    bound = 0.0 if feasible else g_min + 1e-12 * max(1.0, abs(g_min))
    best = lp.solve(r_e, A, b, g_e[None, :], [bound])
    if best.status != lp.OPTIMAL:
        raise lp.LPError(f"benchmark LP returned {best.status}")
    q = np.minimum(best.x, 1.0)
    return Benchmark(OccupancyMeasure(t, q), float(r_e @ q), bool(feasible), float(g_min))


def instantaneous(q_sa: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Per-round ``values_t^T q_t``; ``values`` is one vector or one row per round."""
    q_sa = np.atleast_2d(q_sa)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return q_sa @ values
    return np.einsum("tp,tp->t", q_sa, values)


def cumulative_regret(q_sa: np.ndarray, rewards: np.ndarray, benchmark_value: float) -> np.ndarray:
    """``R_t = t * r^T q* - sum_{s<=t} r_s^T q_s`` from played pair occupancies."""
    return cumulative_regret_from(instantaneous(q_sa, rewards), benchmark_value)


def cumulative_regret_from(inst_reward: np.ndarray, benchmark_value: float) -> np.ndarray:
    return np.cumsum(benchmark_value - np.asarray(inst_reward, dtype=float))


def cumulative_violation(q_sa: np.ndarray | None, constraints: np.ndarray | None,
                         mode: str = EXPECTED, realized: np.ndarray | None = None) -> np.ndarray:
    """Signed running constraint total, expected (default) or realized along trajectories."""
    if mode == EXPECTED:
        return np.cumsum(instantaneous(q_sa, constraints))
    if mode == REALIZED:
        if realized is None:
            raise ValueError("realized mode needs per-round realized constraint totals")
        return np.cumsum(np.asarray(realized, dtype=float))
    raise ValueError(f"unknown violation mode {mode!r}")


def mean_reward(q_sa: np.ndarray, rewards: np.ndarray) -> np.ndarray:
    return mean_reward_from(instantaneous(q_sa, rewards))


def mean_reward_from(inst_reward: np.ndarray) -> np.ndarray:
    inst = np.asarray(inst_reward, dtype=float)
    return np.cumsum(inst) / np.arange(1, inst.size + 1)


@dataclass(frozen=True, eq=False)
class MetricsSeries:
    """Per-round metric arrays of one run, all of length ``T``."""

    inst_reward: np.ndarray
    inst_violation: np.ndarray
    regret: np.ndarray
    violation: np.ndarray
    mean_reward: np.ndarray
    lam: np.ndarray
    epoch: np.ndarray
    benchmark: Benchmark
    seed: int = 0
    setting: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.regret.size)

    @property
    def regret_plus_violation(self) -> np.ndarray:
        return self.regret + self.violation

    @classmethod
    def build(cls, inst_reward, inst_violation, lam, epoch, benchmark: Benchmark, seed: int = 0,
              setting: str = "", realized_violation=None, violation_mode: str = EXPECTED,
              meta: dict | None = None) -> "MetricsSeries":
        inst_reward = np.asarray(inst_reward, dtype=float)
        inst_violation = np.asarray(inst_violation, dtype=float)
        if violation_mode == EXPECTED:
            violation = np.cumsum(inst_violation)
        else:
            violation = cumulative_violation(None, None, REALIZED, realized_violation)
        return cls(
            inst_reward=inst_reward,
            inst_violation=inst_violation,
            regret=cumulative_regret_from(inst_reward, benchmark.value),
            violation=violation,
            mean_reward=mean_reward_from(inst_reward),
            lam=np.asarray(lam, dtype=float),
            epoch=np.asarray(epoch, dtype=np.int64),
            benchmark=benchmark,
            seed=seed,
            setting=setting,
            meta=dict(meta or {}),
        )


def loglog_slope(t: np.ndarray, values: np.ndarray, t_min: float, t_max: float) -> float:
    """Least-squares slope of ``log values`` on ``log t`` over ``[t_min, t_max]``.

    NaN when any value in the window is not positive (slope undefined).
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    m = (t >= t_min) & (t <= t_max)
    if m.sum() < 2 or np.any(v[m] <= 0):
        return float("nan")
    return float(np.polyfit(np.log(t[m]), np.log(v[m]), 1)[0])
