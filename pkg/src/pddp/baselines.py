"""Per-decision-state UCB1 pricing baseline.

One bandit prices the main item at ``x0``; a second one, shared by ``x1`` and
``x2`` (the site cannot tell them apart), prices the ancillary item.  Each
bandit is credited only with the reward realized at its own step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from pddp.core import Policy
from pddp.environment import EpisodeOutcome, PricingEnv

DEFAULT_EXPLORATION = 2.0


@dataclass(frozen=True, eq=False)
class UcbState:
    counts: np.ndarray
    means: np.ndarray
    exploration: float = DEFAULT_EXPLORATION

    @classmethod
    def fresh(cls, n_arms: int, exploration: float = DEFAULT_EXPLORATION) -> "UcbState":
        if n_arms < 1:
            raise ValueError("need at least one arm")
        return cls(np.zeros(n_arms, dtype=np.int64), np.zeros(n_arms), exploration)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def ucb_select(state: UcbState) -> int:
    """Arm maximizing ``mean + sqrt(c ln t / n)``; unpulled arms first, ties to the lowest index."""
    unpulled = np.flatnonzero(state.counts == 0)
    if unpulled.size:
        return int(unpulled[0])
    index = state.means + np.sqrt(state.exploration * math.log(state.total) / state.counts)
    return int(np.argmax(index))


def ucb_update(state: UcbState, arm: int, reward: float) -> UcbState:
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"reward {reward} outside [0, 1]")
    counts = state.counts.copy()
    means = state.means.copy()
    counts[arm] += 1
    means[arm] += (reward - means[arm]) / counts[arm]
    return replace(state, counts=counts, means=means)


@dataclass(frozen=True, eq=False)
class PerStateUcb:
    """The two bandits plus the pair layout needed to turn their picks into a policy."""

    main: UcbState
    anc: UcbState

    @classmethod
    def fresh(cls, env: PricingEnv, exploration: float = DEFAULT_EXPLORATION) -> "PerStateUcb":
        return cls(UcbState.fresh(len(env.cfg.prices_main), exploration),
                   UcbState.fresh(len(env.cfg.prices_anc), exploration))

    def policy(self, env: PricingEnv) -> Policy:
        """Deterministic merged policy playing the current UCB picks."""
        t = env.topology
        dist = t.uniform_policy_vec()
        i, j = ucb_select(self.main), ucb_select(self.anc)
        for s, pick, n in (("x0", i, self.main.counts.size), ("x1", j, self.anc.counts.size),
                           ("x2", j, self.anc.counts.size)):
            ptr = t.state_pair_ptr[t.state(s)]
            dist[ptr:ptr + n] = 0.0
            dist[ptr + pick] = 1.0
        return Policy(t, dist)

    def update(self, env: PricingEnv, outcome: EpisodeOutcome) -> "PerStateUcb":
        t = env.topology
        main, anc = self.main, self.anc
        for k, pair in enumerate(outcome.pairs):
            state = t.state_names[t.pair_state[pair]]
            arm = pair - t.state_pair_ptr[t.pair_state[pair]]
            if state == "x0":
                main = ucb_update(main, arm, float(outcome.rewards[k]))
            elif state in ("x1", "x2"):
                anc = ucb_update(anc, arm, float(outcome.rewards[k]))
        return replace(self, main=main, anc=anc)
