"""Complementary-items pricing CMDP: topology, parameter schedules and customer simulation.

States ``x0..x6`` in four layers::

    x0 --A0--> {x1 (bought main), x2 (stayed, no purchase), x3 (left)}
    x1 --A1--> x4            x2 --A1--> {x4, x5}          x3 --noop--> x5
    x4 --noop--> x6          x5 --noop--> x6

The website prices at ``x0`` and at the ancillary page shared by ``x1``/``x2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from pddp.core import NOOP, LayeredTopology, Policy, TransitionFn

# interpolatable per-price parameters
LIST_FIELDS = ("prices_main", "prices_anc", "conv_main", "stay_prob", "conv_anc", "continue_prob")
SCALAR_FIELDS = ("bonus", "tau")

STATIONARY, ABRUPT, SMOOTH = "stationary", "abrupt", "smooth"


@dataclass(frozen=True)
class Schedule:
    """How environment parameters move over the horizon.

    ``end`` holds overrides of the base config reached at the last phase
    (abrupt) or at ``t = T`` (smooth).  Explicit ``phases`` take precedence over
    ``end`` for abrupt schedules and must have ``n_changes + 1`` entries.
    """

    kind: str = STATIONARY
    n_changes: int = 0
    end: dict = field(default_factory=dict)
    phases: tuple[dict, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in (STATIONARY, ABRUPT, SMOOTH):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == ABRUPT:
            if self.n_changes < 1:
                raise ValueError("abrupt schedule needs n_changes >= 1")
            if self.phases and len(self.phases) != self.n_changes + 1:
                raise ValueError("abrupt schedule needs n_changes + 1 phase configs")
        for key in self.end:
            if key not in LIST_FIELDS + SCALAR_FIELDS:
                raise ValueError(f"schedule cannot move {key!r}")

    def change_points(self, horizon: int) -> list[int]:
        """Last episode of every phase but the final one."""
        if self.kind != ABRUPT:
            return []
        n = self.n_changes + 1
        return [(j * horizon) // n for j in range(1, n)]

    def phase(self, t: int, horizon: int) -> int:
        n = self.n_changes + 1
        return min(self.n_changes, ((t - 1) * n) // horizon)


@dataclass(frozen=True)
class PricingEnvConfig:
    prices_main: tuple[float, ...] = (0.5, 0.8)
    prices_anc: tuple[float, ...] = (0.3, 0.6)
    conv_main: tuple[float, ...] = (0.6, 0.4)
    stay_prob: tuple[float, ...] = (0.5, 0.5)
    conv_anc: tuple[float, ...] = (0.6, 0.3)
    continue_prob: tuple[float, ...] = (0.6, 0.4)
    bonus: float = 0.05
    # None switches the sales constraint off (g = 0 everywhere)
    tau: float | None = 0.5
    schedule: Schedule = field(default_factory=Schedule)

    def __post_init__(self) -> None:
        for name in LIST_FIELDS:
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        n0, n1 = len(self.prices_main), len(self.prices_anc)
        if n0 < 1 or n1 < 1:
            raise ValueError("need at least one price per item")
        for name in ("conv_main", "stay_prob"):
            if len(getattr(self, name)) != n0:
                raise ValueError(f"{name} needs one entry per main price")
        for name in ("conv_anc", "continue_prob"):
            if len(getattr(self, name)) != n1:
                raise ValueError(f"{name} needs one entry per ancillary price")
        for name in LIST_FIELDS:
            vals = getattr(self, name)
            if any(not 0.0 <= v <= 1.0 for v in vals):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        if any(p <= 0.0 for p in self.prices_main + self.prices_anc):
            raise ValueError("prices must be positive")
        if not 0.0 <= self.bonus < 1.0:
            raise ValueError("bonus must lie in [0, 1)")
        if self.bonus + max(self.prices_anc) > 1.0:
            raise ValueError("bonus + ancillary price must not exceed 1")
        if self.tau is not None and not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")

    @property
    def constrained(self) -> bool:
        return self.tau is not None

    def with_tau(self, tau: float | None) -> "PricingEnvConfig":
        return replace(self, tau=tau)

    def params(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "schedule"}


def difficulty_tau(cfg: PricingEnvConfig, difficulty: str, factors: dict | None = None) -> float:
    """Sales target for a difficulty level, relative to the achievable conversion rates."""
    f = {"low": 0.8, "mid": 1.0, "high": 1.1}
    f.update(factors or {})
    conv = np.asarray(cfg.conv_main)
    if difficulty == "low":
        tau = f["low"] * conv.min()
    elif difficulty == "mid":
        tau = f["mid"] * conv.mean()
    elif difficulty == "high":
        tau = f["high"] * conv.max()
    else:
        raise ValueError(f"unknown difficulty {difficulty!r}")
    return float(min(1.0, tau))


def pricing_topology(n_main: int, n_anc: int) -> LayeredTopology:
    edges = []
    for i in range(n_main):
        for y in ("x1", "x2", "x3"):
            edges.append((0, "x0", f"main{i}", y))
    for j in range(n_anc):
        edges.append((1, "x1", f"anc{j}", "x4"))
    for j in range(n_anc):
        edges.append((1, "x2", f"anc{j}", "x4"))
        edges.append((1, "x2", f"anc{j}", "x5"))
    edges += [(1, "x3", NOOP, "x5"), (2, "x4", NOOP, "x6"), (2, "x5", NOOP, "x6")]
    return LayeredTopology.from_edges(edges)


def resolve(cfg: PricingEnvConfig, t: int, horizon: int) -> PricingEnvConfig:
    """Apply the schedule at episode ``t``; returns a stationary config."""
    sch = cfg.schedule
    if sch.kind == STATIONARY:
        return cfg
    if not 1 <= t <= horizon:
        raise ValueError(f"episode {t} outside [1, {horizon}]")
    base = cfg.params()
    if sch.kind == ABRUPT:
        j = sch.phase(t, horizon)
        if sch.phases:
            return PricingEnvConfig(**{**base, **sch.phases[j]})
        w = j / sch.n_changes
    else:
        w = t / horizon
    return PricingEnvConfig(**_interpolate(base, sch.end, w))


def _interpolate(base: dict, end: dict, w: float) -> dict:
    out = dict(base)
    for key, target in end.items():
        start = base[key]
        if key in LIST_FIELDS:
            out[key] = tuple(float(np.clip((1 - w) * a + w * b, 0.0, 1.0)) for a, b in zip(start, target))
        else:
            out[key] = float((1 - w) * start + w * target)
    return out


@dataclass(frozen=True, eq=False)
class GroundTruth:
    P: TransitionFn
    rewards: np.ndarray  # mean reward per pair
    constraints: np.ndarray  # mean constraint per pair


def build_pricing_mdp(cfg: PricingEnvConfig, t: int = 1, horizon: int = 1,
                      topology: LayeredTopology | None = None) -> GroundTruth:
    c = resolve(cfg, t, horizon)
    topo = topology or pricing_topology(len(c.prices_main), len(c.prices_anc))
    p = np.zeros(topo.n_edges)
    r = np.zeros(topo.n_pairs)
    g = np.zeros(topo.n_pairs)
    for i, (price, conv, stay) in enumerate(zip(c.prices_main, c.conv_main, c.stay_prob)):
        a = f"main{i}"
        p[topo.edge("x0", a, "x1")] = conv
        p[topo.edge("x0", a, "x2")] = (1 - conv) * stay
        p[topo.edge("x0", a, "x3")] = (1 - conv) * (1 - stay)
        r[topo.pair("x0", a)] = conv * price
        if c.tau is not None:
            g[topo.pair("x0", a)] = c.tau - conv
    for j, (price, conv, cont) in enumerate(zip(c.prices_anc, c.conv_anc, c.continue_prob)):
        a = f"anc{j}"
        p[topo.edge("x1", a, "x4")] = 1.0
        p[topo.edge("x2", a, "x4")] = cont
        p[topo.edge("x2", a, "x5")] = 1 - cont
        r[topo.pair("x1", a)] = conv * price + c.bonus
        r[topo.pair("x2", a)] = c.bonus
    for x, y in (("x3", "x5"), ("x4", "x6"), ("x5", "x6")):
        p[topo.edge(x, NOOP, y)] = 1.0
    r[topo.pair("x4", NOOP)] = c.bonus
    return GroundTruth(TransitionFn(topo, p), r, g)


@dataclass(frozen=True, eq=False)
class EpisodeOutcome:
    """One customer's path: ``states`` has one entry per layer, the rest one per step."""

    states: tuple[int, ...]
    pairs: tuple[int, ...]
    edges: tuple[int, ...]
    rewards: np.ndarray
    constraints: np.ndarray
    purchase_main: bool = False
    purchase_anc: bool = False

    @property
    def trajectory(self) -> list[tuple[int, int]]:
        return list(zip(self.states, self.pairs))


class PricingEnv:
    """A pricing CMDP over a fixed horizon; pure except for the caller's RNG."""

    def __init__(self, cfg: PricingEnvConfig, horizon: int):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.cfg = cfg
        self.horizon = horizon
        self.topology = pricing_topology(len(cfg.prices_main), len(cfg.prices_anc))
        t = self.topology
        self.x = {name: t.state(name) for name in t.state_names}
        self._main_pairs = np.array([t.pair("x0", f"main{i}") for i in range(len(cfg.prices_main))])
        self._anc_pairs = {
            s: np.array([t.pair(s, f"anc{j}") for j in range(len(cfg.prices_anc))]) for s in ("x1", "x2")
        }
        self._noop = {s: t.pair(s, NOOP) for s in ("x3", "x4", "x5")}
        self._cache: dict = {}

    @property
    def stationary(self) -> bool:
        return self.cfg.schedule.kind == STATIONARY

    def params_at(self, t: int) -> PricingEnvConfig:
        return self._cached(("cfg", t), lambda: resolve(self.cfg, t, self.horizon))

    def _cached(self, key: tuple, build):
        key = (key[0], 1 if self.stationary else self._phase_key(key[1]))
        hit = self._cache.get(key)
        if hit is None:
            if len(self._cache) > 64:
                self._cache.clear()
            hit = self._cache[key] = build()
        return hit

    def _phase_key(self, t: int) -> int:
        sch = self.cfg.schedule
        return sch.phase(t, self.horizon) if sch.kind == ABRUPT else t

    def ground_truth(self, t: int) -> GroundTruth:
        """Schedule-resolved mean rewards, constraints and transitions at episode ``t``."""
        return self._cached(("gt", t), lambda: build_pricing_mdp(self.cfg, t, self.horizon, self.topology))

    def check_merged(self, policy: Policy) -> None:
        a1 = policy.dist[self._anc_pairs["x1"]]
        a2 = policy.dist[self._anc_pairs["x2"]]
        if np.max(np.abs(a1 - a2)) > 1e-12:
            raise ValueError("policy is not merged: x1 and x2 distributions differ")

    def sample_episode(self, policy: Policy, t: int, rng: np.random.Generator) -> EpisodeOutcome:
        """Simulate one customer; always consumes exactly five uniforms."""
        self.check_merged(policy)
        c = self.params_at(t)
        t_ = self.topology
        x = self.x
        u = rng.random(5)
        i = _draw(policy.dist[self._main_pairs], u[0])
        p0 = int(self._main_pairs[i])
        bought = bool(u[1] < c.conv_main[i])
        r0 = c.prices_main[i] if bought else 0.0
        g0 = (c.tau - (1.0 if bought else 0.0)) if c.tau is not None else 0.0
        j = _draw(policy.dist[self._anc_pairs["x1"]], u[2])
        anc_bought = False
        if bought:
            s1 = "x1"
            p1 = int(self._anc_pairs["x1"][j])
            anc_bought = bool(u[3] < c.conv_anc[j])
            r1 = (c.prices_anc[j] if anc_bought else 0.0) + c.bonus
            s2 = "x4"
        elif u[4] < c.stay_prob[i]:
            s1 = "x2"
            p1 = int(self._anc_pairs["x2"][j])
            r1 = c.bonus
            s2 = "x4" if u[3] < c.continue_prob[j] else "x5"
        else:
            s1, p1, r1, s2 = "x3", self._noop["x3"], 0.0, "x5"
        p2 = self._noop[s2]
        r2 = c.bonus if s2 == "x4" else 0.0
        e0 = t_.edge("x0", t_.pair_action[p0], s1)
        e1 = t_.edge(s1, t_.pair_action[p1], s2)
        e2 = t_.edge(s2, NOOP, "x6")
        return EpisodeOutcome(
            states=(x["x0"], x[s1], x[s2], x["x6"]),
            pairs=(p0, p1, p2),
            edges=(e0, e1, e2),
            rewards=np.array([r0, r1, r2]),
            constraints=np.array([g0, 0.0, 0.0]),
            purchase_main=bought,
            purchase_anc=anc_bought,
        )


def _draw(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, len(probs) - 1)
