import itertools

import numpy as np
import pytest

from pddp.core import LayeredTopology, Policy, TransitionFn
from pddp.environment import PricingEnvConfig

# cluster-0 preset parameters, used by end-to-end tests
CLUSTER0 = PricingEnvConfig(
    prices_main=(0.75, 0.8), conv_main=(0.85, 0.75), stay_prob=(0.05, 0.95),
    prices_anc=(0.2, 0.4), conv_anc=(0.6, 0.45), continue_prob=(0.5, 0.85), bonus=0.6,
)


def random_topology(rng, middle=(2, 2), max_actions=2, max_succ=2) -> LayeredTopology:
    """Layered topology with singleton first/last layers and random action/successor sets."""
    layers = [["s0"]]
    for k, n in enumerate(middle):
        layers.append([f"s{k + 1}_{i}" for i in range(n)])
    layers.append(["end"])
    edges = []
    for k in range(len(layers) - 1):
        nxt = layers[k + 1]
        hit = set()
        for s in layers[k]:
            for a in range(int(rng.integers(1, max_actions + 1))):
                m = int(rng.integers(1, min(max_succ, len(nxt)) + 1))
                for y in rng.choice(nxt, size=m, replace=False):
                    edges.append((k, s, f"a{a}", str(y)))
                    hit.add(str(y))
        # an unreached state would be dangling, so give it an edge from the first state
        for y in nxt:
            if y not in hit:
                edges.append((k, layers[k][0], "a0", y))
    return LayeredTopology.from_edges(edges)


def random_transition(rng, topo: LayeredTopology) -> TransitionFn:
    p = rng.random(topo.n_edges) + 0.05
    p = p / topo.pair_sums(p)[topo.edge_pair]
    p = p / topo.pair_sums(p)[topo.edge_pair]
    return TransitionFn(topo, p)


def random_policy(rng, topo: LayeredTopology) -> Policy:
    d = rng.random(topo.n_pairs) + 0.05
    d = d / topo.state_sums(d)[topo.pair_state]
    d = d / topo.state_sums(d)[topo.pair_state]
    return Policy(topo, d)


def deterministic_policies(topo: LayeredTopology):
    """Every deterministic policy of the topology."""
    choices = [list(topo.pairs_of(s)) for s in range(topo.n_states) if len(topo.pairs_of(s))]
    for pick in itertools.product(*choices):
        d = np.zeros(topo.n_pairs)
        d[list(pick)] = 1.0
        yield Policy(topo, d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: long end-to-end criterion checks")


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s[2:5].strip())):
            terminalreporter.write_line(line)
