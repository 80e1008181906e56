"""Seeded single runs, experiment sweeps and CSV output."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pddp import learner as pd
from pddp.baselines import PerStateUcb
from pddp.config import ExperimentConfig, Setting
from pddp.core import TransitionFn, occupancy_from, validate_occupancy
from pddp.environment import PricingEnv
from pddp.lp import LPError
from pddp.metrics import MetricsSeries, optimal_constrained_occupancy

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "seed", "setting", "regret", "violation", "regret_plus_violation", "mean_reward",
               "lambda", "epoch")
MERGE = ("x0", "x1", "x2")


@dataclass(frozen=True, eq=False)
class RunResult:
    setting: Setting
    seed: int
    series: MetricsSeries | None
    error: str | None = None
    # OMD iterates that failed the validity check (only counted when checking is on)
    validity_failures: int = 0
    validity_checks: int = 0
    epoch_bound: float = math.inf
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None


def log_rounds(horizon: int) -> np.ndarray:
    """Logged episode indices: every ``max(1, T // 5000)`` rounds, always including ``T``."""
    every = max(1, horizon // 5000)
    t = np.arange(every, horizon + 1, every)
    if t.size == 0 or t[-1] != horizon:
        t = np.append(t, horizon)
    return t


def epoch_bound(env: PricingEnv, horizon: int) -> float:
    t = env.topology
    return t.n_states * t.n_action_labels * (math.log2(horizon) + 2)


def run_single(cfg: ExperimentConfig, setting: Setting, seed: int, check_validity: bool = False) -> RunResult:
    """Play one seeded run end to end and compute its ground-truth metric series."""
    env_cfg = cfg.env_for(setting)
    T = cfg.horizon
    env = PricingEnv(env_cfg, T)
    topo = env.topology
    rng = np.random.default_rng(seed)
    is_pd = setting.learner == "pddp"
    if is_pd:
        eta = cfg.eta if cfg.eta is not None else cfg.eta_scale * pd.default_eta(topo, T)
        state = pd.init(topo, T, eta, cfg.delta, cfg.alpha, merge=MERGE)
        bandits = None
    else:
        state = None
        bandits = PerStateUcb.fresh(env, cfg.ucb_exploration)

    inst_r = np.empty(T)
    inst_g = np.empty(T)
    real_g = np.empty(T)
    lam = np.zeros(T)
    epoch = np.zeros(T, dtype=np.int64)
    stationary = env.stationary
    r_sum = np.zeros(topo.n_pairs)
    g_sum = np.zeros(topo.n_pairs)
    p_sum = np.zeros(topo.n_edges)
    pending: list = []
    checks = failures = 0
    cache_key = None
    q_sa = None
    batch = setting.batch_mode != "none" and setting.batch_size > 1

    try:
        for t in range(1, T + 1):
            policy = state.policy if is_pd else bandits.policy(env)
            gt = env.ground_truth(t)
            if cache_key is None or cache_key[0] is not policy or cache_key[1] is not gt:
                q_sa = occupancy_from(gt.P, policy).q_sa
                cache_key = (policy, gt)
            inst_r[t - 1] = gt.rewards @ q_sa
            inst_g[t - 1] = gt.constraints @ q_sa
            if not stationary:
                r_sum += gt.rewards
                g_sum += gt.constraints
                p_sum += gt.P.prob
            outcome = env.sample_episode(policy, t, rng)
            real_g[t - 1] = float(np.sum(outcome.constraints))
            if not is_pd:
                bandits = bandits.update(env, outcome)
                continue
            lam[t - 1] = state.lam
            epoch[t - 1] = state.epoch
            updated = True
            if not batch:
                state = pd.step(state, outcome)
            else:
                pending.append(outcome)
                if len(pending) == setting.batch_size or t == T:
                    if setting.batch_mode == "delayed":
                        state = pd.batch_step_delayed(state, pending)
                    else:
                        state = pd.batch_step_mean(state, pending)
                    pending = []
                else:
                    updated = False
            if check_validity and updated:
                checks += 1
                if not validate_occupancy(state.q_hat, state.conf, tol=1e-6).valid:
                    failures += 1
    except (pd.ProjectionError, FloatingPointError) as exc:
        log.error("run %s seed %d failed at round %d: %s", setting.name, seed, t, exc)
        return RunResult(setting, seed, None, error=f"round {t}: {exc}")

    if stationary:
        gt = env.ground_truth(1)
        r_bar, g_bar, P_bar = gt.rewards, gt.constraints, gt.P
    else:
        r_bar, g_bar = r_sum / T, g_sum / T
        p = p_sum / T
        p = p / topo.pair_sums(p)[topo.edge_pair]
        P_bar = TransitionFn(topo, p)
    try:
        bench = optimal_constrained_occupancy(r_bar, g_bar, P_bar)
    except LPError as exc:
        return RunResult(setting, seed, None, error=f"benchmark: {exc}")

    series = MetricsSeries.build(
        inst_r, inst_g, lam, epoch, bench, seed=seed, setting=setting.name,
        realized_violation=real_g, violation_mode=cfg.violation_mode,
        meta={"tau": env_cfg.tau, "experiment": cfg.experiment},
    )
    bound = epoch_bound(env, T)
    error = None
    if is_pd and state.epoch > bound:
        error = f"epoch count {state.epoch} exceeds bound {bound:.1f}"
    return RunResult(setting, seed, series, error=error, validity_failures=failures, validity_checks=checks,
                     epoch_bound=bound, extras={"final_epoch": int(state.epoch) if is_pd else 0})


def _task(args):
    cfg, setting, seed = args
    return run_single(cfg, setting, seed)


def run_all(cfg: ExperimentConfig) -> list[RunResult]:
    """Every (setting, seed) run, ordered by setting then seed regardless of worker count."""
    tasks = [(cfg, s, seed) for s in cfg.settings() for seed in cfg.seeds]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_task, tasks))
    out = []
    for task in tasks:
        log.info("running %s seed %d (T=%d)", task[1].name, task[2], cfg.horizon)
        out.append(_task(task))
    return out


def _f(x: float) -> str:
    return f"{x:.9f}"


def records_csv(results: list[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for res in results:
        if res.series is None:
            continue
        s = res.series
        for t in log_rounds(s.horizon):
            i = t - 1
            w.writerow([int(t), res.seed, res.setting.name, _f(s.regret[i]), _f(s.violation[i]),
                        _f(s.regret[i] + s.violation[i]), _f(s.mean_reward[i]), _f(s.lam[i]), int(s.epoch[i])])
    return buf.getvalue()


def summary(cfg: ExperimentConfig, results: list[RunResult]) -> dict:
    runs = []
    for r in results:
        row = {"setting": r.setting.name, "seed": r.seed, "ok": r.ok, "error": r.error}
        if r.series is not None:
            s = r.series
            row.update({
                "regret_T": round(float(s.regret[-1]), 9),
                "violation_T": round(float(s.violation[-1]), 9),
                "mean_reward_T": round(float(s.mean_reward[-1]), 9),
                "lambda_T": round(float(s.lam[-1]), 9),
                "benchmark_value": round(s.benchmark.value, 9),
                "benchmark_feasible": s.benchmark.feasible,
                "tau": s.meta.get("tau"),
            })
        runs.append(row)
    return {"experiment": cfg.experiment, "horizon": cfg.horizon, "seeds": list(cfg.seeds), "runs": runs}


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, plots: bool = True) -> list[RunResult]:
    """Run the sweep, write ``runs.csv`` and ``summary.json`` (and SVG charts) under ``out``."""
    results = run_all(cfg)
    out_dir = Path(out or cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "runs.csv").write_text(records_csv(results))
    (out_dir / "summary.json").write_text(json.dumps(summary(cfg, results), indent=2, sort_keys=True) + "\n")
    if plots and any(r.series is not None for r in results):
        from pddp.plots import emit_plots, read_records

        emit_plots(read_records(out_dir / "runs.csv"), out_dir, experiment=cfg.experiment)
    return results
