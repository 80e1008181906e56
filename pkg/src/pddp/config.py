"""Experiment configuration: flat ``key = value`` files with one ``[schedule]`` block.

Example::

    experiment = exp1
    horizon = 50000
    seeds = 0, 1, 2, 3, 4
    difficulty = low, mid, high
    prices_main = 0.6, 0.55

    [schedule]
    kind = abrupt
    n_changes = 1, 5
    end.conv_main = 0.9, 0.85

Comma-separated values of ``difficulty``, ``learner``, ``batch`` and
``n_changes`` are swept: every combination becomes one setting.
"""
from __future__ import annotations

import configparser
import itertools
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from pddp.environment import (
    ABRUPT,
    LIST_FIELDS,
    SCALAR_FIELDS,
    STATIONARY,
    PricingEnvConfig,
    Schedule,
    difficulty_tau,
)

EXPERIMENTS = ("exp1", "exp2", "exp3", "exp4", "exp5", "exp6", "custom")
LEARNERS = ("pddp", "ucb")
BATCH_MODES = ("none", "delayed", "mean")
DIFFICULTIES = ("low", "mid", "high", "none")
PRESETS = ("exp1", "exp2", "exp3", "exp4", "exp5", "exp6", "cluster0", "cluster1")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class Setting:
    """One cell of the sweep: everything that varies between curves of an experiment."""

    name: str
    difficulty: str | float  # level name, explicit tau, or "none" for unconstrained
    learner: str = "pddp"
    batch_mode: str = "none"
    batch_size: int = 1
    n_changes: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "custom"
    horizon: int = 50_000
    seeds: tuple[int, ...] = (0,)
    difficulties: tuple[str | float, ...] = ("low",)
    learners: tuple[str, ...] = ("pddp",)
    batches: tuple[tuple[str, int], ...] = (("none", 1),)
    env: PricingEnvConfig = field(default_factory=PricingEnvConfig)
    schedule_kind: str = STATIONARY
    n_changes: tuple[int, ...] = (0,)
    schedule_end: dict = field(default_factory=dict)
    eta: float | None = None  # None: default rate for the horizon
    # multiplies the default rate; ignored when eta is given explicitly
    eta_scale: float = 1.0
    delta: float = 0.01
    alpha: str | float = "dynamic"
    ucb_exploration: float = 2.0
    violation_mode: str = "expected"
    difficulty_factors: dict = field(default_factory=lambda: {"low": 0.8, "mid": 1.0, "high": 1.1})
    out: str = "results"
    workers: int = 1
    label: str = ""

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        for d in self.difficulties:
            if isinstance(d, str) and d not in DIFFICULTIES:
                raise ConfigError(f"unknown difficulty {d!r}")
            if isinstance(d, float) and not 0.0 <= d <= 1.0:
                raise ConfigError("explicit tau must lie in [0, 1]")
        for lr in self.learners:
            if lr not in LEARNERS:
                raise ConfigError(f"unknown learner {lr!r}")
        for mode, size in self.batches:
            if mode not in BATCH_MODES:
                raise ConfigError(f"unknown batch mode {mode!r}")
            if size < 1:
                raise ConfigError("batch size must be >= 1")
        if self.schedule_kind == ABRUPT and any(n < 1 for n in self.n_changes):
            raise ConfigError("abrupt schedules need n_changes >= 1")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("eta must be positive")
        if not self.eta_scale > 0:
            raise ConfigError("eta_scale must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.alpha != "dynamic" and not 0.0 <= float(self.alpha) <= 1.0:
            raise ConfigError("alpha must be 'dynamic' or a number in [0, 1]")
        if self.violation_mode not in ("expected", "realized"):
            raise ConfigError("violation_mode must be 'expected' or 'realized'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            for s in self.settings():
                self.env_for(s)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def scaled(self, factor: float) -> "ExperimentConfig":
        """Same experiment at ``factor`` times the horizon (0.1 gives desk scale)."""
        if not factor > 0:
            raise ConfigError("scale must be positive")
        return replace(self, horizon=max(1, int(round(self.horizon * factor))))

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return replace(self, seeds=tuple(int(s) for s in seeds))

    def settings(self) -> list[Setting]:
        axes = {
            "difficulty": self.difficulties,
            "learner": self.learners,
            "batch": self.batches,
            "n": self.n_changes,
        }
        swept = [k for k, v in axes.items() if len(v) > 1]
        out = []
        for d, lr, (mode, size), n in itertools.product(*axes.values()):
            parts = {"difficulty": _fmt(d), "learner": lr, "batch": _fmt_batch(mode, size), "n": str(n)}
            name = ",".join(f"{k}={parts[k]}" for k in swept) or "default"
            out.append(Setting(name, d, lr, mode, size, n))
        return out

    def env_for(self, setting: Setting) -> PricingEnvConfig:
        if self.schedule_kind == STATIONARY:
            sched = Schedule()
        else:
            sched = Schedule(self.schedule_kind, setting.n_changes if self.schedule_kind == ABRUPT else 0,
                             dict(self.schedule_end))
        env = replace(self.env, schedule=sched)
        d = setting.difficulty
        if d == "none":
            return env.with_tau(None)
        if isinstance(d, float):
            return env.with_tau(d)
        return env.with_tau(difficulty_tau(env, d, self.difficulty_factors))


def _fmt(d) -> str:
    return d if isinstance(d, str) else f"tau{d:g}"


def _fmt_batch(mode: str, size: int) -> str:
    return mode if mode == "none" else f"{mode}{size}"


# --- parsing ------------------------------------------------------------------

_RUN_KEYS = {
    "experiment", "horizon", "seeds", "difficulty", "learner", "batch", "eta", "eta_scale", "delta", "alpha",
    "ucb_exploration", "violation_mode", "difficulty_factors", "out", "workers", "label",
} | set(LIST_FIELDS) | {"bonus"}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in _items(text))


def _items(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _parse_batch(item: str) -> tuple[str, int]:
    if item == "none":
        return ("none", 1)
    mode, _, size = item.partition(":")
    if not size:
        raise ConfigError(f"batch {item!r} needs a size, e.g. delayed:20")
    return (mode, int(size))


def _parse_difficulty(item: str) -> str | float:
    try:
        return float(item)
    except ValueError:
        return item


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    extra = set(parser.sections()) - {"run", "schedule"}
    if extra:
        raise ConfigError(f"{source}: unknown section(s) {sorted(extra)}")
    run = parser["run"]
    unknown = set(run) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {sorted(unknown)}")
    try:
        kw: dict = {}
        env_kw: dict = {}
        for key, raw in run.items():
            if key in LIST_FIELDS:
                env_kw[key] = _floats(raw)
            elif key == "bonus":
                env_kw[key] = float(raw)
            elif key in ("experiment", "out", "violation_mode", "label"):
                kw[key] = raw.strip()
            elif key in ("horizon", "workers"):
                kw[key] = int(raw)
            elif key == "seeds":
                kw["seeds"] = tuple(int(v) for v in _items(raw))
            elif key == "difficulty":
                kw["difficulties"] = tuple(_parse_difficulty(v) for v in _items(raw))
            elif key == "learner":
                kw["learners"] = tuple(_items(raw))
            elif key == "batch":
                kw["batches"] = tuple(_parse_batch(v) for v in _items(raw))
            elif key == "eta":
                kw["eta"] = None if raw.strip() == "auto" else float(raw)
            elif key == "eta_scale":
                kw["eta_scale"] = float(raw)
            elif key == "delta":
                kw["delta"] = float(raw)
            elif key == "alpha":
                kw["alpha"] = raw.strip() if raw.strip() == "dynamic" else float(raw)
            elif key == "ucb_exploration":
                kw["ucb_exploration"] = float(raw)
            elif key == "difficulty_factors":
                pairs = (v.split(":") for v in _items(raw))
                kw["difficulty_factors"] = {k.strip(): float(v) for k, v in pairs}
        if parser.has_section("schedule"):
            sch = parser["schedule"]
            kw["schedule_kind"] = sch.get("kind", STATIONARY).strip()
            if "n_changes" in sch:
                kw["n_changes"] = tuple(int(v) for v in _items(sch["n_changes"]))
            end = {}
            for key, raw in sch.items():
                if key in ("kind", "n_changes"):
                    continue
                if not key.startswith("end."):
                    raise ConfigError(f"{source}: unknown schedule key {key!r}")
                name = key[4:]
                if name in LIST_FIELDS:
                    end[name] = _floats(raw)
                elif name in SCALAR_FIELDS:
                    end[name] = float(raw)
                else:
                    raise ConfigError(f"{source}: schedule cannot move {name!r}")
            kw["schedule_end"] = end
        kw["env"] = PricingEnvConfig(**env_kw)
        return ExperimentConfig(**kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path_or_preset: str | Path) -> ExperimentConfig:
    """Read a config file, or a bundled preset when given a bare preset name."""
    p = Path(path_or_preset)
    if p.suffix == "" and str(path_or_preset) in PRESETS and not p.exists():
        text = resources.files("pddp").joinpath("presets", f"{path_or_preset}.cfg").read_text()
        return parse_config(text, source=f"preset {path_or_preset}")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, source=str(p))
