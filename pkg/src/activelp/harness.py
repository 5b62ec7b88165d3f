"""Rolling-window experiment driver: window slicing, random hyperparameter
search, multi-agent training with best-agent selection, and passive-baseline
comparison with CSV reports."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .amm import PoolSpec
from .data import PriceSeries, load_candles, _iso
from .env import (MIN_HISTORY, EnvConfig, EpisodeTrace, FeatureStats, LPEnv,
                  compute_stats, run_passive, run_policy)
from .ppo import AgentSpec, TrainResult, TrainingDiverged, greedy_action_fn, \
    save_checkpoint, save_training_curve, train

log = logging.getLogger(__name__)

SELECT_TRAIN = "train"
SELECT_TEST_LEAKY = "test_leaky"  # selects on test data; for replication only


class ConfigError(Exception):
    """Raised for invalid experiment configuration."""


@dataclass(frozen=True)
class Window:
    index: int
    train_start: int
    train_end: int
    test_start: int
    test_end: int


def make_windows(series_len: int, train_len: int = 7500, test_len: int = 1500,
                 stride: int = 1500) -> list[Window]:
    """Rolling train/test windows at offsets 0, stride, 2*stride, ..."""
    if train_len <= MIN_HISTORY + 1:
        raise ConfigError(f"train_len must exceed {MIN_HISTORY + 1}, got {train_len}")
    if test_len < 2 or stride < 1:
        raise ConfigError("test_len must be >= 2 and stride >= 1")
    if series_len < train_len + test_len:
        raise ConfigError(
            f"series of {series_len} rows cannot fit train {train_len} + test {test_len}")
    windows = []
    offset = 0
    while offset + train_len + test_len <= series_len:
        windows.append(Window(
            index=len(windows),
            train_start=offset,
            train_end=offset + train_len,
            test_start=offset + train_len,
            test_end=offset + train_len + test_len,
        ))
        offset += stride
    return windows


@dataclass(frozen=True)
class SearchGrid:
    """Candidate sets for the random hyperparameter search."""

    action_sets: tuple[tuple[int, ...], ...]
    activations: tuple[str, ...]
    hidden_layers: tuple[tuple[int, ...], ...]
    learning_rates: tuple[float, ...]
    clip_ranges: tuple[float, ...]
    entropy_coefs: tuple[float, ...]
    gammas: tuple[float, ...]

    def __post_init__(self):
        for name in ("action_sets", "activations", "hidden_layers",
                     "learning_rates", "clip_ranges", "entropy_coefs", "gammas"):
            if not getattr(self, name):
                raise ConfigError(f"search grid dimension {name} is empty")

    @classmethod
    def default(cls) -> "SearchGrid":
        return cls(
            action_sets=((0, 10, 20), (0, 10, 20, 30), (0, 20, 50),
                         (0, 40, 50, 60), (0, 50, 100)),
            activations=("sigmoid", "relu", "tanh"),
            hidden_layers=((4, 2), (6, 2), (6, 4), (8, 2), (8, 4), (10, 2), (6, 6, 6)),
            learning_rates=(1e-5, 5e-5, 1e-4, 1e-3, 5e-3, 1e-2),
            clip_ranges=(0.05, 0.1, 0.2, 0.4),
            entropy_coefs=(1e-5, 1e-4, 1e-3, 1e-2),
            gammas=(0.9, 0.99, 0.999, 0.9999),
        )


def sample_spec(grid: SearchGrid, rng, **overrides) -> AgentSpec:
    """One independent uniform draw per grid dimension."""

    def pick(values):
        return values[int(rng.integers(len(values)))]

    return AgentSpec(
        action_set=tuple(pick(grid.action_sets)),
        activation=pick(grid.activations),
        hidden_layers=tuple(pick(grid.hidden_layers)),
        learning_rate=pick(grid.learning_rates),
        clip_range=pick(grid.clip_ranges),
        entropy_coef=pick(grid.entropy_coefs),
        gamma=pick(grid.gammas),
        **overrides,
    )


@dataclass
class AgentOutcome:
    index: int
    spec: AgentSpec
    train_reward: float
    result: TrainResult | None
    error: str | None = None


@dataclass
class WindowResult:
    window: Window
    test_end_ts: int
    agents: list[AgentOutcome]
    selected: AgentOutcome | None
    active_trace: EpisodeTrace | None
    passive_trace: EpisodeTrace | None
    failed: bool

    @property
    def active_reward(self) -> float:
        return self.active_trace.total_reward

    @property
    def passive_reward(self) -> float:
        return self.passive_trace.total_reward


def _agent_seed(seed: int, window_index: int, agent_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, window_index, agent_index])


def _train_agent(args):
    """Worker: train one agent and score it on the train slice (greedy pass)."""
    (index, spec, train_slice, pool, x0, gas_mode, stats, seed_entropy) = args
    config = EnvConfig(pool=pool, action_set=spec.action_set, x0=x0,
                       data=train_slice, stats=stats, gas_mode=gas_mode)
    seed = int(np.random.SeedSequence(seed_entropy).generate_state(1)[0])
    try:
        result = train(lambda: LPEnv(config), spec, seed)
    except TrainingDiverged as exc:
        return AgentOutcome(index=index, spec=spec, train_reward=-np.inf,
                            result=None, error=str(exc))
    trace = run_policy(LPEnv(config), greedy_action_fn(result.actor))
    return AgentOutcome(index=index, spec=spec,
                        train_reward=trace.total_reward, result=result)


def train_and_select(series: PriceSeries, window: Window, grid: SearchGrid,
                     n_agents: int, seed: int, pool: PoolSpec, x0: float,
                     gas_mode: str = "per_leg", train_overrides: dict | None = None,
                     n_jobs: int = 1) -> tuple[AgentOutcome | None, list[AgentOutcome], FeatureStats]:
    """Train n_agents randomly drawn specs on the train slice and pick the one
    with the highest greedy cumulative train reward. Reads only train data."""
    train_slice = series.slice(window.train_start, window.train_end)
    # spec sampling gets its own stream, disjoint from the per-agent seeds
    spec_rng = np.random.default_rng(np.random.SeedSequence([seed, window.index, 1 << 20]))
    overrides = train_overrides or {}
    specs = [sample_spec(grid, spec_rng, **overrides) for _ in range(n_agents)]

    stats_cache: dict[tuple, FeatureStats] = {}
    tasks = []
    for k, spec in enumerate(specs):
        key = spec.action_set
        if key not in stats_cache:
            stats_cache[key] = compute_stats(train_slice, spec.action_set, pool, x0)
        tasks.append((k, spec, train_slice, pool, x0, gas_mode, stats_cache[key],
                      _agent_seed(seed, window.index, k).entropy))

    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool_executor:
            outcomes = list(pool_executor.map(_train_agent, tasks))
    else:
        outcomes = [_train_agent(task) for task in tasks]
    outcomes.sort(key=lambda o: o.index)

    trained = [o for o in outcomes if o.result is not None]
    for o in outcomes:
        if o.error:
            log.warning("window %d agent %d diverged: %s", window.index, o.index, o.error)
    if not trained:
        return None, outcomes, None
    selected = max(trained, key=lambda o: (o.train_reward, -o.index))
    stats = stats_cache[selected.spec.action_set]
    return selected, outcomes, stats


def _test_slice(series: PriceSeries, window: Window) -> PriceSeries:
    # prepend the warmup hours immediately before the test period so the
    # episode covers exactly test_len steps, the first decided at the boundary
    start = window.test_start - MIN_HISTORY
    if start < 0:
        raise ConfigError("test window starts before enough warmup history exists")
    return series.slice(start, window.test_end)


def evaluate_on_test(series: PriceSeries, window: Window, selected: AgentOutcome,
                     stats, pool: PoolSpec, x0: float, gas_mode: str = "per_leg",
                     passive_width: int = 50, passive_period: int = 500
                     ) -> tuple[EpisodeTrace, EpisodeTrace]:
    """Greedy rollout of the selected agent plus the passive baseline on the
    test slice, both normalized with the frozen training stats."""
    test_data = _test_slice(series, window)
    active_env = LPEnv(EnvConfig(pool=pool, action_set=selected.spec.action_set,
                                 x0=x0, data=test_data, stats=stats, gas_mode=gas_mode))
    active = run_policy(active_env, greedy_action_fn(selected.result.actor))

    passive_set = (0, passive_width)
    passive_stats = compute_stats(series.slice(window.train_start, window.train_end),
                                  passive_set, pool, x0)
    passive_env = LPEnv(EnvConfig(pool=pool, action_set=passive_set, x0=x0,
                                  data=test_data, stats=passive_stats, gas_mode=gas_mode))
    passive = run_passive(passive_env, passive_width, passive_period)
    return active, passive


def run_window(series: PriceSeries, window: Window, grid: SearchGrid,
               n_agents: int, seed: int, pool: PoolSpec, x0: float,
               gas_mode: str = "per_leg", selection: str = SELECT_TRAIN,
               passive_width: int = 50, passive_period: int = 500,
               train_overrides: dict | None = None, n_jobs: int = 1) -> WindowResult:
    selected, outcomes, stats = train_and_select(
        series, window, grid, n_agents, seed, pool, x0, gas_mode,
        train_overrides, n_jobs)
    test_end_ts = int(series.timestamps[window.test_end - 1])
    if selected is None:
        return WindowResult(window=window, test_end_ts=test_end_ts, agents=outcomes,
                            selected=None, active_trace=None, passive_trace=None,
                            failed=True)

    if selection == SELECT_TEST_LEAKY:
        # replication mode: rescore every trained agent on the test slice and
        # pick the best; leaks test data into selection by construction
        best = None
        for outcome in outcomes:
            if outcome.result is None:
                continue
            o_stats = compute_stats(series.slice(window.train_start, window.train_end),
                                    outcome.spec.action_set, pool, x0)
            active, _ = evaluate_on_test(series, window, outcome, o_stats, pool, x0,
                                         gas_mode, passive_width, passive_period)
            if best is None or active.total_reward > best[1].total_reward:
                best = (outcome, active, o_stats)
        selected, _, stats = best
    elif selection != SELECT_TRAIN:
        raise ConfigError(f"unknown selection mode {selection!r}")

    active, passive = evaluate_on_test(series, window, selected, stats, pool, x0,
                                       gas_mode, passive_width, passive_period)
    return WindowResult(window=window, test_end_ts=test_end_ts, agents=outcomes,
                        selected=selected, active_trace=active, passive_trace=passive,
                        failed=False)


# ---------------------------------------------------------------------------
# experiment configuration and reporting


@dataclass
class ExperimentConfig:
    data: str
    output_dir: str
    pool: PoolSpec = field(default_factory=lambda: PoolSpec(0.0005, 10, 5.0))
    x0: float = 2.0
    train_len: int = 7500
    test_len: int = 1500
    stride: int = 1500
    n_agents: int = 50
    seed: int = 0
    passive_width: int = 50
    passive_period: int = 500
    selection: str = SELECT_TRAIN
    gas_mode: str = "per_leg"
    n_jobs: int = 1
    grid: SearchGrid = field(default_factory=SearchGrid.default)
    training: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        for key in ("data", "output_dir"):
            if key not in raw:
                raise ConfigError(f"config is missing required key {key!r}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "pool" in kwargs:
            try:
                kwargs["pool"] = PoolSpec(**kwargs["pool"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid pool spec: {exc}") from None
        if "grid" in kwargs:
            try:
                g = kwargs["grid"]
                kwargs["grid"] = SearchGrid(
                    action_sets=tuple(tuple(a) for a in g["action_sets"]),
                    activations=tuple(g["activations"]),
                    hidden_layers=tuple(tuple(h) for h in g["hidden_layers"]),
                    learning_rates=tuple(g["learning_rates"]),
                    clip_ranges=tuple(g["clip_ranges"]),
                    entropy_coefs=tuple(g["entropy_coefs"]),
                    gammas=tuple(g["gammas"]),
                )
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"invalid grid override: {exc}") from None
        config = cls(**kwargs)
        if config.x0 <= 0:
            raise ConfigError(f"x0 must be positive, got {config.x0}")
        if config.n_agents < 1:
            raise ConfigError("n_agents must be >= 1")
        if config.selection not in (SELECT_TRAIN, SELECT_TEST_LEAKY):
            raise ConfigError(f"unknown selection mode {config.selection!r}")
        searched = {"action_set", "activation", "hidden_layers", "learning_rate",
                    "clip_range", "entropy_coef", "gamma"}
        allowed = set(AgentSpec.__dataclass_fields__) - searched
        bad = set(config.training) - allowed
        if bad:
            raise ConfigError(
                f"training overrides {sorted(bad)} are not overridable; allowed: {sorted(allowed)}")
        return config


def run_experiment(config: ExperimentConfig) -> list[WindowResult]:
    """Run the full rolling-window study and write all reports."""
    series = load_candles(config.data)
    windows = make_windows(len(series), config.train_len, config.test_len, config.stride)
    log.info("running %d windows over %d hours", len(windows), len(series))
    results = []
    for window in windows:
        log.info("window %d: train [%d, %d) test [%d, %d)", window.index,
                 window.train_start, window.train_end, window.test_start, window.test_end)
        results.append(run_window(
            series, window, config.grid, config.n_agents, config.seed, config.pool,
            config.x0, config.gas_mode, config.selection, config.passive_width,
            config.passive_period, config.training or None, config.n_jobs))
    emit_report(results, config.output_dir)
    return results


def emit_report(results: list[WindowResult], output_dir) -> dict:
    """Write summary.csv, per-window traces/cumulative series, checkpoints, and
    the win-count line. Returns the written paths."""
    if not results:
        raise ConfigError("no window results to report")
    os.makedirs(output_dir, exist_ok=True)
    paths = {"summary": os.path.join(output_dir, "summary.csv"),
             "wins": os.path.join(output_dir, "wins.txt")}

    ok = [r for r in results if not r.failed]
    with open(paths["summary"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "end_of_test", "active_reward", "passive_reward"])
        for r in ok:
            writer.writerow([r.window.index, _iso(r.test_end_ts),
                             repr(r.active_reward), repr(r.passive_reward)])

    for r in results:
        wdir = os.path.join(output_dir, "windows", f"window_{r.window.index:02d}")
        os.makedirs(wdir, exist_ok=True)
        if r.failed:
            with open(os.path.join(wdir, "failed.txt"), "w") as fh:
                for agent in r.agents:
                    fh.write(f"agent {agent.index}: {agent.error or 'ok'}\n")
            continue
        r.active_trace.to_csv(os.path.join(wdir, "active_trace.csv"))
        r.passive_trace.to_csv(os.path.join(wdir, "passive_trace.csv"))
        a_cum = r.active_trace.cumulative_reward
        p_cum = r.passive_trace.cumulative_reward
        with open(os.path.join(wdir, "cumulative.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "active_cum", "passive_cum"])
            for t in range(a_cum.size):
                writer.writerow([t, repr(float(a_cum[t])), repr(float(p_cum[t]))])
        save_checkpoint(os.path.join(wdir, "agent.npz"), r.selected.result)
        save_training_curve(os.path.join(wdir, "training_curve.csv"),
                            r.selected.result.curve)
        with open(os.path.join(wdir, "agents.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["agent", "train_reward", "selected", "error"])
            for agent in r.agents:
                writer.writerow([agent.index, repr(agent.train_reward),
                                 int(agent.index == r.selected.index),
                                 agent.error or ""])

    wins = sum(1 for r in ok if r.active_reward > r.passive_reward)
    line = f"active wins {wins} of {len(ok)}"
    with open(paths["wins"], "w") as fh:
        fh.write(line + "\n")
    print(line)
    return paths
