"""Experiment runner: config files, the generation loop for every algorithm,
parallel population evaluation, checkpoints, replay and run artifacts."""

import json
import logging
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from components.module1_tensor_core import (
    Network,
    NonFiniteError,
    init_network,
    load_network,
    mlp_layers,
    save_network,
)
from components.module2_maze_env import (
    ACTION_DIM,
    STATE_DIM,
    MazeError,
    MazeSpec,
    load_maze,
    rollout,
)
from components.module3_icm import ICMParams, build_icm, save_icm, train_icm
from components.module4_replay_buffer import ReplayBuffer
from components.module5_es_core import ESState, Evaluation, GenerationOutcome, evolve_generation, save_es_state
from components.module6_fitness import (
    append_fitness_table,
    curiosity_fitness,
    fitness_records,
    rewarding_policies_dominate,
)
from components.module7_baselines import (
    EliteGrid,
    NoveltyArchive,
    bootstrap_grid,
    map_elites_generation,
    maze_behavior_bounds,
    ns_es_generation,
)
from components.metrics_analysis import (
    CoverageGrid,
    GenerationReport,
    PolicyFingerprint,
    append_final_states,
    make_fingerprint,
    read_generation_reports,
    save_fingerprints,
    write_generation_reports,
)

logger = logging.getLogger(__name__)

ALGORITHMS = ("curiosity_es", "ns_es", "map_elites", "plain_es")
POLICY_HIDDEN = (64, 64)
DEFAULT_CHECKPOINT_EVERY = 25

# Hyperparameters shared by every maze, then the per-maze overrides.
COMMON_DEFAULTS = {
    "sigma": 0.5,
    "lam": 56,
    "mu": 28,
    "gamma": 0.99,
    "epochs": 64,
    "m_per_individual": 50,
    "capacity": 200_000,
    "batch_size": 128,
    "alpha_icm": 1e-4,
    "phi": 0.8,
    "horizon": 500,
    "eta": 1.0,
    "generations": 300,
}
MAZE_DEFAULTS = {
    "snake": {"alpha": 0.5, "knn": 20, "beta": 0.1},
    "us": {"alpha": 1.0, "knn": 10, "beta": 0.2},
    "hard": {"alpha": 1.0, "knn": 20, "beta": 0.2},
}


class ConfigError(ValueError):
    pass


class RunError(RuntimeError):
    pass


@dataclass
class RunConfig:
    algorithm: str = "curiosity_es"
    environment: str = "snake"
    sigma: float = 0.5
    lam: int = 56
    mu: int = 28
    alpha: float = 0.5
    alpha_icm: float = 1e-4
    beta: float = 0.1
    gamma: float = 0.99
    epochs: int = 64
    m_per_individual: int = 50
    phi: float = 0.8
    knn: int = 20
    capacity: int = 200_000
    batch_size: int = 128
    horizon: int = 500
    generations: int = 300
    seed: int = 0
    out_dir: str = ""
    eta: float = 1.0
    icm_max_batches: int = 0
    bootstrap: int = 500
    mutation_sigma: float = 0.0
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY
    dump_buffer: bool = False

    @property
    def effective_phi(self) -> float:
        return 1.0 if self.algorithm == "plain_es" else self.phi

    @property
    def run_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        return Path("runs") / f"{self.algorithm}_{Path(self.environment).stem}_s{self.seed}"

    def validate(self) -> "RunConfig":
        checks = [
            (self.algorithm in ALGORITHMS, f"algorithm must be one of {', '.join(ALGORITHMS)}"),
            (self.sigma > 0, "sigma must be > 0"),
            (self.lam >= 1, "lambda must be >= 1"),
            (1 <= self.mu <= self.lam, "mu must satisfy 1 <= mu <= lambda"),
            (self.alpha > 0, "alpha must be > 0"),
            (self.alpha_icm >= 0, "alpha_icm must be >= 0"),
            (0.0 <= self.beta <= 1.0, "beta must lie in [0, 1]"),
            (0.0 <= self.gamma <= 1.0, "gamma must lie in [0, 1]"),
            (self.epochs >= 1, "p (ICM epochs) must be >= 1"),
            (self.m_per_individual >= 1, "m must be >= 1"),
            (0.0 <= self.phi <= 1.0, "phi must lie in [0, 1]"),
            (self.knn >= 1, "knn must be >= 1"),
            (self.capacity >= 1, "capacity must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.horizon >= 1, "horizon must be >= 1"),
            (self.generations >= 1, "generations must be >= 1"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.eta > 0, "eta must be > 0"),
            (self.icm_max_batches >= 0, "icm_max_batches must be >= 0"),
            (self.bootstrap >= 1, "bootstrap must be >= 1"),
            (self.mutation_sigma >= 0, "mutation_sigma must be >= 0"),
            (self.checkpoint_every >= 1, "checkpoint_every must be >= 1"),
        ]
        problems = [message for ok, message in checks if not ok]
        if self.algorithm in ("curiosity_es", "ns_es", "plain_es") and self.lam < 2:
            problems.append("ES variants need lambda >= 2 to normalize fitness")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


# config-file key -> RunConfig field
CONFIG_KEYS = {
    "algorithm": "algorithm",
    "environment": "environment",
    "sigma": "sigma",
    "lambda": "lam",
    "mu": "mu",
    "alpha": "alpha",
    "alpha_icm": "alpha_icm",
    "beta": "beta",
    "gamma": "gamma",
    "p": "epochs",
    "m": "m_per_individual",
    "phi": "phi",
    "knn": "knn",
    "capacity": "capacity",
    "batch_size": "batch_size",
    "horizon": "horizon",
    "generations": "generations",
    "seed": "seed",
    "out": "out_dir",
    "eta": "eta",
    "icm_max_batches": "icm_max_batches",
    "bootstrap": "bootstrap",
    "mutation_sigma": "mutation_sigma",
    "checkpoint_every": "checkpoint_every",
    "dump_buffer": "dump_buffer",
}
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def maze_defaults(name: str) -> Dict[str, object]:
    key = Path(str(name)).stem.lower()
    if key not in MAZE_DEFAULTS:
        raise ConfigError(f"no default hyperparameters for maze '{name}' "
                          f"(known: {', '.join(sorted(MAZE_DEFAULTS))})")
    return {**COMMON_DEFAULTS, **MAZE_DEFAULTS[key], "environment": key}


def _coerce(field_name: str, raw: str):
    kind = _FIELD_TYPES[field_name]
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        if kind in (bool, "bool"):
            lowered = raw.lower()
            if lowered not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("1", "true", "yes")
    except ValueError as e:
        raise ConfigError(f"bad value '{raw}' for {field_name}") from e
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse `key = value` lines plus an optional `include <maze>` line."""
    include = None
    explicit: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include "):
            include = line.split(None, 1)[1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        field_name = CONFIG_KEYS[key]
        explicit[field_name] = _coerce(field_name, value)

    source = include or explicit.get("environment")
    values: Dict[str, object] = {}
    if source is not None and Path(str(source)).stem.lower() in MAZE_DEFAULTS:
        values.update(maze_defaults(str(source)))
    elif include is not None:
        raise ConfigError(f"cannot include defaults for unknown maze '{include}'")
    env_every = os.getenv("CURIOSITY_ES_CHECKPOINT_EVERY")
    if env_every:
        values["checkpoint_every"] = _coerce("checkpoint_every", env_every)
    values.update(explicit)
    return RunConfig(**values).validate()


def load_config(path, seed: Optional[int] = None, out_dir: Optional[str] = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    config = parse_config(path.read_text())
    if seed is not None:
        config = replace(config, seed=seed)
    if out_dir is not None:
        config = replace(config, out_dir=str(out_dir))
    return config.validate()


# Evaluation

def policy_layers():
    return mlp_layers(STATE_DIM, POLICY_HIDDEN, ACTION_DIM)


def _evaluate_chunk(payload) -> List[Evaluation]:
    spec, layers, genomes, icm, gamma = payload
    results = []
    for genome in genomes:
        trajectory, extrinsic = rollout(spec, Network(layers, genome))
        curiosity = curiosity_fitness(icm, trajectory, gamma) if icm is not None else None
        results.append(Evaluation(trajectory, extrinsic, curiosity))
    return results


class PopulationEvaluator:
    """Maps genomes to Evaluations, in contiguous chunks over a process pool.

    Results come back in population order whatever the worker count. The ICM
    snapshot passed in is read-only for the whole call.
    """

    def __init__(self, spec: MazeSpec, workers: int = 1):
        self.spec = spec
        self.layers = policy_layers()
        self.workers = max(1, int(workers))
        self.count = 0
        self._pool = ProcessPoolExecutor(max_workers=self.workers) if self.workers > 1 else None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __call__(self, genomes: np.ndarray, icm: Optional[ICMParams] = None,
                 gamma: float = 0.99) -> List[Evaluation]:
        genomes = np.atleast_2d(np.asarray(genomes, dtype=np.float64))
        snapshot = replace(icm, optimizer=None) if icm is not None else None
        if self._pool is None:
            results = _evaluate_chunk((self.spec, self.layers, genomes, snapshot, gamma))
        else:
            chunks = [c for c in np.array_split(genomes, self.workers) if len(c)]
            payloads = [(self.spec, self.layers, c, snapshot, gamma) for c in chunks]
            results = [e for part in self._pool.map(_evaluate_chunk, payloads) for e in part]
        self.count += len(results)
        return results


def worker_count() -> int:
    try:
        return max(1, int(os.getenv("CURIOSITY_ES_WORKERS", "1")))
    except ValueError:
        logger.warning("Ignoring non-integer CURIOSITY_ES_WORKERS")
        return 1


# Run bookkeeping

@dataclass
class SeedStreams:
    """Independent generators so the intrinsic machinery never shifts ES sampling."""

    es: np.random.Generator
    fitness: np.random.Generator
    buffer: np.random.Generator
    icm: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "SeedStreams":
        es, fitness, buffer, icm = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))
        return cls(es, fitness, buffer, icm)


class RunRecorder:
    """Per-generation statistics and artifacts of one run."""

    def __init__(self, config: RunConfig, spec: MazeSpec, run_dir: Path):
        self.config = config
        self.spec = spec
        self.run_dir = run_dir
        self.coverage = CoverageGrid.for_maze(spec)
        self.reports: List[GenerationReport] = []
        self.fingerprints: List[PolicyFingerprint] = []
        self.best_so_far = 0.0
        self._started = time.perf_counter()

    def observe(self, evaluations: Sequence[Evaluation], generation: int) -> None:
        positions = np.array([e.trajectory.final_position for e in evaluations])
        for position in positions:
            self.coverage.update(position)
        append_final_states(self.run_dir / "final_states.csv", positions, generation)
        extrinsic = np.array([e.extrinsic for e in evaluations])
        self.best_so_far = max(self.best_so_far, float(extrinsic.max()))
        best = int(np.argmax(extrinsic))
        if extrinsic[best] > 0.0:
            self.fingerprints.append(make_fingerprint(evaluations[best].trajectory, extrinsic[best],
                                                      self.config.algorithm, generation))

    def report(self, generation: int, extrinsic: np.ndarray, intrinsic: np.ndarray,
               evaluations: int, buffer_size: int = 0, icm_loss: float = float("nan"),
               used_fallback: bool = False) -> GenerationReport:
        now = time.perf_counter()
        report = GenerationReport(
            generation=generation,
            max_f_e=float(np.max(extrinsic)),
            mean_f_e=float(np.mean(extrinsic)),
            min_f_e=float(np.min(extrinsic)),
            max_f_i=float(np.max(intrinsic)),
            mean_f_i=float(np.mean(intrinsic)),
            best_so_far=self.best_so_far,
            coverage_percent=self.coverage.percent,
            buffer_size=buffer_size,
            icm_loss=icm_loss,
            evaluations=evaluations,
            used_fallback=used_fallback,
            wall_clock_ms=1000.0 * (now - self._started),
        )
        self._started = now
        self.reports.append(report)
        logger.info("gen %d: max f_e %.4f, best %.4f, coverage %.2f%%, buffer %d, icm loss %.5f",
                    generation, report.max_f_e, report.best_so_far, report.coverage_percent,
                    buffer_size, icm_loss)
        return report

    def finish(self) -> None:
        write_generation_reports(self.run_dir / "generations.csv", self.reports)
        timings = [round(r.wall_clock_ms, 3) for r in self.reports]
        (self.run_dir / "timings.json").write_text(json.dumps(timings))
        save_fingerprints(self.run_dir / "fingerprints.npz", self.fingerprints)


def load_run_reports(run_dir) -> List[GenerationReport]:
    """generations.csv with the wall-clock timings kept beside it."""
    run_dir = Path(run_dir)
    reports = read_generation_reports(run_dir / "generations.csv")
    timings_path = run_dir / "timings.json"
    if timings_path.exists():
        for report, ms in zip(reports, json.loads(timings_path.read_text())):
            report.wall_clock_ms = float(ms)
    return reports


def prepare_run_dir(config: RunConfig) -> Path:
    run_dir = config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    for name in ("generations.csv", "fitness.csv", "final_states.csv", "archive.csv",
                 "grid.csv", "fingerprints.npz", "timings.json"):
        (run_dir / name).unlink(missing_ok=True)
    shutil.rmtree(run_dir / "checkpoints", ignore_errors=True)
    return run_dir


def write_run_manifest(run_dir: Path, config: RunConfig, spec: MazeSpec, n_params: int) -> Path:
    manifest = {
        "config": asdict(config),
        "maze": {"name": spec.name, "bounds": list(spec.bounds), "horizon": spec.horizon},
        "n_params": n_params,
    }
    path = run_dir / "run.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def save_checkpoint(run_dir: Path, config: RunConfig, generation: int, center: np.ndarray,
                    sigma: float, es_state: Optional[ESState] = None,
                    icm: Optional[ICMParams] = None) -> Path:
    directory = run_dir / "checkpoints" / f"gen_{generation:04d}"
    directory.mkdir(parents=True, exist_ok=True)
    save_network(directory / "policy.bin", Network(policy_layers(), center), config.seed)
    if es_state is not None:
        save_es_state(directory / "es_state.json", es_state)
    if icm is not None:
        save_icm(directory / "icm", icm, config.seed)
    manifest = {"config": asdict(config), "generation": generation, "sigma": sigma,
                "policy": "policy.bin"}
    path = directory / "checkpoint.json"
    path.write_text(json.dumps(manifest, indent=2))
    logger.info("Checkpoint written to %s", directory)
    return path


def _attach_log(run_dir: Path) -> logging.Handler:
    handler = logging.FileHandler(run_dir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s [%(levelname)s] %(name)s: %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


def _checkpoint_due(config: RunConfig, generation: int) -> bool:
    done = generation + 1
    return done % config.checkpoint_every == 0 or done == config.generations


def _guarded_generation(generation: int, step):
    try:
        return step()
    except (NonFiniteError, ValueError) as e:
        raise RunError(f"generation {generation}: non-finite fitness or update ({e})") from e


# Algorithms

def run_curiosity_es(config: RunConfig, evaluator: Optional[PopulationEvaluator] = None) -> Path:
    """ES loop for curiosity_es, ns_es and plain_es.

    Per generation: sample and evaluate the population with the ICM from the
    previous generation, blend fitness, move the center, append m transitions
    per individual to the buffer, then train the ICM for p epochs.
    """
    config = config.validate()
    if config.algorithm == "map_elites":
        raise ConfigError("run_curiosity_es handles the ES variants; use run_baseline for map_elites")
    spec = load_maze(config.environment, horizon=config.horizon)
    run_dir = prepare_run_dir(config)
    handler = _attach_log(run_dir)
    streams = SeedStreams.from_seed(config.seed)
    layers = policy_layers()
    center = init_network(layers, streams.es).weights
    write_run_manifest(run_dir, config, spec, center.size)
    state = ESState(center=center, sigma=config.sigma, lam=config.lam, mu=config.mu,
                    alpha=config.alpha, rng=streams.es)
    curious = config.algorithm == "curiosity_es"
    icm = buffer = archive = None
    if curious:
        icm = build_icm(STATE_DIM, ACTION_DIM, streams.icm, beta=config.beta, eta=config.eta,
                        learning_rate=config.alpha_icm)
        buffer = ReplayBuffer(config.capacity, config.m_per_individual)
    if config.algorithm == "ns_es":
        archive = NoveltyArchive(config.knn)

    recorder = RunRecorder(config, spec, run_dir)
    own_evaluator = evaluator is None
    evaluator = evaluator or PopulationEvaluator(spec, worker_count())
    logger.info("Running %s on %s: %d params, lambda %d, mu %d, %d generations",
                config.algorithm, spec.name, center.size, config.lam, config.mu, config.generations)
    try:
        for g in range(config.generations):
            outcome = _es_generation(config, state, evaluator, icm, archive, streams, g)
            recorder.observe(outcome.evaluations, g)
            if not rewarding_policies_dominate(outcome.extrinsic, outcome.totals):
                logger.warning("gen %d: an unrewarded individual outranks a rewarded one", g)
            records = fitness_records(outcome.extrinsic, outcome.intrinsic, outcome.totals)
            append_fitness_table(run_dir / "fitness.csv", g, records, outcome.order)

            icm_loss = float("nan")
            if curious:
                for evaluation in outcome.evaluations:
                    buffer.add_from_trajectory(evaluation.trajectory, streams.buffer)
                icm, history = train_icm(icm, buffer, config.epochs, config.batch_size, streams.icm,
                                         max_batches=config.icm_max_batches or None)
                if history:
                    icm_loss = history[-1]
            state = outcome.state
            recorder.report(g, outcome.extrinsic, outcome.intrinsic, evaluator.count,
                            buffer_size=len(buffer) if buffer is not None else 0,
                            icm_loss=icm_loss, used_fallback=outcome.used_fallback)
            if _checkpoint_due(config, g):
                save_checkpoint(run_dir, config, g + 1, state.center, state.sigma, state, icm)

        expected = config.lam * config.generations
        if evaluator.count != expected:
            raise RunError(f"evaluated {evaluator.count} rollouts, expected {expected}")
        recorder.finish()
        if archive is not None:
            archive.to_csv(run_dir / "archive.csv")
        if buffer is not None and config.dump_buffer:
            buffer.dump(run_dir / "replay_buffer.bin")
    finally:
        if own_evaluator:
            evaluator.close()
        logging.getLogger().removeHandler(handler)
        handler.close()
    return run_dir


def _es_generation(config: RunConfig, state: ESState, evaluator: PopulationEvaluator,
                   icm: Optional[ICMParams], archive: Optional[NoveltyArchive],
                   streams: SeedStreams, generation: int) -> GenerationOutcome:
    phi = config.effective_phi
    if archive is not None:
        return _guarded_generation(generation, lambda: ns_es_generation(
            state, archive, phi, evaluator, streams.fitness))

    def evaluate(genomes):
        return evaluator(genomes, icm, config.gamma)

    intrinsic = None
    if icm is not None:
        def intrinsic(evaluations):
            values = np.array([e.curiosity for e in evaluations], dtype=np.float64)
            bad = np.flatnonzero(~np.isfinite(values))
            if bad.size:
                raise RunError(f"generation {generation}: non-finite curiosity for individuals "
                               f"{bad.tolist()}")
            return values

    return _guarded_generation(generation, lambda: evolve_generation(
        state, evaluate, intrinsic, phi, streams.fitness))


def run_map_elites(config: RunConfig, evaluator: Optional[PopulationEvaluator] = None) -> Path:
    config = config.validate()
    spec = load_maze(config.environment, horizon=config.horizon)
    run_dir = prepare_run_dir(config)
    handler = _attach_log(run_dir)
    streams = SeedStreams.from_seed(config.seed)
    n_params = sum(layer.n_params for layer in policy_layers())
    write_run_manifest(run_dir, config, spec, n_params)
    lower, upper = maze_behavior_bounds(spec)
    grid = EliteGrid(lower, upper)
    mutation_sigma = config.mutation_sigma or config.sigma
    recorder = RunRecorder(config, spec, run_dir)
    own_evaluator = evaluator is None
    evaluator = evaluator or PopulationEvaluator(spec, worker_count())
    logger.info("Running map_elites on %s: bootstrap %d, batch %d, %d generations",
                spec.name, config.bootstrap, config.lam, config.generations)
    try:
        boot = bootstrap_grid(grid, n_params, config.sigma, evaluator, streams.es, count=config.bootstrap)
        recorder.observe(boot, 0)
        for g in range(config.generations):
            _, evaluations = map_elites_generation(grid, config.lam, mutation_sigma, evaluator,
                                                   streams.es, generation=g)
            recorder.observe(evaluations, g)
            scored = list(boot) + list(evaluations) if g == 0 else evaluations
            extrinsic = np.array([e.extrinsic for e in scored])
            recorder.report(g, extrinsic, np.zeros_like(extrinsic), evaluator.count)
            if _checkpoint_due(config, g):
                best = grid.best()
                save_checkpoint(run_dir, config, g + 1, best.genome, mutation_sigma)
        expected = config.bootstrap + config.lam * config.generations
        if evaluator.count != expected:
            raise RunError(f"evaluated {evaluator.count} rollouts, expected {expected}")
        recorder.finish()
        grid.to_csv(run_dir / "grid.csv")
        logger.info("MAP-Elites filled %d cells (%.2f%% of the behaviour grid)",
                    len(grid), 100.0 * grid.coverage)
    finally:
        if own_evaluator:
            evaluator.close()
        logging.getLogger().removeHandler(handler)
        handler.close()
    return run_dir


def run_baseline(config: RunConfig, evaluator: Optional[PopulationEvaluator] = None) -> Path:
    if config.algorithm == "map_elites":
        return run_map_elites(config, evaluator)
    if config.algorithm in ("ns_es", "plain_es"):
        return run_curiosity_es(config, evaluator)
    raise ConfigError(f"'{config.algorithm}' is not a baseline")


def run_experiment(config: RunConfig) -> Path:
    if config.algorithm == "curiosity_es":
        return run_curiosity_es(config)
    return run_baseline(config)


# Replay

def load_checkpoint(path) -> Tuple[dict, Network]:
    path = Path(path)
    manifest_path = path / "checkpoint.json" if path.is_dir() else path
    if not manifest_path.exists():
        raise RunError(f"no checkpoint manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    policy = load_network(manifest_path.parent / manifest.get("policy", "policy.bin"))
    return manifest, policy


def replay(checkpoint: Union[str, Path], episodes: int = 1, seed: int = 0,
           out_dir=None) -> Path:
    """Re-roll a stored center policy (episode 0) and K-1 samples around it.

    Each episode's trajectory is written as CSV next to a summary file.
    """
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    manifest, policy = load_checkpoint(checkpoint)
    config = manifest["config"]
    try:
        spec = load_maze(config["environment"], horizon=int(config["horizon"]))
    except MazeError as e:
        raise RunError(f"cannot rebuild maze for replay: {e}") from e
    base = Path(checkpoint)
    out = Path(out_dir) if out_dir else (base if base.is_dir() else base.parent) / "replay"
    out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    sigma = float(manifest.get("sigma", config.get("sigma", 0.5)))
    rows = []
    for k in range(episodes):
        weights = policy.weights if k == 0 else policy.weights + sigma * rng.standard_normal(policy.weights.size)
        trajectory, extrinsic = rollout(spec, policy.with_weights(weights))
        trajectory.to_csv(out / f"episode_{k:03d}.csv")
        x, y = trajectory.final_position
        rows.append({"episode": k, "extrinsic": extrinsic, "steps": trajectory.length,
                     "reached_goal": trajectory.reached_goal, "final_x": float(x), "final_y": float(y)})
        logger.info("Replay episode %d: reward %.4f after %d steps", k, extrinsic, trajectory.length)
    (out / "summary.json").write_text(json.dumps(rows, indent=2))
    return out
