"""Run metrics: best-reward curves, final-position coverage, final-state scatter
and a PCA view of rewarding policies, with CSV and SVG output for each."""

import csv
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np
import matplotlib
matplotlib.use('Agg')  # Non-GUI backend
import matplotlib.pyplot as plt
import seaborn as sns

logger = logging.getLogger(__name__)

COVERAGE_RESOLUTION = 50
FINGERPRINT_WINDOW = 300

plt.rcParams['svg.hashsalt'] = 'curiosity-es'


@dataclass
class GenerationReport:
    generation: int
    max_f_e: float
    mean_f_e: float
    min_f_e: float
    max_f_i: float
    mean_f_i: float
    best_so_far: float
    coverage_percent: float
    buffer_size: int
    icm_loss: float
    evaluations: int
    used_fallback: bool = False
    wall_clock_ms: float = 0.0


# wall_clock_ms stays out of the CSV so repeated runs write identical files
REPORT_COLUMNS = [f.name for f in fields(GenerationReport) if f.name != "wall_clock_ms"]


def write_generation_reports(path, reports: Iterable[GenerationReport]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_COLUMNS)
        for report in reports:
            row = asdict(report)
            writer.writerow([int(row[c]) if c == "used_fallback" else row[c] for c in REPORT_COLUMNS])
    return path


def read_generation_reports(path) -> List[GenerationReport]:
    reports = []
    with Path(path).open(newline="") as f:
        for row in csv.DictReader(f):
            reports.append(GenerationReport(
                generation=int(row["generation"]),
                max_f_e=float(row["max_f_e"]),
                mean_f_e=float(row["mean_f_e"]),
                min_f_e=float(row["min_f_e"]),
                max_f_i=float(row["max_f_i"]),
                mean_f_i=float(row["mean_f_i"]),
                best_so_far=float(row["best_so_far"]),
                coverage_percent=float(row["coverage_percent"]),
                buffer_size=int(row["buffer_size"]),
                icm_loss=float(row["icm_loss"]),
                evaluations=int(row["evaluations"]),
                used_fallback=row["used_fallback"] == "1",
            ))
    return reports


class CoverageGrid:
    """Discretized occupancy of final positions; cells are only ever added."""

    def __init__(self, lower: Sequence[float], upper: Sequence[float],
                 resolution: int = COVERAGE_RESOLUTION):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or np.any(self.upper <= self.lower):
            raise ValueError("coverage bounds must satisfy lower < upper")
        self.resolution = resolution
        self.occupancy: Set[Tuple[int, ...]] = set()

    @classmethod
    def for_maze(cls, spec, resolution: int = COVERAGE_RESOLUTION) -> "CoverageGrid":
        x1, y1, x2, y2 = spec.bounds
        return cls((x1, y1), (x2, y2), resolution)

    @property
    def total_cells(self) -> int:
        return self.resolution ** self.lower.size

    @property
    def percent(self) -> float:
        return 100.0 * len(self.occupancy) / self.total_cells

    def cell(self, position) -> Tuple[int, ...]:
        scaled = (np.asarray(position, dtype=np.float64) - self.lower) / (self.upper - self.lower)
        idx = np.clip(np.floor(scaled * self.resolution).astype(int), 0, self.resolution - 1)
        return tuple(int(i) for i in idx)

    def update(self, position) -> "CoverageGrid":
        position = np.asarray(position, dtype=np.float64)
        if not np.all(np.isfinite(position)):
            raise ValueError("coverage position must be finite")
        self.occupancy.add(self.cell(position))
        return self


def update_coverage(grid: CoverageGrid, final_position) -> CoverageGrid:
    return grid.update(final_position)


def best_reward_curve(reports: Sequence[Union[GenerationReport, float]]) -> List[float]:
    """Running maximum of the per-generation maximum extrinsic fitness."""
    values = [r.max_f_e if isinstance(r, GenerationReport) else float(r) for r in reports]
    if not values:
        return []
    return np.maximum.accumulate(np.asarray(values, dtype=np.float64)).tolist()


@dataclass
class PolicyFingerprint:
    vector: np.ndarray
    fitness: float
    algorithm: str
    generation: int = 0


def make_fingerprint(trajectory, fitness: float, algorithm: str, generation: int = 0,
                     window: int = FINGERPRINT_WINDOW) -> PolicyFingerprint:
    """Last `window` states, front-padded with the first state for short episodes."""
    states = np.asarray(trajectory.states, dtype=np.float64)
    tail = states[-window:]
    if tail.shape[0] < window:
        pad = np.repeat(states[:1], window - tail.shape[0], axis=0)
        tail = np.vstack([pad, tail])
    return PolicyFingerprint(tail.reshape(-1).copy(), float(fitness), algorithm, generation)


class PCAProjection(NamedTuple):
    points: np.ndarray
    explained_variance: np.ndarray
    components: np.ndarray


def _power_eigenpairs(matrix: np.ndarray, count: int, tol: float = 1e-12,
                      max_iter: int = 100_000) -> Tuple[np.ndarray, np.ndarray]:
    """Leading eigenpairs of a symmetric PSD matrix by power iteration with deflation."""
    n = matrix.shape[0]
    scale = float(np.linalg.norm(matrix))
    values = np.zeros(count)
    if scale == 0.0:
        return values, np.eye(n, count)
    vectors = np.zeros((n, count))

    rng = np.random.default_rng(0)
    deflated = matrix.copy()
    for k in range(count):
        v = rng.standard_normal(n)
        v -= vectors[:, :k] @ (vectors[:, :k].T @ v)
        v /= np.linalg.norm(v)
        value = 0.0
        for _ in range(max_iter):
            w = deflated @ v
            w -= vectors[:, :k] @ (vectors[:, :k].T @ w)
            value = float(v @ w)
            if np.linalg.norm(w - value * v) <= tol * scale:
                break
            norm = np.linalg.norm(w)
            if norm <= tol * scale:
                value = 0.0
                break
            v = w / norm
        else:
            logger.warning("Power iteration stopped after %d iterations for component %d", max_iter, k)
        values[k] = max(value, 0.0)
        vectors[:, k] = v
        deflated -= value * np.outer(v, v)
    return values, vectors


def pca_project(fingerprints: Union[Sequence[PolicyFingerprint], np.ndarray],
                dims: int = 2) -> PCAProjection:
    """Project onto the top `dims` principal components.

    Uses the n x n Gram matrix when there are fewer samples than features.
    Each component is sign-fixed so its largest-magnitude loading is positive.
    """
    if isinstance(fingerprints, np.ndarray):
        data = np.asarray(fingerprints, dtype=np.float64)
    else:
        data = np.vstack([fp.vector for fp in fingerprints]).astype(np.float64)
    if data.ndim != 2 or data.shape[0] < 3:
        raise ValueError("PCA needs at least 3 fingerprints")
    n, d = data.shape
    dims = min(dims, d)
    centered = data - data.mean(axis=0)

    if n < d:
        gram = centered @ centered.T
        values, left = _power_eigenpairs(gram, dims)
        total = float(np.trace(gram))
        components = np.zeros((d, dims))
        for k in range(dims):
            if values[k] > 1e-12 * total:
                components[:, k] = centered.T @ left[:, k] / np.sqrt(values[k])
    else:
        cov = centered.T @ centered
        values, components = _power_eigenpairs(cov, dims)
        total = float(np.trace(cov))

    for k in range(dims):
        column = components[:, k]
        if np.any(column) and column[np.argmax(np.abs(column))] < 0:
            components[:, k] = -column

    values[values <= 1e-12 * total] = 0.0
    if total <= 0.0:
        return PCAProjection(np.zeros((n, dims)), np.zeros(dims), components)
    points = centered @ components
    return PCAProjection(points, values / total, components)


# CSV outputs

def write_reward_curve(path, curve: Sequence[float]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["generation", "best_so_far"])
        for g, value in enumerate(curve):
            writer.writerow([g, float(value)])
    return path


def write_coverage(path, percents: Sequence[float]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["generation", "percent"])
        for g, value in enumerate(percents):
            writer.writerow([g, float(value)])
    return path


def append_final_states(path, positions: np.ndarray, generation: int) -> Path:
    path = Path(path)
    write_header = not path.exists()
    with path.open("a", newline="") as f:
        writer = csv.writer(f)
        if write_header:
            writer.writerow(["x", "y", "generation"])
        for x, y in np.asarray(positions, dtype=np.float64).reshape(-1, 2):
            writer.writerow([float(x), float(y), generation])
    return path


def read_final_states(path) -> np.ndarray:
    """Rows of (x, y, generation)."""
    rows = []
    with Path(path).open(newline="") as f:
        for row in csv.DictReader(f):
            rows.append((float(row["x"]), float(row["y"]), int(row["generation"])))
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def write_pca(path, projection: PCAProjection, fingerprints: Sequence[PolicyFingerprint]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["p1", "p2", "fitness", "algorithm"])
        for point, fp in zip(projection.points, fingerprints):
            p2 = float(point[1]) if point.size > 1 else 0.0
            writer.writerow([float(point[0]), p2, fp.fitness, fp.algorithm])
    return path


def save_fingerprints(path, fingerprints: Sequence[PolicyFingerprint]) -> Optional[Path]:
    if not fingerprints:
        return None
    path = Path(path)
    np.savez(path,
             vectors=np.vstack([fp.vector for fp in fingerprints]),
             fitness=np.array([fp.fitness for fp in fingerprints]),
             generation=np.array([fp.generation for fp in fingerprints]),
             algorithm=np.array([fp.algorithm for fp in fingerprints]))
    return path


def load_fingerprints(path) -> List[PolicyFingerprint]:
    with np.load(path) as data:
        return [PolicyFingerprint(v.copy(), float(f), str(a), int(g))
                for v, f, a, g in zip(data["vectors"], data["fitness"],
                                      data["algorithm"], data["generation"])]


# SVG charts

def _save_svg(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format='svg', bbox_inches='tight', metadata={'Date': None})
    plt.close(fig)
    return path


def generate_curve_chart(path, series: dict, ylabel: str, title: str) -> Optional[Path]:
    """Line chart of one or more per-generation series keyed by label."""
    try:
        sns.set_theme(style="whitegrid")
        fig, ax = plt.subplots(figsize=(8, 5))
        for label, values in series.items():
            ax.plot(range(len(values)), values, label=label, linewidth=1.8)
        ax.set_xlabel('Generation', fontsize=12, weight='bold')
        ax.set_ylabel(ylabel, fontsize=12, weight='bold')
        ax.set_title(title, fontsize=14, weight='bold', pad=20)
        ax.legend(fontsize=10, loc='lower right')
        ax.spines['top'].set_visible(False)
        ax.spines['right'].set_visible(False)
        return _save_svg(fig, path)
    except Exception as e:
        logger.error("Error generating %s chart: %s", title, e)
        plt.close('all')
        return None


def generate_final_states_chart(path, final_states: np.ndarray, spec=None,
                                title: str = 'Final positions') -> Optional[Path]:
    try:
        sns.set_theme(style="white")
        fig, ax = plt.subplots(figsize=(6, 6))
        if spec is not None:
            for x1, y1, x2, y2 in spec.walls:
                ax.plot([x1, x2], [y1, y2], color='#1F2937', linewidth=2)
            ax.set_xlim(spec.bounds[0], spec.bounds[2])
            ax.set_ylim(spec.bounds[1], spec.bounds[3])
            ax.scatter([spec.goal[0]], [spec.goal[1]], marker='*', s=200, color='#DC2626', zorder=3)
        if final_states.size:
            points = ax.scatter(final_states[:, 0], final_states[:, 1], c=final_states[:, 2],
                                cmap='viridis', s=4, alpha=0.6)
            fig.colorbar(points, ax=ax, label='Generation')
        ax.set_aspect('equal')
        ax.set_title(title, fontsize=14, weight='bold', pad=20)
        return _save_svg(fig, path)
    except Exception as e:
        logger.error("Error generating final states chart: %s", e)
        plt.close('all')
        return None


def generate_pca_chart(path, projection: PCAProjection,
                       fingerprints: Sequence[PolicyFingerprint]) -> Optional[Path]:
    try:
        sns.set_theme(style="whitegrid")
        fig, ax = plt.subplots(figsize=(7, 6))
        labels = [fp.algorithm for fp in fingerprints]
        second = projection.points[:, 1] if projection.points.shape[1] > 1 else np.zeros(len(labels))
        sns.scatterplot(x=projection.points[:, 0], y=second, hue=labels, ax=ax, s=25)
        ratio = projection.explained_variance
        ax.set_xlabel(f'PC1 ({100 * ratio[0]:.1f}%)', fontsize=12, weight='bold')
        if ratio.size > 1:
            ax.set_ylabel(f'PC2 ({100 * ratio[1]:.1f}%)', fontsize=12, weight='bold')
        ax.set_title('Rewarding policies, last states', fontsize=14, weight='bold', pad=20)
        return _save_svg(fig, path)
    except Exception as e:
        logger.error("Error generating PCA chart: %s", e)
        plt.close('all')
        return None


def _run_label(run_dir: Path) -> Tuple[str, dict]:
    meta_path = run_dir / "run.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    config = meta.get("config", {})
    label = f"{config.get('algorithm', run_dir.name)}-s{config.get('seed', '?')}"
    return label, meta


def analyze_runs(run_dirs: Sequence[Union[str, Path]], out_dir=None) -> Path:
    """Emit every metric CSV and SVG for one or more run directories.

    Per-run outputs go into each run directory (or `out_dir/<run name>`);
    the PCA comparison across all given runs goes into `out_dir` (or the
    first run directory).
    """
    from components.module2_maze_env import load_maze

    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ValueError("analyze needs at least one run directory")
    shared = Path(out_dir) if out_dir else run_dirs[0]
    shared.mkdir(parents=True, exist_ok=True)

    curves, coverages, all_prints = {}, {}, []
    for run_dir in run_dirs:
        if not (run_dir / "generations.csv").exists():
            raise FileNotFoundError(f"{run_dir} has no generations.csv")
        target = shared / run_dir.name if out_dir else run_dir
        target.mkdir(parents=True, exist_ok=True)
        label, meta = _run_label(run_dir)
        spec = None
        environment = meta.get("config", {}).get("environment")
        if environment:
            try:
                spec = load_maze(environment)
            except Exception as e:
                logger.warning("Could not load maze %s for %s: %s", environment, run_dir, e)

        reports = read_generation_reports(run_dir / "generations.csv")
        curve = best_reward_curve(reports)
        write_reward_curve(target / "reward_curve.csv", curve)
        curves[label] = curve

        states = np.zeros((0, 3))
        if (run_dir / "final_states.csv").exists():
            states = read_final_states(run_dir / "final_states.csv")
        percents = [r.coverage_percent for r in reports]
        if spec is not None and states.size:
            grid = CoverageGrid.for_maze(spec)
            percents = []
            for g in range(len(reports)):
                for x, y, _ in states[states[:, 2] == g]:
                    grid.update((x, y))
                percents.append(grid.percent)
        write_coverage(target / "coverage.csv", percents)
        coverages[label] = percents

        generate_curve_chart(target / "reward_curve.svg", {label: curve}, 'Best reward so far',
                             'Best reward since start')
        generate_curve_chart(target / "coverage.svg", {label: percents}, 'Coverage (%)',
                             'Final-position coverage')
        generate_final_states_chart(target / "final_states.svg", states, spec, title=label)

        prints_path = run_dir / "fingerprints.npz"
        if prints_path.exists():
            all_prints.extend(load_fingerprints(prints_path))
        logger.info("Analyzed %s: best reward %.4f, coverage %.2f%%", run_dir,
                    curve[-1] if curve else 0.0, percents[-1] if percents else 0.0)

    if len(run_dirs) > 1:
        generate_curve_chart(shared / "reward_curve_comparison.svg", curves, 'Best reward so far',
                             'Best reward since start')
        generate_curve_chart(shared / "coverage_comparison.svg", coverages, 'Coverage (%)',
                             'Final-position coverage')

    if len(all_prints) >= 3:
        projection = pca_project(all_prints)
        write_pca(shared / "pca.csv", projection, all_prints)
        generate_pca_chart(shared / "pca.svg", projection, all_prints)
    else:
        logger.warning("Only %d rewarding fingerprints; PCA skipped", len(all_prints))
    return shared
