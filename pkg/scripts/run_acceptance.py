"""
Multi-seed maze comparisons at desk scale.

Runs Curiosity-ES and plain ES on SNAKE and Curiosity-ES and MAP-Elites on US
over five seeds, then writes acceptance_summary.csv and prints whether the
expected orderings hold. Expect roughly an hour per algorithm on 8 cores; set
CURIOSITY_ES_WORKERS to use them.
"""

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / 'src'))

from components.module8_experiment_runner import (  # noqa: E402
    RunConfig,
    load_run_reports,
    maze_defaults,
    run_experiment,
)

SUITES = {
    'snake': ('curiosity_es', 'plain_es'),
    'us': ('curiosity_es', 'map_elites'),
}


def run_suite(out_root, seeds, generations, icm_max_batches):
    rows = []
    for maze, algorithms in SUITES.items():
        for algorithm in algorithms:
            for seed in seeds:
                config = RunConfig(**maze_defaults(maze))
                config = replace(config, algorithm=algorithm, seed=seed, generations=generations,
                                 icm_max_batches=icm_max_batches,
                                 out_dir=str(out_root / f'{algorithm}_{maze}_s{seed}')).validate()
                run_dir = run_experiment(config)
                last = load_run_reports(run_dir)[-1]
                rows.append({
                    'maze': maze,
                    'algorithm': algorithm,
                    'seed': seed,
                    'best_reward': last.best_so_far,
                    'final_coverage': last.coverage_percent,
                    'found_reward': int(last.best_so_far > 0.0),
                })
                print(f"{maze:6s} {algorithm:13s} seed {seed}: best {last.best_so_far:.4f}, "
                      f"coverage {last.coverage_percent:.2f}%")
    return rows


def check_orderings(rows):
    def pick(maze, algorithm):
        return {r['seed']: r for r in rows if r['maze'] == maze and r['algorithm'] == algorithm}

    ces_snake, es_snake = pick('snake', 'curiosity_es'), pick('snake', 'plain_es')
    ces_us, me_us = pick('us', 'curiosity_es'), pick('us', 'map_elites')
    seeds = sorted(ces_snake)
    checks = {
        'snake: curiosity_es finds reward in >= 4/5 seeds':
            sum(r['found_reward'] for r in ces_snake.values()) >= 4,
        'snake: plain_es finds reward in <= 1/5 seeds':
            sum(r['found_reward'] for r in es_snake.values()) <= 1,
        'snake: curiosity_es coverage >= 2x plain_es':
            sum(r['final_coverage'] for r in ces_snake.values())
            >= 2 * sum(r['final_coverage'] for r in es_snake.values()),
        'us: curiosity_es finds reward in >= 3/5 seeds':
            sum(r['found_reward'] for r in ces_us.values()) >= 3,
        'us: map_elites finds reward in >= 3/5 seeds':
            sum(r['found_reward'] for r in me_us.values()) >= 3,
        'us: curiosity_es best >= map_elites best in >= 3/5 seeds':
            sum(ces_us[s]['best_reward'] >= me_us[s]['best_reward'] for s in seeds if s in me_us) >= 3,
    }
    return checks


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument('--out', default=str(ROOT / 'runs' / 'acceptance'))
    parser.add_argument('--seeds', type=int, nargs='+', default=[0, 1, 2, 3, 4])
    parser.add_argument('--generations', type=int, default=300)
    parser.add_argument('--icm-max-batches', type=int, default=32,
                        help='minibatches per ICM epoch (0: full pass over the buffer)')
    args = parser.parse_args()

    logging.basicConfig(level=logging.WARNING, format='%(asctime)s [%(levelname)s] %(name)s: %(message)s')
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)

    rows = run_suite(out_root, args.seeds, args.generations, args.icm_max_batches)
    summary = out_root / 'acceptance_summary.csv'
    with summary.open('w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    print("\n" + "="*80)
    for name, ok in check_orderings(rows).items():
        print(f"{'✅' if ok else '❌'} {name}")
    print("="*80)
    print(f"Summary written to {summary}")
