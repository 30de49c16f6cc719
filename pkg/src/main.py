import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv
from sqlalchemy.exc import SQLAlchemyError

# Add components to path
CURRENT_DIR = Path(__file__).resolve().parent
if str(CURRENT_DIR) not in sys.path:
    sys.path.insert(0, str(CURRENT_DIR))

from components.module2_maze_env import MazeError
from components.module8_experiment_runner import (
    ConfigError,
    RunError,
    load_config,
    load_run_reports,
    replay,
    run_experiment,
)
from components.metrics_analysis import analyze_runs

logger = logging.getLogger('curiosity_es')

ROOT = CURRENT_DIR.parent


def setup_logging():
    level = os.getenv('CURIOSITY_ES_LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format='%(asctime)s [%(levelname)s] %(name)s: %(message)s')
    logging.getLogger('matplotlib').setLevel(logging.WARNING)


def register_run(run_dir, config, reports):
    from run_registry import init_db, store_run_record

    try:
        init_db()
        return store_run_record(run_dir, config, reports)
    except SQLAlchemyError as e:
        logger.warning("Run finished but could not be registered: %s", e)
        return None


def cmd_run(args):
    config = load_config(args.config, seed=args.seed, out_dir=args.out)
    print("\n" + "="*80)
    print(f"CURIOSITY-ES - {config.algorithm.upper()} ON {Path(config.environment).stem.upper()}")
    print("="*80)
    print(f"Seed: {config.seed}   Generations: {config.generations}   Output: {config.run_dir}")
    print("="*80 + "\n")

    run_dir = run_experiment(config)
    reports = load_run_reports(run_dir)
    if not args.no_register:
        register_run(run_dir, config, reports)
    best = reports[-1].best_so_far if reports else 0.0
    print(f"\n✅ Run complete: best reward {best:.4f}, artifacts in {run_dir}\n")
    return 0


def cmd_replay(args):
    out = replay(args.checkpoint, episodes=args.episodes, seed=args.seed, out_dir=args.out)
    print(f"✅ {args.episodes} episode(s) written to {out}")
    return 0


def cmd_analyze(args):
    out = analyze_runs(args.run, out_dir=args.out)
    print(f"✅ Metrics and figures written to {out}")
    return 0


def cmd_serve(args):
    from app import create_app

    print("\n" + "="*80)
    print("CURIOSITY-ES - RESULTS API")
    print("="*80)
    print(f"API available at: http://localhost:{args.port}/api")
    print("="*80 + "\n")
    create_app(args.db).run(debug=False, port=args.port, host=args.host, use_reloader=False)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog='curiosity-es',
                                     description='Curiosity-ES, NS-ES, MAP-Elites and plain ES on sparse-reward mazes')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='run one experiment from a config file')
    run.add_argument('--config', required=True, help='key = value config file')
    run.add_argument('--seed', type=int, default=None, help='override the config seed')
    run.add_argument('--out', default=None, help='run directory (default runs/<algorithm>_<maze>_s<seed>)')
    run.add_argument('--no-register', action='store_true', help='do not add the run to the registry')
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser('replay', help='re-roll a checkpointed policy and dump trajectories')
    rep.add_argument('--checkpoint', required=True, help='checkpoint directory or checkpoint.json')
    rep.add_argument('--episodes', type=int, default=1, help='episode 0 is the policy, the rest are samples around it')
    rep.add_argument('--seed', type=int, default=0)
    rep.add_argument('--out', default=None)
    rep.set_defaults(func=cmd_replay)

    ana = sub.add_parser('analyze', help='emit metric CSVs and SVG figures for one or more runs')
    ana.add_argument('--run', nargs='+', required=True, help='run directories')
    ana.add_argument('--out', default=None, help='directory for cross-run outputs')
    ana.set_defaults(func=cmd_analyze)

    srv = sub.add_parser('serve', help='serve the run registry as a JSON API')
    srv.add_argument('--db', default=None, help='registry database (default CURIOSITY_ES_DB or data/runs.db)')
    srv.add_argument('--host', default='0.0.0.0')
    srv.add_argument('--port', type=int, default=5000)
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    load_dotenv(ROOT / '.env')
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RunError, MazeError) as e:
        logger.error("%s", e)
        return 2
    except FileNotFoundError as e:
        logger.error("%s", e)
        return 2


if __name__ == '__main__':
    sys.exit(main())
