import json
import logging
import os
import sys
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path

from sqlalchemy import create_engine, Column, Integer, String, Text, Float, DateTime, ForeignKey
from sqlalchemy.orm import declarative_base, relationship, sessionmaker, scoped_session

# Add components to path
CURRENT_DIR = Path(__file__).resolve().parent
if str(CURRENT_DIR) not in sys.path:
    sys.path.insert(0, str(CURRENT_DIR))

from components.metrics_analysis import REPORT_COLUMNS

logger = logging.getLogger(__name__)

ROOT = CURRENT_DIR.parent
DEFAULT_DB_PATH = ROOT / 'data' / 'runs.db'

# Files a run directory may expose through the API
ARTIFACT_SUFFIXES = ('.csv', '.svg', '.json', '.log')

Base = declarative_base()
engine = None
SessionLocal = scoped_session(sessionmaker(autocommit=False, autoflush=False, future=True))


class Run(Base):
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True)
    run_dir = Column(String(1024), nullable=False)
    algorithm = Column(String(32), nullable=False, index=True)
    environment = Column(String(255), nullable=False)
    seed = Column(Integer, nullable=False)
    generations = Column(Integer, default=0)
    best_reward = Column(Float, default=0.0)
    final_coverage = Column(Float, default=0.0)
    config_json = Column(Text)
    created_at = Column(DateTime, default=datetime.utcnow)

    reports = relationship('GenerationRecord', back_populates='run', cascade='all, delete-orphan',
                           order_by='GenerationRecord.generation')


class GenerationRecord(Base):
    __tablename__ = 'generation_records'

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('runs.id'), nullable=False, index=True)
    generation = Column(Integer, nullable=False)
    max_f_e = Column(Float)
    mean_f_e = Column(Float)
    min_f_e = Column(Float)
    max_f_i = Column(Float)
    mean_f_i = Column(Float)
    best_so_far = Column(Float)
    coverage_percent = Column(Float)
    buffer_size = Column(Integer)
    icm_loss = Column(Float)
    evaluations = Column(Integer)
    used_fallback = Column(Integer, default=0)
    wall_clock_ms = Column(Float)

    run = relationship('Run', back_populates='reports')


def configure_registry(db_path=None):
    """Bind the registry to a SQLite file (CURIOSITY_ES_DB or data/runs.db by default)."""
    global engine
    db_path = Path(db_path or os.getenv('CURIOSITY_ES_DB') or DEFAULT_DB_PATH)
    db_path.parent.mkdir(parents=True, exist_ok=True)
    if engine is not None:
        SessionLocal.remove()
        engine.dispose()
    engine = create_engine(f'sqlite:///{db_path}', connect_args={'check_same_thread': False}, future=True)
    SessionLocal.configure(bind=engine)
    return engine


@contextmanager
def get_db():
    if engine is None:
        configure_registry()
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


def init_db():
    if engine is None:
        configure_registry()
    Base.metadata.create_all(bind=engine)


def _json_float(value):
    # SQLite keeps NaN as NULL and JSON has no inf
    if value is None:
        return None
    value = float(value)
    return value if value == value and abs(value) != float('inf') else None


def store_run_record(run_dir, config, reports):
    """Index a finished run and its per-generation reports."""
    run_dir = Path(run_dir)
    config_payload = config if isinstance(config, dict) else config.__dict__
    last = reports[-1] if reports else None

    with get_db() as db:
        run = Run(
            run_dir=str(run_dir.resolve()),
            algorithm=config_payload.get('algorithm', ''),
            environment=str(config_payload.get('environment', '')),
            seed=int(config_payload.get('seed', 0)),
            generations=len(reports),
            best_reward=last.best_so_far if last else 0.0,
            final_coverage=last.coverage_percent if last else 0.0,
            config_json=json.dumps(config_payload),
        )
        for report in reports:
            run.reports.append(GenerationRecord(
                generation=report.generation,
                max_f_e=report.max_f_e,
                mean_f_e=report.mean_f_e,
                min_f_e=report.min_f_e,
                max_f_i=_json_float(report.max_f_i),
                mean_f_i=_json_float(report.mean_f_i),
                best_so_far=report.best_so_far,
                coverage_percent=report.coverage_percent,
                buffer_size=report.buffer_size,
                icm_loss=_json_float(report.icm_loss),
                evaluations=report.evaluations,
                used_fallback=int(report.used_fallback),
                wall_clock_ms=report.wall_clock_ms,
            ))
        db.add(run)
        db.commit()
        db.refresh(run)
        logger.info("Registered run %d (%s on %s, seed %d)", run.id, run.algorithm, run.environment, run.seed)
        return run


def load_run_history():
    with get_db() as db:
        runs = db.query(Run).order_by(Run.created_at.desc(), Run.id.desc()).all()

        history = []
        for run in runs:
            history.append({
                'id': run.id,
                'algorithm': run.algorithm,
                'environment': run.environment,
                'seed': run.seed,
                'generations': run.generations,
                'best_reward': run.best_reward,
                'final_coverage': run.final_coverage,
                'created_at': run.created_at.isoformat(),
            })

        return history


def list_artifacts(run):
    run_dir = Path(run.run_dir)
    if not run_dir.is_dir():
        return []
    return sorted(p.name for p in run_dir.iterdir() if p.is_file() and p.suffix in ARTIFACT_SUFFIXES)


def build_run_report(run):
    reports = []
    for record in run.reports:
        row = {column: getattr(record, column) for column in REPORT_COLUMNS}
        row['used_fallback'] = bool(record.used_fallback)
        row['wall_clock_ms'] = record.wall_clock_ms
        reports.append(row)

    return {
        'run_id': run.id,
        'run_dir': run.run_dir,
        'algorithm': run.algorithm,
        'environment': run.environment,
        'seed': run.seed,
        'generations': run.generations,
        'best_reward': run.best_reward,
        'final_coverage': run.final_coverage,
        'created_at': run.created_at.isoformat() if run.created_at else None,
        'config': json.loads(run.config_json) if run.config_json else {},
        'reports': reports,
        'artifacts': list_artifacts(run),
    }
