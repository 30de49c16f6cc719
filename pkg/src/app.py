import json
import logging
import os
import sys
from io import BytesIO
from pathlib import Path

from dotenv import load_dotenv
from flask import Flask, jsonify, send_file
from flask_cors import CORS

# Add components to path
CURRENT_DIR = Path(__file__).resolve().parent
if str(CURRENT_DIR) not in sys.path:
    sys.path.insert(0, str(CURRENT_DIR))

load_dotenv(CURRENT_DIR.parent / '.env')

from run_registry import (
    ARTIFACT_SUFFIXES,
    Run,
    SessionLocal,
    build_run_report,
    configure_registry,
    get_db,
    init_db,
    load_run_history,
)

logger = logging.getLogger(__name__)


def create_app(db_path=None):
    """Read-only JSON API over the run registry."""
    app = Flask(__name__)
    CORS(app, supports_credentials=True)
    configure_registry(db_path)
    init_db()

    @app.teardown_appcontext
    def remove_session(exception=None):
        SessionLocal.remove()

    @app.route('/api/health', methods=['GET'])
    def health_check():
        """Health check endpoint"""
        return jsonify({'status': 'ok', 'message': 'Curiosity-ES results API is running'}), 200

    @app.route('/api/runs', methods=['GET'])
    def get_runs():
        return jsonify({'runs': load_run_history()}), 200

    @app.route('/api/runs/<int:run_id>', methods=['GET'])
    def get_run(run_id):
        with get_db() as db:
            run = db.get(Run, run_id)
            if not run:
                return jsonify({'message': 'Run not found'}), 404
            report_payload = build_run_report(run)
        return jsonify({'run': report_payload}), 200

    @app.route('/api/runs/<int:run_id>/download', methods=['GET'])
    def download_run(run_id):
        with get_db() as db:
            run = db.get(Run, run_id)
            if not run:
                return jsonify({'message': 'Run not found'}), 404
            report_payload = build_run_report(run)

        buffer = BytesIO()
        buffer.write(json.dumps(report_payload, indent=2).encode('utf-8'))
        buffer.seek(0)
        safe_filename = f"{report_payload['algorithm']}-{Path(report_payload['environment']).stem}" \
                        f"-s{report_payload['seed']}-run{run_id}-report.json"
        return send_file(
            buffer,
            mimetype='application/json',
            as_attachment=True,
            download_name=safe_filename
        )

    @app.route('/api/runs/<int:run_id>/artifacts/<path:name>', methods=['GET'])
    def get_artifact(run_id, name):
        with get_db() as db:
            run = db.get(Run, run_id)
            if not run:
                return jsonify({'message': 'Run not found'}), 404
            run_dir = Path(run.run_dir).resolve()

        target = (run_dir / name).resolve()
        if target.parent != run_dir or target.suffix not in ARTIFACT_SUFFIXES or not target.is_file():
            return jsonify({'message': 'Artifact not found'}), 404
        return send_file(target, as_attachment=False)

    return app


if __name__ == '__main__':
    logging.basicConfig(level=os.getenv('CURIOSITY_ES_LOG_LEVEL', 'INFO'),
                        format='%(asctime)s [%(levelname)s] %(name)s: %(message)s')
    print("\n" + "="*80)
    print("CURIOSITY-ES - RESULTS API")
    print("="*80)
    print("Starting Flask API Server...")
    print("API available at: http://localhost:5000/api")
    print("="*80 + "\n")

    create_app().run(debug=False, port=5000, host='0.0.0.0', use_reloader=False)
