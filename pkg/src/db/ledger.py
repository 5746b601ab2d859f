"""
Run ledger: records analyze / oracle runs and their per-problem results.
"""

import logging
from contextlib import contextmanager
from datetime import datetime
from typing import Iterator, Optional

from sqlalchemy.orm import sessionmaker

from src.analysis.search import ProblemResult
from src.db import models
from src.db.database import create_session_factory

logger = logging.getLogger(__name__)


class RunLedger:
    """Writes AnalysisRun rows (running -> completed / failed) and one row per problem."""

    def __init__(self, session_factory: Optional[sessionmaker] = None, path: Optional[str] = None):
        self.session_factory = session_factory or create_session_factory(path)

    def start(self, command: str, config: dict, seed: int) -> int:
        with self.session_factory() as db:
            run = models.AnalysisRun(
                command=command,
                started_at=datetime.utcnow(),
                status="running",
                seed=str(seed),
                config_json=config,
            )
            db.add(run)
            db.commit()
            logger.info(f"Ledger: started {command} run {run.id}")
            return run.id

    def record(self, run_id: int, result: ProblemResult):
        data = result.to_dict()
        with self.session_factory() as db:
            db.add(models.ProblemResult(
                run_id=run_id,
                problem_id=data["problem_id"],
                source=data["source"],
                important_sets_json=data["important_sets"],
                unverifiable_json=data["unverifiable"],
                stats_json=data["stats"],
            ))
            run = db.get(models.AnalysisRun, run_id)
            run.problems_processed = (run.problems_processed or 0) + 1
            db.commit()

    def finish(self, run_id: int, status: str = "completed", error_message: Optional[str] = None):
        with self.session_factory() as db:
            run = db.get(models.AnalysisRun, run_id)
            run.status = status
            run.completed_at = datetime.utcnow()
            if error_message:
                run.error_message = error_message
            db.commit()
            logger.info(f"Ledger: run {run_id} {status} ({run.problems_processed} problems)")

    @contextmanager
    def track(self, command: str, config: dict, seed: int) -> Iterator[int]:
        """Start a run, mark it completed on exit or failed with the error message."""
        run_id = self.start(command, config, seed)
        try:
            yield run_id
        except Exception as e:
            logger.error(f"Ledger: run {run_id} failed: {e}")
            self.finish(run_id, status="failed", error_message=str(e))
            raise
        self.finish(run_id)

    def interrupt_stale(self) -> int:
        """Mark runs left in 'running' by a dead process as interrupted."""
        with self.session_factory() as db:
            stale = db.query(models.AnalysisRun).filter(models.AnalysisRun.status == "running").all()
            for run in stale:
                run.status = "interrupted"
            if stale:
                db.commit()
            return len(stale)

    def list_runs(self, limit: int = 20) -> list[dict]:
        with self.session_factory() as db:
            runs = (
                db.query(models.AnalysisRun)
                .order_by(models.AnalysisRun.started_at.desc(), models.AnalysisRun.id.desc())
                .limit(limit)
                .all()
            )
            return [run.to_dict() for run in runs]

    def get_run(self, run_id: int) -> Optional[dict]:
        with self.session_factory() as db:
            run = db.get(models.AnalysisRun, run_id)
            if run is None:
                return None
            data = run.to_dict()
            data["results"] = [
                r.to_dict() for r in sorted(run.results, key=lambda r: r.problem_id)
            ]
            return data
