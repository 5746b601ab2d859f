from datetime import datetime
from sqlalchemy import Column, Integer, String, DateTime, Text, ForeignKey, JSON
from sqlalchemy.orm import relationship
from src.db.database import Base


class AnalysisRun(Base):
    """One analyze / oracle invocation."""
    __tablename__ = "analysis_runs"

    id = Column(Integer, primary_key=True)
    command = Column(String(20), nullable=False)
    started_at = Column(DateTime, nullable=False)
    completed_at = Column(DateTime)
    status = Column(String(20), default="running")
    seed = Column(String(32))
    config_json = Column(JSON)
    problems_processed = Column(Integer, default=0)
    error_message = Column(Text)

    results = relationship("ProblemResult", back_populates="run", cascade="all, delete-orphan")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "command": self.command,
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "completed_at": self.completed_at.isoformat() if self.completed_at else None,
            "status": self.status,
            "seed": self.seed,
            "config": self.config_json,
            "problems_processed": self.problems_processed,
            "error_message": self.error_message,
        }


class ProblemResult(Base):
    """Important feature set found for one problem within a run."""
    __tablename__ = "problem_results"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("analysis_runs.id"), nullable=False, index=True)
    problem_id = Column(String(200), nullable=False, index=True)
    source = Column(String(20), nullable=False)

    important_sets_json = Column(JSON)
    unverifiable_json = Column(JSON)
    stats_json = Column(JSON)

    created_at = Column(DateTime, default=datetime.utcnow)

    run = relationship("AnalysisRun", back_populates="results")

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "source": self.source,
            "important_sets": self.important_sets_json or [],
            "unverifiable": self.unverifiable_json or [],
            "stats": self.stats_json or {},
        }
