import os
from pathlib import Path
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker
from sqlalchemy.pool import StaticPool

DATABASE_PATH = os.environ.get("DATABASE_PATH", "data/causescope.db")

Base = declarative_base()


def database_url(path: str) -> str:
    return "sqlite://" if path == ":memory:" else f"sqlite:///{path}"


def create_session_factory(path: Optional[str] = None) -> sessionmaker:
    """Engine + session factory for a SQLite ledger; tables are created on first use."""
    path = str(path or DATABASE_PATH)
    if path == ":memory:":
        engine = create_engine(
            database_url(path), connect_args={"check_same_thread": False}, poolclass=StaticPool
        )
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        engine = create_engine(database_url(path), connect_args={"check_same_thread": False})
    init_db(engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def init_db(engine):
    from src.db.models import Base
    Base.metadata.create_all(bind=engine)
