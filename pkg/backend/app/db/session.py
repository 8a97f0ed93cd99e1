import logging
from contextlib import contextmanager
from functools import lru_cache
from pathlib import Path
from typing import Iterator

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine, make_url
from sqlalchemy.orm import sessionmaker
from sqlmodel import Session

from app.core.config import get_settings

logger = logging.getLogger(__name__)


def _build_engine(url: str) -> Engine:
  """Create the SQLAlchemy engine with the proper SQLite connect args."""
  connect_args = {}
  if url.startswith("sqlite"):
    connect_args["check_same_thread"] = False
    database = make_url(url).database
    if database and database != ":memory:":
      Path(database).resolve().parent.mkdir(parents=True, exist_ok=True)
  return create_engine(url, connect_args=connect_args)


@lru_cache
def get_engine() -> Engine:
  url = get_settings().database_url
  engine = _build_engine(url)
  logger.info("Run ledger at %s", engine.url.render_as_string(hide_password=True))
  return engine


def _session_factory() -> sessionmaker:
  return sessionmaker(autocommit=False, autoflush=False, bind=get_engine(), class_=Session)


@contextmanager
def session_context() -> Iterator[Session]:
  session: Session = _session_factory()()
  try:
    yield session
    session.commit()
  except Exception:
    session.rollback()
    raise
  finally:
    session.close()


def get_session() -> Iterator[Session]:
  with _session_factory()() as session:
    yield session
