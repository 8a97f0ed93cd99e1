from sqlmodel import SQLModel

from app.db.session import get_engine
from app.models import run_record  # noqa: F401  # ensure models imported


def init_db() -> None:
  SQLModel.metadata.create_all(bind=get_engine())
