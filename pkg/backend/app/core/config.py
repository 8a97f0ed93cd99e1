from functools import lru_cache
from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
  """Application configuration loaded from environment variables or .env file."""

  app_name: str = Field(default="ma-isac-v2i")
  debug: bool = Field(default=False)
  database_url: str = Field(
    default="sqlite:///./data/runs.db",
    description="SQLAlchemy-style URL of the run ledger."
  )
  output_dir: str = Field(
    default="./results",
    description="Diretório padrão para os resultados da CLI (variável OUTPUT_DIR)."
  )
  solver_backend: str = Field(
    default="CLARABEL",
    description="cvxpy solver used for the SDP/LMI subproblems; SCS is the fallback."
  )
  log_level: str = Field(default="INFO")

  class Config:
    env_file = ".env"
    env_file_encoding = "utf-8"


@lru_cache
def get_settings() -> Settings:
  return Settings()
