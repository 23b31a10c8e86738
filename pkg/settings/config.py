from pathlib import Path
from typing import Optional
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

ROOT_DIR = Path(__file__).resolve().parent.parent


class Settings(BaseSettings):
    # Paths
    output_root: Optional[Path] = Field(default=None, description="Overrides the output directory of every command")
    label_table: Path = Field(default=ROOT_DIR / "label_tables" / "driving_indoor.tsv", description="Declarative unified label table")
    logging_config: Path = Field(default=ROOT_DIR / "logging.conf", description="logging.config.fileConfig file")

    # Compute
    device: str = Field(default="cpu", description="Torch device used by train/eval/export")
    num_workers: int = Field(default=0, ge=0, description="DataLoader worker processes; 0 keeps loading in-process")
    deterministic: bool = Field(default=True, description="Request deterministic torch kernels")

    model_config = SettingsConfigDict(env_prefix="LADDERSEG_", env_file=".env", env_file_encoding="utf-8")


# Instantiate settings to be imported in your application
settings = Settings()
