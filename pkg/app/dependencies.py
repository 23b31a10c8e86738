from functools import lru_cache
from pathlib import Path
from typing import Optional

from app.schemas.label_schemas import LabelSpace
from app.services.label_service import build_default_space
from settings.config import Settings, settings


def get_settings() -> Settings:
    """Return application settings."""
    return settings


@lru_cache(maxsize=4)
def _cached_space(path: str) -> LabelSpace:
    return build_default_space(Path(path))


def get_label_space(path: Optional[Path] = None) -> LabelSpace:
    """Unified label space, loaded once per table path."""
    return _cached_space(str(path or get_settings().label_table))


def get_device(device: Optional[str] = None) -> str:
    return device or get_settings().device
