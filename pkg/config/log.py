# config/log.py
import logging

from config.settings import LOG_LEVEL

_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


def configure_logging(level: str | int | None = None) -> None:
    """Configura o logging raiz uma única vez (chamadas repetidas só ajustam o nível)."""
    level = level or LOG_LEVEL
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_FORMAT))
        root.addHandler(handler)
    root.setLevel(level if isinstance(level, int) else str(level).upper())
