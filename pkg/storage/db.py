# storage/db.py
from __future__ import annotations

import logging
import os
import threading
from pathlib import Path
from typing import Dict

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

logger = logging.getLogger(__name__)

Base = declarative_base()

# Um engine por arquivo, reaproveitado entre gravação e leitura do mesmo run
_ENGINES: Dict[str, Engine] = {}
_LOCK = threading.Lock()


def _engine(url: str) -> Engine:
    with _LOCK:
        engine = _ENGINES.get(url)
        if engine is None:
            engine = create_engine(url, connect_args={"check_same_thread": False})
            Base.metadata.create_all(bind=engine)
            _ENGINES[url] = engine
        return engine


def session_factory(path: str | os.PathLike) -> sessionmaker:
    """Banco SQLite de tentativas em `path` (criado se não existir)."""
    path = Path(path).resolve()
    path.parent.mkdir(parents=True, exist_ok=True)
    return sessionmaker(autocommit=False, autoflush=False, bind=_engine(f"sqlite:///{path}"))


def open_engines() -> int:
    with _LOCK:
        return len(_ENGINES)


def dispose_engines() -> int:
    """Fecha as conexões de todos os bancos abertos; devolve quantos foram fechados."""
    with _LOCK:
        engines = list(_ENGINES.values())
        _ENGINES.clear()
    for engine in engines:
        engine.dispose()
    if engines:
        logger.debug("%d engine(s) SQLite descartado(s)", len(engines))
    return len(engines)
