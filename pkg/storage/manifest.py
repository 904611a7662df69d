# storage/manifest.py
from __future__ import annotations

import json
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable

from pydantic import BaseModel, ConfigDict, Field

from storage.container import file_sha256

MANIFEST_NAME = "manifest.json"


class RunManifest(BaseModel):
    """Registro de um run: comando, configuração efetiva e hashes de entradas e saídas."""

    model_config = ConfigDict(extra="forbid")

    command: str
    seed: int
    config_yaml: str = ""
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    notes: Dict[str, str] = Field(default_factory=dict)

    def add_inputs(self, paths: Iterable[str | os.PathLike]) -> "RunManifest":
        for p in paths:
            self.inputs[str(p)] = file_sha256(p)
        return self

    def collect_outputs(self, run_dir: str | os.PathLike) -> "RunManifest":
        """Hash de todo arquivo do diretório (exceto o próprio manifesto), em ordem de caminho."""
        root = Path(run_dir)
        for p in sorted(root.rglob("*")):
            if p.is_file() and p.name != MANIFEST_NAME:
                self.outputs[p.relative_to(root).as_posix()] = file_sha256(p)
        return self


def write_manifest(run_dir: str | os.PathLike, manifest: RunManifest) -> Path:
    path = Path(run_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")
    return path


def read_manifest(run_dir: str | os.PathLike) -> RunManifest:
    return RunManifest.model_validate_json((Path(run_dir) / MANIFEST_NAME).read_text(encoding="utf-8"))
