# config/run_config.py
# -----------------------------------------------------------------------------
# Documento de configuração de um run (YAML). Seções de topo:
#   world, topology, train, infer, experiment
# Todo campo é opcional; os padrões são os da escala de bancada. Chaves
# desconhecidas são rejeitadas e todos os erros saem numa única ConfigError.
# -----------------------------------------------------------------------------
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config.errors import ConfigError
from inference.session import InferConfig
from learning.trainer import TrainConfig
from network.topology import NetworkTopology
from simulator.world import WorldSpec

logger = logging.getLogger(__name__)


class MaskConditionSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    resolutions: Tuple[int, ...]
    proprio: bool = True


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    data_seed: int = 0
    train_per_task: int = Field(9, ge=1)
    test_per_task: int = Field(3, ge=1)
    resolution_conditions: Optional[Tuple[MaskConditionSpec, ...]] = Field(
        None, description="None = todas as resoluções removidas da maior para a menor, com e sem propriocepção"
    )
    interference_fixed: int = Field(9, ge=1)
    interference_varied: Tuple[int, ...] = (0, 3, 6, 9)
    sweep_iterations: Tuple[int, ...] = (20, 30, 40, 50)
    sweep_windows: Tuple[int, ...] = (10, 20, 30, 40, 50)

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if not self.seeds:
            raise ValueError("seeds não pode ser vazio")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds repetidas: {list(self.seeds)}")
        if any(c < 0 for c in self.interference_varied) or not self.interference_varied:
            raise ValueError(f"interference_varied inválido: {list(self.interference_varied)}")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    world: WorldSpec = WorldSpec()
    topology: NetworkTopology = NetworkTopology()
    train: TrainConfig = TrainConfig()
    infer: InferConfig = InferConfig()
    experiment: ExperimentConfig = ExperimentConfig()

    @model_validator(mode="after")
    def _check_sections(self) -> "RunConfig":
        vision = self.topology.vision
        if vision.cameras * vision.channels != 1:
            return self  # o simulador só gera câmera única em tons de cinza
        if tuple(self.world.resolutions) != tuple(self.topology.vision.resolutions):
            raise ValueError(
                f"world.resolutions {list(self.world.resolutions)} difere de "
                f"topology.vision.resolutions {list(self.topology.vision.resolutions)}"
            )
        if self.world.vision_dim != self.topology.vision.dim or self.world.proprio_dim != self.topology.proprio_dim:
            raise ValueError("dimensões do mundo simulado não batem com a topologia (use câmera única em tons de cinza)")
        return self

    @property
    def paper_scale(self) -> bool:
        return self.topology.vision.dim > NetworkTopology.desk().vision.dim * 10

    def with_seed(self, seed: int) -> "RunConfig":
        return self.model_copy(update={
            "train": self.train.model_copy(update={"seed": int(seed)}),
            "infer": self.infer.model_copy(update={"seed": int(seed)}),
        })

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json", exclude_none=True), sort_keys=False, allow_unicode=True)


def _error_keys(exc: ValidationError) -> list[str]:
    keys = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<documento>"
        keys.append(f"{loc}: {err['msg']}")
    return keys


def parse_run_config(document: Dict[str, Any]) -> RunConfig:
    """Valida o documento inteiro; todas as chaves problemáticas numa única ConfigError."""
    try:
        config = RunConfig.model_validate(document)
    except ValidationError as exc:
        keys = _error_keys(exc)
        raise ConfigError(f"Configuração inválida ({len(keys)} problema(s))", keys=keys) from exc
    try:
        config.topology.validate_invariants()
    except ConfigError as exc:
        raise ConfigError(str(exc), keys=["topology"]) from exc
    if config.paper_scale:
        logger.warning("Configuração em escala completa: aceita, mas lenta demais para a CI")
    return config


def load_run_config(path: Optional[str | os.PathLike]) -> RunConfig:
    if path is None:
        return parse_run_config({})
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Arquivo de configuração não encontrado: {path}", keys=["--config"])
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML inválido ({exc})") from exc
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: o documento deve ser um mapeamento de seções (recebido {type(document).__name__})")
    return parse_run_config(document)


def dump_run_config(config: RunConfig, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.to_yaml(), encoding="utf-8")
    return path
