# analytics/ablation.py
# -----------------------------------------------------------------------------
# Mapas de contribuição por módulo: as predições de cada tentativa são geradas
# duas vezes a partir das mesmas variáveis inferidas e do mesmo ε gravado,
# uma padrão e outra com o z do módulo substituído em todos os passos
# ("zero" ou "prior_mean"). O mapa é |padrão - ablação| por pixel na maior
# resolução, em tons de cinza, médio sobre as tentativas.
# -----------------------------------------------------------------------------
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import torch

from config.errors import ConfigError, DataValidationError
from inference.trials import TrialLog, TrialSet
from network.core import Override, forward_sequence
from network.topology import EXTERO, MODULES, NetworkTopology
from storage.checkpoint import Checkpoint
from storage.frames import export_frame

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationMap:
    module: Optional[str]
    how: str
    resolution: int
    maps: np.ndarray  # (T, r*r), >= 0
    n_trials: int

    @property
    def energy(self) -> float:
        return float(self.maps.mean())

    def to_frame(self) -> pd.DataFrame:
        T, P = self.maps.shape
        return pd.DataFrame({
            "module": self.module or "none",
            "step": np.repeat(np.arange(1, T + 1), P),
            "pixel": np.tile(np.arange(P), T),
            "value": self.maps.reshape(-1),
        })

    def export(self, out_dir: str | os.PathLike, prefix: str = "", scale: Optional[float] = None) -> List[Path]:
        """Um P5 por passo, com a mesma escala (máximo da figura) em todos."""
        top = float(self.maps.max(initial=0.0)) if scale is None else scale
        name = self.module or "none"
        return [
            export_frame(frame, self.resolution, Path(out_dir) / f"{prefix}ablation_{name}_t{k + 1:03d}.pgm",
                         mode="map", scale=top)
            for k, frame in enumerate(self.maps)
        ]


def _grayscale(extero: np.ndarray, topology: NetworkTopology, resolution: int) -> np.ndarray:
    """(T, D) -> (T, r*r): grupo da resolução com câmeras e canais promediados."""
    sl = topology.vision.group_slices()[resolution]
    block = extero[:, sl]
    return block.reshape(block.shape[0], -1, resolution * resolution).mean(axis=1)


def regenerate(checkpoint: Checkpoint, trial: TrialLog, module: Optional[str] = None,
               how: Override = "zero") -> np.ndarray:
    """Predições exteroceptivas (T, D) refeitas a partir das variáveis finais e do ε gravado."""
    overrides = {module: how} if module is not None else None
    with torch.no_grad():
        traj = forward_sequence(
            checkpoint.params, checkpoint.topology, trial.adaptive, trial.adaptive.steps, "posterior",
            trial.epsilon, overrides=overrides,
        )
    return traj.x_hat[EXTERO][0].numpy()


def ablate(checkpoint: Checkpoint, trials: TrialSet, module: Optional[str], how: Override = "zero") -> AblationMap:
    if module is not None and module not in MODULES:
        raise ConfigError(f"Módulo desconhecido: {module!r}. Use um de {list(MODULES)}")
    if how not in ("zero", "prior_mean"):
        raise ConfigError(f"Modo de ablação inválido: {how!r}. Use 'zero' ou 'prior_mean'.")
    if len(trials) == 0:
        raise DataValidationError("Ablação sem tentativas")
    lengths = {tr.adaptive.steps for tr in trials}
    if len(lengths) != 1:
        raise DataValidationError(f"Tentativas com comprimentos diferentes: {sorted(lengths)}")

    topology = checkpoint.topology
    resolution = max(topology.vision.resolutions)
    total = None
    for tr in sorted(trials, key=lambda item: item.key):
        standard = _grayscale(regenerate(checkpoint, tr), topology, resolution)
        if module is None:
            diff = np.zeros_like(standard)
        else:
            ablated = _grayscale(regenerate(checkpoint, tr, module, how), topology, resolution)
            diff = np.abs(standard - ablated)
        total = diff if total is None else total + diff
    maps = total / len(trials)
    logger.info("Ablação %s (%s): energia média %.6g em %d tentativas", module or "nenhum", how,
                float(maps.mean()), len(trials))
    return AblationMap(module=module, how=how, resolution=resolution, maps=maps, n_trials=len(trials))
