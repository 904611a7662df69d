# learning/trainer.py
# -----------------------------------------------------------------------------
# Aprendizado em lote completo: a cada iteração todas as sequências passam
# pela rede (ε novo, sorteado por id de sequência), a energia livre acumulada
# é derivada e um único passo de RAdam atualiza pesos e variáveis adaptativas.
#
# As sequências são sempre processadas em ordem de id; assim a ordem do
# conjunto de entrada não altera o checkpoint final.
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field

from config.errors import ConfigError, DataValidationError, NumericError
from gradients.adaptive import AdaptivePosterior
from gradients.engine import Objective, backward
from learning.optimizers import OptimizerState, radam_update
from network.core import epsilon_streams, forward_sequence
from network.parameters import DEFAULT_BIAS_STD, init_parameters
from network.topology import MODALITIES, MODULES, NetworkTopology
from simulator.sequences import SequenceBatch
from storage.checkpoint import Checkpoint, save_checkpoint
from storage.schemas import ProvenanceIn

logger = logging.getLogger(__name__)

HISTORY_COLUMNS: List[str] = (
    ["iteration", "total"]
    + [f"accuracy.{mod}" for mod in MODALITIES]
    + [f"complexity.{m}" for m in MODULES]
)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    iterations: int = Field(3000, ge=1)
    lr: float = Field(1e-3, gt=0.0, lt=1.0)
    beta1: float = Field(0.9, gt=0.0, lt=1.0)
    beta2: float = Field(0.999, gt=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    W: float = Field(0.005, ge=0.0)
    seed: int = 0
    checkpoint_every: int = Field(0, ge=0, description="0 desliga os checkpoints intermediários")
    log_every: int = Field(100, ge=1)
    clip_norm: Optional[float] = Field(None, gt=0.0)
    bias_std: float = Field(DEFAULT_BIAS_STD, ge=0.0)


def init_adaptive(topology: NetworkTopology, T: int, sequence_ids: Sequence[int] = (0,)) -> AdaptivePosterior:
    """a^μ = a^σ = 0 em todos os passos: em t = 1 a posterior coincide com a prior (0, 1)."""
    if T < 1:
        raise ConfigError(f"T deve ser >= 1 para inicializar as variáveis adaptativas (recebido {T})")
    return AdaptivePosterior.zeros(topology, T, sequence_ids)


def _observations(dataset: SequenceBatch) -> Dict[str, torch.Tensor]:
    return {mod: torch.from_numpy(np.ascontiguousarray(v)) for mod, v in dataset.observations().items()}


def _prepare(dataset: SequenceBatch, topology: NetworkTopology) -> SequenceBatch:
    if len(dataset) == 0:
        raise DataValidationError("Conjunto de treino vazio")
    dataset.validate_normalized()
    dataset.check_topology(topology)
    if len(set(dataset.ids)) != len(dataset):
        raise DataValidationError("Ids de sequência repetidos no conjunto de treino")
    return dataset.sorted()


def fit(
    dataset: SequenceBatch,
    topology: NetworkTopology,
    config: TrainConfig,
    checkpoint_dir: Optional[Path] = None,
) -> Tuple[Checkpoint, pd.DataFrame]:
    """Treina do zero e devolve o checkpoint final e o histórico de perda (uma linha por iteração)."""
    topology.validate_invariants()
    data = _prepare(dataset, topology)
    ids = data.ids
    obs = _observations(data)

    params = init_parameters(topology, config.seed, config.bias_std)
    adaptive = init_adaptive(topology, data.steps, ids)
    targets: Dict[str, torch.Tensor] = dict(params.weights)
    targets.update(adaptive.tensors())
    state = OptimizerState.zeros(targets, config.beta1, config.beta2, config.eps)

    logger.info(
        "Treino: %d sequências x %d passos, %d parâmetros, %d iterações (semente %d)",
        len(ids), data.steps, params.n_parameters(), config.iterations, config.seed,
    )
    rows: List[Dict[str, float]] = []
    for it in range(1, config.iterations + 1):
        eps = epsilon_streams(topology, ids, data.steps, [config.seed, it])
        grads = backward(Objective.sequence(), params, topology, adaptive, obs, None, eps, config.W)
        if not math.isfinite(grads.value):
            raise NumericError(f"Energia livre não finita na iteração {it}")
        rows.append({"iteration": it, **grads.summary})

        named = grads.groups()
        if config.clip_norm is not None:
            norm = grads.global_norm()
            if norm > config.clip_norm:
                factor = config.clip_norm / norm
                named = {k: g * factor for k, g in named.items()}
        radam_update(state, targets, named, config.lr)

        if it % config.log_every == 0 or it == 1 or it == config.iterations:
            logger.info("iteração %d/%d: F = %.6f", it, config.iterations, grads.value)
        if checkpoint_dir is not None and config.checkpoint_every and it % config.checkpoint_every == 0:
            save_checkpoint(_snapshot(topology, params, adaptive, config, data, it),
                            Path(checkpoint_dir) / f"checkpoint_{it:06d}.pvck")

    params.check_finite()
    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    return _snapshot(topology, params, adaptive, config, data, config.iterations), history


def _snapshot(topology, params, adaptive, config: TrainConfig, data: SequenceBatch, iteration: int) -> Checkpoint:
    return Checkpoint(
        topology=topology,
        params=params.clone(),
        provenance=ProvenanceIn(
            seed=config.seed,
            iterations=iteration,
            dataset_hash=data.fingerprint(),
            config=config.model_dump(mode="json"),
        ),
        adaptive=adaptive.detached(),
    )


def reconstruction_error(checkpoint: Checkpoint, dataset: SequenceBatch) -> pd.DataFrame:
    """
    Erro quadrático médio por dimensão da reconstrução pela média da posterior
    (z = μ^q), por sequência de treino. Colunas: sequence_id, extero, proprio, all.
    """
    if checkpoint.adaptive is None:
        raise DataValidationError("Checkpoint sem variáveis adaptativas de treino")
    data = _prepare(dataset, checkpoint.topology)
    known = {sid: row for row, sid in enumerate(checkpoint.adaptive.sequence_ids)}
    missing = [sid for sid in data.ids if sid not in known]
    if missing:
        raise DataValidationError(f"Sequências {missing} não fazem parte do treino deste checkpoint")
    adaptive = checkpoint.adaptive.select([known[sid] for sid in data.ids])
    obs = _observations(data)
    with torch.no_grad():
        traj = forward_sequence(checkpoint.params, checkpoint.topology, adaptive, data.steps, "posterior",
                                None, deterministic=True)
    sq = {mod: ((obs[mod] - traj.x_hat[mod]) ** 2) for mod in MODALITIES}
    pooled = torch.cat([sq[mod] for mod in MODALITIES], dim=-1)
    return pd.DataFrame({
        "sequence_id": data.ids,
        **{mod: sq[mod].mean(dim=(1, 2)).numpy() for mod in MODALITIES},
        "all": pooled.mean(dim=(1, 2)).numpy(),
    })


def save_history(history: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    history.to_csv(path, index=False)
    return path
