# inference/trials.py
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from config.errors import DataValidationError
from gradients.adaptive import AdaptivePosterior
from free_energy.masks import ObservationMask
from inference.session import InferConfig, StepResult, open_session
from network.topology import EXTERO, MODULES, PROPRIO
from simulator.sequences import SequenceBatch, TaskSequence
from storage.checkpoint import Checkpoint
from storage.frames import export_frame

logger = logging.getLogger(__name__)

LATENT_COLUMNS = [
    "network", "sequence_id", "task", "condition", "trial", "step", "module", "latent",
    "prior_mu", "prior_sigma", "post_mu", "post_sigma",
]
ERROR_COLUMNS = ["network", "sequence_id", "task", "condition", "trial", "step", "measure", "error"]


@dataclass
class TrialLog:
    """Uma execução de inferência sobre uma sequência inteira."""

    network: str
    sequence_id: int
    task: str
    condition: int
    trial: int
    seed: Tuple[int, ...]
    steps: List[StepResult]
    adaptive: AdaptivePosterior
    epsilon: Dict[str, torch.Tensor]

    @property
    def key(self) -> Tuple[str, int, int]:
        return (self.network, self.sequence_id, self.trial)

    def prior_sigma(self, module: str) -> np.ndarray:
        """σ da prior online, (T, z)."""
        return np.stack([s.prior_sigma[module] for s in self.steps])

    def predictions(self, modality: str) -> np.ndarray:
        return np.stack([s.x_hat[modality] for s in self.steps])

    def errors(self, measure: str) -> np.ndarray:
        return np.array([s.errors[measure] for s in self.steps])


@dataclass
class TrialSet:
    trials: List[TrialLog] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def extend(self, other: Iterable[TrialLog]) -> "TrialSet":
        self.trials = sorted([*self.trials, *other], key=lambda tr: tr.key)
        return self

    def filter(self, *, task: Optional[str] = None, network: Optional[str] = None,
               sequence_ids: Optional[Iterable[int]] = None) -> "TrialSet":
        wanted = set(sequence_ids) if sequence_ids is not None else None
        return TrialSet([
            tr for tr in self.trials
            if (task is None or tr.task == task)
            and (network is None or tr.network == network)
            and (wanted is None or tr.sequence_id in wanted)
        ])

    def latent_frame(self) -> pd.DataFrame:
        rows = []
        for tr in self.trials:
            for s in tr.steps:
                for m in MODULES:
                    for i in range(len(s.prior_mu[m])):
                        rows.append((tr.network, tr.sequence_id, tr.task, tr.condition, tr.trial, s.step, m, i,
                                     float(s.prior_mu[m][i]), float(s.prior_sigma[m][i]),
                                     float(s.post_mu[m][i]), float(s.post_sigma[m][i])))
        return pd.DataFrame(rows, columns=LATENT_COLUMNS)

    def error_frame(self) -> pd.DataFrame:
        rows = []
        for tr in self.trials:
            for s in tr.steps:
                for measure, value in s.errors.items():
                    rows.append((tr.network, tr.sequence_id, tr.task, tr.condition, tr.trial, s.step, measure, value))
        return pd.DataFrame(rows, columns=ERROR_COLUMNS)


def run_trial(
    checkpoint: Checkpoint,
    sequence: TaskSequence,
    config: InferConfig,
    trial: int,
    network: str = "0",
    mask: Optional[ObservationMask] = None,
) -> TrialLog:
    """
    Inferência passo a passo sobre a sequência; `mask` (T, D) opcional substitui
    a política da configuração em cada passo.
    """
    if mask is not None and mask.steps != sequence.steps:
        raise DataValidationError(f"Máscara com {mask.steps} passos para uma sequência de {sequence.steps}")
    if mask is not None:
        mask.check_dims(checkpoint.topology.modality_dims)
    seed = (int(sequence.sequence_id), int(trial))
    session = open_session(checkpoint, config, seed)
    results = []
    for k in range(sequence.steps):
        obs = {EXTERO: sequence.vision[k], PROPRIO: sequence.proprio[k]}
        results.append(session.step(obs, mask.slice(k, k + 1) if mask is not None else None))
    logger.debug("Tentativa %s/%s/%s concluída: erro médio %.6f", network, sequence.sequence_id, trial,
                 float(np.mean([r.errors["all"] for r in results])))
    return TrialLog(
        network=network,
        sequence_id=sequence.sequence_id,
        task=sequence.task,
        condition=sequence.condition,
        trial=int(trial),
        seed=(config.seed, *seed),
        steps=results,
        adaptive=session.final_adaptive(),
        epsilon=session.epsilon_record(),
    )


def run_trials(
    checkpoint: Checkpoint,
    sequences: SequenceBatch,
    config: InferConfig,
    network: str = "0",
    threads: int = 1,
    mask: Optional[ObservationMask] = None,
) -> TrialSet:
    """`trials_per_sequence` tentativas por sequência; resultado ordenado por (rede, sequência, tentativa)."""
    sequences.check_topology(checkpoint.topology)
    jobs = [(seq, trial) for seq in sequences.sequences for trial in range(config.trials_per_sequence)]
    logger.info("Inferência: %d tentativas (rede %s, H=%d, itr=%d, threads=%d)",
                len(jobs), network, config.window, config.iterations, threads)

    def _one(job):
        seq, trial = job
        return run_trial(checkpoint, seq, config, trial, network, mask)

    if threads <= 1:
        logs = [_one(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            logs = list(pool.map(_one, jobs))
    return TrialSet().extend(logs)


def export_trial_frames(
    trial: TrialLog,
    resolutions: Sequence[int],
    out_dir: str | os.PathLike,
    steps: Optional[Iterable[int]] = None,
    channels: int = 1,
) -> List[Path]:
    """
    Quadros previstos de cada resolução, um arquivo P5 por passo e por plano.

    Cada grupo de resolução é (câmeras, canais, r, r) achatado; com mais de um
    plano o nome ganha o sufixo `_cam{c}_ch{k}`.
    """
    out_dir = Path(out_dir)
    wanted = set(steps) if steps is not None else None
    written = []
    for s in trial.steps:
        if wanted is not None and s.step not in wanted:
            continue
        for r in resolutions:
            name = f"net{trial.network}_seq{trial.sequence_id:04d}_trial{trial.trial}_t{s.step:03d}_r{r}"
            planes = np.asarray(s.views[r], dtype=np.float64).reshape(-1, r * r)
            if planes.shape[0] % channels:
                raise DataValidationError(
                    f"Resolução {r}: {planes.shape[0]} planos não se dividem em {channels} canais"
                )
            for k, plane in enumerate(planes):
                suffix = "" if len(planes) == 1 else f"_cam{k // channels}_ch{k % channels}"
                written.append(export_frame(plane, r, out_dir / f"{name}{suffix}.pgm", mode="signal"))
    return written
