# analytics/protocols.py
# -----------------------------------------------------------------------------
# Protocolos de avaliação:
#   robustness_protocol   - inferência com máscaras de resolução e com/sem
#                           propriocepção; erro medido na maior resolução.
#   interference_protocol - grade de balanço de dados: uma tarefa com contagem
#                           fixa, a outra variando; um modelo por célula e semente.
#   inference_sweep       - grade (iterações × janela) para um checkpoint.
# -----------------------------------------------------------------------------
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from analytics.processing import ErrorTable, error_table, paired_t_test, trial_errors
from config.errors import ConfigError, DataValidationError
from inference.session import InferConfig
from inference.trials import run_trials
from learning.trainer import TrainConfig, fit
from network.topology import NetworkTopology
from simulator.sequences import SequenceBatch
from simulator.tasks import generate
from simulator.world import TASK_R, TASK_W, WorldSpec
from storage.checkpoint import Checkpoint

logger = logging.getLogger(__name__)

MaskCondition = Tuple[Tuple[int, ...], bool]


def condition_label(condition: MaskCondition) -> str:
    resolutions, proprio = condition
    res = "+".join(str(r) for r in resolutions) or "none"
    return f"res={res}|proprio={'on' if proprio else 'off'}"


def resolution_conditions(resolutions: Sequence[int]) -> List[MaskCondition]:
    """Remove resoluções da maior para a menor, cada conjunto com e sem propriocepção."""
    ordered = tuple(sorted(resolutions))
    return [(ordered[:k], proprio) for k in range(len(ordered), 0, -1) for proprio in (True, False)]


def robustness_protocol(
    checkpoints: Mapping[str, Checkpoint],
    test: SequenceBatch,
    conditions: Sequence[MaskCondition],
    infer: InferConfig,
    threads: int = 1,
) -> ErrorTable:
    if not conditions:
        raise ConfigError("Lista de condições vazia", keys=["experiment.resolution_conditions"])
    if not checkpoints:
        raise DataValidationError("Nenhum checkpoint para avaliar")
    frames = []
    for network, ck in checkpoints.items():
        measure = f"res{max(ck.topology.vision.resolutions)}"
        for condition in conditions:
            resolutions, proprio = condition
            config = infer.model_copy(update={"resolutions": tuple(resolutions), "proprio": bool(proprio)})
            trials = run_trials(ck, test, config, network=str(network), threads=threads)
            errors = trial_errors(trials, measure).assign(condition=condition_label(condition))
            logger.info("Robustez rede %s %s: erro %.6f", network, condition_label(condition), errors["error"].mean())
            frames.append(errors)
    return error_table(pd.concat(frames, ignore_index=True))


@dataclass(frozen=True)
class InterferenceResult:
    table: ErrorTable
    tests: pd.DataFrame  # direction, test_task, varied_low, varied_high, t, df, p


def interference_label(fixed_task: str, fixed: int, varied_task: str, varied: int, test_task: str) -> str:
    return f"{fixed_task}={fixed}|{varied_task}={varied}|test={test_task}"


def interference_protocol(
    spec: WorldSpec,
    topology: NetworkTopology,
    train: TrainConfig,
    infer: InferConfig,
    seeds: Sequence[int],
    fixed: int = 9,
    varied: Sequence[int] = (0, 3, 6, 9),
    test_per_task: int = 3,
    data_seed: int = 0,
    threads: int = 1,
) -> InterferenceResult:
    """
    As duas direções (R fixo / W variando e W fixo / R variando) compartilham um
    único conjunto gerado, então todas as células usam o mesmo registro de escala.
    Células repetidas entre direções são treinadas uma vez só.
    """
    if fixed < 1:
        raise ConfigError(f"Contagem fixa deve ser >= 1 (recebido {fixed})", keys=["experiment.interference_fixed"])
    top = max([fixed, *varied])
    pool = generate(spec, {"train": {TASK_R: top, TASK_W: top},
                           "test": {TASK_R: test_per_task, TASK_W: test_per_task}}, data_seed)
    test = pool.select(split="test")

    cache: Dict[Tuple[int, int, int], Checkpoint] = {}
    frames = []
    for fixed_task, varied_task in ((TASK_R, TASK_W), (TASK_W, TASK_R)):
        for count in varied:
            per_task = {fixed_task: fixed, varied_task: int(count)}
            for seed in seeds:
                key = (per_task[TASK_R], per_task[TASK_W], int(seed))
                if key not in cache:
                    data = pool.select(split="train", per_task=per_task)
                    cache[key], _ = fit(data, topology, train.model_copy(update={"seed": int(seed)}))
                trials = run_trials(cache[key], test, infer, network=str(seed), threads=threads)
                errors = trial_errors(trials, "all")
                for task, sub in errors.groupby("task", sort=True):
                    frames.append(sub.assign(
                        condition=interference_label(fixed_task, fixed, varied_task, int(count), task)))
                logger.info("Interferência %s=%d %s=%d semente %s concluída", fixed_task, fixed, varied_task, count, seed)
    table = error_table(pd.concat(frames, ignore_index=True))

    rows = []
    low, high = min(varied), max(varied)
    for fixed_task, varied_task in ((TASK_R, TASK_W), (TASK_W, TASK_R)):
        for test_task in (fixed_task, varied_task):
            a = table.network_errors(interference_label(fixed_task, fixed, varied_task, low, test_task))
            b = table.network_errors(interference_label(fixed_task, fixed, varied_task, high, test_task))
            try:
                result = paired_t_test(a.to_numpy(), b.loc[a.index].to_numpy()).as_dict()
            except DataValidationError as exc:
                logger.warning("Teste pareado %s fixo / teste %s não calculado: %s", fixed_task, test_task, exc)
                result = {"t": np.nan, "df": len(a) - 1, "p": np.nan}
            rows.append({"direction": f"{fixed_task}_fixed", "test_task": test_task,
                         "varied_low": low, "varied_high": high, **result})
    return InterferenceResult(table=table, tests=pd.DataFrame(rows))


def inference_sweep(
    checkpoint: Checkpoint,
    test: SequenceBatch,
    infer: InferConfig,
    iterations: Sequence[int] = (20, 30, 40, 50),
    windows: Sequence[int] = (10, 20, 30, 40, 50),
    threads: int = 1,
) -> pd.DataFrame:
    """Erro de teste (medida "all") por célula (itr, H)."""
    rows = []
    for itr in iterations:
        for H in windows:
            config = infer.model_copy(update={"iterations": int(itr), "window": int(H)})
            errors = trial_errors(run_trials(checkpoint, test, config, threads=threads), "all")
            rows.append({"iterations": int(itr), "window": int(H), "error": float(errors["error"].mean()),
                         "n_trials": len(errors)})
            logger.info("Varredura itr=%d H=%d: erro %.6f", itr, H, rows[-1]["error"])
    return pd.DataFrame(rows)
