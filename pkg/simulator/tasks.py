# simulator/tasks.py
# -----------------------------------------------------------------------------
# Geração determinística das duas tarefas sintéticas.
#
#   R (reposicionar): alcançar -> segurar (carga entra aos poucos) -> levantar
#   W (limpar):       alcançar -> limpar (oscilação)               -> soltar
#
# Cada sequência usa o gerador default_rng([semente, id da sequência]); as três
# condições de altura se alternam dentro de cada tarefa. A propriocepção
# (ângulos + torques) é normalizada com um único registro, ajustado só no split
# de treino (ou no conjunto todo quando não há treino); valores de outros splits
# fora da faixa saturam em ±0.9.
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
from typing import Dict, List, Mapping, Tuple, Union

import numpy as np

from config.errors import ConfigError, DataValidationError
from simulator.scaling import LIMIT, normalize
from simulator.sequences import SequenceBatch, TaskSequence
from simulator.world import (
    TASK_R,
    TASKS,
    ArmPose,
    SceneState,
    WorldSpec,
    inverse_kinematics,
    render_views,
    torque_surrogate,
)

logger = logging.getLogger(__name__)

CANONICAL_BOUNDARIES = (0.3, 0.7)
MIN_PHASE_STEPS = 3
BAR_WIDTH = 0.05
STRIP_WIDTH = 0.03

Counts = Union[Mapping[str, int], Mapping[str, Mapping[str, int]]]


def _ease(u: float) -> float:
    return 0.5 * (1.0 - np.cos(np.pi * u))


def phase_schedule(steps: int, phase_jitter: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Fase (0, 1, 2) e progresso em (0, 1] de cada passo. As fronteiras canônicas
    são deslocadas pelo jitter (time-warp), mantendo >= 3 passos por fase.
    """
    if steps < 3 * MIN_PHASE_STEPS:
        raise ConfigError(f"T={steps} é curto demais para três fases (mínimo {3 * MIN_PHASE_STEPS})")
    shift = phase_jitter * rng.standard_normal(2)
    n1 = int(round((CANONICAL_BOUNDARIES[0] + shift[0]) * steps))
    n1 = min(max(n1, MIN_PHASE_STEPS), steps - 2 * MIN_PHASE_STEPS)
    n2 = int(round((CANONICAL_BOUNDARIES[1] + shift[1]) * steps))
    n2 = min(max(n2, n1 + MIN_PHASE_STEPS), steps - MIN_PHASE_STEPS)

    phase = np.empty(steps, dtype=np.int64)
    progress = np.empty(steps, dtype=np.float64)
    for k in range(steps):
        if k < n1:
            phase[k], progress[k] = 0, (k + 1) / n1
        elif k < n2:
            phase[k], progress[k] = 1, (k - n1 + 1) / (n2 - n1)
        else:
            phase[k], progress[k] = 2, (k - n2 + 1) / (steps - n2)
    return phase, progress


def _simulate(spec: WorldSpec, task: str, condition: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Série bruta (T, 4) de propriocepção e visão já em [-0.9, 0.9]."""
    jit = spec.jitter(task)
    phase, progress = phase_schedule(spec.steps, jit.phase, rng)
    start = np.asarray(spec.start_effector) + jit.pose * rng.standard_normal(2)
    object_shift = jit.pose * rng.standard_normal()
    gain = 1.0 + jit.amplitude * rng.standard_normal()
    cycles = spec.wipe_cycles * (1.0 + jit.phase * rng.standard_normal())
    height = spec.heights[condition]

    proprio = np.empty((spec.steps, 4))
    vision = np.empty((spec.steps, spec.vision_dim))

    if task == TASK_R:
        anchor = np.array([spec.bar_center[0] + object_shift, spec.bar_center[1] + height])
        half = spec.bar_half_length
    else:
        anchor = np.array([spec.strip_center[0] + object_shift, spec.strip_center[1] + height])
        half = spec.strip_half_length
    wipe_end = anchor + np.array([spec.wipe_amplitude * gain * np.sin(2 * np.pi * cycles), 0.0])

    for k in range(spec.steps):
        u = float(progress[k])
        carried = 0.0
        obj_center = anchor
        if phase[k] == 0:
            target = start + _ease(u) * (anchor - start)
        elif task == TASK_R and phase[k] == 1:
            target = anchor
            carried = spec.load * u
        elif task == TASK_R:
            target = anchor + np.array([0.0, spec.lift * gain * _ease(u)])
            obj_center = target
            carried = spec.load
        elif phase[k] == 1:
            target = anchor + np.array([spec.wipe_amplitude * gain * np.sin(2 * np.pi * cycles * u), 0.0])
        else:
            target = wipe_end + _ease(u) * (start - wipe_end)

        pose: ArmPose = inverse_kinematics(target, spec)
        tau1, tau2 = torque_surrogate(pose, spec, carried)
        proprio[k] = (pose.q1, pose.q2, tau1, tau2)
        scene = SceneState(
            kind=task,
            start=(obj_center[0] - half, obj_center[1]),
            stop=(obj_center[0] + half, obj_center[1]),
            width=BAR_WIDTH if task == TASK_R else STRIP_WIDTH,
        )
        vision[k] = render_views(pose, scene, spec)
    return proprio, vision


def _split_counts(counts: Counts) -> Dict[str, Dict[str, int]]:
    if counts and all(isinstance(v, int) for v in counts.values()):
        counts = {"train": dict(counts)}
    out: Dict[str, Dict[str, int]] = {}
    for split, per_task in counts.items():
        unknown = set(per_task) - set(TASKS)
        if unknown:
            raise ConfigError(f"Tarefas desconhecidas {sorted(unknown)}; use {list(TASKS)}")
        for task, n in per_task.items():
            if int(n) < 0:
                raise DataValidationError(f"Contagem negativa para {split}/{task}: {n}")
        out[str(split)] = {task: int(per_task.get(task, 0)) for task in TASKS}
    return out


def generate(spec: WorldSpec, counts: Counts, seed: int) -> SequenceBatch:
    """
    Gera um conjunto com ids sequenciais (split na ordem dada, depois R, depois W).

    `counts` é {tarefa: n} (split "train") ou {split: {tarefa: n}}.
    """
    plan = _split_counts(counts)
    raws: List[Tuple[int, str, int, str, np.ndarray, np.ndarray]] = []
    next_id = 0
    for split, per_task in plan.items():
        for task in TASKS:
            for i in range(per_task[task]):
                condition = i % len(spec.heights)
                rng = np.random.default_rng([int(seed), next_id])
                proprio, vision = _simulate(spec, task, condition, rng)
                raws.append((next_id, task, condition, split, proprio, vision))
                next_id += 1

    if not raws:
        return SequenceBatch(sequences=(), resolutions=spec.resolutions, spec_hash=spec.spec_hash(), seed=seed)

    stacked = np.stack([r[4] for r in raws])
    fit_rows = [i for i, r in enumerate(raws) if r[3] == "train"] or list(range(len(raws)))
    _, record = normalize(stacked[fit_rows])
    normalized, _ = normalize(stacked, record)
    outside = np.abs(normalized) > LIMIT
    if outside.any():
        logger.warning(
            "%d valor(es) de propriocepção fora da faixa do treino foram saturados em ±%.1f",
            int(outside.sum()), LIMIT,
        )
        normalized = np.clip(normalized, -LIMIT, LIMIT)
    sequences = tuple(
        TaskSequence(sequence_id=sid, task=task, condition=cond, split=split, proprio=normalized[i], vision=vision)
        for i, (sid, task, cond, split, _, vision) in enumerate(raws)
    )
    batch = SequenceBatch(
        sequences=sequences,
        resolutions=spec.resolutions,
        spec_hash=spec.spec_hash(),
        seed=seed,
        scaling=record,
    )
    logger.info("Geradas %d sequências de %d passos (%s)", len(batch), spec.steps,
                ", ".join(f"{s}: {sum(c.values())}" for s, c in plan.items()))
    return batch
