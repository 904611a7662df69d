# simulator/sequences.py
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from config.errors import DataValidationError
from network.topology import EXTERO, PROPRIO, NetworkTopology
from simulator.scaling import LIMIT, ScalingRecord

TOLERANCE = 1e-9


@dataclass(frozen=True)
class TaskSequence:
    sequence_id: int
    task: str
    condition: int
    split: str
    proprio: np.ndarray  # (T, P)
    vision: np.ndarray  # (T, V), resoluções concatenadas

    @property
    def steps(self) -> int:
        return int(self.proprio.shape[0])


@dataclass(frozen=True)
class SequenceBatch:
    """Conjunto de sequências normalizadas mais a proveniência (hash do WorldSpec e semente)."""

    sequences: Tuple[TaskSequence, ...]
    resolutions: Tuple[int, ...]
    spec_hash: str = ""
    seed: int = 0
    scaling: Optional[ScalingRecord] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def ids(self) -> List[int]:
        return [s.sequence_id for s in self.sequences]

    @property
    def steps(self) -> int:
        if not self.sequences:
            raise DataValidationError("Conjunto de sequências vazio")
        return self.sequences[0].steps

    @property
    def dims(self) -> Dict[str, int]:
        first = self.sequences[0]
        return {EXTERO: int(first.vision.shape[1]), PROPRIO: int(first.proprio.shape[1])}

    def by_id(self, sequence_id: int) -> TaskSequence:
        for s in self.sequences:
            if s.sequence_id == sequence_id:
                return s
        raise DataValidationError(f"Sequência {sequence_id} não existe no conjunto")

    def select(
        self,
        *,
        task: Optional[str] = None,
        split: Optional[str] = None,
        condition: Optional[int] = None,
        ids: Optional[Iterable[int]] = None,
        per_task: Optional[Dict[str, int]] = None,
    ) -> "SequenceBatch":
        """
        Subconjunto filtrado. `per_task` mantém as primeiras n sequências de cada tarefa
        (a geração alterna as condições, então os primeiros 3k ficam balanceados).
        """
        wanted = set(ids) if ids is not None else None
        chosen = [
            s for s in self.sequences
            if (task is None or s.task == task)
            and (split is None or s.split == split)
            and (condition is None or s.condition == condition)
            and (wanted is None or s.sequence_id in wanted)
        ]
        if per_task is not None:
            kept: List[TaskSequence] = []
            seen: Dict[str, int] = {}
            for s in chosen:
                if seen.get(s.task, 0) < per_task.get(s.task, 0):
                    kept.append(s)
                    seen[s.task] = seen.get(s.task, 0) + 1
            chosen = kept
        return replace(self, sequences=tuple(chosen))

    def sorted(self) -> "SequenceBatch":
        return replace(self, sequences=tuple(sorted(self.sequences, key=lambda s: s.sequence_id)))

    def observations(self) -> Dict[str, np.ndarray]:
        """Arrays (B, T, D) na ordem atual das sequências."""
        if not self.sequences:
            raise DataValidationError("Conjunto de sequências vazio")
        return {
            EXTERO: np.stack([s.vision for s in self.sequences]),
            PROPRIO: np.stack([s.proprio for s in self.sequences]),
        }

    def validate_normalized(self) -> None:
        if not self.sequences:
            raise DataValidationError("Conjunto de sequências vazio")
        shapes = {(s.vision.shape, s.proprio.shape) for s in self.sequences}
        if len(shapes) != 1:
            raise DataValidationError(f"Sequências com formatos diferentes: {sorted(shapes)}")
        for s in self.sequences:
            for label, arr in (("visão", s.vision), ("propriocepção", s.proprio)):
                if not np.all(np.isfinite(arr)):
                    raise DataValidationError(f"Sequência {s.sequence_id}: {label} com valores não finitos")
                peak = float(np.abs(arr).max())
                if peak > LIMIT + TOLERANCE:
                    raise DataValidationError(
                        f"Sequência {s.sequence_id}: {label} fora de [-0.9, 0.9] (|x| máx = {peak:.6f})"
                    )

    def check_topology(self, topology: NetworkTopology) -> None:
        expected = topology.modality_dims
        got = self.dims
        if got != expected:
            raise DataValidationError(f"Dimensões dos dados {got} não batem com a topologia {expected}")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.spec_hash.encode())
        h.update(str(self.seed).encode())
        for s in self.sequences:
            h.update(f"{s.sequence_id}:{s.task}:{s.condition}:{s.split}".encode())
            h.update(np.ascontiguousarray(s.proprio, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(s.vision, dtype="<f8").tobytes())
        return h.hexdigest()

    def proprio_frame(self) -> pd.DataFrame:
        """Formato longo para inspeção: uma linha por (sequência, passo)."""
        rows = []
        for s in self.sequences:
            for t in range(s.steps):
                row = {"sequence_id": s.sequence_id, "task": s.task, "condition": s.condition,
                       "split": s.split, "step": t + 1}
                row.update({f"proprio_{k}": float(v) for k, v in enumerate(s.proprio[t])})
                rows.append(row)
        return pd.DataFrame(rows)

    def summary(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            [{"split": s.split, "task": s.task, "condition": s.condition} for s in self.sequences]
        )
        if frame.empty:
            return pd.DataFrame(columns=["split", "task", "condition", "count"])
        return frame.groupby(["split", "task", "condition"], sort=True).size().reset_index(name="count")

