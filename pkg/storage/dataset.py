# storage/dataset.py
from __future__ import annotations

import os
from pathlib import Path

from pydantic import ValidationError

from config.errors import IntegrityError
from simulator.scaling import ScalingRecord
from simulator.sequences import SequenceBatch, TaskSequence
from storage.container import read_container, write_container
from storage.schemas import DatasetMeta, SequenceMeta

DATASET_MAGIC = b"PVRNNDS\x00"
DATASET_VERSION = 1
DATASET_KIND = "dataset"


def save_dataset(batch: SequenceBatch, path: str | os.PathLike) -> Path:
    """Cabeçalho com hash do WorldSpec, semente, formas e escala; corpo passo a passo (linha a linha)."""
    meta = DatasetMeta(
        resolutions=batch.resolutions,
        spec_hash=batch.spec_hash,
        seed=batch.seed,
        scaling=batch.scaling.as_dict() if batch.scaling is not None else None,
        sequences=[
            SequenceMeta(sequence_id=s.sequence_id, task=s.task, condition=s.condition, split=s.split)
            for s in batch.sequences
        ],
    )
    tensors = {}
    for s in batch.sequences:
        tensors[f"seq/{s.sequence_id}/proprio"] = s.proprio
        tensors[f"seq/{s.sequence_id}/vision"] = s.vision
    return write_container(path, DATASET_MAGIC, DATASET_KIND, DATASET_VERSION, meta.model_dump(mode="json"), tensors)


def load_dataset(path: str | os.PathLike) -> SequenceBatch:
    raw_meta, tensors = read_container(path, DATASET_MAGIC, DATASET_KIND, DATASET_VERSION)
    try:
        meta = DatasetMeta.model_validate(raw_meta)
    except ValidationError as exc:
        raise IntegrityError(f"{path}: metadados do conjunto inválidos ({exc})") from exc
    sequences = []
    for s in meta.sequences:
        try:
            proprio = tensors[f"seq/{s.sequence_id}/proprio"]
            vision = tensors[f"seq/{s.sequence_id}/vision"]
        except KeyError as exc:
            raise IntegrityError(f"{path}: sequência {s.sequence_id} sem o tensor {exc}") from None
        sequences.append(TaskSequence(
            sequence_id=s.sequence_id, task=s.task, condition=s.condition, split=s.split,
            proprio=proprio, vision=vision,
        ))
    return SequenceBatch(
        sequences=tuple(sequences),
        resolutions=tuple(meta.resolutions),
        spec_hash=meta.spec_hash,
        seed=meta.seed,
        scaling=ScalingRecord.from_dict(meta.scaling) if meta.scaling else None,
    )


def export_dataset_csv(batch: SequenceBatch, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    batch.proprio_frame().to_csv(path, index=False)
    return path
