from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class TensorEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    shape: Tuple[int, ...]
    offset: int = Field(..., ge=0, description="Posição no payload, em número de float64")
    count: int = Field(..., ge=0)


class ContainerHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: str = Field(..., examples=["checkpoint"])
    version: int
    payload_count: int = Field(..., ge=0)
    meta: Dict[str, Any] = Field(default_factory=dict)
    tensors: List[TensorEntry] = Field(default_factory=list)


class ProvenanceIn(BaseModel):
    """Proveniência do treino gravada no checkpoint."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    iterations: int = 0
    dataset_hash: str = ""
    config: Dict[str, Any] = Field(default_factory=dict)


class AdaptiveMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sequence_ids: List[int]
    first_step: int = 1


class SequenceMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sequence_id: int
    task: str
    condition: int
    split: str


class DatasetMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")

    resolutions: Tuple[int, ...]
    spec_hash: str
    seed: int
    scaling: Optional[Dict[str, List[float]]] = None
    sequences: List[SequenceMeta] = Field(default_factory=list)
