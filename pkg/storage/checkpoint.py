# storage/checkpoint.py
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import torch
from pydantic import ValidationError

from config.errors import IncompatibleCheckpointError, IntegrityError
from gradients.adaptive import AdaptivePosterior
from network.parameters import Parameters, weight_shapes
from network.topology import MODULES, NetworkTopology
from storage.container import read_container, write_container
from storage.schemas import AdaptiveMeta, ProvenanceIn

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"PVRNNCK\x00"
CHECKPOINT_VERSION = 1
CHECKPOINT_KIND = "checkpoint"


@dataclass(frozen=True)
class Checkpoint:
    topology: NetworkTopology
    params: Parameters
    provenance: ProvenanceIn = field(default_factory=ProvenanceIn)
    adaptive: Optional[AdaptivePosterior] = None
    version: int = CHECKPOINT_VERSION

    def fingerprint(self) -> str:
        return self.params.fingerprint()


def _tensor_map(ck: Checkpoint) -> Dict[str, np.ndarray]:
    out = {f"weight/{k}": v.detach().numpy() for k, v in ck.params.weights.items()}
    out.update({f"bias/{k}": v.detach().numpy() for k, v in ck.params.biases.items()})
    if ck.adaptive is not None:
        for m in MODULES:
            out[f"adaptive/{m}/mu"] = ck.adaptive.mu[m].detach().numpy()
            out[f"adaptive/{m}/sigma"] = ck.adaptive.sigma[m].detach().numpy()
    return out


def save_checkpoint(ck: Checkpoint, path: str | os.PathLike) -> Path:
    meta = {
        "topology": ck.topology.model_dump(mode="json"),
        "provenance": ck.provenance.model_dump(mode="json"),
        "adaptive": None if ck.adaptive is None else AdaptiveMeta(
            sequence_ids=list(ck.adaptive.sequence_ids), first_step=ck.adaptive.first_step
        ).model_dump(),
    }
    out = write_container(path, CHECKPOINT_MAGIC, CHECKPOINT_KIND, ck.version, meta, _tensor_map(ck))
    logger.info("Checkpoint salvo em %s (%s)", out, ck.fingerprint()[:12])
    return out


def load_checkpoint(
    path: str | os.PathLike,
    expected_topology: Optional[NetworkTopology] = None,
) -> Checkpoint:
    meta, tensors = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_KIND, CHECKPOINT_VERSION)
    try:
        topology = NetworkTopology.model_validate(meta["topology"])
        provenance = ProvenanceIn.model_validate(meta.get("provenance") or {})
        adaptive_meta = AdaptiveMeta.model_validate(meta["adaptive"]) if meta.get("adaptive") else None
    except (KeyError, ValidationError) as exc:
        raise IntegrityError(f"{path}: metadados do checkpoint inválidos ({exc})") from exc

    if expected_topology is not None and expected_topology != topology:
        raise IncompatibleCheckpointError(
            f"{path}: topologia do checkpoint difere da configuração atual"
        )

    weights: Dict[str, torch.Tensor] = {}
    for name, shape in weight_shapes(topology).items():
        key = f"weight/{name}"
        if key not in tensors:
            raise IntegrityError(f"{path}: tensor {name} ausente")
        if tuple(tensors[key].shape) != shape:
            raise IntegrityError(f"{path}: tensor {name} com forma {tensors[key].shape}, esperado {shape}")
        weights[name] = torch.from_numpy(tensors[key])
    biases: Dict[str, torch.Tensor] = {}
    for m in MODULES:
        key = f"bias/{m}.bias"
        if key not in tensors or tensors[key].shape != (topology.module(m).d_size,):
            raise IntegrityError(f"{path}: viés {m}.bias ausente ou com forma errada")
        biases[f"{m}.bias"] = torch.from_numpy(tensors[key])

    adaptive = None
    if adaptive_meta is not None:
        moments: Dict[str, Dict[str, torch.Tensor]] = {"mu": {}, "sigma": {}}
        batch = len(adaptive_meta.sequence_ids)
        for m in MODULES:
            for kind in ("mu", "sigma"):
                key = f"adaptive/{m}/{kind}"
                if key not in tensors:
                    raise IntegrityError(f"{path}: variável adaptativa {key} ausente")
                arr = tensors[key]
                if arr.ndim != 3 or arr.shape[0] != batch or arr.shape[2] != topology.module(m).z_size:
                    raise IntegrityError(
                        f"{path}: variável adaptativa {key} com forma {arr.shape}, "
                        f"esperado ({batch}, T, {topology.module(m).z_size})"
                    )
                moments[kind][m] = torch.from_numpy(arr)
        adaptive = AdaptivePosterior(
            mu=moments["mu"],
            sigma=moments["sigma"],
            sequence_ids=tuple(adaptive_meta.sequence_ids),
            first_step=adaptive_meta.first_step,
        )
    return Checkpoint(
        topology=topology,
        params=Parameters(weights=weights, biases=biases),
        provenance=provenance,
        adaptive=adaptive,
    )
