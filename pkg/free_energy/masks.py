# free_energy/masks.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np
import torch

from config.errors import ConfigError, DataValidationError
from network.core import DTYPE
from network.topology import EXTERO, MODALITIES, PROPRIO, NetworkTopology


@dataclass(frozen=True)
class ObservationMask:
    """Máscara booleana (T, D) por modalidade: True = dimensão entra no termo de acurácia."""

    extero: np.ndarray
    proprio: np.ndarray

    def __post_init__(self) -> None:
        if self.extero.ndim != 2 or self.proprio.ndim != 2 or self.extero.shape[0] != self.proprio.shape[0]:
            raise DataValidationError(
                f"Máscara inconsistente: extero {self.extero.shape}, proprio {self.proprio.shape}"
            )

    # --- construtores -------------------------------------------------
    @classmethod
    def for_topology(cls, topology: NetworkTopology, extero, proprio) -> "ObservationMask":
        """Máscara a partir de arrays (T, D) já conferidos contra a topologia."""
        mask = cls(extero=np.asarray(extero, dtype=bool), proprio=np.asarray(proprio, dtype=bool))
        mask.check_dims(topology.modality_dims)
        return mask

    @classmethod
    def full(cls, topology: NetworkTopology, steps: int) -> "ObservationMask":
        return cls.only(topology, steps)

    @classmethod
    def empty(cls, topology: NetworkTopology, steps: int) -> "ObservationMask":
        return cls.only(topology, steps, resolutions=(), proprio=False)

    @classmethod
    def only(
        cls,
        topology: NetworkTopology,
        steps: int,
        resolutions: Optional[Iterable[int]] = None,
        proprio: bool = True,
    ) -> "ObservationMask":
        """Admite só as resoluções informadas (None = todas) e, opcionalmente, a propriocepção."""
        slices = topology.vision.group_slices()
        chosen = tuple(topology.vision.resolutions if resolutions is None else resolutions)
        unknown = [r for r in chosen if r not in slices]
        if unknown:
            raise ConfigError(
                f"Resoluções {unknown} não existem na topologia {list(topology.vision.resolutions)}"
            )
        row = np.zeros(topology.vision.dim, dtype=bool)
        for r in chosen:
            row[slices[r]] = True
        extero = np.tile(row, (steps, 1))
        proprio_mask = np.full((steps, topology.proprio_dim), bool(proprio))
        return cls(extero=extero, proprio=proprio_mask)

    # --- acesso -------------------------------------------------------
    @property
    def steps(self) -> int:
        return int(self.extero.shape[0])

    def __getitem__(self, modality: str) -> np.ndarray:
        if modality == EXTERO:
            return self.extero
        if modality == PROPRIO:
            return self.proprio
        raise KeyError(modality)

    def check_dims(self, dims: Dict[str, int]) -> "ObservationMask":
        """Confere a largura de cada modalidade; erro nomeia a modalidade."""
        for mod in MODALITIES:
            got = int(self[mod].shape[1])
            if got != int(dims[mod]):
                raise DataValidationError(f"Máscara de {mod} com {got} dimensões; esperado {int(dims[mod])}")
        return self

    def slice(self, start: int, stop: int) -> "ObservationMask":
        """Passos locais [start, stop)."""
        return ObservationMask(extero=self.extero[start:stop], proprio=self.proprio[start:stop])

    def as_tensors(self) -> Dict[str, torch.Tensor]:
        return {mod: torch.from_numpy(self[mod].astype(np.float64)).to(DTYPE) for mod in MODALITIES}

    @classmethod
    def concat(cls, rows: Iterable["ObservationMask"]) -> "ObservationMask":
        rows = list(rows)
        return cls(
            extero=np.concatenate([r.extero for r in rows], axis=0),
            proprio=np.concatenate([r.proprio for r in rows], axis=0),
        )
