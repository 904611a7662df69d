# network/topology.py
# -----------------------------------------------------------------------------
# Topologia da rede hierárquica de quatro módulos.
#
#   Exe (executivo) ──> Mul (associativo multimodal) ──> Ext (exteroceptivo)
#                                                   └──> Pro (proprioceptivo)
#
# Os nomes curtos dos módulos aparecem nas colunas dos CSVs
# (complexity.Exe, complexity.Mul, ...), por isso ficam fixos aqui.
# -----------------------------------------------------------------------------

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config.errors import ConfigError

EXECUTIVE = "Exe"
ASSOCIATIVE = "Mul"
EXTEROCEPTIVE = "Ext"
PROPRIOCEPTIVE = "Pro"

# Ordem top-down: todo módulo aparece depois do seu módulo superior.
MODULES: Tuple[str, ...] = (EXECUTIVE, ASSOCIATIVE, EXTEROCEPTIVE, PROPRIOCEPTIVE)
PARENT: Dict[str, Optional[str]] = {
    EXECUTIVE: None,
    ASSOCIATIVE: EXECUTIVE,
    EXTEROCEPTIVE: ASSOCIATIVE,
    PROPRIOCEPTIVE: ASSOCIATIVE,
}

EXTERO = "extero"
PROPRIO = "proprio"
MODALITIES: Tuple[str, ...] = (EXTERO, PROPRIO)
# módulo perceptivo que alimenta cada cabeça de decodificação
HEAD_MODULE: Dict[str, str] = {EXTERO: EXTEROCEPTIVE, PROPRIO: PROPRIOCEPTIVE}


class ModuleSpec(BaseModel):
    """Tamanhos e constantes de tempo de um módulo recorrente."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    d_size: int = Field(30, description="Unidades determinísticas (N_*d)")
    z_size: int = Field(30, description="Unidades latentes (N_*z)")
    tau: Tuple[float, float] = Field((2.0, 4.0), description="Par (menor, maior) de τ")


class VisionSpec(BaseModel):
    """Grupos de resolução da visão. Cada grupo tem cameras*channels*lado² dimensões."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    resolutions: Tuple[int, ...] = (8, 16)
    channels: int = 1
    cameras: int = 1

    def group_dim(self, resolution: int) -> int:
        return self.cameras * self.channels * resolution * resolution

    @property
    def dim(self) -> int:
        return sum(self.group_dim(r) for r in self.resolutions)

    def group_slices(self) -> Dict[int, slice]:
        """Fatias de cada resolução dentro do vetor exteroceptivo concatenado."""
        out: Dict[int, slice] = {}
        start = 0
        for r in self.resolutions:
            stop = start + self.group_dim(r)
            out[r] = slice(start, stop)
            start = stop
        return out


class NetworkTopology(BaseModel):
    """Topologia completa. Os valores padrão são os da escala de bancada."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    executive: ModuleSpec = ModuleSpec(tau=(8.0, 16.0))
    associative: ModuleSpec = ModuleSpec(tau=(4.0, 8.0))
    exteroceptive: ModuleSpec = ModuleSpec(z_size=40, tau=(2.0, 4.0))
    proprioceptive: ModuleSpec = ModuleSpec(tau=(2.0, 4.0))
    vision: VisionSpec = VisionSpec()
    proprio_dim: int = 4
    extero_head: Tuple[int, ...] = (40, 50)
    proprio_head: Tuple[int, ...] = (40,)

    # ------------------------------------------------------------------
    # Acesso por nome curto
    # ------------------------------------------------------------------
    def module(self, name: str) -> ModuleSpec:
        try:
            return {
                EXECUTIVE: self.executive,
                ASSOCIATIVE: self.associative,
                EXTEROCEPTIVE: self.exteroceptive,
                PROPRIOCEPTIVE: self.proprioceptive,
            }[name]
        except KeyError:
            raise ConfigError(f"Módulo desconhecido: {name!r}. Use um de {list(MODULES)}.") from None

    def children(self, name: str) -> List[str]:
        return [m for m in MODULES if PARENT[m] == name]

    def head_sizes(self, modality: str) -> Tuple[int, ...]:
        return self.extero_head if modality == EXTERO else self.proprio_head

    @property
    def modality_dims(self) -> Dict[str, int]:
        return {EXTERO: self.vision.dim, PROPRIO: self.proprio_dim}

    @property
    def z_sizes(self) -> Dict[str, int]:
        return {m: self.module(m).z_size for m in MODULES}

    def tau_vector(self, name: str) -> np.ndarray:
        """τ por unidade: a primeira metade recebe o τ menor, o restante o maior."""
        spec = self.module(name)
        small, large = sorted(spec.tau)
        half = spec.d_size // 2
        tau = np.full(spec.d_size, large, dtype=np.float64)
        tau[:half] = small
        return tau

    # ------------------------------------------------------------------
    # Invariantes
    # ------------------------------------------------------------------
    def validate_invariants(self) -> "NetworkTopology":
        """Levanta ConfigError listando todas as violações encontradas."""
        problems: List[str] = []
        for name in MODULES:
            spec = self.module(name)
            if spec.d_size < 1 or spec.z_size < 1:
                problems.append(f"{name}: módulo com tamanho zero (d={spec.d_size}, z={spec.z_size})")
            if min(spec.tau) < 1.0:
                problems.append(f"{name}: τ deve ser >= 1, recebido {spec.tau}")
        for name in MODULES:
            parent = PARENT[name]
            if parent is None:
                continue
            if min(self.module(parent).tau) < max(self.module(name).tau):
                problems.append(
                    f"{parent}->{name}: hierarquia temporal não monótona "
                    f"({self.module(parent).tau} abaixo de {self.module(name).tau})"
                )
        if [m for m in MODULES if PARENT[m] is None] != [EXECUTIVE]:
            problems.append("a hierarquia precisa ter o executivo como única raiz")
        if self.proprio_dim < 1 or self.vision.dim < 1:
            problems.append(f"modalidade vazia (visão={self.vision.dim}, propriocepção={self.proprio_dim})")
        if any(s < 1 for s in self.extero_head + self.proprio_head) or not self.proprio_head or not self.extero_head:
            problems.append(f"camadas de cabeça inválidas {self.extero_head} / {self.proprio_head}")
        if problems:
            raise ConfigError("Topologia inválida: " + "; ".join(problems))
        return self

    # ------------------------------------------------------------------
    # Presets
    # ------------------------------------------------------------------
    @classmethod
    def desk(cls) -> "NetworkTopology":
        return cls()

    @classmethod
    def paper(cls) -> "NetworkTopology":
        """Configuração completa: visão binocular RGB 16/32/64 (32.256 dims) + 28 dims."""
        return cls(
            vision=VisionSpec(resolutions=(16, 32, 64), channels=3, cameras=2),
            proprio_dim=28,
        )

    @classmethod
    def tiny(cls) -> "NetworkTopology":
        """Tudo com tamanho 3; usada pela checagem de gradientes."""
        small = dict(d_size=3, z_size=3)
        return cls(
            executive=ModuleSpec(tau=(8.0, 16.0), **small),
            associative=ModuleSpec(tau=(4.0, 8.0), **small),
            exteroceptive=ModuleSpec(tau=(2.0, 4.0), **small),
            proprioceptive=ModuleSpec(tau=(2.0, 4.0), **small),
            vision=VisionSpec(resolutions=(1,), channels=3, cameras=1),
            proprio_dim=3,
            extero_head=(3, 3),
            proprio_head=(3,),
        )
