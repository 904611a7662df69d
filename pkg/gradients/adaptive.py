# gradients/adaptive.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import torch

from config.errors import ContractError
from network.core import DTYPE
from network.topology import MODULES, NetworkTopology


@dataclass
class AdaptivePosterior:
    """
    Variáveis adaptativas a^μ, a^σ por sequência, passo e módulo.

    Tensores (B, K, z); cobrem os passos globais first_step .. first_step + K - 1.
    Os tensores são atualizados no lugar pelos otimizadores.
    """

    mu: Dict[str, torch.Tensor]
    sigma: Dict[str, torch.Tensor]
    sequence_ids: Tuple[int, ...]
    first_step: int = 1

    @classmethod
    def zeros(
        cls,
        topology: NetworkTopology,
        steps: int,
        sequence_ids: Sequence[int] = (0,),
        first_step: int = 1,
    ) -> "AdaptivePosterior":
        shape = lambda m: (len(sequence_ids), steps, topology.module(m).z_size)  # noqa: E731
        return cls(
            mu={m: torch.zeros(shape(m), dtype=DTYPE) for m in MODULES},
            sigma={m: torch.zeros(shape(m), dtype=DTYPE) for m in MODULES},
            sequence_ids=tuple(int(s) for s in sequence_ids),
            first_step=first_step,
        )

    @property
    def batch(self) -> int:
        return len(self.sequence_ids)

    @property
    def steps(self) -> int:
        return int(self.mu[MODULES[0]].shape[1])

    @property
    def covered(self) -> Tuple[int, int]:
        return self.first_step, self.first_step + self.steps - 1

    def window(self, start: int, stop: int) -> "AdaptivePosterior":
        """Visão (sem cópia) dos passos globais start..stop, inclusive."""
        lo, hi = self.covered
        if start < lo or stop > hi or start > stop:
            raise ContractError(f"Intervalo {start}..{stop} fora da cobertura {lo}..{hi}")
        a, b = start - self.first_step, stop - self.first_step + 1
        return AdaptivePosterior(
            mu={m: v[:, a:b] for m, v in self.mu.items()},
            sigma={m: v[:, a:b] for m, v in self.sigma.items()},
            sequence_ids=self.sequence_ids,
            first_step=start,
        )

    def detached(self) -> "AdaptivePosterior":
        return AdaptivePosterior(
            mu={m: v.detach().clone() for m, v in self.mu.items()},
            sigma={m: v.detach().clone() for m, v in self.sigma.items()},
            sequence_ids=self.sequence_ids,
            first_step=self.first_step,
        )

    def tensors(self) -> Dict[str, torch.Tensor]:
        """Nomes estáveis usados pelo otimizador e pelo checkpoint."""
        out = {f"adaptive.{m}.mu": self.mu[m] for m in MODULES}
        out.update({f"adaptive.{m}.sigma": self.sigma[m] for m in MODULES})
        return out

    def select(self, rows: Sequence[int]) -> "AdaptivePosterior":
        idx = torch.as_tensor(list(rows), dtype=torch.long)
        return AdaptivePosterior(
            mu={m: v.index_select(0, idx) for m, v in self.mu.items()},
            sigma={m: v.index_select(0, idx) for m, v in self.sigma.items()},
            sequence_ids=tuple(self.sequence_ids[i] for i in rows),
            first_step=self.first_step,
        )

    @classmethod
    def stack(cls, items: Sequence["AdaptivePosterior"]) -> "AdaptivePosterior":
        """Concatena no eixo do lote (todas precisam cobrir os mesmos passos)."""
        if not items:
            raise ContractError("Nada para empilhar")
        if len({it.covered for it in items}) != 1:
            raise ContractError("Variáveis adaptativas com coberturas diferentes")
        return cls(
            mu={m: torch.cat([it.mu[m] for it in items], dim=0) for m in MODULES},
            sigma={m: torch.cat([it.sigma[m] for it in items], dim=0) for m in MODULES},
            sequence_ids=tuple(s for it in items for s in it.sequence_ids),
            first_step=items[0].first_step,
        )
