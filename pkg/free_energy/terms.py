# free_energy/terms.py
# -----------------------------------------------------------------------------
# Energia livre variacional por passo:
#
#   F_t = Σ_modalidade acurácia_normalizada + W · Σ_módulo complexidade_normalizada
#
# acurácia     = Σ_{dims incluídas} ½ (x - x̂)² / (dimensionalidade total da modalidade)
# complexidade = KL[q || p] analítico entre Gaussianas diagonais / (dimensão latente)
#
# As funções aceitam qualquer formato à esquerda (..., D); somam só o último eixo.
# -----------------------------------------------------------------------------

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import torch

from config.errors import DataValidationError, NumericError
from free_energy.masks import ObservationMask
from network.core import LatentMoments, Trajectory
from network.topology import MODALITIES, MODULES

PAPER_W = 0.005


@dataclass(frozen=True)
class FreeEnergyTerms:
    accuracy: Dict[str, torch.Tensor]
    complexity: Dict[str, torch.Tensor]
    W: float
    total: torch.Tensor

    def column_sums(self) -> Dict[str, float]:
        """Somatórios no formato das colunas do histórico de perda."""
        out = {"total": float(self.total.detach().sum())}
        out.update({f"accuracy.{mod}": float(v.detach().sum()) for mod, v in self.accuracy.items()})
        out.update({f"complexity.{m}": float(v.detach().sum()) for m, v in self.complexity.items()})
        return out


def accuracy_term(
    x: Mapping[str, torch.Tensor],
    x_hat: Mapping[str, torch.Tensor],
    mask: Optional[Mapping[str, torch.Tensor]] = None,
) -> Dict[str, torch.Tensor]:
    """Erro quadrático por modalidade, dividido pela dimensionalidade total (mesmo com máscara)."""
    out: Dict[str, torch.Tensor] = {}
    for mod in MODALITIES:
        if tuple(x[mod].shape) != tuple(x_hat[mod].shape):
            raise DataValidationError(
                f"Formato divergente em {mod}: observado {tuple(x[mod].shape)}, previsto {tuple(x_hat[mod].shape)}"
            )
        err = 0.5 * (x[mod] - x_hat[mod]) ** 2
        if mask is not None:
            err = err * mask[mod]
        out[mod] = err.sum(dim=-1) / x[mod].shape[-1]
    return out


def complexity_term(posterior: LatentMoments, prior: LatentMoments) -> Dict[str, torch.Tensor]:
    """KL[q || p] por módulo, normalizada pela dimensão latente do módulo."""
    out: Dict[str, torch.Tensor] = {}
    for m in MODULES:
        mq, sq, mp, sp = posterior.mu[m], posterior.sigma[m], prior.mu[m], prior.sigma[m]
        for label, v in (("μ^q", mq), ("σ^q", sq), ("μ^p", mp), ("σ^p", sp)):
            if not bool(torch.isfinite(v.detach()).all()):
                raise NumericError(f"Momento {label} não finito no módulo {m}")
        if tuple(mq.shape) != tuple(mp.shape):
            raise DataValidationError(f"Latentes de {m} com formatos diferentes: {tuple(mq.shape)} vs {tuple(mp.shape)}")
        kld = torch.log(sp) - torch.log(sq) + ((mp - mq) ** 2 + sq ** 2) / (2.0 * sp ** 2) - 0.5
        out[m] = kld.sum(dim=-1) / mq.shape[-1]
    return out


def step_free_energy(
    x: Mapping[str, torch.Tensor],
    x_hat: Mapping[str, torch.Tensor],
    posterior: LatentMoments,
    prior: LatentMoments,
    mask: Optional[Mapping[str, torch.Tensor]],
    W: float,
) -> FreeEnergyTerms:
    accuracy = accuracy_term(x, x_hat, mask)
    complexity = complexity_term(posterior, prior)
    acc_sum = accuracy[MODALITIES[0]]
    for mod in MODALITIES[1:]:
        acc_sum = acc_sum + accuracy[mod]
    kld_sum = complexity[MODULES[0]]
    for m in MODULES[1:]:
        kld_sum = kld_sum + complexity[m]
    return FreeEnergyTerms(accuracy=accuracy, complexity=complexity, W=W, total=acc_sum + W * kld_sum)


def _check_covers(trajectory: Trajectory, observations: Mapping[str, torch.Tensor], mask: Optional[ObservationMask]) -> None:
    T = trajectory.steps
    for mod in MODALITIES:
        if observations[mod].shape[1] != T:
            raise DataValidationError(
                f"Observações de {mod} com {observations[mod].shape[1]} passos; trajetória tem {T}"
            )
    if mask is not None and mask.steps != T:
        raise DataValidationError(f"Máscara com {mask.steps} passos; trajetória tem {T}")
    if mask is not None:
        mask.check_dims({mod: observations[mod].shape[-1] for mod in MODALITIES})
    if trajectory.posterior_steps != T:
        raise DataValidationError("A energia livre exige posteriores em todos os passos da trajetória")


def trajectory_terms(
    trajectory: Trajectory,
    observations: Mapping[str, torch.Tensor],
    mask: Optional[ObservationMask],
    W: float,
) -> FreeEnergyTerms:
    """Termos por (sequência, passo) para toda a trajetória; observações (B, T, D)."""
    _check_covers(trajectory, observations, mask)
    mask_t = mask.as_tensors() if mask is not None else None
    return step_free_energy(observations, trajectory.x_hat, trajectory.posterior(), trajectory.prior(), mask_t, W)


def sequence_free_energy(
    trajectory: Trajectory,
    observations: Mapping[str, torch.Tensor],
    mask: Optional[ObservationMask],
    W: float,
) -> torch.Tensor:
    """Soma sobre passos e sequências (energia livre acumulada do aprendizado)."""
    terms = trajectory_terms(trajectory, observations, mask, W)
    return terms.total[:, 0:trajectory.steps].sum()


def window_bounds(t: int, H: int) -> tuple[int, int]:
    """Janela [max(1, t-H+1), t]; para t < H a janela começa no passo 1."""
    if H < 1 or t < 1:
        raise DataValidationError(f"Janela vazia: t={t}, H={H}")
    return max(1, t - H + 1), t


def window_free_energy(
    trajectory: Trajectory,
    t: int,
    H: int,
    observations: Mapping[str, torch.Tensor],
    mask: Optional[ObservationMask],
    W: float,
) -> torch.Tensor:
    """Soma da energia livre na janela deslizante terminando em t (passos globais)."""
    left, right = window_bounds(t, H)
    if left < trajectory.first_step or right > trajectory.last_step:
        raise DataValidationError(
            f"Janela {left}..{right} fora da trajetória {trajectory.first_step}..{trajectory.last_step}"
        )
    terms = trajectory_terms(trajectory, observations, mask, W)
    lo, hi = left - trajectory.first_step, right - trajectory.first_step + 1
    return terms.total[:, lo:hi].sum()


def per_dim_error(x: Mapping[str, torch.Tensor], x_hat: Mapping[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    """Erro quadrático médio por dimensão (sem o ½), por modalidade."""
    return {mod: ((x[mod] - x_hat[mod]) ** 2).mean(dim=-1) for mod in MODALITIES}
