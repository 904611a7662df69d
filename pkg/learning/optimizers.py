# learning/optimizers.py
# -----------------------------------------------------------------------------
# Adam retificado (RAdam) e descida de gradiente simples, aplicados no lugar
# sobre dicionários nome -> tensor. Um único estado cobre pesos e variáveis
# adaptativas (uma taxa de aprendizado só).
#
#   ρ∞ = 2 / (1 - β2) - 1
#   ρ_t = ρ∞ - 2 t β2^t / (1 - β2^t)
#   ρ_t > 4:  θ -= lr · r_t · m̂_t / (sqrt(v̂_t) + eps)
#   senão:    θ -= lr · m̂_t                (momento sem adaptação)
# -----------------------------------------------------------------------------

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping

import torch

from config.errors import ContractError

RHO_THRESHOLD = 4.0


@dataclass
class OptimizerState:
    m: Dict[str, torch.Tensor] = field(default_factory=dict)
    v: Dict[str, torch.Tensor] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, targets: Mapping[str, torch.Tensor], beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> "OptimizerState":
        return cls(
            m={k: torch.zeros_like(v) for k, v in targets.items()},
            v={k: torch.zeros_like(v) for k, v in targets.items()},
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )

    @property
    def rho_inf(self) -> float:
        return 2.0 / (1.0 - self.beta2) - 1.0

    def rho(self, step: int) -> float:
        b2t = self.beta2 ** step
        return self.rho_inf - 2.0 * step * b2t / (1.0 - b2t)

    def adaptive_branch(self, step: int) -> bool:
        return self.rho(step) > RHO_THRESHOLD

    def rectification(self, step: int) -> float:
        rho_t, rho_inf = self.rho(step), self.rho_inf
        return math.sqrt(
            (rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
        )


def _check_shapes(state_shapes: Mapping[str, torch.Tensor], targets: Mapping[str, torch.Tensor],
                  grads: Mapping[str, torch.Tensor]) -> None:
    for name, target in targets.items():
        if name not in grads:
            raise ContractError(f"Gradiente ausente para {name}")
        if tuple(grads[name].shape) != tuple(target.shape):
            raise ContractError(
                f"Forma do gradiente de {name} é {tuple(grads[name].shape)}; alvo tem {tuple(target.shape)}"
            )
        if name not in state_shapes or tuple(state_shapes[name].shape) != tuple(target.shape):
            raise ContractError(f"Estado do otimizador não corresponde ao alvo {name}")


@torch.no_grad()
def radam_update(
    state: OptimizerState,
    targets: Mapping[str, torch.Tensor],
    grads: Mapping[str, torch.Tensor],
    lr: float,
) -> OptimizerState:
    """Um passo de RAdam; atualiza `targets` e `state` no lugar e devolve o estado."""
    _check_shapes(state.m, targets, grads)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    adaptive = state.adaptive_branch(t)
    r = state.rectification(t) if adaptive else 0.0
    for name in targets:  # ordem fixa dos alvos
        g = grads[name]
        state.m[name].mul_(b1).add_(g, alpha=1.0 - b1)
        state.v[name].mul_(b2).addcmul_(g, g, value=1.0 - b2)
        m_hat = state.m[name] / bias1
        if adaptive:
            v_hat = state.v[name] / bias2
            targets[name].sub_(lr * r * m_hat / (v_hat.sqrt() + state.eps))
        else:
            targets[name].sub_(lr * m_hat)
    return state


@torch.no_grad()
def sgd_update(targets: Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor], lr: float) -> None:
    for name, target in targets.items():
        if tuple(grads[name].shape) != tuple(target.shape):
            raise ContractError(f"Forma do gradiente de {name} não corresponde ao alvo")
        target.sub_(lr * grads[name])
