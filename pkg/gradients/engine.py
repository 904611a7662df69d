# gradients/engine.py
# -----------------------------------------------------------------------------
# Gradientes exatos (modo reverso, torch.autograd) da energia livre acumulada
# e da energia livre da janela deslizante em relação aos pesos e às variáveis
# adaptativas. Os vieses recorrentes nunca entram no grafo como folhas.
#
# Convenção de passos: índices globais começam em 1. Uma janela [left, t]
# é avaliada a partir do estado de fronteira (estado após o passo left-1).
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Literal, Mapping, Optional

import torch

from config.errors import ContractError, DataValidationError
from free_energy.masks import ObservationMask
from free_energy.terms import FreeEnergyTerms, trajectory_terms, window_bounds
from gradients.adaptive import AdaptivePosterior
from network.core import RecurrentState, Trajectory, forward_sequence
from network.parameters import Parameters
from network.topology import MODALITIES, MODULES, NetworkTopology

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Objective:
    """Objetivo escalar: soma da sequência inteira ou da janela [max(1, t-H+1), t]."""

    kind: Literal["sequence", "window"]
    t: Optional[int] = None
    H: Optional[int] = None

    @classmethod
    def sequence(cls) -> "Objective":
        return cls(kind="sequence")

    @classmethod
    def window(cls, t: int, H: int) -> "Objective":
        window_bounds(t, H)
        return cls(kind="window", t=t, H=H)

    def bounds(self, first: int, last: int) -> tuple[int, int]:
        """Passos globais avaliados, dado que os dados cobrem first..last."""
        if self.kind == "sequence":
            return first, last
        left, right = window_bounds(self.t, self.H)
        if right > last:
            raise DataValidationError(f"Janela termina em t={right}, mas os dados vão só até t={last}")
        if left < first:
            raise ContractError(f"Janela começa em t={left}, antes do primeiro passo disponível t={first}")
        return left, right


@dataclass
class GradientSet:
    """Gradientes com a mesma forma dos alvos, mais a contabilidade da soma."""

    weights: Dict[str, torch.Tensor] = field(default_factory=dict)
    adaptive_mu: Dict[str, torch.Tensor] = field(default_factory=dict)
    adaptive_sigma: Dict[str, torch.Tensor] = field(default_factory=dict)
    value: float = 0.0
    summary: Dict[str, float] = field(default_factory=dict)
    n_sequences: int = 0
    n_steps: int = 0

    def groups(self) -> Dict[str, torch.Tensor]:
        """Nomes alinhados com Parameters.weights e AdaptivePosterior.tensors()."""
        out = dict(self.weights)
        out.update({f"adaptive.{m}.mu": g for m, g in self.adaptive_mu.items()})
        out.update({f"adaptive.{m}.sigma": g for m, g in self.adaptive_sigma.items()})
        return out

    def global_norm(self) -> float:
        total = sum(float((g * g).sum()) for g in self.groups().values())
        return total ** 0.5


def _observation_tensors(observations: Mapping[str, object]) -> Dict[str, torch.Tensor]:
    out = {}
    for mod in MODALITIES:
        value = observations[mod]
        out[mod] = value if isinstance(value, torch.Tensor) else torch.as_tensor(value, dtype=torch.float64)
    return out


def window_boundary(
    params: Parameters,
    topology: NetworkTopology,
    adaptive: AdaptivePosterior,
    left: int,
    eps: Mapping[str, torch.Tensor],
    start: Optional[RecurrentState] = None,
) -> RecurrentState:
    """
    Estado após o passo left-1, simulado sem gradiente com as variáveis já fixadas.

    `eps` e `adaptive` começam em adaptive.first_step; `start` é o estado antes
    desse passo (estado zero quando first_step = 1).
    """
    first = adaptive.first_step
    if start is None:
        if first != 1:
            raise ContractError(f"Sem estado inicial para variáveis que começam em t={first}")
        start = RecurrentState.zeros(topology, adaptive.batch)
    if left <= first:
        return start
    n = left - first
    with torch.no_grad():
        traj = forward_sequence(
            params, topology, adaptive.window(first, left - 1), n, "posterior",
            {m: eps[m][:, :n] for m in MODULES},
            initial_state=start,
        )
    return traj.final_state.detach()


def _forward(
    objective: Objective,
    params: Parameters,
    topology: NetworkTopology,
    adaptive: AdaptivePosterior,
    observations: Mapping[str, torch.Tensor],
    mask: Optional[ObservationMask],
    eps: Optional[Mapping[str, torch.Tensor]],
    W: float,
    boundary: Optional[RecurrentState],
) -> tuple[Trajectory, FreeEnergyTerms, int, int]:
    # observações, máscara e ε são indexados a partir de adaptive.first_step
    if eps is None:
        raise ContractError("Gradiente pedido sem registro de ε para o intervalo")
    obs = _observation_tensors(observations)
    first = adaptive.first_step
    last = first + int(obs[MODALITIES[0]].shape[1]) - 1
    if adaptive.covered[1] < last:
        raise ContractError(f"Variáveis adaptativas cobrem até t={adaptive.covered[1]}, observações até t={last}")
    short = [m for m in MODULES if m not in eps or eps[m].shape[1] < last - first + 1]
    if short:
        raise ContractError(f"Registro de ε ausente ou curto para os módulos {short}")
    left, right = objective.bounds(first, last)

    if boundary is None or (boundary.t < left - 1 and boundary.t == first - 1):
        boundary = window_boundary(params, topology, adaptive, left, eps, start=boundary)
    if boundary.t != left - 1:
        raise ContractError(f"Estado de fronteira está em t={boundary.t}, esperado t={left - 1}")

    lo, n = left - first, right - left + 1
    traj = forward_sequence(
        params, topology, adaptive.window(left, right), n, "posterior",
        {m: eps[m][:, lo: lo + n] for m in MODULES},
        initial_state=boundary,
    )
    window_obs = {mod: obs[mod][:, lo: lo + n] for mod in MODALITIES}
    window_mask = mask.slice(lo, lo + n) if mask is not None else None
    terms = trajectory_terms(traj, window_obs, window_mask, W)
    return traj, terms, left, right


def objective_value(
    objective: Objective,
    params: Parameters,
    topology: NetworkTopology,
    adaptive: AdaptivePosterior,
    observations: Mapping[str, torch.Tensor],
    mask: Optional[ObservationMask],
    eps: Optional[Mapping[str, torch.Tensor]],
    W: float,
    *,
    boundary: Optional[RecurrentState] = None,
) -> float:
    with torch.no_grad():
        _, terms, _, _ = _forward(objective, params, topology, adaptive, observations, mask, eps, W, boundary)
    return float(terms.total.sum())


def backward(
    objective: Objective,
    params: Parameters,
    topology: NetworkTopology,
    adaptive: AdaptivePosterior,
    observations: Mapping[str, torch.Tensor],
    mask: Optional[ObservationMask],
    eps: Optional[Mapping[str, torch.Tensor]],
    W: float,
    *,
    boundary: Optional[RecurrentState] = None,
    wrt_weights: bool = True,
    wrt_adaptive: bool = True,
) -> GradientSet:
    """
    Gradientes de ∑ F_t (objetivo da sequência ou da janela) via autograd.

    Os gradientes das variáveis adaptativas têm a forma completa de `adaptive`
    (B, K, z): passos fora da janela recebem zero exato. O estado de fronteira
    é tratado como constante.
    """
    leaves_w = {n: v.detach().clone().requires_grad_(wrt_weights) for n, v in params.weights.items()}
    leaves_mu = {m: v.detach().clone().requires_grad_(wrt_adaptive) for m, v in adaptive.mu.items()}
    leaves_sigma = {m: v.detach().clone().requires_grad_(wrt_adaptive) for m, v in adaptive.sigma.items()}
    live = AdaptivePosterior(mu=leaves_mu, sigma=leaves_sigma, sequence_ids=adaptive.sequence_ids,
                             first_step=adaptive.first_step)
    live_params = params.with_weights(leaves_w)

    with torch.enable_grad():
        _, terms, left, right = _forward(objective, live_params, topology, live, observations, mask, eps, W, boundary)
        total = terms.total.sum()
        inputs = []
        if wrt_weights:
            inputs += list(leaves_w.values())
        if wrt_adaptive:
            inputs += [leaves_mu[m] for m in MODULES] + [leaves_sigma[m] for m in MODULES]
        grads = torch.autograd.grad(total, inputs, allow_unused=True) if inputs else ()

    grads = list(grads)
    out = GradientSet(
        value=float(total.detach()),
        summary=terms.column_sums(),
        n_sequences=adaptive.batch,
        n_steps=right - left + 1,
    )
    if wrt_weights:
        for name, leaf in leaves_w.items():
            g = grads.pop(0)
            out.weights[name] = torch.zeros_like(leaf) if g is None else g
    if wrt_adaptive:
        for m in MODULES:
            g = grads.pop(0)
            out.adaptive_mu[m] = torch.zeros_like(leaves_mu[m]) if g is None else g
        for m in MODULES:
            g = grads.pop(0)
            out.adaptive_sigma[m] = torch.zeros_like(leaves_sigma[m]) if g is None else g
    return out
