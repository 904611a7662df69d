# network/core.py
# -----------------------------------------------------------------------------
# Passo generativo top-down da rede:
#   prior (a partir de d_{t-1}) -> posterior (variáveis adaptativas a)
#   -> amostra z = μ + σ·ε -> integrador com vazamento -> cabeças de predição.
#
# Tudo em float64. Os tensores levam a dimensão de lote (sequências) na
# frente: estados (B, N), trajetórias (B, T, N).
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from config.errors import ConfigError, ContractError, NumericError
from network.parameters import Parameters
from network.topology import (
    EXTERO,
    EXTEROCEPTIVE,
    MODALITIES,
    MODULES,
    PARENT,
    PROPRIO,
    PROPRIOCEPTIVE,
    NetworkTopology,
)

if TYPE_CHECKING:
    from gradients.adaptive import AdaptivePosterior

logger = logging.getLogger(__name__)

DTYPE = torch.float64
SIGMA_CLAMP = 8.0

Mode = Literal["posterior", "prior"]
Override = Literal["zero", "prior_mean"]
EpsilonSource = Union[Mapping[str, torch.Tensor], np.random.Generator]


# ============================================================
# Tipos
# ============================================================
@dataclass(frozen=True)
class RecurrentState:
    h: Dict[str, torch.Tensor]
    d: Dict[str, torch.Tensor]
    t: int = 0

    @classmethod
    def zeros(cls, topology: NetworkTopology, batch: int = 1) -> "RecurrentState":
        h = {m: torch.zeros(batch, topology.module(m).d_size, dtype=DTYPE) for m in MODULES}
        return cls(h=h, d={m: torch.tanh(v) for m, v in h.items()}, t=0)

    @property
    def batch(self) -> int:
        return int(self.h[EXTEROCEPTIVE].shape[0])

    def detach(self) -> "RecurrentState":
        return RecurrentState(
            h={m: v.detach() for m, v in self.h.items()},
            d={m: v.detach() for m, v in self.d.items()},
            t=self.t,
        )


@dataclass(frozen=True)
class LatentMoments:
    mu: Dict[str, torch.Tensor]
    sigma: Dict[str, torch.Tensor]


@dataclass(frozen=True)
class LatentSample:
    z: Dict[str, torch.Tensor]
    eps: Dict[str, torch.Tensor]


@dataclass(frozen=True)
class Prediction:
    x_hat: Dict[str, torch.Tensor]
    f: Dict[str, Tuple[torch.Tensor, ...]]


@dataclass(frozen=True)
class Trajectory:
    """Resultado de forward_sequence, empilhado no eixo do tempo (B, T, ...).

    `first_step` é o índice global do primeiro passo (1 quando parte do estado zero).
    `post_mu`/`post_sigma` cobrem só os passos com variáveis adaptativas.
    """

    first_step: int
    h: Dict[str, torch.Tensor]
    d: Dict[str, torch.Tensor]
    prior_mu: Dict[str, torch.Tensor]
    prior_sigma: Dict[str, torch.Tensor]
    post_mu: Dict[str, torch.Tensor]
    post_sigma: Dict[str, torch.Tensor]
    z: Dict[str, torch.Tensor]
    eps: Dict[str, torch.Tensor]
    x_hat: Dict[str, torch.Tensor]
    final_state: RecurrentState

    @property
    def steps(self) -> int:
        return int(self.x_hat[EXTERO].shape[1])

    @property
    def last_step(self) -> int:
        return self.first_step + self.steps - 1

    @property
    def posterior_steps(self) -> int:
        return int(self.post_mu[EXTEROCEPTIVE].shape[1])

    def prior(self) -> LatentMoments:
        return LatentMoments(self.prior_mu, self.prior_sigma)

    def posterior(self) -> LatentMoments:
        return LatentMoments(self.post_mu, self.post_sigma)


# ============================================================
# Operações de um passo
# ============================================================
def _sigma(pre: torch.Tensor) -> torch.Tensor:
    return torch.exp(torch.clamp(pre, -SIGMA_CLAMP, SIGMA_CLAMP))


def compute_prior(prev: RecurrentState, params: Parameters) -> LatentMoments:
    """μ^p = tanh(W d_{t-1}), σ^p = exp(clamp(W d_{t-1})), módulo a módulo."""
    w = params.weights
    mu = {m: torch.tanh(prev.d[m] @ w[f"{m}.w_mu"].T) for m in MODULES}
    sigma = {m: _sigma(prev.d[m] @ w[f"{m}.w_sigma"].T) for m in MODULES}
    return LatentMoments(mu=mu, sigma=sigma)


def compute_posterior(a_mu: Mapping[str, torch.Tensor], a_sigma: Mapping[str, torch.Tensor]) -> LatentMoments:
    return LatentMoments(
        mu={m: torch.tanh(a_mu[m]) for m in MODULES},
        sigma={m: _sigma(a_sigma[m]) for m in MODULES},
    )


def sample_latent(moments: LatentMoments, eps: EpsilonSource) -> LatentSample:
    """z = μ + σ·ε. Com um Generator, ε é sorteado módulo a módulo na ordem de MODULES."""
    if isinstance(eps, np.random.Generator):
        drawn = {m: torch.from_numpy(eps.standard_normal(tuple(moments.mu[m].shape))) for m in MODULES}
    else:
        drawn = {m: eps[m] for m in MODULES}
    z = {m: moments.mu[m] + moments.sigma[m] * drawn[m] for m in MODULES}
    return LatentSample(z=z, eps=drawn)


def leaky_step(
    prev: RecurrentState,
    z: LatentSample,
    params: Parameters,
    topology: NetworkTopology,
) -> RecurrentState:
    """
    Integrador com vazamento (MTRNN), avaliado de cima para baixo:

        h_t = (1/τ)(W_dd d_{t-1} + W_zd z_t + W_hd d_t^{superior} + b) + (1 - 1/τ) h_{t-1}
        d_t = tanh(h_t)

    O termo superior usa o d do módulo de cima já no passo t.
    """
    step = prev.t + 1
    for m in MODULES:
        if not bool(torch.isfinite(prev.h[m]).all()):
            raise NumericError(f"Estado recorrente não finito no módulo {m}", step=step)

    w = params.weights
    h: Dict[str, torch.Tensor] = {}
    d: Dict[str, torch.Tensor] = {}
    for m in MODULES:
        pre = prev.d[m] @ w[f"{m}.w_dd"].T + z.z[m] @ w[f"{m}.w_zd"].T
        parent = PARENT[m]
        if parent is not None:
            pre = pre + d[parent] @ w[f"{m}.w_hd"].T
        pre = pre + params.biases[f"{m}.bias"]
        tau = torch.from_numpy(topology.tau_vector(m))
        h[m] = pre / tau + (1.0 - 1.0 / tau) * prev.h[m]
        d[m] = torch.tanh(h[m])
    return RecurrentState(h=h, d=d, t=step)


def head_inputs(state: RecurrentState) -> Tuple[torch.Tensor, torch.Tensor]:
    """Entradas das cabeças de decodificação: saídas d_t dos módulos perceptivos."""
    return state.d[EXTEROCEPTIVE], state.d[PROPRIOCEPTIVE]


def decode(d_extero: torch.Tensor, d_proprio: torch.Tensor, params: Parameters, topology: NetworkTopology) -> Prediction:
    """Exteroceptivo: duas camadas tanh + saída tanh. Proprioceptivo: uma camada + saída."""
    w = params.weights
    x_hat: Dict[str, torch.Tensor] = {}
    f: Dict[str, Tuple[torch.Tensor, ...]] = {}
    for modality, act in ((EXTERO, d_extero), (PROPRIO, d_proprio)):
        layers: List[torch.Tensor] = []
        for k in range(len(topology.head_sizes(modality))):
            act = torch.tanh(act @ w[f"{modality}.head{k}.weight"].T + w[f"{modality}.head{k}.bias"])
            layers.append(act)
        f[modality] = tuple(layers)
        x_hat[modality] = torch.tanh(act @ w[f"{modality}.out.weight"].T + w[f"{modality}.out.bias"])
    return Prediction(x_hat=x_hat, f=f)


# ============================================================
# Sequência completa
# ============================================================
def epsilon_streams(
    topology: NetworkTopology,
    keys: Sequence[int],
    steps: int,
    seed_parts: Sequence[int],
) -> Dict[str, torch.Tensor]:
    """
    ε por sequência, indexado pela chave da sequência (não pela posição no lote).

    Cada sequência usa o próprio gerador default_rng([*seed_parts, chave]), então
    a ordem do lote e o número de threads não mudam os valores sorteados.
    """
    per_key = []
    for key in keys:
        rng = np.random.default_rng([*map(int, seed_parts), int(key)])
        per_key.append({m: rng.standard_normal((steps, topology.module(m).z_size)) for m in MODULES})
    return {
        m: torch.from_numpy(np.stack([draws[m] for draws in per_key])) if per_key
        else torch.zeros(0, steps, topology.module(m).z_size, dtype=DTYPE)
        for m in MODULES
    }


def forward_sequence(
    params: Parameters,
    topology: NetworkTopology,
    adaptive: Optional["AdaptivePosterior"],
    T: int,
    mode: Mode,
    rng: Optional[EpsilonSource],
    *,
    initial_state: Optional[RecurrentState] = None,
    deterministic: bool = False,
    overrides: Optional[Mapping[str, Override]] = None,
    batch: Optional[int] = None,
) -> Trajectory:
    """
    Executa T passos a partir de `initial_state` (estado zero se ausente).

    Parameters
    ----------
    adaptive : AdaptivePosterior, opcional
        Cobre os primeiros K <= T passos. No modo "posterior" é obrigatório K = T.
    mode : "posterior" | "prior"
        De qual distribuição z é amostrado.
    rng : Generator ou dict módulo -> (B, T, z)
        Fonte de ε. Obrigatório, exceto com deterministic=True (z = μ).
    overrides : dict módulo -> "zero" | "prior_mean"
        Substitui o z do módulo em todos os passos (usado na ablação).
    """
    if T <= 0:
        raise ConfigError(f"T deve ser positivo, recebido T={T}")
    if mode not in ("posterior", "prior"):
        raise ConfigError(f"Modo inválido: {mode!r}. Use 'posterior' ou 'prior'.")
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(MODULES)
    if unknown:
        raise ConfigError(f"Módulos desconhecidos na ablação: {sorted(unknown)}")

    covered = adaptive.steps if adaptive is not None else 0
    if mode == "posterior" and covered < T:
        raise ContractError(f"Modo posterior exige variáveis adaptativas para {T} passos (há {covered})")
    if rng is None and not deterministic:
        raise ContractError("Sem registro de ε: informe um Generator, ε gravado ou deterministic=True")
    if isinstance(rng, Mapping):
        short = [m for m in MODULES if m not in rng or rng[m].shape[1] < T]
        if short:
            raise ContractError(f"Registro de ε ausente ou curto para os módulos {short}")

    if initial_state is None:
        if batch is None:
            batch = adaptive.batch if adaptive is not None else 1
        initial_state = RecurrentState.zeros(topology, batch)
    state = initial_state
    first_step = state.t + 1

    rec: Dict[str, Dict[str, List[torch.Tensor]]] = {
        key: {m: [] for m in MODULES} for key in ("h", "d", "prior_mu", "prior_sigma", "post_mu", "post_sigma", "z", "eps")
    }
    x_rec: Dict[str, List[torch.Tensor]] = {mod: [] for mod in MODALITIES}

    for k in range(T):
        prior = compute_prior(state, params)
        post: Optional[LatentMoments] = None
        if k < covered:
            post = compute_posterior(
                {m: adaptive.mu[m][:, k] for m in MODULES},
                {m: adaptive.sigma[m][:, k] for m in MODULES},
            )
        source = post if mode == "posterior" else prior

        if deterministic:
            sample = LatentSample(
                z=dict(source.mu), eps={m: torch.zeros_like(source.mu[m]) for m in MODULES}
            )
        elif isinstance(rng, np.random.Generator):
            sample = sample_latent(source, rng)
        else:
            sample = sample_latent(source, {m: rng[m][:, k] for m in MODULES})

        if overrides:
            z = dict(sample.z)
            for m, how in overrides.items():
                z[m] = torch.zeros_like(z[m]) if how == "zero" else prior.mu[m]
            sample = LatentSample(z=z, eps=sample.eps)

        state = leaky_step(state, sample, params, topology)
        prediction = decode(*head_inputs(state), params, topology)

        for m in MODULES:
            rec["h"][m].append(state.h[m])
            rec["d"][m].append(state.d[m])
            rec["prior_mu"][m].append(prior.mu[m])
            rec["prior_sigma"][m].append(prior.sigma[m])
            rec["z"][m].append(sample.z[m])
            rec["eps"][m].append(sample.eps[m])
            if post is not None:
                rec["post_mu"][m].append(post.mu[m])
                rec["post_sigma"][m].append(post.sigma[m])
        for mod in MODALITIES:
            x_rec[mod].append(prediction.x_hat[mod])

    def _stack(key: str) -> Dict[str, torch.Tensor]:
        out = {}
        for m in MODULES:
            items = rec[key][m]
            if items:
                out[m] = torch.stack(items, dim=1)
            else:
                out[m] = torch.zeros(state.batch, 0, topology.module(m).z_size, dtype=DTYPE)
        return out

    return Trajectory(
        first_step=first_step,
        h=_stack("h"),
        d=_stack("d"),
        prior_mu=_stack("prior_mu"),
        prior_sigma=_stack("prior_sigma"),
        post_mu=_stack("post_mu"),
        post_sigma=_stack("post_sigma"),
        z=_stack("z"),
        eps=_stack("eps"),
        x_hat={mod: torch.stack(x_rec[mod], dim=1) for mod in MODALITIES},
        final_state=state,
    )
