# inference/session.py
# -----------------------------------------------------------------------------
# Inferência online com pesos congelados.
#
# A cada observação:
#   1. se a janela já tem H passos, o passo mais antigo é congelado: o estado de
#      fronteira avança um passo com os valores finais dele e o ε de registro;
#   2. o passo t entra na janela com a = 0;
#   3. `iterations` rodadas de descida na energia livre da janela [t-H+1, t],
#      só sobre as variáveis adaptativas da janela (ε novo a cada rodada, ou o
#      ε de registro no modo de diagnóstico);
#   4. uma passada final com o ε de registro gera as predições de t.
#
# O ε de registro é sorteado uma vez por passo; com ele e as variáveis finais
# a trajetória completa pode ser regenerada exatamente (ablação).
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from config.errors import ConfigError, ContractError, DataValidationError
from free_energy.masks import ObservationMask
from free_energy.terms import trajectory_terms
from gradients.adaptive import AdaptivePosterior
from gradients.engine import Objective, backward
from learning.optimizers import OptimizerState, radam_update, sgd_update
from network.core import DTYPE, RecurrentState, forward_sequence
from network.topology import EXTERO, MODALITIES, MODULES
from storage.checkpoint import Checkpoint

logger = logging.getLogger(__name__)

TOLERANCE = 1e-9


class InferConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    window: int = Field(30, ge=1, description="H")
    iterations: int = Field(50, ge=1, description="rodadas por observação")
    lr: float = Field(1.0, gt=0.0)
    trials_per_sequence: int = Field(5, ge=1)
    horizon: int = Field(0, ge=0, description="passos de rollout pela prior após cada t")
    optimizer: Literal["sgd", "radam"] = "sgd"
    fixed_epsilon: bool = False
    resolutions: Optional[Tuple[int, ...]] = Field(None, description="None = todas as resoluções")
    proprio: bool = True
    W: float = Field(0.005, ge=0.0)
    seed: int = 0


@dataclass(frozen=True)
class StepResult:
    step: int
    x_hat: Dict[str, np.ndarray]
    views: Dict[int, np.ndarray]
    prior_mu: Dict[str, np.ndarray]
    prior_sigma: Dict[str, np.ndarray]
    post_mu: Dict[str, np.ndarray]
    post_sigma: Dict[str, np.ndarray]
    z: Dict[str, np.ndarray]
    terms: Dict[str, float]
    window_free_energy: float
    errors: Dict[str, float]
    trace: Tuple[float, ...] = ()
    rollout: Optional[Dict[str, np.ndarray]] = None


def _row(values: Mapping[str, torch.Tensor], index: int) -> Dict[str, np.ndarray]:
    return {k: v[0, index].detach().numpy().copy() for k, v in values.items()}


class InferenceSession:
    """Estado de uma sessão; usar de uma thread só."""

    def __init__(self, checkpoint: Checkpoint, config: InferConfig, seed_parts: Sequence[int] = (0,)) -> None:
        self.topology = checkpoint.topology
        self.config = config
        self.params = checkpoint.params.clone()
        self.seed_parts = tuple(int(s) for s in seed_parts)
        self._rng = np.random.default_rng([config.seed, *self.seed_parts])
        self.policy = ObservationMask.only(self.topology, 1, config.resolutions, config.proprio)

        self.t = 0
        self.boundary = RecurrentState.zeros(self.topology, 1)
        self.window: Optional[AdaptivePosterior] = None
        self._obs: Dict[str, List[torch.Tensor]] = {mod: [] for mod in MODALITIES}
        self._masks: List[ObservationMask] = []
        self._eps: Dict[str, List[torch.Tensor]] = {m: [] for m in MODULES}
        self._frozen_mu: Dict[str, List[torch.Tensor]] = {m: [] for m in MODULES}
        self._frozen_sigma: Dict[str, List[torch.Tensor]] = {m: [] for m in MODULES}
        self._last_state: Optional[RecurrentState] = None

    # ------------------------------------------------------------------
    @property
    def window_range(self) -> Tuple[int, int]:
        if self.window is None:
            return (1, 0)
        return self.window.covered

    def _validate(self, observation: Mapping[str, np.ndarray], mask: Optional[ObservationMask]) -> Dict[str, np.ndarray]:
        dims = self.topology.modality_dims
        out = {}
        for mod in MODALITIES:
            if mod not in observation:
                raise DataValidationError(f"Observação sem a modalidade {mod}")
            arr = np.asarray(observation[mod], dtype=np.float64).reshape(-1)
            if arr.size != dims[mod]:
                raise DataValidationError(f"Observação {mod} com {arr.size} dimensões; a topologia espera {dims[mod]}")
            if not np.all(np.isfinite(arr)):
                raise DataValidationError(f"Observação {mod} com valores não finitos no passo {self.t + 1}")
            if float(np.abs(arr).max(initial=0.0)) > 0.9 + TOLERANCE:
                raise DataValidationError(f"Observação {mod} fora de [-0.9, 0.9] no passo {self.t + 1}")
            out[mod] = arr
        if mask is not None:
            if mask.steps != 1:
                raise DataValidationError(f"Máscara deve cobrir exatamente um passo (recebido {mask.steps})")
            mask.check_dims(dims)
        return out

    def _freeze_leftmost(self) -> None:
        """Congela o passo mais antigo da janela e avança a fronteira."""
        left, right = self.window.covered
        first = self.window.window(left, left)
        with torch.no_grad():
            traj = forward_sequence(
                self.params, self.topology, first, 1, "posterior",
                {m: self._eps[m][left - 1].reshape(1, 1, -1) for m in MODULES},
                initial_state=self.boundary,
            )
        self.boundary = traj.final_state.detach()
        for m in MODULES:
            self._frozen_mu[m].append(first.mu[m][0, 0].detach().clone())
            self._frozen_sigma[m].append(first.sigma[m][0, 0].detach().clone())
        rest = self.window.window(left + 1, right) if right > left else None
        self.window = AdaptivePosterior(
            mu={m: rest.mu[m].clone() for m in MODULES},
            sigma={m: rest.sigma[m].clone() for m in MODULES},
            sequence_ids=self.window.sequence_ids,
            first_step=left + 1,
        ) if rest is not None else None
        for mod in MODALITIES:
            self._obs[mod].pop(0)
        self._masks.pop(0)

    def _append(self, obs: Dict[str, np.ndarray], mask: ObservationMask) -> None:
        t = self.t + 1
        fresh = AdaptivePosterior.zeros(self.topology, 1, (0,), first_step=t)
        if self.window is None:
            self.window = fresh
        else:
            self.window = AdaptivePosterior(
                mu={m: torch.cat([self.window.mu[m], fresh.mu[m]], dim=1) for m in MODULES},
                sigma={m: torch.cat([self.window.sigma[m], fresh.sigma[m]], dim=1) for m in MODULES},
                sequence_ids=self.window.sequence_ids,
                first_step=self.window.first_step,
            )
        for mod in MODALITIES:
            self._obs[mod].append(torch.from_numpy(obs[mod]))
        self._masks.append(mask)
        for m in MODULES:
            self._eps[m].append(torch.from_numpy(self._rng.standard_normal(self.topology.module(m).z_size)))
        self.t = t

    def _window_inputs(self):
        left, right = self.window.covered
        obs = {mod: torch.stack(self._obs[mod]).unsqueeze(0) for mod in MODALITIES}
        record = {m: torch.stack(self._eps[m][left - 1:right]).unsqueeze(0) for m in MODULES}
        return obs, ObservationMask.concat(self._masks), record

    def _fresh_eps(self, n: int) -> Dict[str, torch.Tensor]:
        return {m: torch.from_numpy(self._rng.standard_normal((1, n, self.topology.module(m).z_size)))
                for m in MODULES}

    # ------------------------------------------------------------------
    def step(self, observation: Mapping[str, np.ndarray], mask: Optional[ObservationMask] = None) -> StepResult:
        obs_t = self._validate(observation, mask)
        H = self.config.window
        if self.window is not None and self.window.steps >= H:
            self._freeze_leftmost()
        self._append(obs_t, mask if mask is not None else self.policy)

        t = self.t
        obs, win_mask, record = self._window_inputs()
        n = self.window.steps
        targets = self.window.tensors()
        opt = OptimizerState.zeros(targets) if self.config.optimizer == "radam" else None
        objective = Objective.window(t, H)

        trace: List[float] = []
        for _ in range(self.config.iterations):
            eps = record if self.config.fixed_epsilon else self._fresh_eps(n)
            grads = backward(objective, self.params, self.topology, self.window, obs, win_mask, eps,
                             self.config.W, boundary=self.boundary, wrt_weights=False)
            trace.append(grads.value)
            named = grads.groups()
            if opt is None:
                sgd_update(targets, named, self.config.lr)
            else:
                radam_update(opt, targets, named, self.config.lr)

        with torch.no_grad():
            traj = forward_sequence(self.params, self.topology, self.window, n, "posterior", record,
                                    initial_state=self.boundary)
            terms = trajectory_terms(traj, obs, win_mask, self.config.W)
        self._last_state = traj.final_state.detach()
        return self._result(traj, terms, obs, tuple(trace))

    def _result(self, traj, terms, obs, trace) -> StepResult:
        k = traj.steps - 1
        x_hat = _row(traj.x_hat, k)
        truth = {mod: obs[mod][0, k].numpy() for mod in MODALITIES}
        errors = {mod: float(np.mean((truth[mod] - x_hat[mod]) ** 2)) for mod in MODALITIES}
        errors["all"] = float(np.mean(np.concatenate([(truth[mod] - x_hat[mod]) ** 2 for mod in MODALITIES])))
        views = {}
        for res, sl in self.topology.vision.group_slices().items():
            views[res] = x_hat[EXTERO][sl]
            errors[f"res{res}"] = float(np.mean((truth[EXTERO][sl] - views[res]) ** 2))

        step_terms = {"total": float(terms.total[0, k])}
        step_terms.update({f"accuracy.{mod}": float(v[0, k]) for mod, v in terms.accuracy.items()})
        step_terms.update({f"complexity.{m}": float(v[0, k]) for m, v in terms.complexity.items()})
        return StepResult(
            step=self.t,
            x_hat=x_hat,
            views=views,
            prior_mu=_row(traj.prior_mu, k),
            prior_sigma=_row(traj.prior_sigma, k),
            post_mu=_row(traj.post_mu, k),
            post_sigma=_row(traj.post_sigma, k),
            z=_row(traj.z, k),
            terms=step_terms,
            window_free_energy=float(terms.total.sum()),
            errors=errors,
            trace=trace,
            rollout=self.rollout(self.config.horizon) if self.config.horizon else None,
        )

    # ------------------------------------------------------------------
    def rollout(self, horizon: int, deterministic: bool = False) -> Dict[str, np.ndarray]:
        """Continua pela prior a partir do estado em t, sem consumir observações nem alterar a sessão."""
        if horizon < 0:
            raise ConfigError(f"Horizonte negativo: {horizon}")
        if self.t < 1 or self._last_state is None:
            raise ContractError("Rollout exige pelo menos uma observação na sessão")
        dims = self.topology.modality_dims
        if horizon == 0:
            return {mod: np.zeros((0, dims[mod])) for mod in MODALITIES}
        rng = None if deterministic else np.random.default_rng([self.config.seed, *self.seed_parts, self.t, 1])
        with torch.no_grad():
            traj = forward_sequence(self.params, self.topology, None, horizon, "prior", rng,
                                    initial_state=self._last_state, deterministic=deterministic)
        return {mod: traj.x_hat[mod][0].numpy().copy() for mod in MODALITIES}

    def final_adaptive(self) -> AdaptivePosterior:
        """Variáveis adaptativas dos passos 1..t: congeladas seguidas das da janela."""
        mu = {m: list(self._frozen_mu[m]) for m in MODULES}
        sigma = {m: list(self._frozen_sigma[m]) for m in MODULES}
        if self.window is not None:
            for m in MODULES:
                mu[m] += [v for v in self.window.mu[m][0].detach()]
                sigma[m] += [v for v in self.window.sigma[m][0].detach()]
        if self.t == 0:
            return AdaptivePosterior.zeros(self.topology, 0, (0,))
        return AdaptivePosterior(
            mu={m: torch.stack(mu[m]).unsqueeze(0).clone() for m in MODULES},
            sigma={m: torch.stack(sigma[m]).unsqueeze(0).clone() for m in MODULES},
            sequence_ids=(0,),
        )

    def epsilon_record(self) -> Dict[str, torch.Tensor]:
        return {
            m: (torch.stack(self._eps[m]).unsqueeze(0) if self._eps[m]
                else torch.zeros(1, 0, self.topology.module(m).z_size, dtype=DTYPE))
            for m in MODULES
        }


def open_session(checkpoint: Checkpoint, config: InferConfig, seed_parts: Sequence[int] = (0,)) -> InferenceSession:
    checkpoint.topology.validate_invariants()
    known = checkpoint.topology.vision.resolutions
    if config.resolutions is not None:
        unknown = [r for r in config.resolutions if r not in known]
        if unknown:
            raise ConfigError(f"Resoluções {unknown} não existem no checkpoint (tem {list(known)})",
                              keys=["infer.resolutions"])
    return InferenceSession(checkpoint, config, seed_parts)
