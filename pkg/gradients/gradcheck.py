# gradients/gradcheck.py
# -----------------------------------------------------------------------------
# Oráculo de diferenças finitas centrais para os gradientes do engine e teste
# de fumaça na escala completa (só forma, tempo e memória; sem treino).
# -----------------------------------------------------------------------------

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import torch

from config.errors import GradientCheckError
from gradients.adaptive import AdaptivePosterior
from gradients.engine import GradientSet, Objective, backward, objective_value, window_boundary
from network.core import DTYPE, epsilon_streams
from network.parameters import init_parameters
from network.topology import MODALITIES, MODULES, NetworkTopology

logger = logging.getLogger(__name__)

REL_FLOOR = 1e-5


@dataclass
class GradCheckReport:
    tolerance: float
    rows: List[Dict[str, object]] = field(default_factory=list)

    @property
    def failures(self) -> List[str]:
        return [f"{r['objective']}:{r['group']}" for r in self.rows if not r["passed"]]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_error(self) -> float:
        return max((float(r["max_rel_error"]) for r in self.rows), default=0.0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=["objective", "group", "n_elements", "max_rel_error", "passed"])

    def raise_for_failures(self) -> None:
        if self.failures:
            raise GradientCheckError(
                f"Gradientes acima da tolerância {self.tolerance:g}", self.failures
            )


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / scale


def _numeric_gradient(fn, target: torch.Tensor, step: float) -> np.ndarray:
    """Diferença central elemento a elemento; `target` é alterado no lugar e restaurado."""
    flat = target.view(-1)
    out = np.empty(flat.numel())
    for i in range(flat.numel()):
        keep = float(flat[i])
        flat[i] = keep + step
        up = fn()
        flat[i] = keep - step
        down = fn()
        flat[i] = keep
        out[i] = (up - down) / (2.0 * step)
    return out.reshape(tuple(target.shape))


def _problem(topology: NetworkTopology, seed: int, T: int, batch: int):
    rng = np.random.default_rng([seed, 17])
    params = init_parameters(topology, seed)
    ids = list(range(batch))
    adaptive = AdaptivePosterior(
        mu={m: torch.from_numpy(rng.normal(0.0, 0.5, (batch, T, topology.module(m).z_size))) for m in MODULES},
        sigma={m: torch.from_numpy(rng.normal(0.0, 0.5, (batch, T, topology.module(m).z_size))) for m in MODULES},
        sequence_ids=tuple(ids),
    )
    observations = {
        mod: torch.from_numpy(rng.uniform(-0.9, 0.9, (batch, T, dim)))
        for mod, dim in topology.modality_dims.items()
    }
    eps = epsilon_streams(topology, ids, T, [seed, 23])
    return params, adaptive, observations, eps


def check_gradients(
    topology: Optional[NetworkTopology] = None,
    seed: int = 0,
    tolerance: float = 1e-4,
    *,
    T: int = 5,
    batch: int = 2,
    step: float = 1e-5,
    W: float = 1.0,
    window: Tuple[int, int] = (5, 3),
    corrupt: Optional[Tuple[str, float]] = None,
) -> GradCheckReport:
    """
    Compara backward() com diferenças centrais em todos os grupos treináveis,
    para o objetivo da sequência e para o da janela (t, H) com fronteira fixa.

    `corrupt=(grupo, fração)` multiplica o gradiente analítico do grupo por
    (1 + fração); serve para provar que o relatório acusa a falha.
    """
    topology = (topology or NetworkTopology.tiny()).validate_invariants()
    params, adaptive, observations, eps = _problem(topology, seed, T, batch)
    report = GradCheckReport(tolerance=tolerance)

    t, H = window
    objectives = {"sequence": (Objective.sequence(), None)}
    win = Objective.window(t, H)
    left, _ = win.bounds(1, T)
    objectives["window"] = (win, window_boundary(params, topology, adaptive, left, eps))

    for label, (objective, boundary) in objectives.items():
        grads: GradientSet = backward(objective, params, topology, adaptive, observations, None, eps, W,
                                      boundary=boundary)
        analytic = grads.groups()
        if corrupt is not None and corrupt[0] in analytic:
            analytic[corrupt[0]] = analytic[corrupt[0]] * (1.0 + corrupt[1])

        live = params.clone()
        live_adaptive = adaptive.detached()
        targets = dict(live.weights)
        targets.update(live_adaptive.tensors())

        def value() -> float:
            return objective_value(objective, live, topology, live_adaptive, observations, None, eps, W,
                                   boundary=boundary)

        for name, target in targets.items():
            numeric = _numeric_gradient(value, target, step)
            err = _relative_error(analytic[name].detach().numpy(), numeric)
            worst = float(err.max()) if err.size else 0.0
            report.rows.append({
                "objective": label,
                "group": name,
                "n_elements": int(target.numel()),
                "max_rel_error": worst,
                "passed": worst <= tolerance,
            })
        logger.info("Checagem %s: %d grupos, maior erro relativo %.3e", label, len(targets),
                    max(r["max_rel_error"] for r in report.rows if r["objective"] == label))
    return report


@dataclass(frozen=True)
class SmokeReport:
    n_parameters: int
    extero_dim: int
    proprio_dim: int
    steps: int
    seconds: float
    tensor_megabytes: float
    free_energy: float


def paper_scale_smoke_test(seed: int = 0, T: int = 2) -> SmokeReport:
    """Constrói a topologia completa e faz um forward/backward sobre T passos."""
    topology = NetworkTopology.paper().validate_invariants()
    started = time.perf_counter()
    params = init_parameters(topology, seed)
    adaptive = AdaptivePosterior.zeros(topology, T, (0,))
    observations = {
        mod: torch.zeros(1, T, dim, dtype=DTYPE) for mod, dim in topology.modality_dims.items()
    }
    eps = epsilon_streams(topology, [0], T, [seed])
    grads = backward(Objective.sequence(), params, topology, adaptive, observations, None, eps, 0.005)
    elapsed = time.perf_counter() - started

    nbytes = sum(v.numel() * v.element_size() for v in params.weights.values())
    nbytes += sum(v.numel() * v.element_size() for v in grads.groups().values())
    report = SmokeReport(
        n_parameters=params.n_parameters(),
        extero_dim=topology.modality_dims[MODALITIES[0]],
        proprio_dim=topology.modality_dims[MODALITIES[1]],
        steps=T,
        seconds=elapsed,
        tensor_megabytes=nbytes / 2 ** 20,
        free_energy=grads.value,
    )
    logger.info(
        "Escala completa: %d parâmetros, visão %d + propriocepção %d dims, %.2f s, %.1f MB",
        report.n_parameters, report.extero_dim, report.proprio_dim, report.seconds, report.tensor_megabytes,
    )
    return report
