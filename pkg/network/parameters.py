# network/parameters.py
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

import numpy as np
import torch

from config.errors import ConfigError, NumericError
from network.topology import MODALITIES, MODULES, PARENT, HEAD_MODULE, NetworkTopology

DEFAULT_BIAS_STD = math.sqrt(10.0)  # N(0, 10) lido como variância 10


def weight_shapes(topology: NetworkTopology) -> Dict[str, Tuple[int, ...]]:
    """Formato (saída, entrada) de cada tensor treinável, em ordem fixa."""
    shapes: Dict[str, Tuple[int, ...]] = {}
    for name in MODULES:
        spec = topology.module(name)
        shapes[f"{name}.w_dd"] = (spec.d_size, spec.d_size)
        shapes[f"{name}.w_zd"] = (spec.d_size, spec.z_size)
        parent = PARENT[name]
        if parent is not None:
            shapes[f"{name}.w_hd"] = (spec.d_size, topology.module(parent).d_size)
        shapes[f"{name}.w_mu"] = (spec.z_size, spec.d_size)
        shapes[f"{name}.w_sigma"] = (spec.z_size, spec.d_size)
    for modality in MODALITIES:
        fan_in = topology.module(HEAD_MODULE[modality]).d_size
        for k, width in enumerate(topology.head_sizes(modality)):
            shapes[f"{modality}.head{k}.weight"] = (width, fan_in)
            shapes[f"{modality}.head{k}.bias"] = (width,)
            fan_in = width
        out_dim = topology.modality_dims[modality]
        shapes[f"{modality}.out.weight"] = (out_dim, fan_in)
        shapes[f"{modality}.out.bias"] = (out_dim,)
    return shapes


@dataclass(frozen=True)
class Parameters:
    """Pesos sinápticos (treináveis) e vieses recorrentes (fixos após a inicialização)."""

    weights: Mapping[str, torch.Tensor]
    biases: Mapping[str, torch.Tensor]

    def with_weights(self, weights: Mapping[str, torch.Tensor]) -> "Parameters":
        missing = set(self.weights) - set(weights)
        if missing:
            raise ConfigError(f"Pesos ausentes: {sorted(missing)}")
        return Parameters(weights=dict(weights), biases=self.biases)

    def clone(self) -> "Parameters":
        return Parameters(
            weights={k: v.detach().clone() for k, v in self.weights.items()},
            biases={k: v.detach().clone() for k, v in self.biases.items()},
        )

    @property
    def trainable_names(self) -> List[str]:
        return list(self.weights)

    def n_parameters(self) -> int:
        return sum(int(v.numel()) for v in self.weights.values())

    def fingerprint(self) -> str:
        """SHA-256 de todos os tensores, em ordem de nome."""
        h = hashlib.sha256()
        for group in (self.weights, self.biases):
            for name in sorted(group):
                h.update(name.encode())
                h.update(group[name].detach().cpu().numpy().astype("<f8").tobytes())
        return h.hexdigest()

    def check_finite(self) -> None:
        for name, tensor in {**self.weights, **self.biases}.items():
            if not bool(torch.isfinite(tensor).all()):
                raise NumericError(f"Parâmetro {name} contém valores não finitos")


def _xavier_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_parameters(
    topology: NetworkTopology,
    seed: int,
    bias_std: float = DEFAULT_BIAS_STD,
) -> Parameters:
    """
    Inicializa os parâmetros de forma determinística a partir da semente.

    - Matrizes: Xavier uniforme, limite sqrt(6 / (fan_in + fan_out)).
    - Vieses das cabeças: mesmo limite da camada a que pertencem (treináveis).
    - Vieses recorrentes: N(0, bias_std), sorteados uma vez e nunca otimizados.
    """
    topology.validate_invariants()
    rng = np.random.default_rng(seed)
    shapes = weight_shapes(topology)

    weights: Dict[str, torch.Tensor] = {}
    for name, shape in shapes.items():
        if name.endswith(".bias"):
            layer = shapes[name[: -len("bias")] + "weight"]
            fan_out, fan_in = layer
        else:
            fan_out, fan_in = shape
        weights[name] = torch.from_numpy(_xavier_uniform(rng, shape, fan_in, fan_out))

    biases = {
        f"{name}.bias": torch.from_numpy(rng.normal(0.0, bias_std, size=topology.module(name).d_size))
        for name in MODULES
    }
    return Parameters(weights=weights, biases=biases)
