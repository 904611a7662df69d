# simulator/world.py
# -----------------------------------------------------------------------------
# Mundo sintético: braço planar de dois elos numa tela unitária (y para cima),
# objeto da tarefa (barra rígida "R" ou faixa de limpeza "W") e renderização
# multirresolução em tons de cinza.
#
# Renderização: cobertura anti-aliased por superamostragem na maior resolução;
# as resoluções menores são médias em blocos (box filter) da maior. A escala de
# intensidade [0, 1] é mapeada linearmente para [-0.9, 0.9].
# -----------------------------------------------------------------------------

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.errors import ConfigError

TASK_R = "R"  # reposicionar: baixa variabilidade, carrega carga
TASK_W = "W"  # limpar: alta variabilidade, movimento oscilatório
TASKS: Tuple[str, ...] = (TASK_R, TASK_W)

ARM_INTENSITY = 1.0
OBJECT_INTENSITY = {TASK_R: 0.6, TASK_W: 0.45}
SUPERSAMPLE = 4


class JitterSpec(BaseModel):
    """Desvios por sequência: tempo das fases, amplitude do movimento e pose inicial."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    phase: float = Field(0.0, ge=0.0)
    amplitude: float = Field(0.0, ge=0.0)
    pose: float = Field(0.0, ge=0.0)

    def magnitude(self) -> float:
        return self.phase + self.amplitude + self.pose


class WorldSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    steps: int = Field(80, description="Comprimento T das sequências")
    resolutions: Tuple[int, ...] = (8, 16)
    base: Tuple[float, float] = (0.5, 0.08)
    link_lengths: Tuple[float, float] = (0.38, 0.32)
    link_width: float = 0.035
    start_effector: Tuple[float, float] = (0.22, 0.62)
    # análogo das três alturas de leito
    heights: Tuple[float, float, float] = (-0.06, 0.0, 0.06)
    bar_center: Tuple[float, float] = (0.72, 0.34)
    bar_half_length: float = 0.08
    lift: float = 0.22
    strip_center: Tuple[float, float] = (0.55, 0.28)
    strip_half_length: float = 0.16
    wipe_amplitude: float = 0.12
    wipe_cycles: float = 2.0
    load: float = 1.5
    link_masses: Tuple[float, float] = (1.0, 0.8)
    jitter_r: JitterSpec = JitterSpec(phase=0.01, amplitude=0.02, pose=0.01)
    jitter_w: JitterSpec = JitterSpec(phase=0.08, amplitude=0.3, pose=0.05)

    @field_validator("resolutions")
    @classmethod
    def _increasing(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not v or any(r < 1 for r in v) or any(a >= b for a, b in zip(v, v[1:])):
            raise ValueError(f"resoluções devem ser positivas e estritamente crescentes, recebido {v}")
        if any(v[-1] % r for r in v):
            raise ValueError(f"a maior resolução ({v[-1]}) precisa ser múltipla das demais {v}")
        return v

    @model_validator(mode="after")
    def _reachable(self) -> "WorldSpec":
        if self.steps < 1:
            raise ValueError("steps deve ser positivo")
        return self

    def jitter(self, task: str) -> JitterSpec:
        return self.jitter_r if task == TASK_R else self.jitter_w

    @property
    def vision_dim(self) -> int:
        return sum(r * r for r in self.resolutions)

    @property
    def proprio_dim(self) -> int:
        return 4  # dois ângulos + dois torques

    def spec_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


# ============================================================
# Cinemática
# ============================================================
@dataclass(frozen=True)
class ArmPose:
    q1: float
    q2: float

    def joints(self, spec: WorldSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Base, cotovelo e efetuador em coordenadas da tela."""
        l1, l2 = spec.link_lengths
        base = np.asarray(spec.base, dtype=np.float64)
        elbow = base + l1 * np.array([np.cos(self.q1), np.sin(self.q1)])
        tip = elbow + l2 * np.array([np.cos(self.q1 + self.q2), np.sin(self.q1 + self.q2)])
        return base, elbow, tip


def inverse_kinematics(target: np.ndarray, spec: WorldSpec) -> ArmPose:
    """Solução cotovelo-para-cima; alvos fora do alcance são trazidos para a borda."""
    l1, l2 = spec.link_lengths
    rel = np.asarray(target, dtype=np.float64) - np.asarray(spec.base)
    r = float(np.hypot(*rel))
    r = min(max(r, abs(l1 - l2) + 1e-6), l1 + l2 - 1e-6)
    c2 = (r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    q2 = -float(np.arccos(np.clip(c2, -1.0, 1.0)))
    q1 = float(np.arctan2(rel[1], rel[0]) - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2)))
    return ArmPose(q1=q1, q2=q2)


def torque_surrogate(pose: ArmPose, spec: WorldSpec, carried: float) -> Tuple[float, float]:
    """Momento gravitacional aproximado em cada junta (braços horizontais das massas)."""
    base, elbow, tip = pose.joints(spec)
    m1, m2 = spec.link_masses
    mid1 = (base + elbow) / 2.0
    mid2 = (elbow + tip) / 2.0
    tau1 = m1 * (mid1[0] - base[0]) + m2 * (mid2[0] - base[0]) + carried * (tip[0] - base[0])
    tau2 = m2 * (mid2[0] - elbow[0]) + carried * (tip[0] - elbow[0])
    return float(tau1), float(tau2)


# ============================================================
# Renderização
# ============================================================
@dataclass(frozen=True)
class SceneState:
    """Objeto da cena como segmento espesso; `kind` escolhe intensidade e espessura."""

    kind: Optional[str]
    start: Tuple[float, float] = (0.0, 0.0)
    stop: Tuple[float, float] = (0.0, 0.0)
    width: float = 0.04

    @classmethod
    def empty(cls) -> "SceneState":
        return cls(kind=None)


def _sample_grid(side: int) -> Tuple[np.ndarray, np.ndarray]:
    """Centros das subamostras; linha 0 da imagem é o topo da tela."""
    n = side * SUPERSAMPLE
    centers = (np.arange(n) + 0.5) / n
    xs, ys = np.meshgrid(centers, centers[::-1])
    return xs, ys


def _segment_mask(xs: np.ndarray, ys: np.ndarray, a, b, half_width: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    px, py = xs - a[0], ys - a[1]
    u = np.zeros_like(xs) if denom == 0.0 else np.clip((px * ab[0] + py * ab[1]) / denom, 0.0, 1.0)
    dx, dy = px - u * ab[0], py - u * ab[1]
    return (dx * dx + dy * dy) <= half_width * half_width


def _box_downsample(image: np.ndarray, factor: int) -> np.ndarray:
    side = image.shape[0] // factor
    return image.reshape(side, factor, side, factor).mean(axis=(1, 3))


def render_intensity(pose: Optional[ArmPose], scene: SceneState, spec: WorldSpec) -> np.ndarray:
    """Imagem na maior resolução, intensidades em [0, 1]; braço desenhado sobre o objeto."""
    side = spec.resolutions[-1]
    xs, ys = _sample_grid(side)
    layer = np.zeros_like(xs)
    if scene.kind is not None:
        obj = _segment_mask(xs, ys, scene.start, scene.stop, scene.width / 2.0)
        layer[obj] = OBJECT_INTENSITY[scene.kind]
    if pose is not None:
        base, elbow, tip = pose.joints(spec)
        arm = _segment_mask(xs, ys, base, elbow, spec.link_width / 2.0)
        arm |= _segment_mask(xs, ys, elbow, tip, spec.link_width / 2.0)
        layer[arm] = ARM_INTENSITY
    return _box_downsample(layer, SUPERSAMPLE)


def to_signal(intensity: np.ndarray) -> np.ndarray:
    """[0, 1] -> [-0.9, 0.9]."""
    return 0.9 * (2.0 * intensity - 1.0)


def render_views(
    pose: Optional[ArmPose],
    scene: SceneState,
    spec: WorldSpec,
    resolution: Optional[int] = None,
) -> np.ndarray:
    """
    Vetor de pixels (linha a linha) de uma resolução, ou de todas concatenadas
    em ordem crescente quando `resolution` é None.
    """
    top = render_intensity(pose, scene, spec)
    views: Dict[int, np.ndarray] = {}
    for r in spec.resolutions:
        img = top if r == spec.resolutions[-1] else _box_downsample(top, spec.resolutions[-1] // r)
        views[r] = to_signal(img).reshape(-1)
    if resolution is not None:
        if resolution not in views:
            raise ConfigError(f"Resolução {resolution} não está em {list(spec.resolutions)}")
        return views[resolution]
    return np.concatenate([views[r] for r in spec.resolutions])
