# simulator/scaling.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.errors import DataValidationError

LIMIT = 0.9


@dataclass(frozen=True)
class ScalingRecord:
    """Mínimo e máximo por dimensão usados na normalização (para ida e volta)."""

    minimum: Tuple[float, ...]
    maximum: Tuple[float, ...]

    def as_dict(self) -> dict:
        return {"minimum": list(self.minimum), "maximum": list(self.maximum)}

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingRecord":
        return cls(minimum=tuple(map(float, data["minimum"])), maximum=tuple(map(float, data["maximum"])))


def normalize(raw: np.ndarray, record: Optional[ScalingRecord] = None) -> Tuple[np.ndarray, ScalingRecord]:
    """
    Mapeia cada dimensão (último eixo) de [mín, máx] para [-0.9, 0.9].

    Sem `record`, mínimo e máximo são tirados de todos os demais eixos.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if record is None:
        flat = raw.reshape(-1, raw.shape[-1])
        record = ScalingRecord(minimum=tuple(flat.min(axis=0)), maximum=tuple(flat.max(axis=0)))
    lo = np.asarray(record.minimum)
    hi = np.asarray(record.maximum)
    degenerate = np.flatnonzero(~(hi > lo))
    if degenerate.size:
        raise DataValidationError(
            f"Dimensão {int(degenerate[0])} degenerada (máx = mín = {lo[degenerate[0]]}); não dá para normalizar"
        )
    unit = (raw - lo) / (hi - lo)
    return LIMIT * (2.0 * unit - 1.0), record


def denormalize(values: np.ndarray, record: ScalingRecord) -> np.ndarray:
    lo = np.asarray(record.minimum)
    hi = np.asarray(record.maximum)
    unit = (np.asarray(values, dtype=np.float64) / LIMIT + 1.0) / 2.0
    return lo + unit * (hi - lo)
