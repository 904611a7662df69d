# storage/frames.py
# -----------------------------------------------------------------------------
# Exporta quadros como graymap binário (P5) via Pillow, com um arquivo .txt ao
# lado documentando o mapeamento linear valor -> intensidade.
#
#   modo "signal": [-0.9, 0.9] -> [0, 255]
#   modo "map":    [0, máx]    -> [0, 255] (escala pelo máximo do quadro)
# -----------------------------------------------------------------------------

from __future__ import annotations

import os
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from PIL import Image

from config.errors import DataValidationError

FrameMode = Literal["signal", "map"]


def quantize(pixels: np.ndarray, mode: FrameMode = "signal", scale: Optional[float] = None) -> np.ndarray:
    values = np.asarray(pixels, dtype=np.float64)
    if mode == "signal":
        unit = (np.clip(values, -0.9, 0.9) + 0.9) / 1.8
    elif mode == "map":
        if float(values.min(initial=0.0)) < 0.0:
            raise DataValidationError("Mapas de ablação precisam ser não negativos")
        top = float(values.max(initial=0.0)) if scale is None else float(scale)
        unit = np.zeros_like(values) if top <= 0.0 else np.clip(values / top, 0.0, 1.0)
    else:
        raise DataValidationError(f"Modo de quadro desconhecido: {mode!r}")
    return np.rint(unit * 255.0).astype(np.uint8)


def export_frame(
    pixels: np.ndarray,
    resolution: int,
    path: str | os.PathLike,
    mode: FrameMode = "signal",
    scale: Optional[float] = None,
) -> Path:
    values = np.asarray(pixels, dtype=np.float64).reshape(-1)
    if values.size != resolution * resolution:
        raise DataValidationError(f"{values.size} pixels não formam um quadro {resolution}x{resolution}")
    image = quantize(values, mode, scale).reshape(resolution, resolution)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image).save(path, format="PPM")

    if mode == "signal":
        mapping = "valor v em [-0.9, 0.9] -> round((v + 0.9) / 1.8 * 255)"
    else:
        top = float(values.max(initial=0.0)) if scale is None else float(scale)
        mapping = f"valor v em [0, {top:.12g}] -> round(v / {top:.12g} * 255)"
    path.with_suffix(".txt").write_text(
        f"formato: P5 {resolution} {resolution} 255\nmodo: {mode}\nmapeamento: {mapping}\n",
        encoding="utf-8",
    )
    return path


def read_frame(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.uint8).copy()
