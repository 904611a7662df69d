# storage/trial_store.py
# -----------------------------------------------------------------------------
# Persistência dos registros de inferência em SQLite. Cada tentativa vira uma
# linha em `trial` (metadados + tensores num blob float64) e as medidas por
# passo (erros, termos da energia livre) vão para `trial_step`.
# O traço por rodada e os rollouts não são persistidos.
# -----------------------------------------------------------------------------
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch
from sqlalchemy import select

from config.errors import IntegrityError
from gradients.adaptive import AdaptivePosterior
from inference.session import StepResult
from inference.trials import TrialLog, TrialSet
from network.topology import EXTERO, MODALITIES, MODULES
from storage.db import session_factory
from storage.models import TrialStepORM, TrialORM

logger = logging.getLogger(__name__)

_MOMENTS = ("prior_mu", "prior_sigma", "post_mu", "post_sigma", "z")


def _arrays(trial: TrialLog) -> Dict[str, np.ndarray]:
    out: Dict[str, np.ndarray] = {}
    for key in _MOMENTS:
        for m in MODULES:
            out[f"{key}.{m}"] = np.stack([getattr(s, key)[m] for s in trial.steps])
    for mod in MODALITIES:
        out[f"x_hat.{mod}"] = trial.predictions(mod)
    for m in MODULES:
        out[f"adaptive.{m}.mu"] = trial.adaptive.mu[m][0].numpy()
        out[f"adaptive.{m}.sigma"] = trial.adaptive.sigma[m][0].numpy()
        out[f"epsilon.{m}"] = trial.epsilon[m][0].numpy()
    return out


def _pack(arrays: Dict[str, np.ndarray]) -> tuple[Dict[str, List[int]], bytes]:
    shapes = {name: list(a.shape) for name, a in arrays.items()}
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    return shapes, blob


def _unpack(shapes: Dict[str, List[int]], blob: bytes) -> Dict[str, np.ndarray]:
    out, offset = {}, 0
    for name, shape in shapes.items():
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        if offset + size > len(blob):
            raise IntegrityError(f"Blob da tentativa truncado no tensor {name}")
        out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += size
    if offset != len(blob):
        raise IntegrityError(f"Blob da tentativa com {len(blob) - offset} bytes sobrando")
    return out


def save_trials(trials: TrialSet, path: str | os.PathLike, resolutions: tuple[int, ...]) -> int:
    Session = session_factory(path)
    with Session() as db:
        for tr in trials:
            shapes, blob = _pack(_arrays(tr))
            row = TrialORM(
                network=tr.network, sequence_id=tr.sequence_id, task=tr.task, condition=tr.condition,
                trial=tr.trial, seed=list(tr.seed), steps=len(tr.steps), resolutions=list(resolutions),
                shapes=shapes, arrays=blob,
            )
            for s in tr.steps:
                row.measures.extend(TrialStepORM(step=s.step, measure=f"error.{k}", value=v) for k, v in s.errors.items())
                row.measures.extend(TrialStepORM(step=s.step, measure=f"term.{k}", value=v) for k, v in s.terms.items())
                row.measures.append(TrialStepORM(step=s.step, measure="window", value=s.window_free_energy))
            db.add(row)
        db.commit()
    logger.info("%d tentativas gravadas em %s", len(trials), path)
    return len(trials)


def _slices(resolutions: List[int], extero_dim: int) -> Dict[int, slice]:
    total = sum(r * r for r in resolutions)
    per = extero_dim // total if total else 0
    out, start = {}, 0
    for r in resolutions:
        out[r] = slice(start, start + per * r * r)
        start += per * r * r
    return out


def _to_log(row: TrialORM) -> TrialLog:
    arrays = _unpack(row.shapes, row.arrays)
    measures: Dict[int, Dict[str, float]] = {}
    for item in row.measures:
        measures.setdefault(item.step, {})[item.measure] = item.value
    slices = _slices(row.resolutions, arrays[f"x_hat.{EXTERO}"].shape[1])

    steps = []
    for k in range(row.steps):
        step = k + 1
        got = measures.get(step, {})
        x_hat = {mod: arrays[f"x_hat.{mod}"][k] for mod in MODALITIES}
        moments = {key: {m: arrays[f"{key}.{m}"][k] for m in MODULES} for key in _MOMENTS}
        steps.append(StepResult(
            step=step,
            x_hat=x_hat,
            views={r: x_hat[EXTERO][sl] for r, sl in slices.items()},
            terms={n[5:]: v for n, v in got.items() if n.startswith("term.")},
            window_free_energy=got.get("window", float("nan")),
            errors={n[6:]: v for n, v in got.items() if n.startswith("error.")},
            **moments,
        ))
    adaptive = AdaptivePosterior(
        mu={m: torch.from_numpy(arrays[f"adaptive.{m}.mu"]).unsqueeze(0) for m in MODULES},
        sigma={m: torch.from_numpy(arrays[f"adaptive.{m}.sigma"]).unsqueeze(0) for m in MODULES},
        sequence_ids=(0,),
    )
    return TrialLog(
        network=row.network, sequence_id=row.sequence_id, task=row.task, condition=row.condition,
        trial=row.trial, seed=tuple(row.seed), steps=steps, adaptive=adaptive,
        epsilon={m: torch.from_numpy(arrays[f"epsilon.{m}"]).unsqueeze(0) for m in MODULES},
    )


def load_trials(path: str | os.PathLike, network: Optional[str] = None) -> TrialSet:
    if not os.path.exists(path):
        raise IntegrityError(f"Banco de tentativas não encontrado: {path}")
    Session = session_factory(path)
    with Session() as db:
        query = select(TrialORM).order_by(TrialORM.network, TrialORM.sequence_id, TrialORM.trial)
        if network is not None:
            query = query.where(TrialORM.network == network)
        logs = [_to_log(row) for row in db.scalars(query).all()]
    return TrialSet().extend(logs)


def export_trials(trials: TrialSet, run_dir: str | os.PathLike, resolutions: tuple[int, ...]) -> Dict[str, str]:
    """Banco SQLite mais os dois CSVs (latentes e erros) dentro do diretório do run."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_trials(trials, run_dir / "trials.db", resolutions)
    trials.latent_frame().to_csv(run_dir / "latent_log.csv", index=False)
    trials.error_frame().to_csv(run_dir / "error_log.csv", index=False)
    return {"db": str(run_dir / "trials.db"), "latent": str(run_dir / "latent_log.csv"),
            "errors": str(run_dir / "error_log.csv")}
