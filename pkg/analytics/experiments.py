# analytics/experiments.py
# -----------------------------------------------------------------------------
# Execuções completas em escala de bancada. Cada função recebe a configuração
# efetiva e um diretório de run e grava tudo dentro dele:
#
#   experiment_1  incerteza da prior por tarefa + mapas de ablação
#   experiment_2  robustez a máscaras de resolução, com/sem propriocepção
#   experiment_3  interferência por balanço de dados
#   experiment_sweep  varredura (itr, H) de inferência
#
# O resumo devolvido (dict) vai para o manifesto do run.
# -----------------------------------------------------------------------------
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd

from analytics.ablation import ablate
from analytics.processing import (
    paired_t_test,
    uncertainty_by_network,
    uncertainty_stats,
    uncertainty_table,
)
from analytics.protocols import (
    condition_label,
    inference_sweep,
    interference_protocol,
    resolution_conditions,
    robustness_protocol,
)
from config.errors import DataValidationError
from config.run_config import RunConfig
from inference.trials import TrialSet, run_trials
from learning.trainer import fit, save_history
from network.topology import MODULES
from simulator.sequences import SequenceBatch
from simulator.tasks import generate
from simulator.world import TASK_R, TASK_W
from storage.checkpoint import Checkpoint, save_checkpoint
from storage.dataset import save_dataset
from storage.trial_store import export_trials

logger = logging.getLogger(__name__)


def dataset_pool(run: RunConfig) -> SequenceBatch:
    exp = run.experiment
    counts = {
        "train": {TASK_R: exp.train_per_task, TASK_W: exp.train_per_task},
        "test": {TASK_R: exp.test_per_task, TASK_W: exp.test_per_task},
    }
    return generate(run.world, counts, exp.data_seed)


def train_networks(run: RunConfig, train: SequenceBatch, out_dir: Path) -> Dict[str, Checkpoint]:
    """Uma rede por semente; checkpoints e históricos em out_dir/networks."""
    networks = {}
    for seed in run.experiment.seeds:
        ck, history = fit(train, run.topology, run.train.model_copy(update={"seed": int(seed)}))
        save_checkpoint(ck, out_dir / "networks" / f"seed{seed}.pvck")
        save_history(history, out_dir / "networks" / f"history_seed{seed}.csv")
        networks[str(seed)] = ck
    return networks


def _paired(a: pd.Series, b: pd.Series) -> dict:
    a, b = a.sort_index(), b.sort_index()
    try:
        return paired_t_test(a.to_numpy(), b.loc[a.index].to_numpy()).as_dict()
    except DataValidationError as exc:
        logger.warning("Teste pareado não calculado: %s", exc)
        return {"t": np.nan, "df": len(a) - 1, "p": np.nan}


def experiment_1(run: RunConfig, out_dir: Path, threads: int = 1) -> Dict[str, str]:
    out_dir = Path(out_dir)
    pool = dataset_pool(run)
    save_dataset(pool, out_dir / "data" / "dataset.pvds")
    networks = train_networks(run, pool.select(split="train"), out_dir)
    test = pool.select(split="test")

    trials = TrialSet()
    for network, ck in networks.items():
        trials.extend(run_trials(ck, test, run.infer, network=network, threads=threads))
    export_trials(trials, out_dir / "trials", run.topology.vision.resolutions)

    table = uncertainty_table(trials)
    table.to_csv(out_dir / "uncertainty_trials.csv", index=False)
    uncertainty_stats(table).to_csv(out_dir / "uncertainty_stats.csv", index=False)

    per_net = uncertainty_by_network(table)
    rows = []
    for metric in ("mean_sigma", "variability"):
        for m in [*MODULES, "all"]:
            sel = per_net if m == "all" else per_net[per_net["module"] == m]
            by_task = sel.groupby(["task", "network"])[metric].mean()
            w, r = by_task.loc[TASK_W], by_task.loc[TASK_R]
            rows.append({"metric": metric, "module": m, "mean_W": float(w.mean()), "mean_R": float(r.mean()),
                         "networks_W_gt_R": int((w > r.loc[w.index]).sum()), **_paired(w, r)})
    tests = pd.DataFrame(rows)
    tests.to_csv(out_dir / "uncertainty_tests.csv", index=False)

    first = str(run.experiment.seeds[0])
    ck = networks[first]
    for task in (TASK_R, TASK_W):
        subset = trials.filter(task=task, network=first)
        maps = [ablate(ck, subset, m) for m in MODULES]
        scale = max(float(a.maps.max(initial=0.0)) for a in maps)
        for amap in maps:
            amap.export(out_dir / "ablation" / f"seed{first}" / task, scale=scale)
        pd.concat([a.to_frame() for a in maps], ignore_index=True).to_csv(
            out_dir / "ablation" / f"seed{first}" / f"ablation_{task}.csv", index=False)

    overall = tests[(tests["metric"] == "variability") & (tests["module"] == "all")].iloc[0]
    logger.info("Experimento 1: variabilidade W > R em %d de %d redes", overall["networks_W_gt_R"], len(networks))
    return {"networks_W_gt_R": str(int(overall["networks_W_gt_R"])), "networks": str(len(networks))}


def experiment_2(run: RunConfig, out_dir: Path, threads: int = 1) -> Dict[str, str]:
    out_dir = Path(out_dir)
    pool = dataset_pool(run)
    save_dataset(pool, out_dir / "data" / "dataset.pvds")
    networks = train_networks(run, pool.select(split="train"), out_dir)

    resolutions = run.topology.vision.resolutions
    if run.experiment.resolution_conditions is None:
        conditions = resolution_conditions(resolutions)
    else:
        conditions = [(tuple(c.resolutions), c.proprio) for c in run.experiment.resolution_conditions]
    table = robustness_protocol(networks, pool.select(split="test"), conditions, run.infer, threads)
    table.to_frame().to_csv(out_dir / "robustness_errors.csv", index=False)

    lowest = (min(resolutions),)
    with_p = table.network_errors(condition_label((lowest, True)))
    without = table.network_errors(condition_label((lowest, False)))
    result = _paired(with_p, without)
    wins = int((with_p < without.loc[with_p.index]).sum())
    pd.DataFrame([{"condition": f"res={lowest[0]}", "networks_with_lt_without": wins, **result}]).to_csv(
        out_dir / "robustness_tests.csv", index=False)
    logger.info("Experimento 2: com propriocepção < sem em %d de %d redes", wins, len(networks))
    return {"networks_with_lt_without": str(wins), "networks": str(len(networks))}


def experiment_3(run: RunConfig, out_dir: Path, threads: int = 1) -> Dict[str, str]:
    out_dir = Path(out_dir)
    exp = run.experiment
    result = interference_protocol(
        run.world, run.topology, run.train, run.infer, exp.seeds,
        fixed=exp.interference_fixed, varied=exp.interference_varied, test_per_task=exp.test_per_task,
        data_seed=exp.data_seed, threads=threads,
    )
    result.table.to_frame().to_csv(out_dir / "interference_errors.csv", index=False)
    result.tests.to_csv(out_dir / "interference_tests.csv", index=False)
    return {"cells": str(len(result.table.aggregate))}


def experiment_sweep(run: RunConfig, out_dir: Path, threads: int = 1,
                     checkpoint: Optional[Checkpoint] = None) -> Dict[str, str]:
    out_dir = Path(out_dir)
    pool = dataset_pool(run)
    if checkpoint is None:
        first = run.experiment.seeds[0]
        checkpoint = train_networks(run.model_copy(update={
            "experiment": run.experiment.model_copy(update={"seeds": (first,)})
        }), pool.select(split="train"), out_dir)[str(first)]
    sweep = inference_sweep(checkpoint, pool.select(split="test"), run.infer,
                            run.experiment.sweep_iterations, run.experiment.sweep_windows, threads)
    sweep.to_csv(out_dir / "sweep.csv", index=False)
    best = sweep.loc[sweep["error"].idxmin()]
    return {"best_iterations": str(int(best["iterations"])), "best_window": str(int(best["window"]))}
