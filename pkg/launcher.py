# launcher.py: ponto de entrada único: python launcher.py <comando> [opções]
#
# Comandos: gen-data, train, infer, ablate, exp {1,2,3,sweep}, check
# Todo comando grava num diretório de run próprio (--out), com config.yaml
# efetivo e manifest.json listando os hashes de entradas e saídas.
#
# Códigos de saída: 0 sucesso, 1 erro do usuário (PvrnnError, argumentos),
# 2 falha interna. Em erro, uma única linha no stderr:
#   erro=<Classe> mensagem=<texto>
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import torch

from config.errors import ConfigError, PvrnnError
from config.log import configure_logging
from config.run_config import RunConfig, dump_run_config, load_run_config
from config.settings import RUNS_DIR, THREADS

logger = logging.getLogger("launcher")

EXPERIMENTS = ("1", "2", "3", "sweep")


class _Parser(argparse.ArgumentParser):
    """Erros de argumento viram ConfigError (código 1) em vez de sys.exit(2)."""

    def error(self, message: str):  # type: ignore[override]
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="arquivo YAML de configuração")
    common.add_argument("--seed", type=int, default=None, help="semente (substitui a da configuração)")
    common.add_argument("--out", type=Path, default=None, help="diretório do run (precisa estar vazio)")
    common.add_argument("--threads", type=int, default=THREADS, help="threads do torch e do pool de tentativas")
    common.add_argument("--deterministic", action="store_true", help="algoritmos determinísticos do torch")

    parser = _Parser(prog="launcher.py", description="PV-RNN multimodal: dados, treino, inferência e experimentos")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gen-data", parents=[common], help="gera o conjunto sintético (treino + teste)")

    p = sub.add_parser("train", parents=[common], help="treina uma rede no split de treino")
    p.add_argument("--data", type=Path, required=True, help="arquivo de conjunto (.pvds)")

    p = sub.add_parser("infer", parents=[common], help="inferência online nas sequências de teste")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", default="test", help="split avaliado (padrão: test)")
    p.add_argument("--frames", action="store_true", help="exporta os quadros previstos da tentativa 0")

    p = sub.add_parser("ablate", parents=[common], help="mapas de ablação a partir de um run de inferência")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--trials", type=Path, required=True, help="trials.db de um run de inferência")
    p.add_argument("--module", required=True, help="Exe, Mul, Ext, Pro ou none")
    p.add_argument("--how", choices=("zero", "prior_mean"), default="zero")

    p = sub.add_parser("exp", parents=[common], help="experimentos completos")
    p.add_argument("which", choices=EXPERIMENTS)
    p.add_argument("--checkpoint", type=Path, default=None, help="só para sweep: reusa um checkpoint")

    p = sub.add_parser("check", parents=[common], help="checagem de gradientes por diferenças finitas")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--paper-scale", action="store_true", help="também roda o teste de fumaça na escala completa")
    return parser


# ============================================================
# Comandos
# ============================================================
def cmd_gen_data(args, run: RunConfig, out: Path) -> Dict[str, str]:
    from analytics.experiments import dataset_pool
    from storage.dataset import export_dataset_csv, save_dataset

    pool = dataset_pool(run)
    save_dataset(pool, out / "dataset.pvds")
    export_dataset_csv(pool, out / "proprio.csv")
    pool.summary().to_csv(out / "summary.csv", index=False)
    return {"sequences": str(len(pool)), "dataset_hash": pool.fingerprint()}


def cmd_train(args, run: RunConfig, out: Path) -> Dict[str, str]:
    from learning.trainer import fit, reconstruction_error, save_history
    from storage.checkpoint import save_checkpoint
    from storage.dataset import load_dataset

    data = load_dataset(args.data).select(split="train")
    ck, history = fit(data, run.topology, run.train, checkpoint_dir=out / "checkpoints")
    save_checkpoint(ck, out / "checkpoint.pvck")
    save_history(history, out / "history.csv")
    recon = reconstruction_error(ck, data)
    recon.to_csv(out / "reconstruction.csv", index=False)
    return {"final_free_energy": f"{history['total'].iloc[-1]:.10g}",
            "reconstruction_error": f"{recon['all'].mean():.10g}"}


def cmd_infer(args, run: RunConfig, out: Path) -> Dict[str, str]:
    from inference.trials import export_trial_frames, run_trials
    from storage.checkpoint import load_checkpoint
    from storage.dataset import load_dataset
    from storage.trial_store import export_trials

    ck = load_checkpoint(args.checkpoint, expected_topology=run.topology if args.config else None)
    data = load_dataset(args.data).select(split=args.split)
    trials = run_trials(ck, data, run.infer, threads=args.threads)
    export_trials(trials, out, ck.topology.vision.resolutions)
    if args.frames:
        for tr in trials:
            if tr.trial == 0:
                export_trial_frames(tr, ck.topology.vision.resolutions, out / "frames",
                                    channels=ck.topology.vision.channels)
    errors = trials.error_frame()
    return {"trials": str(len(trials)),
            "mean_error": f"{errors[errors['measure'] == 'all']['error'].mean():.10g}"}


def cmd_ablate(args, run: RunConfig, out: Path) -> Dict[str, str]:
    from analytics.ablation import ablate
    from storage.checkpoint import load_checkpoint
    from storage.trial_store import load_trials

    ck = load_checkpoint(args.checkpoint)
    module = None if args.module.lower() == "none" else args.module
    amap = ablate(ck, load_trials(args.trials), module, args.how)
    amap.export(out / "maps")
    amap.to_frame().to_csv(out / "ablation.csv", index=False)
    return {"module": args.module, "energy": f"{amap.energy:.10g}", "trials": str(amap.n_trials)}


def cmd_exp(args, run: RunConfig, out: Path) -> Dict[str, str]:
    from analytics import experiments
    from storage.checkpoint import load_checkpoint

    if args.which == "sweep":
        ck = load_checkpoint(args.checkpoint) if args.checkpoint else None
        return experiments.experiment_sweep(run, out, args.threads, checkpoint=ck)
    if args.checkpoint is not None:
        raise ConfigError("--checkpoint só é aceito por 'exp sweep'", keys=["--checkpoint"])
    runner: Callable = {"1": experiments.experiment_1, "2": experiments.experiment_2,
                        "3": experiments.experiment_3}[args.which]
    return runner(run, out, args.threads)


def cmd_check(args, run: RunConfig, out: Path) -> Dict[str, str]:
    from gradients.gradcheck import check_gradients, paper_scale_smoke_test

    report = check_gradients(seed=run.train.seed, tolerance=args.tolerance)
    report.to_frame().to_csv(out / "gradcheck.csv", index=False)
    notes = {"max_rel_error": f"{report.max_error:.3e}", "passed": str(report.passed)}
    if args.paper_scale:
        smoke = paper_scale_smoke_test(seed=run.train.seed)
        notes.update({f"smoke.{k}": str(v) for k, v in dataclasses.asdict(smoke).items()})
    report.raise_for_failures()
    return notes


COMMANDS: Dict[str, Callable] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "infer": cmd_infer,
    "ablate": cmd_ablate,
    "exp": cmd_exp,
    "check": cmd_check,
}


# ============================================================
# Orquestração
# ============================================================
def _effective_config(args) -> RunConfig:
    run = load_run_config(args.config)
    if args.seed is not None:
        run = run.with_seed(args.seed).model_copy(update={
            "experiment": run.experiment.model_copy(update={"data_seed": args.seed})
        })
    return run


def _run_dir(args) -> Path:
    if args.out is not None:
        out = args.out
    else:
        label = args.command + (f"-{args.which}" if args.command == "exp" else "")
        out = Path(RUNS_DIR) / f"{label}-seed{args.seed if args.seed is not None else 0}"
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"Diretório de saída já existe e não está vazio: {out}", keys=["--out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _inputs(args) -> List[Path]:
    return [p for p in (getattr(args, n, None) for n in ("config", "data", "checkpoint", "trials")) if p]


def run_command(argv: Optional[List[str]] = None) -> int:
    from storage.db import dispose_engines
    from storage.manifest import RunManifest, write_manifest

    args = build_parser().parse_args(argv)
    if args.threads < 1:
        raise ConfigError(f"--threads deve ser >= 1 (recebido {args.threads})", keys=["--threads"])
    torch.set_num_threads(args.threads)
    if args.deterministic:
        torch.use_deterministic_algorithms(True)

    run = _effective_config(args)
    missing = [str(p) for p in _inputs(args) if not Path(p).exists()]
    if missing:
        raise ConfigError(f"Entradas não encontradas: {missing}")
    out = _run_dir(args)
    dump_run_config(run, out / "config.yaml")
    manifest = RunManifest(command=" ".join(sys.argv[1:] if argv is None else argv),
                           seed=run.train.seed, config_yaml=run.to_yaml()).add_inputs(_inputs(args))

    logger.info("Comando %s em %s", args.command, out)
    try:
        notes = COMMANDS[args.command](args, run, out)
    finally:
        dispose_engines()
    manifest.notes.update({k: str(v) for k, v in (notes or {}).items()})
    write_manifest(out, manifest.collect_outputs(out))
    print(f"[OK] {args.command} concluído em {out}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    try:
        return run_command(argv)
    except PvrnnError as exc:
        print(f"erro={type(exc).__name__} mensagem={' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.debug("Falha interna", exc_info=True)
        print(f"erro={type(exc).__name__} mensagem={' '.join(str(exc).split())}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
