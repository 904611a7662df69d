# analytics/processing.py
# -----------------------------------------------------------------------------
# Módulo: analytics
# Responsabilidade: estatísticas sobre os registros de inferência.
#
# - uncertainty_stats: σ da prior em dois estágios (primeiro dentro de cada
#   tentativa, sobre passos e latentes; depois entre tentativas, sequências e
#   redes). A variabilidade é a média de |σ_t - σ_{t-1}|.
# - ErrorTable: erro de predição por condição, média das médias por rede e
#   erro padrão entre redes.
# - paired_t_test: teste t pareado bicaudal (scipy.stats).
#
# Funções puras: recebem DataFrames/TrialSets e devolvem cópias.
# -----------------------------------------------------------------------------

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from config.errors import DataValidationError
from inference.trials import TrialSet
from network.topology import MODULES

_ERROR_COLUMNS: List[str] = ["condition", "network", "error"]
_UNCERTAINTY_COLUMNS: List[str] = ["network", "sequence_id", "task", "trial", "module", "mean_sigma", "variability"]


def _validate_schema(df: pd.DataFrame, required: Iterable[str]) -> None:
    """
    Valida a presença das colunas obrigatórias no DataFrame.
    Lança DataValidationError com mensagem clara se algo estiver ausente.
    """
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataValidationError(
            f"DataFrame de entrada não possui as colunas exigidas: {missing}. "
            f"Colunas recebidas: {list(df.columns)}"
        )


# ============================================================
# Incerteza (σ da prior)
# ============================================================
def trial_uncertainty(sigma: np.ndarray) -> tuple[float, float]:
    """
    Primeiro estágio para uma tentativa: σ (T, z) -> (média de σ, média de |Δσ|).
    As duas médias são sobre passos e latentes.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] < 2:
        raise DataValidationError(
            f"Variabilidade de σ exige pelo menos 2 passos; recebido formato {sigma.shape}"
        )
    return float(sigma.mean()), float(np.abs(np.diff(sigma, axis=0)).mean())


def uncertainty_table(trials: TrialSet) -> pd.DataFrame:
    """Uma linha por (tentativa, módulo) com as médias do primeiro estágio."""
    rows = []
    for tr in trials:
        for m in MODULES:
            mean_sigma, variability = trial_uncertainty(tr.prior_sigma(m))
            rows.append((tr.network, tr.sequence_id, tr.task, tr.trial, m, mean_sigma, variability))
    return pd.DataFrame(rows, columns=_UNCERTAINTY_COLUMNS)


def uncertainty_stats(trials: TrialSet | pd.DataFrame) -> pd.DataFrame:
    """
    Segundo estágio: média por (tarefa, módulo) das médias por tentativa.

    Colunas: task, module, mean_sigma, variability, n_trials, n_sequences, n_networks.
    """
    table = trials if isinstance(trials, pd.DataFrame) else uncertainty_table(trials)
    _validate_schema(table, _UNCERTAINTY_COLUMNS)
    if table.empty:
        raise DataValidationError("Nenhuma tentativa para agregar")
    grp = table.groupby(["task", "module"], sort=True)
    out = grp.agg(
        mean_sigma=("mean_sigma", "mean"),
        variability=("variability", "mean"),
        n_trials=("trial", "size"),
        n_sequences=("sequence_id", "nunique"),
        n_networks=("network", "nunique"),
    ).reset_index()
    return out


def uncertainty_by_network(table: pd.DataFrame) -> pd.DataFrame:
    """Médias por (rede, tarefa, módulo), base dos testes pareados entre redes."""
    _validate_schema(table, _UNCERTAINTY_COLUMNS)
    return (
        table.groupby(["network", "task", "module"], sort=True)[["mean_sigma", "variability"]]
        .mean()
        .reset_index()
    )


# ============================================================
# Tabelas de erro
# ============================================================
def trial_errors(trials: TrialSet, measure: str) -> pd.DataFrame:
    """Erro médio sobre os passos de cada tentativa para a medida pedida (ex.: "res16", "all")."""
    rows = []
    for tr in trials:
        if not tr.steps:
            continue
        if measure not in tr.steps[0].errors:
            raise DataValidationError(
                f"Medida {measure!r} ausente; disponíveis: {sorted(tr.steps[0].errors)}"
            )
        rows.append((tr.network, tr.sequence_id, tr.task, tr.trial, float(tr.errors(measure).mean())))
    return pd.DataFrame(rows, columns=["network", "sequence_id", "task", "trial", "error"])


@dataclass(frozen=True)
class ErrorTable:
    per_network: pd.DataFrame  # condition, network, error, n_trials
    aggregate: pd.DataFrame  # condition, error, se, n_networks, n_trials

    def to_frame(self) -> pd.DataFrame:
        """Linhas por condição × rede seguidas das linhas agregadas (network = "all")."""
        per = self.per_network.assign(se=np.nan, n_networks=1)
        agg = self.aggregate.assign(network="all")
        cols = ["condition", "network", "error", "se", "n_networks", "n_trials"]
        return pd.concat([per[cols], agg[cols]], ignore_index=True)

    def mean(self, condition: str) -> float:
        row = self.aggregate[self.aggregate["condition"] == condition]
        if row.empty:
            raise DataValidationError(f"Condição {condition!r} não está na tabela")
        return float(row["error"].iloc[0])

    def network_errors(self, condition: str) -> pd.Series:
        sel = self.per_network[self.per_network["condition"] == condition]
        return sel.set_index("network")["error"].sort_index()


def error_table(rows: pd.DataFrame) -> ErrorTable:
    """
    Agrega linhas (condition, network, error), uma por tentativa.
    Ordem das condições preservada; resultado invariante à ordem das tentativas.
    """
    _validate_schema(rows, _ERROR_COLUMNS)
    if rows.empty:
        raise DataValidationError("Tabela de erros vazia")
    out = rows.copy()
    out["network"] = out["network"].astype(str)
    order = list(dict.fromkeys(out["condition"]))

    per = (
        out.groupby(["condition", "network"], sort=True)["error"]
        .agg(error="mean", n_trials="size")
        .reset_index()
    )
    per["condition"] = pd.Categorical(per["condition"], categories=order, ordered=True)
    per = per.sort_values(["condition", "network"], kind="mergesort", ignore_index=True)

    agg = per.groupby("condition", sort=True, observed=True).agg(
        error=("error", "mean"),
        se=("error", lambda s: float(s.std(ddof=1) / np.sqrt(len(s))) if len(s) > 1 else 0.0),
        n_networks=("network", "nunique"),
        n_trials=("n_trials", "sum"),
    ).reset_index()
    per["condition"] = per["condition"].astype(str)
    agg["condition"] = agg["condition"].astype(str)
    return ErrorTable(per_network=per, aggregate=agg)


# ============================================================
# Teste t pareado
# ============================================================
@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float

    def as_dict(self) -> dict:
        return {"t": self.t, "df": self.df, "p": self.p}


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Teste t pareado bicaudal; exige n >= 2 e variância não nula das diferenças."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataValidationError(f"Amostras pareadas com formatos diferentes: {a.shape} e {b.shape}")
    if a.size < 2:
        raise DataValidationError(f"Teste pareado exige pelo menos 2 pares; recebido {a.size}")
    diff = a - b
    if np.ptp(diff) == 0.0:
        raise DataValidationError("Variância das diferenças é zero; estatística t indefinida")
    result = stats.ttest_rel(a, b)
    return TTestResult(t=float(result.statistic), df=int(a.size - 1), p=float(result.pvalue))
