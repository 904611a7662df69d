# analytics/test_processing.py
# -----------------------------------------------------------------------------
# Estatísticas de incerteza, tabelas de erro e teste t pareado, com casos
# construídos à mão.
# -----------------------------------------------------------------------------
from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest

from analytics.processing import (
    error_table,
    paired_t_test,
    trial_uncertainty,
    uncertainty_by_network,
    uncertainty_stats,
)
from config.errors import DataValidationError


def test_constant_sigma_has_no_variability():
    assert trial_uncertainty(np.ones((6, 3))) == (1.0, 0.0)


def test_alternating_sigma():
    sigma = np.tile([[1.0], [2.0]], (5, 4))
    mean, variability = trial_uncertainty(sigma)
    assert mean == pytest.approx(1.5)
    assert variability == pytest.approx(1.0)


def test_single_step_trial_is_rejected():
    with pytest.raises(DataValidationError, match="2 passos"):
        trial_uncertainty(np.ones((1, 3)))


def _uncertainty_rows(values):
    return pd.DataFrame(
        [(net, sid, task, trial, "Exe", mean, var) for net, sid, task, trial, mean, var in values],
        columns=["network", "sequence_id", "task", "trial", "module", "mean_sigma", "variability"],
    )


def test_two_stage_average_differs_from_flat_average():
    # tentativa A: 2 passos com σ = 1 ; tentativa B: 10 passos com σ = 3
    a = trial_uncertainty(np.ones((2, 1)))
    b = trial_uncertainty(np.full((10, 1), 3.0))
    table = _uncertainty_rows([("0", 0, "R", 0, a[0], a[1]), ("0", 1, "R", 0, b[0], b[1])])
    stats = uncertainty_stats(table)
    assert stats["mean_sigma"].iloc[0] == pytest.approx(2.0)
    flat = np.concatenate([np.ones(2), np.full(10, 3.0)]).mean()
    assert flat != pytest.approx(2.0)


def test_uncertainty_stats_counts_and_order_invariance():
    rows = [("0", 0, "R", 0, 1.0, 0.1), ("0", 0, "R", 1, 1.2, 0.3), ("1", 1, "R", 0, 0.8, 0.2),
            ("0", 2, "W", 0, 2.0, 0.9)]
    table = _uncertainty_rows(rows)
    stats = uncertainty_stats(table)
    shuffled = uncertainty_stats(table.sample(frac=1.0, random_state=3))
    pd.testing.assert_frame_equal(stats, shuffled)
    r = stats[stats["task"] == "R"].iloc[0]
    assert (r["n_trials"], r["n_sequences"], r["n_networks"]) == (3, 2, 2)
    assert r["variability"] == pytest.approx(0.2)
    assert (stats[["mean_sigma", "variability"]] >= 0).all().all()

    per_net = uncertainty_by_network(table)
    assert len(per_net) == 3


def test_missing_columns_are_reported():
    with pytest.raises(DataValidationError, match="colunas exigidas"):
        uncertainty_stats(pd.DataFrame({"task": ["R"]}))


# ============================================================
# ErrorTable
# ============================================================
def test_error_table_means_of_network_means():
    rows = pd.DataFrame({
        "condition": ["a", "a", "a", "b", "b"],
        "network": [0, 0, 1, 0, 1],
        "error": [1.0, 3.0, 4.0, 0.5, 0.5],
    })
    table = error_table(rows)
    assert table.mean("a") == pytest.approx((2.0 + 4.0) / 2)
    se = np.std([2.0, 4.0], ddof=1) / math.sqrt(2)
    agg = table.aggregate.set_index("condition")
    assert agg.loc["a", "se"] == pytest.approx(se)
    assert agg.loc["b", "se"] == 0.0
    assert agg.loc["a", "n_trials"] == 3 and agg.loc["a", "n_networks"] == 2
    assert list(table.network_errors("a")) == [2.0, 4.0]

    frame = table.to_frame()
    assert list(frame["network"]) == ["0", "1", "0", "1", "all", "all"]
    reordered = error_table(rows.iloc[::-1].reset_index(drop=True))
    pd.testing.assert_frame_equal(
        reordered.aggregate.sort_values("condition", ignore_index=True),
        table.aggregate.sort_values("condition", ignore_index=True),
    )


def test_error_table_rejects_empty_and_unknown_condition():
    with pytest.raises(DataValidationError):
        error_table(pd.DataFrame(columns=["condition", "network", "error"]))
    table = error_table(pd.DataFrame({"condition": ["x"], "network": ["0"], "error": [1.0]}))
    with pytest.raises(DataValidationError, match="não está na tabela"):
        table.mean("y")


# ============================================================
# Teste t pareado
# ============================================================
def test_paired_t_test_reference_values():
    result = paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert result.t == pytest.approx(math.sqrt(5) * 3 / math.sqrt(2.5), rel=1e-12)
    assert result.t == pytest.approx(4.2426, abs=1e-4)
    assert result.df == 4
    assert result.p == pytest.approx(0.0132, abs=1e-4)


@pytest.mark.parametrize("a, b", [
    ([1, 2, 3], [1, 2, 3]),
    ([2, 3, 4, 5, 6], [1, 2, 3, 4, 5]),
])
def test_zero_difference_variance_is_an_error(a, b):
    with pytest.raises(DataValidationError, match="Variância"):
        paired_t_test(a, b)


def test_paired_t_test_needs_matching_pairs():
    with pytest.raises(DataValidationError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(DataValidationError):
        paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])
