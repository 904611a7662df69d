# free_energy/test_terms.py
# -----------------------------------------------------------------------------
# Acurácia, complexidade (KL analítica), máscaras e somas por janela.
# -----------------------------------------------------------------------------

from __future__ import annotations

import numpy as np
import pytest
import torch
from scipy import integrate, stats

from config.errors import ConfigError, DataValidationError, NumericError
from free_energy.masks import ObservationMask
from free_energy.terms import (
    PAPER_W,
    accuracy_term,
    complexity_term,
    sequence_free_energy,
    step_free_energy,
    trajectory_terms,
    window_bounds,
    window_free_energy,
)
from gradients.adaptive import AdaptivePosterior
from network.core import LatentMoments, epsilon_streams, forward_sequence
from network.parameters import init_parameters
from network.topology import MODULES, NetworkTopology


def _t(values) -> torch.Tensor:
    return torch.as_tensor(np.asarray(values, dtype=np.float64))


def _moments(mu, sigma) -> LatentMoments:
    return LatentMoments(mu={m: _t(mu) for m in MODULES}, sigma={m: _t(sigma) for m in MODULES})


def test_accuracy_zero_for_perfect_prediction():
    x = {"extero": _t([[0.1, -0.4]]), "proprio": _t([[0.3]])}
    acc = accuracy_term(x, x)
    assert float(acc["extero"]) == 0.0 and float(acc["proprio"]) == 0.0


def test_accuracy_single_dim_value():
    acc = accuracy_term({"extero": _t([0.0]), "proprio": _t([0.9])}, {"extero": _t([0.0]), "proprio": _t([-0.9])})
    assert float(acc["proprio"]) == pytest.approx(1.62, abs=1e-12)


def test_accuracy_shape_mismatch():
    with pytest.raises(DataValidationError):
        accuracy_term({"extero": _t([[0.0, 0.0]]), "proprio": _t([[0.0]])},
                      {"extero": _t([[0.0]]), "proprio": _t([[0.0]])})


def test_masking_all_vision_keeps_proprio():
    x = {"extero": _t([[0.5, 0.5]]), "proprio": _t([[0.2]])}
    y = {"extero": _t([[0.0, 0.0]]), "proprio": _t([[0.0]])}
    mask = {"extero": _t([[0.0, 0.0]]), "proprio": _t([[1.0]])}
    full, masked = accuracy_term(x, y), accuracy_term(x, y, mask)
    assert float(masked["extero"]) == 0.0
    assert float(masked["proprio"]) == float(full["proprio"])


def test_mask_monotonicity_and_divisor():
    rng = np.random.default_rng(0)
    x = {"extero": _t(rng.uniform(-0.9, 0.9, (1, 6))), "proprio": _t([[0.0]])}
    y = {"extero": _t(rng.uniform(-0.9, 0.9, (1, 6))), "proprio": _t([[0.0]])}
    previous = -1.0
    for k in range(7):
        row = [1.0] * k + [0.0] * (6 - k)
        acc = float(accuracy_term(x, y, {"extero": _t([row]), "proprio": _t([[1.0]])})["extero"])
        assert acc >= previous
        previous = acc
    half = float(accuracy_term(x, y, {"extero": _t([[1, 1, 1, 0, 0, 0]]), "proprio": _t([[1.0]])})["extero"])
    expected = float((0.5 * (x["extero"][0, :3] - y["extero"][0, :3]) ** 2).sum()) / 6
    assert half == pytest.approx(expected, abs=1e-15)


def test_normalization_invariant_under_duplication():
    x = {"extero": _t([[0.5, -0.25]]), "proprio": _t([[0.0]])}
    y = {"extero": _t([[0.0, 0.5]]), "proprio": _t([[0.0]])}
    dup = lambda v: {"extero": torch.cat([v["extero"], v["extero"]], dim=-1), "proprio": v["proprio"]}  # noqa: E731
    assert float(accuracy_term(x, y)["extero"]) == float(accuracy_term(dup(x), dup(y))["extero"])


def test_kld_identity_and_half():
    same = _moments([[0.3, -0.2]], [[0.7, 1.4]])
    assert all(float(v) == 0.0 for v in complexity_term(same, same).values())
    kld = complexity_term(_moments([[1.0]], [[1.0]]), _moments([[0.0]], [[1.0]]))
    assert float(kld["Exe"]) == pytest.approx(0.5, abs=1e-12)


def test_kld_matches_quadrature():
    rng = np.random.default_rng(42)
    for _ in range(50):
        mq, mp = rng.uniform(-0.9, 0.9, 2)
        sq, sp = rng.uniform(0.3, 2.0, 2)
        q, p = stats.norm(mq, sq), stats.norm(mp, sp)
        lo, hi = mq - 12 * sq, mq + 12 * sq
        numeric, _ = integrate.quad(lambda x: q.pdf(x) * (q.logpdf(x) - p.logpdf(x)), lo, hi, epsabs=1e-12, limit=200)
        analytic = float(complexity_term(_moments([[mq]], [[sq]]), _moments([[mp]], [[sp]]))["Mul"])
        assert analytic == pytest.approx(numeric, abs=1e-6)


def test_kld_non_negative_on_random_moments():
    rng = np.random.default_rng(1)
    post = _moments(rng.uniform(-1, 1, (200, 5)), np.exp(rng.uniform(-3, 3, (200, 5))))
    prior = _moments(rng.uniform(-1, 1, (200, 5)), np.exp(rng.uniform(-3, 3, (200, 5))))
    for v in complexity_term(post, prior).values():
        assert bool((v >= -1e-15).all())


def test_non_finite_moments_raise():
    with pytest.raises(NumericError):
        complexity_term(_moments([[np.nan]], [[1.0]]), _moments([[0.0]], [[1.0]]))


def test_step_free_energy_combination():
    x = {"extero": _t([[0.5]]), "proprio": _t([[0.1]])}
    y = {"extero": _t([[0.0]]), "proprio": _t([[0.0]])}
    post, prior = _moments([[1.0]], [[1.0]]), _moments([[0.0]], [[1.0]])
    A = 0.5 * 0.25 + 0.5 * 0.01
    C = 4 * 0.5
    terms = step_free_energy(x, y, post, prior, None, PAPER_W)
    assert float(terms.total) == pytest.approx(A + 0.005 * C, abs=1e-15)
    assert float(step_free_energy(x, y, post, prior, None, 0.0).total) == pytest.approx(A, abs=1e-15)
    assert float(step_free_energy(x, x, prior, prior, None, PAPER_W).total) == 0.0


def test_window_bounds_follow_short_window_rule():
    assert window_bounds(1, 30) == (1, 1)
    assert window_bounds(10, 30) == (1, 10)
    assert window_bounds(45, 30) == (16, 45)
    with pytest.raises(DataValidationError):
        window_bounds(0, 30)
    with pytest.raises(DataValidationError):
        window_bounds(5, 0)


@pytest.fixture(scope="module")
def problem():
    topo = NetworkTopology.tiny()
    params = init_parameters(topo, seed=0)
    rng = np.random.default_rng(5)
    T = 6
    adaptive = AdaptivePosterior(
        mu={m: torch.from_numpy(rng.normal(size=(2, T, 3))) for m in MODULES},
        sigma={m: torch.from_numpy(rng.normal(size=(2, T, 3)) * 0.3) for m in MODULES},
        sequence_ids=(0, 1),
    )
    traj = forward_sequence(params, topo, adaptive, T, "posterior", epsilon_streams(topo, [0, 1], T, [0]))
    obs = {mod: torch.from_numpy(rng.uniform(-0.9, 0.9, (2, T, dim))) for mod, dim in topo.modality_dims.items()}
    return topo, traj, obs


def test_sequence_sum_decomposes(problem):
    topo, traj, obs = problem
    terms = trajectory_terms(traj, obs, None, PAPER_W)
    total = sequence_free_energy(traj, obs, None, PAPER_W)
    assert float(total) == pytest.approx(float(terms.total[:, :3].sum() + terms.total[:, 3:].sum()), abs=1e-12)
    assert float(total) == pytest.approx(float(terms.total[0].sum() + terms.total[1].sum()), abs=1e-12)


def test_window_equal_to_sequence_when_H_is_T(problem):
    topo, traj, obs = problem
    assert torch.equal(window_free_energy(traj, 6, 6, obs, None, PAPER_W), sequence_free_energy(traj, obs, None, PAPER_W))
    terms = trajectory_terms(traj, obs, None, PAPER_W)
    assert float(window_free_energy(traj, 4, 1, obs, None, PAPER_W)) == float(terms.total[:, 3].sum())


def test_length_mismatch_is_rejected(problem):
    topo, traj, obs = problem
    short = {mod: v[:, :4] for mod, v in obs.items()}
    with pytest.raises(DataValidationError):
        sequence_free_energy(traj, short, None, PAPER_W)
    with pytest.raises(DataValidationError):
        sequence_free_energy(traj, obs, ObservationMask.full(topo, 4), PAPER_W)


def test_empty_mask_leaves_only_complexity(problem):
    topo, traj, obs = problem
    terms = trajectory_terms(traj, obs, ObservationMask.empty(topo, 6), PAPER_W)
    assert float(terms.accuracy["extero"].abs().sum()) == 0.0
    assert float(terms.accuracy["proprio"].abs().sum()) == 0.0
    assert float(terms.total.sum()) > 0.0


def test_mask_constructors():
    topo = NetworkTopology.desk()
    low = ObservationMask.only(topo, 3, resolutions=(8,), proprio=False)
    assert low.extero.shape == (3, 320)
    assert int(low.extero[0].sum()) == 64 and bool(low.extero[0, :64].all())
    assert not low.proprio.any()
    assert ObservationMask.full(topo, 2).extero.all()
    with pytest.raises(ConfigError):
        ObservationMask.only(topo, 3, resolutions=(32,))


def test_mask_width_must_match_the_topology(problem):
    topo, traj, obs = problem
    good = ObservationMask.full(topo, 6)
    narrow = ObservationMask(extero=good.extero[:, :-1], proprio=good.proprio)
    with pytest.raises(DataValidationError, match="extero"):
        trajectory_terms(traj, obs, narrow, PAPER_W)
    with pytest.raises(DataValidationError, match="proprio"):
        ObservationMask.for_topology(topo, good.extero, np.ones((6, topo.proprio_dim + 2), dtype=bool))
    built = ObservationMask.for_topology(topo, good.extero.astype(int), good.proprio)
    assert built.extero.dtype == bool and built.extero.shape == good.extero.shape
