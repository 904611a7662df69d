# simulator/test_tasks.py
# -----------------------------------------------------------------------------
# Gerador sintético: forma do conjunto, determinismo, ordem de variabilidade
# entre tarefas, renderização multirresolução e normalização.
# -----------------------------------------------------------------------------

from __future__ import annotations

import numpy as np
import pytest

from config.errors import ConfigError, DataValidationError
from simulator.scaling import ScalingRecord, denormalize, normalize
from simulator.tasks import generate, phase_schedule
from simulator.world import (
    JitterSpec,
    SceneState,
    WorldSpec,
    inverse_kinematics,
    render_intensity,
    render_views,
)

PAPER_COUNTS = {"train": {"R": 9, "W": 9}, "test": {"R": 3, "W": 3}}


@pytest.fixture(scope="module")
def short_spec():
    return WorldSpec(steps=20)


def test_paper_shaped_dataset(short_spec):
    batch = generate(short_spec, PAPER_COUNTS, seed=0)
    assert len(batch) == 24
    summary = batch.summary()
    train = summary[summary["split"] == "train"]
    assert set(train["count"]) == {3}
    assert len(batch.select(split="test")) == 6
    batch.validate_normalized()
    assert batch.dims == {"extero": 320, "proprio": 4}


def test_scaling_is_fitted_on_the_training_split(short_spec):
    pooled = generate(short_spec, PAPER_COUNTS, seed=0)
    alone = generate(short_spec, {"train": PAPER_COUNTS["train"]}, seed=0)
    assert pooled.scaling == alone.scaling
    for a, b in zip(pooled.select(split="train").sequences, alone.sequences):
        np.testing.assert_array_equal(a.proprio, b.proprio)

    train = np.concatenate([s.proprio for s in pooled.select(split="train").sequences])
    np.testing.assert_allclose(train.min(axis=0), -0.9, atol=1e-12, rtol=0)
    np.testing.assert_allclose(train.max(axis=0), 0.9, atol=1e-12, rtol=0)
    test = np.concatenate([s.proprio for s in pooled.select(split="test").sequences])
    assert float(np.abs(test).max()) <= 0.9


def test_generation_is_deterministic(short_spec):
    a = generate(short_spec, {"R": 2, "W": 2}, seed=3)
    b = generate(short_spec, {"R": 2, "W": 2}, seed=3)
    assert a.fingerprint() == b.fingerprint()
    assert generate(short_spec, {"R": 2, "W": 2}, seed=4).fingerprint() != a.fingerprint()


def test_zero_jitter_makes_cells_identical():
    spec = WorldSpec(steps=15, jitter_r=JitterSpec(), jitter_w=JitterSpec())
    batch = generate(spec, {"R": 6, "W": 6}, seed=1)
    for task in ("R", "W"):
        for condition in range(3):
            cell = batch.select(task=task, condition=condition).sequences
            assert len(cell) == 2
            np.testing.assert_array_equal(cell[0].proprio, cell[1].proprio)
            np.testing.assert_array_equal(cell[0].vision, cell[1].vision)


def test_wipe_is_more_variable_than_reposition():
    spec = WorldSpec(steps=40)
    batch = generate(spec, {"R": 20, "W": 20}, seed=7)
    variance = {
        task: float(np.stack([s.proprio for s in batch.select(task=task, condition=0).sequences]).var(axis=0).mean())
        for task in ("R", "W")
    }
    assert variance["W"] > variance["R"]
    assert spec.jitter_w.magnitude() > spec.jitter_r.magnitude()


def test_every_value_inside_the_range(short_spec):
    batch = generate(short_spec, {"R": 3, "W": 3}, seed=2)
    obs = batch.observations()
    assert float(np.abs(obs["extero"]).max()) <= 0.9
    assert float(np.abs(obs["proprio"]).max()) <= 0.9 + 1e-12


def test_short_sequences_are_rejected():
    with pytest.raises(ConfigError):
        generate(WorldSpec(steps=8), {"R": 1}, seed=0)
    with pytest.raises(ConfigError):
        phase_schedule(5, 0.0, np.random.default_rng(0))


def test_negative_and_unknown_counts():
    with pytest.raises(DataValidationError):
        generate(WorldSpec(steps=12), {"R": -1}, seed=0)
    with pytest.raises(ConfigError):
        generate(WorldSpec(steps=12), {"X": 1}, seed=0)


def test_phase_schedule_keeps_three_phases():
    phase, progress = phase_schedule(9, 0.5, np.random.default_rng(1))
    assert [int((phase == p).sum()) for p in range(3)] == [3, 3, 3]
    assert float(progress.max()) == 1.0


def test_empty_scene_is_background():
    spec = WorldSpec()
    view = render_views(None, SceneState.empty(), spec)
    assert view.shape == (320,)
    assert np.all(view == -0.9)


def test_low_resolution_is_box_filter_of_high():
    spec = WorldSpec()
    pose = inverse_kinematics(np.array([0.7, 0.4]), spec)
    scene = SceneState(kind="R", start=(0.6, 0.4), stop=(0.8, 0.4), width=0.05)
    low = render_views(pose, scene, spec, 8).reshape(8, 8)
    high = render_views(pose, scene, spec, 16).reshape(16, 16)
    np.testing.assert_allclose(low, high.reshape(8, 2, 8, 2).mean(axis=(1, 3)), atol=1e-12, rtol=0)


def test_arm_is_drawn_over_the_object():
    spec = WorldSpec(resolutions=(16,), link_width=0.15)
    pose = inverse_kinematics(np.array([0.5, 0.75]), spec)
    # barra horizontal cruzando o meio do primeiro elo
    _, elbow, _ = pose.joints(spec)
    y = float((spec.base[1] + elbow[1]) / 2)
    scene = SceneState(kind="R", start=(0.2, y), stop=(0.8, y), width=0.1)
    with_arm = render_intensity(pose, scene, spec)
    object_only = render_intensity(None, scene, spec)
    arm_only = render_intensity(pose, SceneState.empty(), spec)
    crossing = (arm_only == 1.0) & (object_only > 0)
    assert crossing.any()
    assert np.all(with_arm[crossing] == 1.0)


def test_unknown_resolution_is_rejected():
    with pytest.raises(ConfigError):
        render_views(None, SceneState.empty(), WorldSpec(), 32)


def test_resolutions_must_increase():
    with pytest.raises(ValueError):
        WorldSpec(resolutions=(16, 8))
    with pytest.raises(ValueError):
        WorldSpec(resolutions=(6, 16))


def test_normalize_bounds_and_round_trip():
    raw = np.array([[1.0, -3.0], [2.0, 5.0], [4.0, 1.0]])
    norm, record = normalize(raw)
    assert norm[0, 0] == -0.9 and norm[2, 0] == 0.9
    assert norm[0, 1] == -0.9 and norm[1, 1] == 0.9
    np.testing.assert_allclose(denormalize(norm, record), raw, atol=1e-12, rtol=0)
    again = ScalingRecord.from_dict(record.as_dict())
    np.testing.assert_array_equal(normalize(raw, again)[0], norm)


def test_constant_dimension_is_an_error():
    with pytest.raises(DataValidationError, match="Dimensão 1"):
        normalize(np.array([[0.0, 2.0], [1.0, 2.0]]))
