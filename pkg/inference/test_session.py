# inference/test_session.py
# -----------------------------------------------------------------------------
# Sessões de inferência com pesos congelados: janela deslizante, histórico
# congelado, máscaras, rollouts e execução de tentativas.
# -----------------------------------------------------------------------------
from __future__ import annotations

import dataclasses

import numpy as np
import pytest
import torch
from pydantic import ValidationError

from config.errors import ConfigError, ContractError, DataValidationError
from free_energy.masks import ObservationMask
from inference.session import InferConfig, open_session
from inference.trials import LATENT_COLUMNS, export_trial_frames, run_trials
from network.core import forward_sequence
from network.parameters import init_parameters
from network.topology import EXTERO, MODULES, PROPRIO, ModuleSpec, NetworkTopology, VisionSpec
from simulator.sequences import SequenceBatch, TaskSequence
from storage.checkpoint import Checkpoint
from storage.frames import read_frame


def _topology() -> NetworkTopology:
    spec = dict(d_size=5, z_size=3)
    return NetworkTopology(
        executive=ModuleSpec(tau=(8.0, 16.0), **spec),
        associative=ModuleSpec(tau=(4.0, 8.0), **spec),
        exteroceptive=ModuleSpec(tau=(2.0, 4.0), **spec),
        proprioceptive=ModuleSpec(tau=(2.0, 4.0), **spec),
        vision=VisionSpec(resolutions=(1, 2)),
        proprio_dim=2,
        extero_head=(5, 5),
        proprio_head=(5,),
    )


def _checkpoint(seed: int = 0) -> Checkpoint:
    topo = _topology()
    return Checkpoint(topology=topo, params=init_parameters(topo, seed))


def _stream(T: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [{EXTERO: rng.uniform(-0.9, 0.9, 5), PROPRIO: rng.uniform(-0.9, 0.9, 2)} for _ in range(T)]


def _config(**kw) -> InferConfig:
    base = dict(window=3, iterations=4, lr=0.1, trials_per_sequence=2)
    base.update(kw)
    return InferConfig(**base)


# ============================================================
# Abertura e validação
# ============================================================
def test_first_prior_is_standard_normal():
    session = open_session(_checkpoint(), _config())
    assert session.t == 0 and session.window is None
    result = session.step(_stream(1)[0])
    for m in MODULES:
        assert np.all(result.prior_mu[m] == 0.0)
        assert np.all(result.prior_sigma[m] == 1.0)


def test_config_invariants():
    with pytest.raises(ValidationError):
        InferConfig(window=0)
    with pytest.raises(ValidationError):
        InferConfig(iterations=0)
    assert InferConfig().window == 30 and InferConfig().iterations == 50 and InferConfig().lr == 1.0


def test_unknown_resolution_in_mask_policy():
    with pytest.raises(ConfigError, match="Resoluções"):
        open_session(_checkpoint(), _config(resolutions=(4,)))


@pytest.mark.parametrize("bad", [
    {EXTERO: np.zeros(4), PROPRIO: np.zeros(2)},
    {EXTERO: np.zeros(5), PROPRIO: np.array([0.0, np.nan])},
    {EXTERO: np.full(5, 1.5), PROPRIO: np.zeros(2)},
    {EXTERO: np.zeros(5)},
])
def test_invalid_observation_leaves_session_unchanged(bad):
    session = open_session(_checkpoint(), _config())
    session.step(_stream(1)[0])
    before = session.final_adaptive()
    with pytest.raises(DataValidationError):
        session.step(bad)
    assert session.t == 1
    after = session.final_adaptive()
    for m in MODULES:
        assert torch.equal(before.mu[m], after.mu[m])


def test_sessions_are_independent_and_weights_frozen():
    ck = _checkpoint()
    fingerprint = ck.fingerprint()
    a = open_session(ck, _config())
    b = open_session(ck, _config())
    for obs in _stream(4):
        a.step(obs)
    assert b.t == 0
    assert ck.fingerprint() == fingerprint
    assert a.params.fingerprint() == fingerprint


# ============================================================
# Janela deslizante
# ============================================================
def test_window_is_whole_history_before_H():
    session = open_session(_checkpoint(), _config(window=30, iterations=1))
    for obs in _stream(10):
        session.step(obs)
    assert session.window_range == (1, 10)
    assert session.boundary.t == 0


def test_window_slides_after_H():
    session = open_session(_checkpoint(), _config(window=3))
    for obs in _stream(5):
        session.step(obs)
    assert session.window_range == (3, 5)
    assert session.boundary.t == 2
    assert session.final_adaptive().steps == 5


def test_frozen_steps_never_change():
    session = open_session(_checkpoint(), _config(window=2))
    stream = _stream(7)
    for obs in stream[:4]:
        session.step(obs)
    frozen = session.final_adaptive().window(1, 2).detached()
    for obs in stream[4:]:
        session.step(obs)
    later = session.final_adaptive().window(1, 2)
    for m in MODULES:
        assert torch.equal(frozen.mu[m], later.mu[m])
        assert torch.equal(frozen.sigma[m], later.sigma[m])


def test_boundary_equals_replay_of_frozen_history():
    ck = _checkpoint()
    session = open_session(ck, _config(window=3))
    for obs in _stream(7):
        session.step(obs)
    left = session.window_range[0]
    history = session.final_adaptive().window(1, left - 1)
    eps = {m: v[:, :left - 1] for m, v in session.epsilon_record().items()}
    with torch.no_grad():
        replay = forward_sequence(ck.params, ck.topology, history, left - 1, "posterior", eps)
    assert replay.final_state.t == session.boundary.t == left - 1
    for m in MODULES:
        torch.testing.assert_close(replay.final_state.h[m], session.boundary.h[m], rtol=0, atol=1e-12)


def test_fully_masked_stream_descends_on_complexity():
    ck = _checkpoint()
    session = open_session(ck, _config(window=4, iterations=10, lr=1.0, fixed_epsilon=True,
                                       resolutions=(), proprio=False))
    results = [session.step(obs) for obs in _stream(4)]
    for r in results:
        assert all(v == 0.0 for k, v in r.terms.items() if k.startswith("accuracy."))
        assert all(b <= a + 1e-12 for a, b in zip(r.trace, r.trace[1:]))
    assert results[-1].trace[-1] < results[-1].trace[0]


def test_masked_dimension_has_no_influence():
    ck = _checkpoint()
    config = _config(proprio=False)
    a = open_session(ck, config, (1,))
    b = open_session(ck, config, (1,))
    for obs in _stream(5):
        a.step(obs)
        b.step({EXTERO: obs[EXTERO], PROPRIO: -obs[PROPRIO]})
    fa, fb = a.final_adaptive(), b.final_adaptive()
    for m in MODULES:
        assert torch.equal(fa.mu[m], fb.mu[m])
        assert torch.equal(fa.sigma[m], fb.sigma[m])


def test_explicit_mask_overrides_policy():
    ck = _checkpoint()
    topo = ck.topology
    a = open_session(ck, _config(proprio=False), (2,))
    b = open_session(ck, _config(), (2,))
    stream = _stream(3)
    for obs in stream:
        a.step(obs)
        b.step(obs, ObservationMask.only(topo, 1, proprio=False))
    for m in MODULES:
        assert torch.equal(a.final_adaptive().mu[m], b.final_adaptive().mu[m])


def test_step_mask_of_the_wrong_width_is_rejected():
    ck = _checkpoint()
    full = ObservationMask.full(ck.topology, 1)
    session = open_session(ck, _config())
    with pytest.raises(DataValidationError, match="proprio"):
        session.step(_stream(1)[0], ObservationMask(extero=full.extero, proprio=full.proprio[:, :1]))
    assert session.t == 0


def test_radam_session_runs_and_records_errors():
    session = open_session(_checkpoint(), _config(optimizer="radam", lr=0.05))
    result = session.step(_stream(1)[0])
    assert set(result.errors) == {"extero", "proprio", "all", "res1", "res2"}
    assert set(result.views) == {1, 2}
    assert result.views[2].shape == (4,)
    assert len(result.trace) == 4


# ============================================================
# Rollout
# ============================================================
def test_rollout_contracts():
    session = open_session(_checkpoint(), _config())
    with pytest.raises(ContractError):
        session.rollout(2)
    session.step(_stream(1)[0])
    with pytest.raises(ConfigError):
        session.rollout(-1)
    empty = session.rollout(0)
    assert empty[EXTERO].shape == (0, 5) and empty[PROPRIO].shape == (0, 2)


def test_deterministic_rollout_is_repeatable_and_does_not_mutate():
    ck = _checkpoint()
    a = open_session(ck, _config(), (3,))
    b = open_session(ck, _config(), (3,))
    stream = _stream(4)
    for obs in stream[:3]:
        a.step(obs)
        b.step(obs)
    first = a.rollout(5, deterministic=True)
    second = a.rollout(5, deterministic=True)
    np.testing.assert_array_equal(first[EXTERO], second[EXTERO])
    a.rollout(3)
    assert a.t == 3
    ra, rb = a.step(stream[3]), b.step(stream[3])
    np.testing.assert_array_equal(ra.x_hat[EXTERO], rb.x_hat[EXTERO])


def test_horizon_records_rollout_per_step():
    session = open_session(_checkpoint(), _config(horizon=2))
    result = session.step(_stream(1)[0])
    assert result.rollout[EXTERO].shape == (2, 5)


# ============================================================
# Tentativas
# ============================================================
def _batch(T: int = 5) -> SequenceBatch:
    rng = np.random.default_rng(9)
    seqs = tuple(
        TaskSequence(sequence_id=sid, task=task, condition=0, split="test",
                     proprio=rng.uniform(-0.9, 0.9, (T, 2)), vision=rng.uniform(-0.9, 0.9, (T, 5)))
        for sid, task in ((4, "R"), (1, "W"))
    )
    return SequenceBatch(sequences=seqs, resolutions=(1, 2))


def test_run_trials_counts_order_and_determinism():
    ck = _checkpoint()
    config = _config(iterations=2)
    first = run_trials(ck, _batch(), config)
    again = run_trials(ck, _batch(), config, threads=2)
    assert len(first) == 4
    assert [tr.key[1:] for tr in first] == [(1, 0), (1, 1), (4, 0), (4, 1)]
    for x, y in zip(first, again):
        np.testing.assert_array_equal(x.predictions(EXTERO), y.predictions(EXTERO))
    a, b = first.trials[0], first.trials[1]
    assert not np.array_equal(a.epsilon["Exe"].numpy(), b.epsilon["Exe"].numpy())


def test_trial_frames_have_expected_rows(tmp_path):
    trials = run_trials(_checkpoint(), _batch(T=3), _config(iterations=1))
    latent = trials.latent_frame()
    assert list(latent.columns) == LATENT_COLUMNS
    assert len(latent) == 4 * 3 * 4 * 3  # tentativas × passos × módulos × latentes
    errors = trials.error_frame()
    assert len(errors) == 4 * 3 * 5

    paths = export_trial_frames(trials.trials[0], (1, 2), tmp_path, steps=[1])
    assert len(paths) == 2
    assert read_frame(paths[1]).shape == (2, 2)


def test_every_camera_and_channel_gets_a_frame(tmp_path):
    trial = run_trials(_checkpoint(), _batch(T=1), _config(iterations=1)).trials[0]
    planes = np.stack([np.full(4, v) for v in (-0.9, -0.3, 0.3, 0.9, 0.0, 0.45)])  # 2 câmeras x 3 canais
    rgb = dataclasses.replace(trial.steps[0], views={2: planes.reshape(-1)})
    paths = export_trial_frames(dataclasses.replace(trial, steps=[rgb]), (2,), tmp_path, channels=3)

    assert [p.name.rsplit("_r2", 1)[1] for p in paths] == [
        "_cam0_ch0.pgm", "_cam0_ch1.pgm", "_cam0_ch2.pgm", "_cam1_ch0.pgm", "_cam1_ch1.pgm", "_cam1_ch2.pgm",
    ]
    assert [int(read_frame(p)[0, 0]) for p in paths] == [0, 85, 170, 255, 128, 191]
    with pytest.raises(DataValidationError, match="canais"):
        export_trial_frames(dataclasses.replace(trial, steps=[rgb]), (2,), tmp_path / "x", channels=4)
