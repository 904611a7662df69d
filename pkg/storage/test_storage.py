# storage/test_storage.py
from __future__ import annotations

import json
import re
import struct

import numpy as np
import pytest
import torch

from config.errors import IncompatibleCheckpointError, IntegrityError, NumericError
from gradients.adaptive import AdaptivePosterior
from network.parameters import init_parameters
from network.topology import MODULES, NetworkTopology
from simulator.tasks import generate
from simulator.world import WorldSpec
from storage.checkpoint import (
    CHECKPOINT_KIND,
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from storage.container import file_sha256, read_container, write_container
from storage.dataset import export_dataset_csv, load_dataset, save_dataset
from storage.frames import export_frame, quantize, read_frame
from storage.manifest import RunManifest, read_manifest, write_manifest
from storage.schemas import ProvenanceIn

_PREFIX = struct.Struct("<8sIQ")


def _checkpoint(with_adaptive: bool = True) -> Checkpoint:
    topo = NetworkTopology.tiny()
    adaptive = None
    if with_adaptive:
        adaptive = AdaptivePosterior.zeros(topo, 4, (3, 7))
        for m in MODULES:
            adaptive.mu[m].normal_(generator=torch.Generator().manual_seed(1))
    return Checkpoint(topology=topo, params=init_parameters(topo, 5),
                      provenance=ProvenanceIn(seed=5, iterations=10, dataset_hash="abc"), adaptive=adaptive)


# ============================================================
# Checkpoint
# ============================================================
def test_checkpoint_round_trip_is_bitwise(tmp_path):
    ck = _checkpoint()
    path = save_checkpoint(ck, tmp_path / "ck.pvck")
    back = load_checkpoint(path)
    assert back.topology == ck.topology
    assert back.provenance == ck.provenance
    for name, value in ck.params.weights.items():
        assert torch.equal(back.params.weights[name], value)
    for name, value in ck.params.biases.items():
        assert torch.equal(back.params.biases[name], value)
    assert back.adaptive.sequence_ids == (3, 7)
    for m in MODULES:
        assert torch.equal(back.adaptive.mu[m], ck.adaptive.mu[m])
    assert back.fingerprint() == ck.fingerprint()


def test_saving_twice_gives_identical_bytes(tmp_path):
    ck = _checkpoint()
    a = save_checkpoint(ck, tmp_path / "a.pvck")
    b = save_checkpoint(ck, tmp_path / "b.pvck")
    assert file_sha256(a) == file_sha256(b)


def test_truncated_checkpoint_is_rejected(tmp_path):
    path = save_checkpoint(_checkpoint(), tmp_path / "ck.pvck")
    data = path.read_bytes()
    path.write_bytes(data[:-40])
    with pytest.raises(IntegrityError, match="truncado"):
        load_checkpoint(path)


def test_flipped_payload_byte_fails_hash(tmp_path):
    path = save_checkpoint(_checkpoint(), tmp_path / "ck.pvck")
    data = bytearray(path.read_bytes())
    data[-40] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(IntegrityError, match="hash"):
        load_checkpoint(path)


def test_wrong_magic_is_not_a_checkpoint(tmp_path):
    path = save_checkpoint(_checkpoint(), tmp_path / "ck.pvck")
    data = path.read_bytes()
    path.write_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(IntegrityError, match="não é um arquivo de checkpoint"):
        load_checkpoint(path)


def test_version_mismatch_detected_before_tensors(tmp_path):
    path = save_checkpoint(_checkpoint(), tmp_path / "ck.pvck")
    data = bytearray(path.read_bytes())
    data[8:12] = struct.pack("<I", 99)
    path.write_bytes(bytes(data))
    with pytest.raises(IntegrityError, match="versão 99"):
        load_checkpoint(path)


def test_header_shape_mismatch_names_the_tensor(tmp_path):
    path = save_checkpoint(_checkpoint(with_adaptive=False), tmp_path / "ck.pvck")
    data = path.read_bytes()
    magic, version, header_len = _PREFIX.unpack_from(data)
    header = json.loads(data[_PREFIX.size:_PREFIX.size + header_len])
    entry = header["tensors"][0]
    entry["shape"] = [entry["count"] + 1]
    raw = json.dumps(header).encode("utf-8")
    path.write_bytes(_PREFIX.pack(magic, version, len(raw)) + raw + data[_PREFIX.size + header_len:])
    with pytest.raises(IntegrityError, match=re.escape(entry["name"])):
        load_checkpoint(path)


def test_topology_mismatch_is_incompatible(tmp_path):
    path = save_checkpoint(_checkpoint(), tmp_path / "ck.pvck")
    with pytest.raises(IncompatibleCheckpointError):
        load_checkpoint(path, expected_topology=NetworkTopology.desk())


def _rewrite_without(path, drop, replace=None):
    meta, tensors = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_KIND, CHECKPOINT_VERSION)
    tensors = {k: v for k, v in tensors.items() if k != drop}
    tensors.update(replace or {})
    write_container(path, CHECKPOINT_MAGIC, CHECKPOINT_KIND, CHECKPOINT_VERSION, meta, tensors)


def test_missing_adaptive_tensor_is_an_integrity_error(tmp_path):
    path = save_checkpoint(_checkpoint(), tmp_path / "ck.pvck")
    _rewrite_without(path, "adaptive/Mul/sigma")
    with pytest.raises(IntegrityError, match="adaptive/Mul/sigma"):
        load_checkpoint(path)


def test_adaptive_tensor_with_wrong_batch_is_rejected(tmp_path):
    path = save_checkpoint(_checkpoint(), tmp_path / "ck.pvck")
    _rewrite_without(path, "adaptive/Exe/mu", {"adaptive/Exe/mu": np.zeros((1, 4, 3))})
    with pytest.raises(IntegrityError, match="adaptive/Exe/mu"):
        load_checkpoint(path)


def test_non_finite_values_are_not_serialized(tmp_path):
    with pytest.raises(NumericError):
        write_container(tmp_path / "x.bin", b"TESTTEST", "test", 1, {}, {"a": np.array([1.0, np.nan])})
    assert not (tmp_path / "x.bin").exists()


def test_container_preserves_scalars_and_empty_tensors(tmp_path):
    tensors = {"scalar": np.array(2.5), "empty": np.zeros((0, 3)), "m": np.arange(6.0).reshape(2, 3)}
    path = write_container(tmp_path / "x.bin", b"TESTTEST", "test", 1, {"k": 1}, tensors)
    meta, back = read_container(path, b"TESTTEST", "test", 1)
    assert meta == {"k": 1}
    assert back["scalar"].shape == () and float(back["scalar"]) == 2.5
    assert back["empty"].shape == (0, 3)
    np.testing.assert_array_equal(back["m"], tensors["m"])


# ============================================================
# Conjunto de dados
# ============================================================
def test_dataset_round_trip(tmp_path):
    batch = generate(WorldSpec(steps=12), {"train": {"R": 2, "W": 1}, "test": {"R": 1, "W": 1}}, seed=3)
    path = save_dataset(batch, tmp_path / "data.pvds")
    back = load_dataset(path)
    assert back.fingerprint() == batch.fingerprint()
    assert back.ids == batch.ids
    assert [s.split for s in back.sequences] == [s.split for s in batch.sequences]
    np.testing.assert_array_equal(back.scaling.minimum, batch.scaling.minimum)

    csv = export_dataset_csv(batch, tmp_path / "proprio.csv")
    assert csv.read_text(encoding="utf-8").splitlines()[0].startswith("sequence_id")


def test_dataset_file_is_not_a_checkpoint(tmp_path):
    batch = generate(WorldSpec(steps=12), {"R": 1}, seed=0)
    path = save_dataset(batch, tmp_path / "data.pvds")
    with pytest.raises(IntegrityError, match="não é um arquivo de checkpoint"):
        load_checkpoint(path)


# ============================================================
# Quadros P5
# ============================================================
def test_uniform_background_frame_is_black(tmp_path):
    path = export_frame(np.full(64, -0.9), 8, tmp_path / "bg.pgm")
    assert read_frame(path).max() == 0


def test_p5_header_and_quantized_round_trip(tmp_path):
    pixels = np.linspace(-0.9, 0.9, 64)
    path = export_frame(pixels, 8, tmp_path / "f.pgm")
    raw = path.read_bytes()
    assert raw.split()[:4] == [b"P5", b"8", b"8", b"255"]
    back = read_frame(path)
    assert back.shape == (8, 8)
    np.testing.assert_array_equal(back.reshape(-1), quantize(pixels))
    assert "P5 8 8 255" in path.with_suffix(".txt").read_text(encoding="utf-8")


def test_map_mode_scales_by_maximum():
    q = quantize(np.array([0.0, 0.5, 1.0]), mode="map")
    np.testing.assert_array_equal(q, [0, 128, 255])
    np.testing.assert_array_equal(quantize(np.zeros(4), mode="map"), np.zeros(4))


# ============================================================
# Manifesto
# ============================================================
def test_manifest_lists_input_and_output_hashes(tmp_path):
    source = tmp_path / "in.txt"
    source.write_text("entrada", encoding="utf-8")
    run = tmp_path / "run"
    (run / "sub").mkdir(parents=True)
    (run / "sub" / "out.csv").write_text("a,b\n1,2\n", encoding="utf-8")

    manifest = RunManifest(command="train", seed=4).add_inputs([source]).collect_outputs(run)
    write_manifest(run, manifest)
    back = read_manifest(run)
    assert back.inputs[str(source)] == file_sha256(source)
    assert list(back.outputs) == ["sub/out.csv"]
    assert back.seed == 4
