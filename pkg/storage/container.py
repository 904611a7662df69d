# storage/container.py
# -----------------------------------------------------------------------------
# Contêiner binário compartilhado por checkpoints e conjuntos de dados.
#
#   magic (8 bytes) | versão (u32 LE) | tamanho do cabeçalho (u64 LE)
#   | cabeçalho JSON (UTF-8) | payload float64 LE | SHA-256 do payload (32 bytes)
#
# Leitura: magic -> versão -> tamanho -> hash -> formas de cada tensor.
# A versão é conferida antes de qualquer tensor ser lido.
# -----------------------------------------------------------------------------

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np
from pydantic import ValidationError

from config.errors import IntegrityError, NumericError
from storage.schemas import ContainerHeader, TensorEntry

_PREFIX = struct.Struct("<8sIQ")
_HASH_BYTES = 32


def file_sha256(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_container(
    path: str | os.PathLike,
    magic: bytes,
    kind: str,
    version: int,
    meta: Mapping[str, Any],
    tensors: Mapping[str, np.ndarray],
) -> Path:
    """Grava de forma atômica (arquivo temporário + rename). Valores não finitos são recusados."""
    entries = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"Tensor {name} tem valores não finitos; nada foi gravado")
        entries.append(TensorEntry(name=name, shape=tuple(arr.shape), offset=offset, count=int(arr.size)))
        chunks.append(arr.reshape(-1).tobytes())
        offset += int(arr.size)

    header = ContainerHeader(kind=kind, version=version, payload_count=offset, meta=dict(meta), tensors=entries)
    header_bytes = json.dumps(header.model_dump(mode="json"), sort_keys=True).encode("utf-8")
    payload = b"".join(chunks)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(magic, version, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)
        fh.write(hashlib.sha256(payload).digest())
    os.replace(tmp, path)
    return path


def read_container(
    path: str | os.PathLike,
    magic: bytes,
    kind: str,
    version: int,
) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise IntegrityError(f"{path}: arquivo truncado ({len(data)} bytes)")
    got_magic, got_version, header_len = _PREFIX.unpack_from(data)
    if got_magic != magic:
        raise IntegrityError(f"{path}: não é um arquivo de {kind} (magic {got_magic!r})")
    if got_version != version:
        raise IntegrityError(f"{path}: versão {got_version} de {kind} não suportada (esperada {version})")

    header_end = _PREFIX.size + header_len
    if header_end > len(data):
        raise IntegrityError(f"{path}: arquivo truncado no cabeçalho")
    try:
        header = ContainerHeader.model_validate(json.loads(data[_PREFIX.size:header_end].decode("utf-8")))
    except (ValueError, ValidationError) as exc:
        raise IntegrityError(f"{path}: cabeçalho ilegível ({exc})") from exc
    if header.kind != kind:
        raise IntegrityError(f"{path}: contém {header.kind}, esperado {kind}")

    payload_len = header.payload_count * 8
    if len(data) != header_end + payload_len + _HASH_BYTES:
        raise IntegrityError(
            f"{path}: tamanho {len(data)} não confere com o cabeçalho "
            f"({header_end + payload_len + _HASH_BYTES} bytes); arquivo truncado ou corrompido"
        )
    payload = data[header_end:header_end + payload_len]
    if hashlib.sha256(payload).digest() != data[header_end + payload_len:]:
        raise IntegrityError(f"{path}: hash do conteúdo não confere")

    values = np.frombuffer(payload, dtype="<f8")
    tensors: Dict[str, np.ndarray] = {}
    for entry in header.tensors:
        expected = int(np.prod(entry.shape, dtype=np.int64)) if entry.shape else 1
        if expected != entry.count or entry.offset + entry.count > header.payload_count:
            raise IntegrityError(
                f"{path}: tensor {entry.name} declara forma {entry.shape} "
                f"incompatível com {entry.count} valores no payload"
            )
        tensors[entry.name] = values[entry.offset:entry.offset + entry.count].astype(np.float64).reshape(entry.shape)
    return header.meta, tensors
