"""Versioned checkpoint container: config, vocab, and all parameter tensors.

Stored as an npz with a JSON header and a sha256 digest over the tensor
bytes; load(save(x)) is bit-exact.  Pretraining checkpoints carry no
relation head (one is initialized fresh on downstream use).
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderConfig, Vocab
from .errors import CheckpointIntegrityError, CheckpointVersionError

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    encoder_config: EncoderConfig
    vocab: Vocab
    encoder_params: dict[str, np.ndarray]
    head_params: dict[str, np.ndarray] | None = None
    metadata: dict = field(default_factory=dict)


def _digest(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for key in sorted(arrays):
        arr = np.ascontiguousarray(arrays[key])
        h.update(key.encode("utf-8"))
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def _flatten(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    arrays = {f"enc/{k}": v for k, v in ckpt.encoder_params.items()}
    if ckpt.head_params is not None:
        arrays.update({f"head/{k}": v for k, v in ckpt.head_params.items()})
    return arrays


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    arrays = _flatten(ckpt)
    header = {
        "version": CHECKPOINT_VERSION,
        "encoder_config": ckpt.encoder_config.to_dict(),
        "vocab": list(ckpt.vocab.id_to_token),
        "metadata": ckpt.metadata,
        "has_head": ckpt.head_params is not None,
        "digest": _digest(arrays),
    }
    np.savez(path, __header__=np.array(json.dumps(header, sort_keys=True)),
             **arrays)


def load_checkpoint(path) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as data:
            if "__header__" not in data:
                raise CheckpointIntegrityError(f"{path}: missing header")
            header = json.loads(str(data["__header__"]))
            arrays = {k: data[k] for k in data.files if k != "__header__"}
    except (OSError, ValueError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"{path}: unreadable container: {exc}") from exc

    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: version {header.get('version')!r}, "
            f"this code supports {CHECKPOINT_VERSION}")
    if _digest(arrays) != header["digest"]:
        raise CheckpointIntegrityError(f"{path}: content digest mismatch")

    encoder_params = {k[len("enc/"):]: v for k, v in arrays.items()
                      if k.startswith("enc/")}
    head_params = None
    if header["has_head"]:
        head_params = {k[len("head/"):]: v for k, v in arrays.items()
                       if k.startswith("head/")}
    return Checkpoint(
        encoder_config=EncoderConfig(**header["encoder_config"]),
        vocab=Vocab(id_to_token=tuple(header["vocab"])),
        encoder_params=encoder_params,
        head_params=head_params,
        metadata=header["metadata"],
    )
