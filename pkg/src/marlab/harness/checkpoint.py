"""Named-tensor checkpoints stored as ``.npz`` with a JSON header."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..diffcore import Module

META_KEY = "__meta__"


class CheckpointError(RuntimeError):
    pass


def checkpoint_save(modules: dict[str, Module], path, fingerprint: str, representation: str,
                    extra: dict | None = None) -> Path:
    """Write every parameter of each named module plus a header describing the run."""
    path = Path(path)
    arrays = {}
    shapes = {}
    for name, module in modules.items():
        for key, value in module.state_dict().items():
            arrays[f"{name}/{key}"] = value
            shapes[f"{name}/{key}"] = list(value.shape)
    meta = {
        "fingerprint": fingerprint,
        "representation": representation,
        "classes": {name: type(m).__name__ for name, m in modules.items()},
        "shapes": shapes,
        "extra": extra or {},
    }
    arrays[META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def read_meta(path) -> dict:
    with np.load(Path(path), allow_pickle=False) as data:
        return json.loads(str(data[META_KEY]))


def checkpoint_load(modules: dict[str, Module], path, fingerprint: str | None = None,
                    representation: str | None = None) -> dict:
    """Restore parameters in place; refuses on fingerprint, representation or class mismatch."""
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data[META_KEY]))
        if fingerprint is not None and meta["fingerprint"] != fingerprint:
            raise CheckpointError(f"fingerprint mismatch: checkpoint {meta['fingerprint']}, expected {fingerprint}")
        if representation is not None and meta["representation"] != representation:
            raise CheckpointError(
                f"representation mismatch: checkpoint {meta['representation']!r}, expected {representation!r}"
            )
        for name, module in modules.items():
            want = meta["classes"].get(name)
            if want != type(module).__name__:
                raise CheckpointError(f"module {name!r}: checkpoint holds {want}, got {type(module).__name__}")
            prefix = f"{name}/"
            module.load_state_dict({k[len(prefix):]: data[k] for k in data.files if k.startswith(prefix)})
    return meta
