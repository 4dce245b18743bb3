"""
On-disk checkpoint storage.

A checkpoint is a directory holding `manifest.json` (format version, kind,
epoch, step, seed, config hash, free-form extras) and one raw little-endian
blob per component group, e.g. `face_field.expr_mu.bin`. Writes go to a
temporary sibling directory that is renamed into place.
"""

import json
import logging
import os
import shutil
import uuid
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from gazesplat.errors import CheckpointError
from gazesplat.models import CheckpointManifest

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

NUMPY_DTYPES = {
    torch.float32: "<f4",
    torch.float64: "<f8",
    torch.int64: "<i8",
}
TORCH_DTYPES = {value: key for key, value in NUMPY_DTYPES.items()}

StateDict = Dict[str, torch.Tensor]


def _group_key(component: str, name: str) -> str:
    return f"{component}.{name.split('.')[0]}"


class CheckpointStore:
    """Directory of named checkpoints (one sub-directory each)."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    # ========================================================================
    # Writing
    # ========================================================================

    def store_checkpoint(
        self,
        name: str,
        components: Mapping[str, Union[nn.Module, StateDict]],
        kind: str,
        epoch: int = 0,
        step: int = 0,
        seed: int = 0,
        config_hash: str = "",
        config: Optional[Dict] = None,
        extra: Optional[Dict] = None,
    ) -> Path:
        """
        Atomically write a checkpoint directory `root/name`.

        Args:
            name: Checkpoint directory name
            components: Modules or state dicts keyed by component name
            kind: Checkpoint kind ("gazegaussian", "oracle", ...)

        Returns:
            Path of the written checkpoint
        """
        self.root.mkdir(parents=True, exist_ok=True)
        final = self.root / name
        staging = self.root / f".tmp-{name}-{uuid.uuid4().hex[:8]}"
        staging.mkdir()

        blobs: Dict[str, List[Dict]] = {}
        try:
            for component, value in components.items():
                state = value.state_dict() if isinstance(value, nn.Module) else value
                groups: Dict[str, List[Tuple[str, torch.Tensor]]] = {}
                for tensor_name, tensor in state.items():
                    groups.setdefault(_group_key(component, tensor_name), []).append((tensor_name, tensor))

                for group, entries in groups.items():
                    offset = 0
                    metadata = []
                    with open(staging / f"{group}.bin", "wb") as handle:
                        for tensor_name, tensor in entries:
                            if tensor.dtype not in NUMPY_DTYPES:
                                raise CheckpointError(f"Unsupported tensor dtype {tensor.dtype} for {tensor_name}")
                            array = tensor.detach().cpu().contiguous().numpy().astype(NUMPY_DTYPES[tensor.dtype])
                            payload = array.tobytes()
                            handle.write(payload)
                            metadata.append({
                                "component": component,
                                "name": tensor_name,
                                "shape": list(array.shape),
                                "dtype": NUMPY_DTYPES[tensor.dtype],
                                "offset": offset,
                            })
                            offset += len(payload)
                    blobs[group] = metadata

            manifest = CheckpointManifest(
                format_version=FORMAT_VERSION,
                kind=kind,
                epoch=epoch,
                step=step,
                seed=seed,
                config_hash=config_hash,
                config=config or {},
                extra=extra or {},
                blobs=blobs,
            )
            (staging / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2))

            if final.exists():
                retired = self.root / f".old-{name}-{uuid.uuid4().hex[:8]}"
                os.replace(final, retired)
                os.replace(staging, final)
                shutil.rmtree(retired)
            else:
                os.replace(staging, final)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise

        logger.info(f"Stored {kind} checkpoint {final} (epoch {epoch}, step {step})")
        return final

    # ========================================================================
    # Reading
    # ========================================================================

    def list_checkpoints(self) -> List[Path]:
        if not self.root.exists():
            return []
        return sorted(
            path for path in self.root.iterdir()
            if path.is_dir() and not path.name.startswith(".") and (path / MANIFEST_NAME).exists()
        )

    def latest_checkpoint(self) -> Optional[Path]:
        """Checkpoint with the highest (epoch, step), or None."""
        best = None
        best_key = None
        for path in self.list_checkpoints():
            manifest = read_manifest(path)
            key = (manifest.epoch, manifest.step, path.name)
            if best_key is None or key > best_key:
                best, best_key = path, key
        return best


def read_manifest(path: Union[str, Path]) -> CheckpointManifest:
    """
    Read and validate a checkpoint manifest.

    Raises:
        CheckpointError: missing or empty directory, missing manifest, or an
            unsupported format version
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    if path.is_dir() and not any(path.iterdir()):
        raise CheckpointError(f"Checkpoint directory is empty: {path}")
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.exists():
        raise CheckpointError(f"Checkpoint has no {MANIFEST_NAME}: {path}")
    try:
        manifest = CheckpointManifest.model_validate_json(manifest_path.read_text())
    except ValueError as e:
        raise CheckpointError(f"Malformed checkpoint manifest in {path}: {e}")
    if manifest.format_version != FORMAT_VERSION:
        raise CheckpointError(
            f"Checkpoint {path} has format version {manifest.format_version}, "
            f"this build reads version {FORMAT_VERSION}"
        )
    return manifest


def load_checkpoint(path: Union[str, Path]) -> Tuple[CheckpointManifest, Dict[str, StateDict]]:
    """Load a checkpoint into per-component state dicts."""
    path = Path(path)
    manifest = read_manifest(path)
    components: Dict[str, StateDict] = {}
    for group, entries in manifest.blobs.items():
        blob_path = path / f"{group}.bin"
        if not blob_path.exists():
            raise CheckpointError(f"Checkpoint {path} is missing blob {blob_path.name}")
        raw = blob_path.read_bytes()
        for entry in entries:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            if count == 0:
                array = np.zeros(0, dtype=dtype)
            else:
                array = np.frombuffer(raw, dtype=dtype, count=count, offset=entry["offset"])
            tensor = torch.from_numpy(array.reshape(entry["shape"]).copy())
            components.setdefault(entry["component"], {})[entry["name"]] = tensor.to(TORCH_DTYPES[entry["dtype"]])
    return manifest, components
