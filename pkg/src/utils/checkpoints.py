"""
Checkpoint payloads and their sidecar manifests.

The payload is a joblib dump of parameter name -> numpy array. The manifest
(same stem, .json suffix) records what the payload must contain so that a
truncated, swapped or stale file is rejected at load time.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import joblib
import numpy as np
import torch
from torch import nn

from ..cfg.config import DTYPE, SCHEMA_VERSION
from .errors import CheckpointLoadError

logger = logging.getLogger(__name__)


@dataclass
class CheckpointManifest:
    """Sidecar metadata stored next to every payload."""

    module: str
    step: int
    ema: bool = False
    schema_version: int = SCHEMA_VERSION
    param_count: int = 0
    payload_bytes: int = 0
    parameter_shapes: dict[str, list[int]] = field(default_factory=dict)


def manifest_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def _as_state(params: nn.Module | dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    if isinstance(params, nn.Module):
        return params.state_dict()
    return dict(params)


def save_checkpoint(
    params: nn.Module | dict[str, torch.Tensor],
    manifest: CheckpointManifest,
    path: str | Path,
) -> CheckpointManifest:
    """
    Write the parameter payload and its manifest.

    Args:
        params: Module or state dict to persist
        manifest: Module name, step and EMA flag; counts are filled in here
        path: Payload path (conventionally *.joblib)

    Returns:
        The completed manifest
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    arrays = {
        name: tensor.detach().cpu().numpy().copy() for name, tensor in _as_state(params).items()
    }
    joblib.dump(arrays, path)

    manifest.param_count = int(sum(a.size for a in arrays.values()))
    manifest.parameter_shapes = {name: list(a.shape) for name, a in arrays.items()}
    manifest.payload_bytes = path.stat().st_size
    manifest_path(path).write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True))

    logger.info(
        f"Saved checkpoint {path} ({manifest.module}, step {manifest.step}, "
        f"{manifest.param_count} parameters, ema={manifest.ema})"
    )
    return manifest


def load_manifest(path: str | Path) -> CheckpointManifest:
    """Read the manifest belonging to payload `path`."""
    sidecar = manifest_path(path)
    try:
        data = json.loads(sidecar.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointLoadError(str(sidecar), "readable JSON manifest", repr(e)) from e
    return CheckpointManifest(**data)


def load_checkpoint(
    path: str | Path, expected_module: str | None = None
) -> tuple[dict[str, torch.Tensor], CheckpointManifest]:
    """
    Load and verify a checkpoint.

    Args:
        path: Payload path
        expected_module: When given, the manifest module name must match

    Returns:
        Tuple of (state dict of float64 tensors, manifest)

    Raises:
        CheckpointLoadError: schema version, module, payload length or
            parameter count mismatch
    """
    path = Path(path)
    manifest = load_manifest(path)

    if manifest.schema_version != SCHEMA_VERSION:
        raise CheckpointLoadError(
            str(path), f"schema_version {SCHEMA_VERSION}", f"schema_version {manifest.schema_version}"
        )
    if expected_module is not None and manifest.module != expected_module:
        raise CheckpointLoadError(str(path), f"module {expected_module}", f"module {manifest.module}")
    if not path.exists():
        raise CheckpointLoadError(str(path), "payload file", "nothing")

    found_bytes = path.stat().st_size
    if found_bytes != manifest.payload_bytes:
        raise CheckpointLoadError(
            str(path), f"{manifest.payload_bytes} payload bytes", f"{found_bytes} payload bytes"
        )

    try:
        arrays = joblib.load(path)
    except Exception as e:
        raise CheckpointLoadError(str(path), "joblib payload", repr(e)) from e

    found_count = int(sum(np.asarray(a).size for a in arrays.values()))
    if found_count != manifest.param_count:
        raise CheckpointLoadError(
            str(path), f"{manifest.param_count} parameters", f"{found_count} parameters"
        )

    state = {}
    for name, array in arrays.items():
        tensor = torch.from_numpy(np.asarray(array))
        state[name] = tensor.to(DTYPE) if tensor.is_floating_point() else tensor
    return state, manifest


def load_into(module: nn.Module, path: str | Path, expected_module: str | None = None) -> CheckpointManifest:
    """
    Load a checkpoint into an already-built module, checking every shape.

    Raises:
        CheckpointLoadError: parameter names or shapes differ from the module's
    """
    state, manifest = load_checkpoint(path, expected_module=expected_module)
    own = module.state_dict()
    expected = {name: list(t.shape) for name, t in own.items()}
    found = {name: list(t.shape) for name, t in state.items()}
    if expected != found:
        raise CheckpointLoadError(str(path), expected, found)
    module.load_state_dict(state)
    return manifest
