"""Checkpoint container: a zip of ``.npy`` arrays readable by ``numpy.load``.

Entries are written uncompressed with a fixed timestamp so identical
parameters always produce identical bytes.
"""

import json
import logging
import zipfile
from pathlib import Path

import numpy as np

from cascadeseg.errors import CheckpointError, ShapeError
from cascadeseg.network.params import CascadeConfig, ModelParams
from cascadeseg.autodiff.tensor import Tensor

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FORMAT_KEY = "__format__"
CONFIG_KEY = "__cascade__"
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def _write_entry(archive: zipfile.ZipFile, name: str, array: np.ndarray) -> None:
    info = zipfile.ZipInfo(f"{name}.npy", date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_STORED
    with archive.open(info, "w") as fh:
        # header entries stay 0-d
        np.lib.format.write_array(fh, np.asarray(array), allow_pickle=False)


def _scalar(entry: np.ndarray, name: str):
    if entry.size != 1:
        raise CheckpointError(f"checkpoint header {name} must hold one value, got shape {entry.shape}")
    return entry.reshape(()).item()


def save_checkpoint(path: str | Path, params: ModelParams) -> Path:
    path = Path(path)
    if not path.parent.exists():
        raise CheckpointError(f"checkpoint directory does not exist: {path.parent}")
    with zipfile.ZipFile(path, "w") as archive:
        _write_entry(archive, FORMAT_KEY, np.array(FORMAT_VERSION, dtype=np.int64))
        _write_entry(archive, CONFIG_KEY, np.array(json.dumps(params.config.to_dict(), sort_keys=True)))
        for pid, tensor in params.items():
            _write_entry(archive, pid, tensor.data)
    logger.info("Saved checkpoint with %d tensors to %s", len(params), path)
    return path


def load_checkpoint(path: str | Path, requires_grad: bool = False) -> ModelParams:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            entries = {name: archive[name] for name in archive.files}
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if FORMAT_KEY not in entries or CONFIG_KEY not in entries:
        raise CheckpointError(f"{path} is not a cascadeseg checkpoint (missing header entries)")
    version = _scalar(entries.pop(FORMAT_KEY), FORMAT_KEY)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} in {path}")
    try:
        config = CascadeConfig.from_dict(json.loads(str(_scalar(entries.pop(CONFIG_KEY), CONFIG_KEY))))
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"invalid cascade config in {path}: {e}") from e

    try:
        params = ModelParams(
            config, {pid: Tensor(values, requires_grad=requires_grad) for pid, values in entries.items()}
        )
    except ShapeError as e:
        raise CheckpointError(f"checkpoint {path} does not match its config: {e}") from e
    logger.info("Loaded checkpoint %s (q=%d, C_u=%d)", path, config.q, config.unified_channels)
    return params
