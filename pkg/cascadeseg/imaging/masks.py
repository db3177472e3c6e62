"""8-bit grayscale mask codec and RGB image loading (PNG via Pillow)."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from cascadeseg.errors import MaskDecodeError, MaskIOError, MaskNotFoundError, ShapeError, UnsupportedColorTypeError

logger = logging.getLogger(__name__)

SIXTEEN_BIT_MODES = ("I;16", "I;16B", "I;16L", "I")


@dataclass(frozen=True)
class MaskImage:
    samples: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2 or samples.dtype != np.uint8:
            raise ShapeError(f"mask samples must be a 2-D uint8 array, got {samples.dtype} {samples.shape}")
        if 0 in samples.shape:
            raise ShapeError(f"mask has empty extent {samples.shape}")

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    def to_unit(self) -> np.ndarray:
        return self.samples.astype(np.float64) / 255.0

    @classmethod
    def from_unit(cls, probs: np.ndarray) -> "MaskImage":
        """Quantize [0, 1] values as round(p * 255), halves rounded up."""
        scaled = np.floor(np.clip(np.asarray(probs, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5)
        return cls(scaled.astype(np.uint8))


def _luma(rgb: np.ndarray) -> np.ndarray:
    """Integer ITU-R 601 luma, rounded half-up."""
    r, g, b = (rgb[..., i].astype(np.int64) for i in range(3))
    return ((299 * r + 587 * g + 114 * b + 500) // 1000).astype(np.uint8)


def _to_gray(image: Image.Image, path: Path) -> np.ndarray:
    mode = image.mode
    if mode == "L":
        return np.asarray(image, dtype=np.uint8)
    if mode == "1":
        return np.asarray(image, dtype=np.uint8) * 255
    if mode == "LA":
        return np.asarray(image.getchannel("L"), dtype=np.uint8)
    if mode == "P":
        return _luma(np.asarray(image.convert("RGB")))
    if mode in ("RGB", "RGBA"):
        return _luma(np.asarray(image))
    if mode in SIXTEEN_BIT_MODES:
        wide = np.clip(np.asarray(image).astype(np.int64), 0, 65535)
        return ((2 * wide + 257) // 514).astype(np.uint8)
    raise UnsupportedColorTypeError(f"{path}: unsupported color type {mode}")


def _open(path: str | Path) -> tuple[Image.Image, Path]:
    path = Path(path)
    if not path.is_file():
        raise MaskNotFoundError(f"{path}: no such file")
    try:
        image = Image.open(path)
        image.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise MaskDecodeError(f"{path}: cannot decode image ({e})") from e
    return image, path


def load_mask(path: str | Path) -> MaskImage:
    image, path = _open(path)
    with image:
        samples = _to_gray(image, path)
    logger.debug("Loaded mask %s (%dx%d, mode %s)", path, samples.shape[1], samples.shape[0], image.mode)
    return MaskImage(np.ascontiguousarray(samples))


def _check_parent(path: Path) -> None:
    if not path.parent.is_dir():
        raise MaskIOError(f"{path}: parent directory does not exist")


def save_mask(path: str | Path, mask: MaskImage) -> Path:
    path = Path(path)
    _check_parent(path)
    Image.fromarray(np.ascontiguousarray(mask.samples)).save(path, format="PNG")
    return path


def load_image(path: str | Path) -> np.ndarray:
    """(3, H, W) float64 RGB in [0, 1]."""
    image, path = _open(path)
    with image:
        rgb = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def save_image(path: str | Path, image: np.ndarray) -> Path:
    path = Path(path)
    _check_parent(path)
    array = np.asarray(image, dtype=np.float64)
    if array.ndim != 3 or array.shape[0] != 3:
        raise ShapeError(f"expected a (3, H, W) image, got shape {array.shape}")
    quantized = np.floor(np.clip(array, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(np.ascontiguousarray(quantized.transpose(1, 2, 0))).save(path, format="PNG")
    return path
