"""
Lectura y escritura de imágenes portables binarias con Pillow.

- Profundidad: graymap de 16 bits (P5, maxval 65535, big-endian), en milímetros.
- Color: pixmap de 8 bits (P6).
- Mapas con signo: graymap de 16 bits con 32768 como cero.
"""
import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from pnpdepth.errors import ConfigurationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MM_PER_METER = 1000.0
U16_MAX = 65535
SIGNED_ZERO = 32768


def write_pgm16(path: PathLike, values: np.ndarray) -> Path:
    """Escribe enteros [0, 65535] como P5 de 16 bits."""
    arr = np.asarray(values)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ConfigurationError(f"graymap expects a 2-D array, got shape {arr.shape}")
    arr = np.clip(np.rint(arr), 0, U16_MAX).astype(np.int32)
    path = Path(path)
    Image.fromarray(arr).save(path, format='PPM')
    return path


def write_ppm(path: PathLike, rgb: np.ndarray) -> Path:
    """Escribe un mapa (3, H, W) en [0, 1] como P6 de 8 bits."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ConfigurationError(f"pixmap expects a (3, H, W) array, got shape {arr.shape}")
    img = np.clip(np.rint(arr.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    Image.fromarray(img, 'RGB').save(path, format='PPM')
    return path


def _open(path: PathLike) -> Image.Image:
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as e:
        raise ConfigurationError(f"cannot read image {path}: {e}") from e
    if img.format != 'PPM':
        raise ConfigurationError(f"{path} is not a portable graymap/pixmap")
    return img


def read_pgm16(path: PathLike) -> np.ndarray:
    img = _open(path)
    if img.mode not in ('I', 'I;16', 'I;16B', 'L'):
        raise ConfigurationError(f"{path} is not a graymap (mode {img.mode})")
    return np.asarray(img, dtype=np.int64)


def read_ppm(path: PathLike) -> np.ndarray:
    """Devuelve (3, H, W) en [0, 1]."""
    img = _open(path)
    if img.mode != 'RGB':
        raise ConfigurationError(f"{path} is not an RGB pixmap (mode {img.mode})")
    return np.asarray(img, dtype=np.float64).transpose(2, 0, 1) / 255.0


def depth_to_mm(depth: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(depth, dtype=np.float64) * MM_PER_METER), 0, U16_MAX)


def write_depth(path: PathLike, depth_m: np.ndarray) -> Path:
    return write_pgm16(path, depth_to_mm(depth_m))


def read_depth(path: PathLike) -> np.ndarray:
    """Profundidad en metros (1, H, W)."""
    return read_pgm16(path).astype(np.float64)[None] / MM_PER_METER


def write_signed_map(path: PathLike, values: np.ndarray, scale: float = None) -> Tuple[Path, float]:
    """
    Mapa con signo a 16 bits: 32768 + values / scale * 32767.

    Si scale es None se usa max|values| (o 1 si todo es cero). Escribe un
    fichero lateral .txt con la escala.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if scale is None:
        peak = float(np.abs(arr).max()) if arr.size else 0.0
        scale = peak if peak > 0 else 1.0
    encoded = SIGNED_ZERO + np.clip(arr / scale, -1.0, 1.0) * (U16_MAX - SIGNED_ZERO)
    path = write_pgm16(path, encoded)
    sidecar = path.with_suffix('.txt')
    sidecar.write_text(
        f"zero = {SIGNED_ZERO}\nscale_m = {scale!r}\n"
        f"value_m = (pixel - {SIGNED_ZERO}) / {U16_MAX - SIGNED_ZERO} * scale_m\n",
        encoding='utf-8',
    )
    return path, scale


def decode_signed_map(pixels: np.ndarray, scale: float) -> np.ndarray:
    return (np.asarray(pixels, dtype=np.float64) - SIGNED_ZERO) / (U16_MAX - SIGNED_ZERO) * scale
