"""
Campo de influencia de una posición de z sobre la salida.

Se perturba z en un solo elemento y se marcan los píxeles de salida que
cambian. Por defecto la sonda es linealizada (relu como identidad), con lo
que el resultado depende solo de la geometría de las capas posteriores al
tap; con linearize=False el campo depende además de los datos.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from depthnet.networks import Model, split
from pnpdepth.errors import ConfigurationError
from tensorcore.tensor import Tensor

logger = logging.getLogger(__name__)

PROBE_EPSILON = 1.0


@dataclass(frozen=True)
class InfluentialField:
    tap: str
    source: Tuple[int, int]
    affected: np.ndarray
    bbox: Optional[Tuple[int, int, int, int]]

    @property
    def height(self) -> int:
        return 0 if self.bbox is None else self.bbox[2] - self.bbox[0] + 1

    @property
    def width(self) -> int:
        return 0 if self.bbox is None else self.bbox[3] - self.bbox[1] + 1

    @property
    def area(self) -> int:
        return self.height * self.width

    @property
    def count(self) -> int:
        return int(self.affected.sum())


def bounding_box(affected: np.ndarray) -> Optional[Tuple[int, int, int, int]]:
    rows = np.flatnonzero(affected.any(axis=1))
    cols = np.flatnonzero(affected.any(axis=0))
    if rows.size == 0:
        return None
    return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])


def _probe_input(model: Model, x: Optional[Tensor], size: Tuple[int, int]) -> Tensor:
    if x is not None:
        return x
    h, w = size
    return Tensor(np.zeros((1, model.in_channels, h, w)), name='x')


def influential_field(model: Model, tap: Optional[str] = None, pixel: Optional[Tuple[int, int]] = None,
                      channel: int = 0, x: Optional[Tensor] = None, size: Tuple[int, int] = (48, 64),
                      linearize: bool = True, epsilon: float = PROBE_EPSILON) -> InfluentialField:
    """
    Píxeles de salida afectados por z[0, channel, i, j]. pixel se da en la
    rejilla de z; por defecto su centro.
    """
    tap = tap or model.default_tap
    front, rear = split(model, tap)
    x = _probe_input(model, x, size)
    z = front(x)
    _, c, zh, zw = z.shape
    i, j = pixel if pixel is not None else (zh // 2, zw // 2)
    if not (0 <= i < zh and 0 <= j < zw and 0 <= channel < c):
        raise ConfigurationError(f"probe ({channel}, {i}, {j}) outside z of shape {z.shape}")

    base = rear(z, x, linearize=linearize).data
    probe = z.data.copy()
    probe[0, channel, i, j] += epsilon
    moved = rear(Tensor(probe), x, linearize=linearize).data
    affected = (np.abs(moved - base) > 0)[0, 0]
    field = InfluentialField(tap, (int(i), int(j)), affected, bounding_box(affected))
    logger.debug(f"Campo de {tap} en {(i, j)}: {field.height}x{field.width}, {field.count} píxeles")
    return field


def output_aligned_pixel(model: Model, tap: str, out_pixel: Tuple[int, int],
                         size: Tuple[int, int] = (48, 64)) -> Tuple[int, int]:
    """Posición de z que corresponde al píxel de salida, según la resolución del tap."""
    front, _ = split(model, tap)
    z = front(_probe_input(model, None, size))
    factor_h = size[0] // z.shape[2]
    factor_w = size[1] // z.shape[3]
    return out_pixel[0] // factor_h, out_pixel[1] // factor_w


def field_areas(model: Model, out_pixel: Optional[Tuple[int, int]] = None,
                size: Tuple[int, int] = (48, 64), linearize: bool = True):
    """Área del campo de cada tap para la fuente alineada con out_pixel."""
    out_pixel = out_pixel or (size[0] // 2, size[1] // 2)
    areas = {}
    for tap in model.taps:
        source = output_aligned_pixel(model, tap, out_pixel, size)
        areas[tap] = influential_field(model, tap, source, size=size, linearize=linearize).area
    return areas
