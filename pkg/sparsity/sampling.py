"""
Observaciones dispersas de profundidad y muestreo uniforme.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from pnpdepth.errors import ConfigurationError
from scenes import netpbm
from tensorcore.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class SparseDepth:
    """values = mask * D; ceros donde no hay observación."""
    values: Tensor
    mask: Tensor

    @classmethod
    def from_mask(cls, depth, mask) -> "SparseDepth":
        d = _as_depth(depth)
        m = (np.asarray(mask, dtype=np.float64).reshape(d.shape) > 0).astype(np.float64)
        return cls(values=Tensor(m * d, name='sparse'), mask=Tensor(m, name='mask'))

    @classmethod
    def empty_like(cls, depth) -> "SparseDepth":
        d = _as_depth(depth)
        return cls.from_mask(d, np.zeros(d.shape))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def count(self) -> int:
        return int(self.mask.data.sum())

    @property
    def density(self) -> float:
        return self.count / float(self.mask.size)

    def export(self, path) -> Tuple[Path, Path]:
        """Graymap 16 bits en mm (0 = sin dato) + graymap lateral de la máscara."""
        path = Path(path)
        values_path = netpbm.write_depth(path, self.values.data)
        mask_path = netpbm.write_pgm16(path.with_name(path.stem + '_mask' + path.suffix),
                                       self.mask.data * netpbm.U16_MAX)
        return values_path, mask_path


def _as_depth(depth) -> np.ndarray:
    d = np.asarray(getattr(depth, 'data', depth), dtype=np.float64)
    if d.ndim == 2:
        d = d[None]
    if d.ndim != 3 or d.shape[0] != 1:
        raise ConfigurationError(f"depth must be (1, H, W) or (H, W), got shape {d.shape}")
    return d


def sample_uniform(depth, n: int, seed: int) -> SparseDepth:
    """Exactamente n píxeles distintos, uniformes y sin reemplazo."""
    d = _as_depth(depth)
    total = d.size
    if n < 0 or n > total:
        raise ConfigurationError(f"cannot sample {n} points from {total} pixels")
    rng = np.random.default_rng(int(seed))
    mask = np.zeros(total)
    mask[rng.choice(total, size=int(n), replace=False)] = 1.0
    return SparseDepth.from_mask(d, mask.reshape(d.shape))


def percent_samples(n: int, height: int, width: int) -> float:
    return 100.0 * n / float(height * width)


def default_sample_count(height: int, width: int, fraction: float = 0.01) -> int:
    """1 % de los píxeles, como mínimo 1."""
    return max(1, int(round(fraction * height * width)))
