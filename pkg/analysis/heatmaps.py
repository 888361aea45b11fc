"""
Mapas de mejora por píxel: |antes - gt| - |después - gt|.

Positivo donde el refinamiento reduce el error.
"""
from pathlib import Path
from typing import Tuple

import numpy as np

from scenes import netpbm


def improvement_map(before, after, gt) -> np.ndarray:
    b = np.asarray(getattr(before, 'data', before), dtype=np.float64)
    a = np.asarray(getattr(after, 'data', after), dtype=np.float64)
    d = np.asarray(getattr(gt, 'data', gt), dtype=np.float64)
    h, w = d.shape[-2:]
    b, a, d = b.reshape(h, w), a.reshape(h, w), d.reshape(h, w)
    return np.abs(b - d) - np.abs(a - d)


def write_improvement_map(path, before, after, gt) -> Tuple[Path, float]:
    return netpbm.write_signed_map(path, improvement_map(before, after, gt))
