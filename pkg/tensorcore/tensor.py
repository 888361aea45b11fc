"""
Tensor denso de float64 con gradiente opcional.

Los tensores de imagen usan el orden (batch, canales, alto, ancho).
"""
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from pnpdepth.errors import ConfigurationError, NumericError


class Tensor:
    """Valor numérico de un nodo del grafo más su gradiente acumulado."""

    __slots__ = ('data', 'grad', 'requires_grad', 'name')

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def zeros(cls, shape: Sequence[int], requires_grad: bool = False, name: str = "") -> "Tensor":
        return cls(np.zeros(tuple(shape)), requires_grad=requires_grad, name=name)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def zero_grad(self) -> None:
        self.grad = None

    def assign(self, values) -> None:
        """Sustituye los datos manteniendo la forma (mutación de hoja)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.data.shape:
            raise ConfigurationError(
                f"shape mismatch: cannot assign {values.shape} to tensor of shape {self.data.shape}"
            )
        self.data = values.copy()

    def check_finite(self, where: str = "") -> None:
        if not np.isfinite(self.data).all():
            raise NumericError("non-finite value", node=where or self.name or None)
        if self.grad is not None and not np.isfinite(self.grad).all():
            raise NumericError("non-finite gradient", node=where or self.name or None)

    def tobytes(self) -> bytes:
        return np.ascontiguousarray(self.data, dtype='<f8').tobytes()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"


def stack_channels(parts: Iterable[np.ndarray]) -> Tensor:
    """Concatena mapas (C,H,W) o (H,W) en un tensor de imagen (1,C,H,W)."""
    arrays = []
    for p in parts:
        a = np.asarray(p, dtype=np.float64)
        if a.ndim == 2:
            a = a[None]
        arrays.append(a)
    return Tensor(np.concatenate(arrays, axis=0)[None])
