"""
Pérdidas enmascaradas contra profundidad dispersa.

loss = sum_ij M_ij * l(pred_ij, D_ij) / max(1, sum_ij M_ij)

El objetivo es cualquier objeto con atributos ``values`` y ``mask``
(Tensor o array) de igual tamaño que la predicción, p. ej. SparseDepth.
"""
from enum import Enum
from typing import Optional

import numpy as np

from pnpdepth.errors import ConfigurationError

from .graph import GraphNode, OpKind

BERHU_FRACTION = 0.2


class LossKind(str, Enum):
    L1 = 'l1'
    L2 = 'l2'
    BERHU = 'berhu'

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown loss '{value}', expected one of {[k.value for k in cls]}"
            ) from None


class LossNode(GraphNode):
    """Nodo escalar de pérdida; no_observation indica máscara vacía."""

    no_observation: bool = False
    kind_of_loss: Optional[LossKind] = None


def _as_array(value) -> np.ndarray:
    return np.asarray(getattr(value, 'data', value), dtype=np.float64)


def berhu_threshold(residual: np.ndarray, mask: np.ndarray) -> float:
    valid = mask > 0
    if not valid.any():
        return 0.0
    return BERHU_FRACTION * float(np.abs(residual[valid]).max())


def pointwise(kind: LossKind, residual: np.ndarray, threshold: float = 0.0):
    """Devuelve (l(r), dl/dr) elemento a elemento."""
    if kind is LossKind.L1:
        return np.abs(residual), np.sign(residual)
    if kind is LossKind.L2:
        return residual * residual, 2.0 * residual
    a = np.abs(residual)
    if threshold <= 0.0:
        return a, np.sign(residual)
    quad = a > threshold
    value = np.where(quad, (residual * residual + threshold * threshold) / (2.0 * threshold), a)
    grad = np.where(quad, residual / threshold, np.sign(residual))
    return value, grad


def loss(pred: GraphNode, target, kind=LossKind.L1, reduction: str = 'mean',
         threshold: Optional[float] = None, name: str = "") -> LossNode:
    """
    Pérdida escalar de pred frente a target.values en los píxeles de target.mask.

    El umbral berHu se recalcula en cada evaluación como 0.2 * max|r| sobre
    los píxeles válidos y se trata como constante al derivar, salvo que se
    pase ``threshold`` fijo.
    """
    kind = LossKind.parse(kind)
    if reduction not in ('mean', 'sum'):
        raise ConfigurationError(f"unknown reduction '{reduction}'")
    values = _as_array(target.values)
    mask = _as_array(target.mask)
    if values.size != int(np.prod(pred.shape)) or mask.size != values.size:
        raise ConfigurationError(
            f"shape mismatch: prediction {pred.shape} vs target {values.shape} / mask {mask.shape}"
        )
    values = values.reshape(pred.shape)
    mask = (mask.reshape(pred.shape) > 0).astype(np.float64)
    count = float(mask.sum())
    denom = max(1.0, count) if reduction == 'mean' else 1.0

    def _threshold(p: np.ndarray) -> float:
        if kind is not LossKind.BERHU:
            return 0.0
        if threshold is not None:
            return float(threshold)
        return berhu_threshold(p - values, mask)

    def fwd(args):
        p = args[0]
        if count == 0:
            return np.array(0.0)
        value, _ = pointwise(kind, p - values, _threshold(p))
        return np.array((mask * value).sum() / denom)

    def bwd(g, args, out, needs):
        p = args[0]
        if count == 0:
            return [np.zeros(pred.shape)]
        _, grad = pointwise(kind, p - values, _threshold(p))
        return [float(g) * mask * grad / denom]

    node = pred.graph.add_node(OpKind.LOSS, [pred], (), fwd, bwd, name=name or f"loss:{kind.value}",
                               node_cls=LossNode)
    node.no_observation = count == 0
    node.kind_of_loss = kind
    return node
