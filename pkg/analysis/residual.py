"""
Descomposición del gradiente disperso por píxel observado.

Con reducción suma, d(pérdida)/dz es la suma de las contribuciones de
cada píxel enmascarado; los píxeles no observados no aportan nada. El
residuo mide cuánto se aparta el gradiente real de esa suma.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from depthnet.networks import Model, split
from pnpdepth.errors import ContractError
from sparsity.sampling import SparseDepth
from tensorcore import losses
from tensorcore.graph import Graph
from tensorcore.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class ResidualDecomposition:
    gradient: np.ndarray
    pixel_sum: np.ndarray
    residual_norm: float
    n_pixels: int


def residual_decomposition(model: Model, x: Tensor, sparse: SparseDepth, tap: Optional[str] = None,
                           loss_kind=losses.LossKind.L1) -> ResidualDecomposition:
    tap = tap or model.default_tap
    if sparse.count == 0:
        raise ContractError("residual decomposition needs a non-empty mask")
    front, rear = split(model, tap)
    z0 = front(x)
    kind = losses.LossKind.parse(loss_kind)

    graph = Graph(f"residual:{tap}")
    z = graph.leaf(z0, name='z')
    out = rear.build(graph, z, graph.leaf(x, name='x'))
    pred = graph.forward(out).data

    # El umbral berHu del conjunto completo se fija para todas las contribuciones
    threshold = None
    if kind is losses.LossKind.BERHU:
        threshold = losses.berhu_threshold(pred.reshape(sparse.shape) - sparse.values.data, sparse.mask.data)

    full = losses.loss(out, sparse, kind, reduction='sum', threshold=threshold)
    gradient = graph.backward_to(full, z).data

    pixel_sum = np.zeros_like(gradient)
    mask = sparse.mask.data
    for idx in np.argwhere(mask > 0):
        single = np.zeros_like(mask)
        single[tuple(idx)] = 1.0
        target = SparseDepth(values=Tensor(sparse.values.data * single), mask=Tensor(single))
        node = losses.loss(out, target, kind, reduction='sum', threshold=threshold)
        pixel_sum += graph.backward_to(node, z).data

    residual = float(np.abs(gradient - pixel_sum).max()) if gradient.size else 0.0
    logger.debug(f"Residuo de la descomposición en {tap}: {residual:.3e} ({sparse.count} píxeles)")
    return ResidualDecomposition(gradient, pixel_sum, residual, sparse.count)
