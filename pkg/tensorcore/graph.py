"""
Grafo de cómputo con diferenciación automática en modo inverso.

Los nodos se construyen en orden topológico (un nodo solo puede depender
de nodos ya creados), así que el orden de construcción es el orden de
evaluación. forward() recalcula los ancestros del nodo pedido y deja la
salida en caché; backward_to() propaga el gradiente desde una pérdida
escalar y se detiene en un nodo intermedio.
"""
import logging
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from pnpdepth.errors import ConfigurationError, ContractError, GraphError, NumericError

from .tensor import Tensor

logger = logging.getLogger(__name__)

ForwardFn = Callable[[List[np.ndarray]], np.ndarray]
BackwardFn = Callable[[np.ndarray, List[np.ndarray], np.ndarray, List[bool]], List[Optional[np.ndarray]]]


class OpKind(str, Enum):
    CONV2D = 'conv2d'
    RELU = 'relu'
    ADD = 'add'
    CONCAT = 'concat'
    UPSAMPLE2X = 'upsample2x'
    DOWNSAMPLE2X = 'downsample2x'
    BIAS = 'bias'
    SCALE = 'scale'
    LOSS = 'loss'
    LEAF = 'leaf'


class GraphNode:
    """Nodo del grafo: tipo de operación, padres y salida en caché."""

    def __init__(
        self,
        graph: "Graph",
        index: int,
        kind: OpKind,
        parents: Sequence["GraphNode"],
        shape: Tuple[int, ...],
        forward_fn: Optional[ForwardFn] = None,
        backward_fn: Optional[BackwardFn] = None,
        tensor: Optional[Tensor] = None,
        name: str = "",
    ):
        self.graph = graph
        self.index = index
        self.kind = kind
        self.parents = list(parents)
        self.shape = tuple(shape)
        self.forward_fn = forward_fn
        self.backward_fn = backward_fn
        self.name = name or f"{kind.value}#{index}"
        # Las hojas comparten su Tensor; el resto se rellena en forward
        self.output: Optional[Tensor] = tensor

    @property
    def is_leaf(self) -> bool:
        return self.kind is OpKind.LEAF

    def __repr__(self):
        return f"GraphNode({self.name}, shape={self.shape})"


class Graph:
    """Grafo acíclico; una instancia por hilo."""

    def __init__(self, name: str = ""):
        self.name = name
        self.nodes: List[GraphNode] = []

    # ---- construcción ----

    def leaf(self, tensor: Tensor, name: str = "") -> GraphNode:
        return self._append(GraphNode(self, len(self.nodes), OpKind.LEAF, [], tensor.shape,
                                      tensor=tensor, name=name or tensor.name))

    def add_node(
        self,
        kind: OpKind,
        parents: Sequence[GraphNode],
        shape: Tuple[int, ...],
        forward_fn: ForwardFn,
        backward_fn: BackwardFn,
        name: str = "",
        node_cls: type = GraphNode,
    ) -> GraphNode:
        for p in parents:
            if p.graph is not self:
                raise GraphError(f"parent {p.name} belongs to another graph")
        node = node_cls(self, len(self.nodes), kind, parents, shape,
                        forward_fn=forward_fn, backward_fn=backward_fn, name=name)
        return self._append(node)

    def _append(self, node: GraphNode) -> GraphNode:
        self.nodes.append(node)
        return node

    def ancestors(self, node: GraphNode) -> Set[int]:
        """Índices de los ancestros de node, incluido él mismo."""
        seen: Set[int] = set()
        stack = [node]
        while stack:
            n = stack.pop()
            if n.index in seen:
                continue
            seen.add(n.index)
            stack.extend(n.parents)
        return seen

    # ---- evaluación ----

    def forward(self, node: GraphNode) -> Tensor:
        if node.graph is not self:
            raise GraphError(f"node {node.name} belongs to another graph")
        needed = self.ancestors(node)
        for n in self.nodes[: node.index + 1]:
            if n.index not in needed:
                continue
            if n.is_leaf:
                if n.output.shape != n.shape:
                    raise ConfigurationError(
                        f"shape mismatch: leaf {n.name} expects {n.shape}, holds {n.output.shape}"
                    )
                if not np.isfinite(n.output.data).all():
                    raise NumericError("non-finite value", node=n.name)
                continue
            out = n.forward_fn([p.output.data for p in n.parents])
            if not np.isfinite(out).all():
                raise NumericError("non-finite value", node=n.name)
            n.output = Tensor(out, name=n.name)
        return node.output

    def zero_grad(self) -> None:
        for n in self.nodes:
            if n.output is not None:
                n.output.zero_grad()

    def backward(self, loss: GraphNode, stop_at: Optional[GraphNode] = None) -> Dict[int, np.ndarray]:
        """
        Propaga d(loss)/d(·) en orden inverso de construcción.

        Sin stop_at, recibe gradiente toda hoja con requires_grad y sus
        descendientes. Con stop_at, solo stop_at y los nodos entre él y la
        pérdida; sus ancestros y los parámetros no reciben nada.
        """
        if loss.graph is not self:
            raise GraphError(f"node {loss.name} belongs to another graph")
        if loss.output is None:
            self.forward(loss)
        if loss.output.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.output.shape}")

        loss_ancestors = self.ancestors(loss)
        wants: Dict[int, bool] = {}
        if stop_at is not None:
            if stop_at.graph is not self or stop_at.index not in loss_ancestors:
                raise GraphError(f"{stop_at.name} is not an ancestor of {loss.name}")
            for n in self.nodes[: loss.index + 1]:
                if n.index < stop_at.index:
                    wants[n.index] = False
                elif n is stop_at:
                    wants[n.index] = True
                else:
                    wants[n.index] = any(wants[p.index] for p in n.parents)
        else:
            for n in self.nodes[: loss.index + 1]:
                if n.is_leaf:
                    wants[n.index] = bool(n.output.requires_grad)
                else:
                    wants[n.index] = any(wants[p.index] for p in n.parents)

        self.zero_grad()
        grads: Dict[int, np.ndarray] = {loss.index: np.ones(loss.shape)}
        for n in reversed(self.nodes[: loss.index + 1]):
            if n.index not in loss_ancestors or not wants[n.index]:
                continue
            g = grads.get(n.index)
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericError("non-finite gradient", node=n.name)
            if n.is_leaf or n is stop_at:
                continue
            needs = [wants[p.index] for p in n.parents]
            if not any(needs):
                continue
            contribs = n.backward_fn(g, [p.output.data for p in n.parents], n.output.data, needs)
            for p, c, need in zip(n.parents, contribs, needs):
                if not need or c is None:
                    continue
                if p.index in grads:
                    grads[p.index] = grads[p.index] + c
                else:
                    grads[p.index] = c

        for n in self.nodes[: loss.index + 1]:
            if wants.get(n.index) and n.index in loss_ancestors:
                n.output.grad = grads.get(n.index, np.zeros(n.shape))
        return grads

    def backward_to(self, loss: GraphNode, stop_at: GraphNode) -> Tensor:
        """Devuelve d(loss)/d(salida de stop_at) sin tocar sus ancestros."""
        self.backward(loss, stop_at=stop_at)
        return Tensor(stop_at.output.grad, name=f"grad:{stop_at.name}")
