"""
Capas de las redes de profundidad.

Cada capa sabe construirse sobre un Graph a partir del nodo anterior h y
del nodo de entrada original x (solo lo usan las capas que concatenan la
entrada, como el refinador coarse-to-fine).
"""
from enum import IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np

from pnpdepth.errors import ConfigurationError
from tensorcore import ops
from tensorcore.graph import Graph, GraphNode
from tensorcore.tensor import Tensor

# Sesgo inicial de las capas con relu
RELU_BIAS_INIT = 0.1


class LayerKind(IntEnum):
    CONV = 1
    DOWNSAMPLE = 2
    UPSAMPLE = 3


class Layer:
    kind: LayerKind
    uses_input = False

    def __init__(self, name: str):
        self.name = name
        self.params: Dict[str, Tensor] = {}

    def build(self, graph: Graph, h: GraphNode, x: Optional[GraphNode], linearize: bool = False) -> GraphNode:
        raise NotImplementedError

    def output_channels(self, in_channels: int) -> int:
        return in_channels

    def output_size(self, height: int, width: int) -> Tuple[int, int]:
        return height, width

    def __repr__(self):
        return f"{self.__class__.__name__}({self.name})"


class ConvLayer(Layer):
    """Convolución k x k + sesgo (+ relu). Con concat_input concatena x antes."""
    kind = LayerKind.CONV

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel: int = 3,
                 stride: int = 1, padding: Optional[int] = None, relu: bool = True,
                 concat_input: bool = False):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.relu = relu
        self.uses_input = concat_input
        self.params['weight'] = Tensor.zeros((out_channels, in_channels, kernel, kernel),
                                             requires_grad=True, name=f"{name}.weight")
        self.params['bias'] = Tensor.zeros((out_channels,), requires_grad=True, name=f"{name}.bias")

    @property
    def weight(self) -> Tensor:
        return self.params['weight']

    @property
    def bias(self) -> Tensor:
        return self.params['bias']

    def init_he(self, rng: np.random.Generator) -> None:
        fan_in = self.in_channels * self.kernel * self.kernel
        self.weight.assign(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=self.weight.shape))
        self.bias.assign(np.full(self.bias.shape, RELU_BIAS_INIT if self.relu else 0.0))

    def build(self, graph, h, x, linearize=False):
        inp = ops.concat([h, x], name=f"{self.name}.concat") if self.uses_input else h
        w = graph.leaf(self.weight)
        b = graph.leaf(self.bias)
        out = ops.conv2d(inp, w, stride=self.stride, padding=self.padding, name=f"{self.name}.conv")
        out = ops.bias(out, b, name=f"{self.name}.bias")
        if self.relu:
            out = ops.relu(out, bypass=linearize, name=f"{self.name}.relu")
        return out

    def output_channels(self, in_channels):
        return self.out_channels

    def output_size(self, height, width):
        return (ops.conv_output_size(height, self.kernel, self.stride, self.padding),
                ops.conv_output_size(width, self.kernel, self.stride, self.padding))


class Downsample(Layer):
    kind = LayerKind.DOWNSAMPLE

    def build(self, graph, h, x, linearize=False):
        return ops.downsample2x(h, name=self.name)

    def output_size(self, height, width):
        return height // 2, width // 2


class Upsample(Layer):
    kind = LayerKind.UPSAMPLE

    def build(self, graph, h, x, linearize=False):
        return ops.upsample2x(h, name=self.name)

    def output_size(self, height, width):
        return height * 2, width * 2


def check_chain(layers: List[Layer], in_channels: int) -> None:
    """Comprueba que los canales encadenan; la última capa debe dar 1 canal."""
    if not layers:
        raise ConfigurationError("a model needs at least one layer")
    names = [layer.name for layer in layers]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate layer names in {names}")
    channels = in_channels
    for layer in layers:
        if isinstance(layer, ConvLayer):
            expected = channels + (in_channels if layer.uses_input else 0)
            if layer.in_channels != expected:
                raise ConfigurationError(
                    f"layer {layer.name}: expects {layer.in_channels} channels, receives {expected}"
                )
        channels = layer.output_channels(channels)
    if channels != 1:
        raise ConfigurationError(f"model output must have 1 channel, got {channels}")
