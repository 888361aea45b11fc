"""
Redes de completado de profundidad y su partición en front/rear.

Un modelo es una lista ordenada de capas. Cualquier capa salvo la última
puede servir de punto de corte (tap): front(x) es la salida de esa capa y
rear(z) el resto de la red. rear(front(x)) == run(x) bit a bit porque
ambos caminos ejecutan las mismas operaciones en el mismo orden.
"""
import logging
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from pnpdepth.errors import ConfigurationError
from tensorcore.graph import Graph, GraphNode
from tensorcore.tensor import Tensor, stack_channels

from .layers import ConvLayer, Downsample, Layer, Upsample, check_chain

logger = logging.getLogger(__name__)

# Las muestras dispersas entran escaladas para quedar en el rango del RGB
SPARSE_INPUT_SCALE = 0.1


class Arch(str, Enum):
    PLAIN_CNN = 'plain_cnn'
    ENCDEC = 'encdec'
    COARSE_FINE = 'coarse_fine'
    CUSTOM = 'custom'

    @classmethod
    def parse(cls, value) -> "Arch":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown architecture '{value}', expected one of {[a.value for a in cls if a is not cls.CUSTOM]}"
            ) from None


class InputMode(str, Enum):
    RGB = 'rgb'
    SD = 'sd'
    RGB_SD = 'rgb+sd'

    @classmethod
    def parse(cls, value) -> "InputMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown input mode '{value}', expected one of {[m.value for m in cls]}"
            ) from None

    @property
    def channels(self) -> int:
        return {InputMode.RGB: 3, InputMode.SD: 2, InputMode.RGB_SD: 5}[self]

    @property
    def uses_sparse(self) -> bool:
        return self is not InputMode.RGB


class Model:
    """Red de profundidad: capas en orden, modo de entrada y tap por defecto."""

    def __init__(self, layers: List[Layer], input_mode=InputMode.RGB_SD, arch=Arch.CUSTOM,
                 default_tap: Optional[str] = None, in_channels: Optional[int] = None):
        self.input_mode = InputMode.parse(input_mode)
        self.arch = Arch.parse(arch)
        self.in_channels = in_channels or self.input_mode.channels
        check_chain(layers, self.in_channels)
        self.layers = list(layers)
        self.default_tap = default_tap or self.layers[0].name
        self.history: List[float] = []
        if self.taps:
            self.check_tap(self.default_tap)

    # ---- taps ----

    @property
    def taps(self) -> List[str]:
        return [layer.name for layer in self.layers[:-1]]

    def tap_index(self, tap: str) -> int:
        self.check_tap(tap)
        return self.taps.index(tap)

    def check_tap(self, tap: str) -> None:
        if tap not in self.taps:
            raise ConfigurationError(f"unknown tap '{tap}', valid taps: {', '.join(self.taps)}")

    def normalized_depth(self, tap: str) -> float:
        """Posición del tap en [0, 1]: 0 el primero, 1 el último."""
        index = self.tap_index(tap)
        return index / (len(self.taps) - 1) if len(self.taps) > 1 else 0.0

    # ---- parámetros ----

    def parameters(self) -> List[Tuple[str, Tensor]]:
        return [
            (f"{layer.name}.{key}", tensor)
            for layer in self.layers
            for key, tensor in layer.params.items()
        ]

    def zero_grad(self) -> None:
        for _, tensor in self.parameters():
            tensor.zero_grad()

    def parameter_bytes(self) -> bytes:
        """Volcado little-endian de todos los parámetros, en orden."""
        return b''.join(tensor.tobytes() for _, tensor in self.parameters())

    def snapshot(self) -> List[np.ndarray]:
        return [tensor.data.copy() for _, tensor in self.parameters()]

    def restore(self, values: List[np.ndarray]) -> None:
        for (_, tensor), value in zip(self.parameters(), values):
            tensor.assign(value)

    # ---- entrada ----

    def make_input(self, rgb=None, sparse=None) -> Tensor:
        """
        Apila la entrada (1, C, H, W) según el modo:
        rgb -> 3 canales; sd -> [0.1 * valores, máscara]; rgb+sd -> los cinco.
        """
        parts = []
        if self.input_mode in (InputMode.RGB, InputMode.RGB_SD):
            if rgb is None:
                raise ConfigurationError(f"input mode {self.input_mode.value} needs an RGB image")
            parts.append(getattr(rgb, 'data', rgb))
        if self.input_mode.uses_sparse:
            if sparse is None:
                raise ConfigurationError(f"input mode {self.input_mode.value} needs sparse depth")
            parts.append(sparse.values.data * SPARSE_INPUT_SCALE)
            parts.append(sparse.mask.data)
        x = stack_channels(parts)
        x.name = 'x'
        return x

    def input_for(self, scene, sparse=None) -> Tensor:
        return self.make_input(rgb=scene.rgb, sparse=sparse)

    # ---- construcción ----

    def _check_input(self, x: Tensor) -> None:
        if len(x.shape) != 4 or x.shape[1] != self.in_channels:
            raise ConfigurationError(
                f"input mode {self.input_mode.value} expects (N, {self.in_channels}, H, W), got {x.shape}"
            )

    def build_layers(self, graph: Graph, h: GraphNode, x: GraphNode, start: int = 0,
                     stop: Optional[int] = None, linearize: bool = False) -> GraphNode:
        """Encadena las capas [start, stop) sobre h."""
        for layer in self.layers[start:stop]:
            h = layer.build(graph, h, x, linearize=linearize)
        return h

    def build(self, graph: Graph, x: GraphNode, linearize: bool = False) -> GraphNode:
        return self.build_layers(graph, x, x, linearize=linearize)

    def run(self, x: Tensor) -> Tensor:
        """Predicción densa (N, 1, H, W)."""
        self._check_input(x)
        graph = Graph('run')
        xn = graph.leaf(x, name='x')
        return graph.forward(self.build(graph, xn))

    def __call__(self, x: Tensor) -> Tensor:
        return self.run(x)

    def __repr__(self):
        return f"Model({self.arch.value}, {self.input_mode.value}, {len(self.layers)} capas)"


class FrontSegment:
    """Red hasta el tap, incluido."""

    def __init__(self, model: Model, tap: str):
        self.model = model
        self.tap = tap
        self.stop = model.tap_index(tap) + 1

    def __call__(self, x: Tensor) -> Tensor:
        self.model._check_input(x)
        graph = Graph(f"front:{self.tap}")
        xn = graph.leaf(x, name='x')
        z = graph.forward(self.model.build_layers(graph, xn, xn, stop=self.stop))
        return Tensor(z.data, name=f"z:{self.tap}")


class RearSegment:
    """Resto de la red a partir del tap; x solo lo leen las capas que concatenan la entrada."""

    def __init__(self, model: Model, tap: str):
        self.model = model
        self.tap = tap
        self.start = model.tap_index(tap) + 1

    def build(self, graph: Graph, z: GraphNode, x: GraphNode, linearize: bool = False) -> GraphNode:
        return self.model.build_layers(graph, z, x, start=self.start, linearize=linearize)

    def __call__(self, z: Tensor, x: Tensor, linearize: bool = False) -> Tensor:
        graph = Graph(f"rear:{self.tap}")
        zn = graph.leaf(z, name='z')
        xn = graph.leaf(x, name='x')
        return graph.forward(self.build(graph, zn, xn, linearize=linearize))


def split(model: Model, tap: Optional[str] = None) -> Tuple[FrontSegment, RearSegment]:
    tap = tap or model.default_tap
    return FrontSegment(model, tap), RearSegment(model, tap)


# ---- arquitecturas ----

def _plain_cnn(in_channels: int, width: int = 16) -> Tuple[List[Layer], str]:
    layers: List[Layer] = [ConvLayer('conv1', in_channels, width)]
    layers += [ConvLayer(f"conv{i}", width, width) for i in (2, 3, 4)]
    layers.append(ConvLayer('conv5', width, 1, relu=False))
    return layers, 'conv1'


def _encdec(in_channels: int, prefix: str = "", out_channels: int = 1) -> List[Layer]:
    p = prefix
    return [
        ConvLayer(f"{p}enc1", in_channels, 8),
        Downsample(f"{p}down1"),
        ConvLayer(f"{p}enc2", 8, 16),
        Downsample(f"{p}down2"),
        ConvLayer(f"{p}bottleneck", 16, 32),
        Upsample(f"{p}up1"),
        ConvLayer(f"{p}dec1", 32, 16),
        Upsample(f"{p}up2"),
        ConvLayer(f"{p}dec2", 16, 8),
        ConvLayer(f"{p}head", 8, out_channels, relu=False),
    ]


def _coarse_fine(in_channels: int) -> Tuple[List[Layer], str]:
    layers = _encdec(in_channels, prefix='coarse.')
    layers += [
        ConvLayer('refine1', 1 + in_channels, 8, concat_input=True),
        ConvLayer('refine2', 8, 1, relu=False),
    ]
    return layers, 'coarse.bottleneck'


def build(arch, input_mode=InputMode.RGB_SD, seed: int = 0) -> Model:
    """Modelo con inicialización He determinista para seed."""
    arch = Arch.parse(arch)
    mode = InputMode.parse(input_mode)
    c = mode.channels
    if arch is Arch.PLAIN_CNN:
        layers, tap = _plain_cnn(c)
    elif arch is Arch.ENCDEC:
        layers, tap = _encdec(c), 'bottleneck'
    elif arch is Arch.COARSE_FINE:
        layers, tap = _coarse_fine(c)
    else:
        raise ConfigurationError("custom models are built from an explicit layer list")
    rng = np.random.default_rng(int(seed))
    for layer in layers:
        if isinstance(layer, ConvLayer):
            layer.init_he(rng)
    model = Model(layers, mode, arch=arch, default_tap=tap)
    logger.debug(f"{model} con taps {model.taps}")
    return model
