"""
Operadores diferenciables sobre tensores de imagen (N, C, H, W).

Cada función valida formas al construir el nodo y registra en el grafo
su forward y su backward. La convolución es directa (im2col + producto
matricial), con relleno de ceros.
"""
from typing import List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from pnpdepth.errors import ConfigurationError

from .graph import GraphNode, OpKind


def _require_image(node: GraphNode, op: str) -> None:
    if len(node.shape) != 4:
        raise ConfigurationError(f"{op} expects an (N, C, H, W) tensor, got shape {node.shape}")


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _windows(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x: GraphNode, weight: GraphNode, stride: int = 1, padding: int = 0, name: str = "") -> GraphNode:
    """Correlación 2-D: out[n,o,i,j] = sum_{c,a,b} w[o,c,a,b] * xpad[n,c,i*s+a,j*s+b]."""
    _require_image(x, 'conv2d')
    if len(weight.shape) != 4 or weight.shape[2] != weight.shape[3]:
        raise ConfigurationError(f"conv2d expects a square (O, C, k, k) kernel, got shape {weight.shape}")
    n, c, h, w = x.shape
    o, wc, k, _ = weight.shape
    if wc != c:
        raise ConfigurationError(f"shape mismatch: input {x.shape} vs kernel {weight.shape}")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"invalid stride {stride} / padding {padding}")
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ConfigurationError(f"shape mismatch: input {x.shape} too small for kernel {weight.shape}")

    def fwd(args: List[np.ndarray]) -> np.ndarray:
        xv, wv = args
        win = _windows(xv, k, stride, padding)
        out = np.tensordot(win, wv, axes=([1, 4, 5], [1, 2, 3]))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def bwd(g, args, out, needs) -> List[Optional[np.ndarray]]:
        xv, wv = args
        gx = gw = None
        if needs[1]:
            win = _windows(xv, k, stride, padding)
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        if needs[0]:
            # gcols[n, i, j, c, a, b]
            gcols = np.tensordot(g, wv, axes=([1], [0]))
            hp, wp = h + 2 * padding, w + 2 * padding
            gpad = np.zeros((n, c, hp, wp))
            for a in range(k):
                for b in range(k):
                    gpad[:, :, a:a + stride * (ho - 1) + 1:stride, b:b + stride * (wo - 1) + 1:stride] += \
                        gcols[:, :, :, :, a, b].transpose(0, 3, 1, 2)
            gx = gpad[:, :, padding:padding + h, padding:padding + w]
            gx = np.ascontiguousarray(gx)
        return [gx, gw]

    return x.graph.add_node(OpKind.CONV2D, [x, weight], (n, o, ho, wo), fwd, bwd, name=name)


def bias(x: GraphNode, b: GraphNode, name: str = "") -> GraphNode:
    """Suma un sesgo por canal."""
    _require_image(x, 'bias')
    if b.shape != (x.shape[1],):
        raise ConfigurationError(f"shape mismatch: input {x.shape} vs bias {b.shape}")

    def fwd(args):
        xv, bv = args
        return xv + bv[None, :, None, None]

    def bwd(g, args, out, needs):
        return [g if needs[0] else None, g.sum(axis=(0, 2, 3)) if needs[1] else None]

    return x.graph.add_node(OpKind.BIAS, [x, b], x.shape, fwd, bwd, name=name)


def relu(x: GraphNode, bypass: bool = False, name: str = "") -> GraphNode:
    """max(x, 0). Con bypass devuelve x tal cual (sonda linealizada)."""
    if bypass:
        return x

    def fwd(args):
        return np.maximum(args[0], 0.0)

    def bwd(g, args, out, needs):
        return [g * (args[0] > 0)]

    return x.graph.add_node(OpKind.RELU, [x], x.shape, fwd, bwd, name=name)


def add(a: GraphNode, b: GraphNode, name: str = "") -> GraphNode:
    if a.shape != b.shape:
        raise ConfigurationError(f"shape mismatch: {a.shape} vs {b.shape}")

    def fwd(args):
        return args[0] + args[1]

    def bwd(g, args, out, needs):
        return [g if needs[0] else None, g if needs[1] else None]

    return a.graph.add_node(OpKind.ADD, [a, b], a.shape, fwd, bwd, name=name)


def scale(x: GraphNode, factor: float, name: str = "") -> GraphNode:
    factor = float(factor)

    def fwd(args):
        return args[0] * factor

    def bwd(g, args, out, needs):
        return [g * factor]

    return x.graph.add_node(OpKind.SCALE, [x], x.shape, fwd, bwd, name=name)


def concat(parts: Sequence[GraphNode], name: str = "") -> GraphNode:
    """Concatena en el eje de canales."""
    if not parts:
        raise ConfigurationError("concat needs at least one input")
    for p in parts:
        _require_image(p, 'concat')
    ref = parts[0].shape
    for p in parts[1:]:
        if (p.shape[0], p.shape[2], p.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ConfigurationError(f"shape mismatch: {ref} vs {p.shape}")
    sizes = [p.shape[1] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def fwd(args):
        return np.concatenate(args, axis=1)

    def bwd(g, args, out, needs):
        return [
            np.ascontiguousarray(g[:, bounds[i]:bounds[i + 1]]) if needs[i] else None
            for i in range(len(sizes))
        ]

    shape = (ref[0], int(bounds[-1]), ref[2], ref[3])
    return parts[0].graph.add_node(OpKind.CONCAT, list(parts), shape, fwd, bwd, name=name)


def upsample2x(x: GraphNode, name: str = "") -> GraphNode:
    """Vecino más próximo; el backward es la traspuesta exacta (suma de bloques 2x2)."""
    _require_image(x, 'upsample2x')
    n, c, h, w = x.shape

    def fwd(args):
        return args[0].repeat(2, axis=2).repeat(2, axis=3)

    def bwd(g, args, out, needs):
        return [g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))]

    return x.graph.add_node(OpKind.UPSAMPLE2X, [x], (n, c, 2 * h, 2 * w), fwd, bwd, name=name)


def downsample2x(x: GraphNode, name: str = "") -> GraphNode:
    """Media de bloques 2x2; exige alto y ancho pares."""
    _require_image(x, 'downsample2x')
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigurationError(f"downsample2x needs even spatial extent, got shape {x.shape}")

    def fwd(args):
        return args[0].reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def bwd(g, args, out, needs):
        return [(g * 0.25).repeat(2, axis=2).repeat(2, axis=3)]

    return x.graph.add_node(OpKind.DOWNSAMPLE2X, [x], (n, c, h // 2, w // 2), fwd, bwd, name=name)
