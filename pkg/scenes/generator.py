"""
Generador procedural de escenas RGB-D.

Una escena es un plano de suelo (rampa de profundidad monótona por filas)
más cajas y esferas apoyadas en él, compuestas con z-buffer. El color es
un sombreado determinista de la profundidad por el albedo de cada objeto,
de modo que la profundidad se puede inferir en parte desde el RGB.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from pnpdepth.errors import ConfigurationError
from tensorcore.tensor import Tensor

logger = logging.getLogger(__name__)

PLANE_ALBEDO = (0.55, 0.5, 0.45)
RGB_NOISE_STD = 0.01


@dataclass(frozen=True)
class SceneParams:
    height: int = 48
    width: int = 64
    d_min: float = 0.5
    d_max: float = 10.0
    n_objects: int = 4

    def validate(self) -> "SceneParams":
        if self.height < 16 or self.width < 16:
            raise ConfigurationError(f"scene must be at least 16x16, got {self.height}x{self.width}")
        if not (0.0 < self.d_min < self.d_max) or not math.isfinite(self.d_max):
            raise ConfigurationError(f"invalid depth bounds d_min={self.d_min}, d_max={self.d_max}")
        if self.n_objects < 0:
            raise ConfigurationError(f"n_objects must be >= 0, got {self.n_objects}")
        return self

    @property
    def depth_range(self) -> float:
        return self.d_max - self.d_min


@dataclass(frozen=True)
class BoxObject:
    """Cara frontal de una caja alineada con los ejes: profundidad constante."""
    top: int
    left: int
    bottom: int
    right: int
    depth: float
    albedo: Tuple[float, float, float]

    def depth_at(self, v: int, u: int) -> Optional[float]:
        if self.top <= v <= self.bottom and self.left <= u <= self.right:
            return self.depth
        return None

    def render(self, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
        cover = np.zeros((height, width), dtype=bool)
        cover[self.top:self.bottom + 1, self.left:self.right + 1] = True
        return cover, np.where(cover, self.depth, np.inf)


@dataclass(frozen=True)
class SphereObject:
    """Esfera vista de frente: depth = centro - bulge * sqrt(1 - rho^2)."""
    center_v: float
    center_u: float
    radius: float
    center_depth: float
    bulge: float
    albedo: Tuple[float, float, float]

    def depth_at(self, v: int, u: int) -> Optional[float]:
        rho2 = ((v - self.center_v) ** 2 + (u - self.center_u) ** 2) / (self.radius ** 2)
        if rho2 > 1.0:
            return None
        return self.center_depth - self.bulge * math.sqrt(1.0 - rho2)

    def render(self, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
        vv, uu = np.mgrid[0:height, 0:width].astype(np.float64)
        rho2 = ((vv - self.center_v) ** 2 + (uu - self.center_u) ** 2) / (self.radius ** 2)
        cover = rho2 <= 1.0
        depth = self.center_depth - self.bulge * np.sqrt(np.clip(1.0 - rho2, 0.0, None))
        return cover, np.where(cover, depth, np.inf)


@dataclass
class Scene:
    rgb: Tensor
    depth: Tensor
    seed: int
    params: SceneParams = field(default_factory=SceneParams)
    objects: tuple = ()

    @property
    def height(self) -> int:
        return self.depth.shape[1]

    @property
    def width(self) -> int:
        return self.depth.shape[2]


def ground_plane(params: SceneParams) -> np.ndarray:
    """Rampa del suelo: d_max en la fila superior, d_min en la inferior."""
    rows = np.arange(params.height, dtype=np.float64)
    ramp = params.d_max - params.depth_range * rows / (params.height - 1)
    return np.repeat(ramp[:, None], params.width, axis=1)


def _sample_object(rng: np.random.Generator, params: SceneParams):
    h, w = params.height, params.width
    min_h = max(2, math.ceil(0.2 * h))
    max_h = max(min_h, h // 2)
    size = int(rng.integers(min_h, max_h + 1))
    top = int(rng.integers(1, h - size + 1))
    bottom = top + size - 1
    # El objeto se apoya en el suelo: su profundidad base es la del suelo en su fila inferior
    ground = params.d_max - params.depth_range * bottom / (h - 1)
    base = max(params.d_min, ground - float(rng.uniform(0.0, 0.1 * params.depth_range)))
    albedo = tuple(float(a) for a in rng.uniform(0.2, 1.0, size=3))
    if rng.integers(2) == 0:
        box_w = int(rng.integers(max(2, math.ceil(0.1 * w)), max(3, w // 2) + 1))
        left = int(rng.integers(0, w - box_w + 1))
        return BoxObject(top, left, bottom, left + box_w - 1, base, albedo)
    radius = (size - 1) / 2.0
    center_u = float(rng.uniform(radius, w - 1 - radius)) if w - 1 > 2 * radius else (w - 1) / 2.0
    bulge = min(float(rng.uniform(0.2, 1.0)), base - params.d_min)
    return SphereObject(top + radius, center_u, max(radius, 0.5), base, bulge, albedo)


def zbuffer(params: SceneParams, objects) -> Tuple[np.ndarray, np.ndarray]:
    """Profundidad mínima por píxel e índice del objeto visible (-1 = suelo)."""
    depth = ground_plane(params)
    owner = np.full(depth.shape, -1, dtype=np.int64)
    for i, obj in enumerate(objects):
        cover, d = obj.render(params.height, params.width)
        closer = cover & (d < depth)
        depth[closer] = d[closer]
        owner[closer] = i
    return np.clip(depth, params.d_min, params.d_max), owner


def shade(params: SceneParams, depth: np.ndarray, owner: np.ndarray, objects,
          rng: np.random.Generator) -> np.ndarray:
    albedo = np.empty((3,) + depth.shape)
    albedo[:] = np.asarray(PLANE_ALBEDO)[:, None, None]
    for i, obj in enumerate(objects):
        sel = owner == i
        albedo[:, sel] = np.asarray(obj.albedo)[:, None]
    normalized = (depth - params.d_min) / params.depth_range
    rgb = albedo * (1.0 - normalized)[None] + rng.normal(0.0, RGB_NOISE_STD, size=albedo.shape)
    return np.clip(rgb, 0.0, 1.0)


def generate(seed: int, params: Optional[SceneParams] = None) -> Scene:
    """Escena determinista para (seed, params)."""
    params = (params or SceneParams()).validate()
    rng = np.random.default_rng(int(seed))
    objects = tuple(_sample_object(rng, params) for _ in range(params.n_objects))
    depth, owner = zbuffer(params, objects)
    rgb = shade(params, depth, owner, objects, rng)
    logger.debug(f"Escena {seed}: {len(objects)} objetos, profundidad [{depth.min():.3f}, {depth.max():.3f}]")
    return Scene(rgb=Tensor(rgb, name='rgb'), depth=Tensor(depth[None], name='depth'),
                 seed=int(seed), params=params, objects=objects)


def generate_many(n: int, seed: int, params: Optional[SceneParams] = None) -> List[Scene]:
    """n escenas con semillas seed, seed + 1, ..."""
    return [generate(seed + i, params) for i in range(n)]
