"""
Máscaras sintéticas de LiDAR rotativo tipo Velodyne.

Cada canal es una línea de elevación fija; al girar barre todas las
columnas de la imagen. Para la columna u, la fila alcanzada es aquella
cuyo punto de superficie se ve desde el LiDAR con esa elevación:

    tan(theta) = (cy - v) / fy - h / Z(v, u)

con h la altura del LiDAR sobre la cámara. Con h = 0 la solución es
cerrada, v = cy - fy * tan(theta), y cada canal es una fila horizontal.
No se re-trazan oclusiones en 3-D: es síntesis de máscara sobre la
profundidad densa.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional

import numpy as np

from pnpdepth.errors import ConfigurationError
from pnpdepth.seeding import make_rng
from scenes.generator import SceneParams

from .sampling import SparseDepth, _as_depth

logger = logging.getLogger(__name__)

# Geometría de escena con resolución vertical suficiente para separar
# canales de 0.3-0.4 grados (a 48 filas cada fila abarca ~1.2 grados).
LIDAR_SCENE_PARAMS = SceneParams(height=240, width=320)


@dataclass(frozen=True)
class LidarSpec:
    name: str
    fov_deg: float
    vres_deg: float
    rot_noise_deg: float = 0.05
    mount_height_m: float = 0.0
    pitch_center_deg: float = 0.0

    def validate(self) -> "LidarSpec":
        if not self.fov_deg > 0 or not self.vres_deg > 0:
            raise ConfigurationError(f"LiDAR {self.name}: fov and vres must be positive")
        if self.rot_noise_deg < 0:
            raise ConfigurationError(f"LiDAR {self.name}: rotation noise must be >= 0")
        return self

    @property
    def channels(self) -> int:
        return int(math.floor(self.fov_deg / self.vres_deg + 1e-9)) + 1

    def nominal_elevations(self) -> np.ndarray:
        start = self.pitch_center_deg - self.fov_deg / 2.0
        return start + np.arange(self.channels) * self.vres_deg


# FoV y resolución vertical de los cuatro sensores simulados
PRESETS: Dict[str, LidarSpec] = {
    'VLP-16': LidarSpec('VLP-16', fov_deg=30.0, vres_deg=2.0),
    'VLP-32C': LidarSpec('VLP-32C', fov_deg=40.0, vres_deg=0.3),
    'HDL-32E': LidarSpec('HDL-32E', fov_deg=41.0, vres_deg=1.3),
    'HDL-64E': LidarSpec('HDL-64E', fov_deg=27.0, vres_deg=0.4),
}


def get_preset(name: str, **overrides) -> LidarSpec:
    key = name.strip().upper()
    for preset_name, spec in PRESETS.items():
        if preset_name.upper() == key:
            return replace(spec, **overrides).validate() if overrides else spec
    raise ConfigurationError(f"unknown LiDAR preset '{name}', expected one of {sorted(PRESETS)}")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    @classmethod
    def default_for(cls, height: int, width: int) -> "CameraIntrinsics":
        """Pinhole con fx = fy = H (unos 53 grados verticales), centro en la imagen."""
        return cls(fx=float(height), fy=float(height), cx=width / 2.0, cy=height / 2.0)

    def validate(self) -> "CameraIntrinsics":
        if self.fy == 0 or self.fx == 0 or not all(map(math.isfinite, (self.fx, self.fy, self.cx, self.cy))):
            raise ConfigurationError(f"degenerate intrinsics {self}")
        return self


def scanline_elevations(spec: LidarSpec, seed: int) -> np.ndarray:
    """
    Elevaciones (grados) de los canales con su ruido de rotación.

    El ruido de cada canal depende solo de (seed, elevación nominal), así que
    al reducir vres a la mitad los canales originales conservan su ángulo.
    """
    spec.validate()
    nominal = spec.nominal_elevations()
    if spec.rot_noise_deg == 0:
        return nominal
    jitter = [
        make_rng(seed, int(round(angle * 1e6))).normal(0.0, spec.rot_noise_deg)
        for angle in nominal
    ]
    return nominal + np.asarray(jitter)


def sample_lidar(depth, spec: LidarSpec, camera: Optional[CameraIntrinsics] = None,
                 seed: int = 0) -> SparseDepth:
    d = _as_depth(depth)
    _, h, w = d.shape
    camera = (camera or CameraIntrinsics.default_for(h, w)).validate()
    spec.validate()
    tans = np.tan(np.deg2rad(scanline_elevations(spec, seed)))
    mask = np.zeros((h, w))
    cols = np.arange(w)
    if spec.mount_height_m == 0:
        rows = np.rint(camera.cy - camera.fy * tans)
        for r in rows:
            if 0 <= r < h:
                mask[int(r), :] = 1.0
    else:
        # Elevación vista desde el LiDAR para cada píxel: (cy - v)/fy - h/Z
        v = np.arange(h, dtype=np.float64)[:, None]
        seen = (camera.cy - v) / camera.fy - spec.mount_height_m / d[0]
        lo, hi = seen.min(axis=0), seen.max(axis=0)
        for t in tans:
            hit = np.argmin(np.abs(seen - t), axis=0)
            inside = (t >= lo) & (t <= hi)
            mask[hit[inside], cols[inside]] = 1.0
    sparse = SparseDepth.from_mask(d, mask[None])
    logger.debug(f"LiDAR {spec.name}: {spec.channels} canales, {sparse.count} puntos ({100 * sparse.density:.1f} %)")
    return sparse


def coverage_by_preset(depth, seeds: Iterable[int], presets: Optional[List[str]] = None,
                       camera: Optional[CameraIntrinsics] = None) -> Dict[str, List[float]]:
    """Densidad de la máscara por preset y semilla."""
    names = presets or list(PRESETS)
    out: Dict[str, List[float]] = {name: [] for name in names}
    for seed in seeds:
        for name in names:
            out[name].append(sample_lidar(depth, get_preset(name), camera, seed).density)
    return out


def coverage_ordering(coverage: Dict[str, List[float]]) -> List[str]:
    """Presets de mayor a menor cobertura media."""
    return sorted(coverage, key=lambda name: -float(np.mean(coverage[name])))
