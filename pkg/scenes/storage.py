"""
Conjuntos de escenas en disco: pares P6 (rgb) + P5 16 bits (profundidad)
y un manifest.csv con semilla y sumas de comprobación.
"""
import csv
import hashlib
import logging
from pathlib import Path
from typing import Dict, List, Optional

from pnpdepth.errors import ConfigurationError
from tensorcore.tensor import Tensor

from . import netpbm
from .generator import Scene, SceneParams

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.csv'
MANIFEST_FIELDS = ['index', 'seed', 'rgb', 'depth', 'sha256']


def _sha256(*paths: Path) -> str:
    digest = hashlib.sha256()
    for p in paths:
        digest.update(p.read_bytes())
    return digest.hexdigest()


def write_scenes(directory, scenes: List[Scene]) -> List[Dict[str, str]]:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        rows = []
        for i, scene in enumerate(scenes):
            rgb_path = netpbm.write_ppm(directory / f"scene_{i:04d}_rgb.ppm", scene.rgb.data)
            depth_path = netpbm.write_depth(directory / f"scene_{i:04d}_depth.pgm", scene.depth.data)
            rows.append({
                'index': str(i),
                'seed': str(scene.seed),
                'rgb': rgb_path.name,
                'depth': depth_path.name,
                'sha256': _sha256(rgb_path, depth_path),
            })
        with open(directory / MANIFEST_NAME, 'w', newline='', encoding='utf-8') as fh:
            writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator='\n')
            writer.writeheader()
            writer.writerows(rows)
    except OSError as e:
        raise ConfigurationError(f"cannot write scenes to {directory}: {e}") from e
    logger.info(f"{len(rows)} escenas escritas en {directory}")
    return rows


def read_manifest(directory) -> List[Dict[str, str]]:
    path = Path(directory) / MANIFEST_NAME
    try:
        with open(path, newline='', encoding='utf-8') as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise ConfigurationError(f"cannot read scene manifest {path}: {e}") from e
    for row in rows:
        if set(MANIFEST_FIELDS) - set(row):
            raise ConfigurationError(f"malformed scene manifest {path}")
    return rows


def _verify(rgb_path: Path, depth_path: Path, expected: str) -> None:
    try:
        actual = _sha256(rgb_path, depth_path)
    except OSError as e:
        raise ConfigurationError(f"cannot read scene file: {e}") from e
    if actual != expected.strip().lower():
        raise ConfigurationError(f"scene file corrupt: checksum mismatch for {rgb_path.name} / {depth_path.name}")


def read_scenes(directory, params: Optional[SceneParams] = None, limit: Optional[int] = None) -> List[Scene]:
    """
    Carga las escenas del manifest. La profundidad vuelve cuantizada a mm;
    los objetos no se conservan en disco.
    """
    directory = Path(directory)
    rows = read_manifest(directory)
    if limit is not None:
        rows = rows[:limit]
    scenes = []
    for row in rows:
        rgb_path, depth_path = directory / row['rgb'], directory / row['depth']
        _verify(rgb_path, depth_path, row['sha256'])
        rgb = netpbm.read_ppm(rgb_path)
        depth = netpbm.read_depth(depth_path)
        if rgb.shape[1:] != depth.shape[1:]:
            raise ConfigurationError(f"rgb/depth size mismatch in {directory / row['depth']}")
        if not (depth > 0).all():
            raise ConfigurationError(f"non-positive depth in {directory / row['depth']}")
        h, w = depth.shape[1:]
        base = params or SceneParams()
        scene_params = SceneParams(height=h, width=w, d_min=base.d_min, d_max=base.d_max,
                                   n_objects=base.n_objects)
        try:
            seed = int(row['seed'])
        except ValueError:
            raise ConfigurationError(f"bad seed in {directory / MANIFEST_NAME}") from None
        scenes.append(Scene(rgb=Tensor(rgb, name='rgb'), depth=Tensor(depth, name='depth'),
                            seed=seed, params=scene_params))
    logger.info(f"{len(scenes)} escenas leídas de {directory}")
    return scenes
