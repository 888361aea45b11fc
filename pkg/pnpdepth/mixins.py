# FILE: pnpdepth/mixins.py
import logging
from typing import List, Optional

from django.core.management.base import CommandError

from depthnet import checkpoint
from depthnet.networks import Model
from pnpdepth.seeding import derive_seed
from scenes.generator import generate_many
from scenes.storage import read_scenes
from sparsity.lidar import get_preset, sample_lidar
from sparsity.sampling import SparseDepth, default_sample_count, sample_uniform

from .errors import (
    CheckpointError, ConfigurationError, ContractError, EmptyEvaluationError, GraphError, NumericError,
)
from .runconfig import RunConfig, load_run_config

logger = logging.getLogger(__name__)

# Desplazamiento de semilla para las escenas de evaluación generadas al vuelo
HELDOUT_SEED_OFFSET = 10_000


class PipelineCommandMixin:
    """
    Utilidades comunes a los comandos: carga de configuración, escenas y
    checkpoint, y traducción de errores a códigos de salida
    (2 = entrada o configuración, 3 = fallo numérico).
    """

    def add_config_argument(self, parser):
        parser.add_argument('config', nargs='?', default=None,
                            help="Fichero RunConfig (clave = valor)")

    def run_pipeline(self, func, *args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CommandError:
            raise
        except NumericError as e:
            logger.error(f"Fallo numérico: {e}")
            raise CommandError(str(e), returncode=3)
        except (ConfigurationError, CheckpointError, GraphError, ContractError, EmptyEvaluationError) as e:
            raise CommandError(str(e), returncode=2)
        except OSError as e:
            raise CommandError(f"I/O error: {e}", returncode=2)

    def load_config(self, path, **overrides) -> RunConfig:
        return load_run_config(path, overrides)

    def load_model(self, path) -> Model:
        if not path:
            raise ConfigurationError("a --checkpoint is required")
        return checkpoint.load(path)

    def load_scenes(self, cfg: RunConfig, scene_dir=None, heldout: bool = True) -> List:
        """Escenas del directorio indicado o, si no hay, generadas con la semilla de cfg."""
        directory = scene_dir or cfg.scene_path()
        if directory:
            scenes = read_scenes(directory, cfg.scene_params(), limit=cfg.n_scenes)
            if not scenes:
                raise ConfigurationError(f"no scenes in {directory}")
            return scenes
        seed = cfg.seed + (HELDOUT_SEED_OFFSET if heldout else 0)
        logger.info(f"Sin directorio de escenas: se generan {cfg.n_scenes} con semilla {seed}")
        if cfg.n_scenes < 1:
            raise ConfigurationError("n_scenes must be >= 1 for this command")
        return generate_many(cfg.n_scenes, seed, cfg.scene_params())

    def sparse_for(self, cfg: RunConfig, scene, index: int, n_samples: Optional[int] = None) -> SparseDepth:
        """Preset LiDAR si está configurado; si no, muestreo uniforme."""
        seed = derive_seed(cfg.seed, index)
        if cfg.lidar_preset:
            return sample_lidar(scene.depth, get_preset(cfg.lidar_preset), seed=seed)
        n = n_samples if n_samples is not None else cfg.n_samples
        if n is None:
            n = default_sample_count(scene.height, scene.width)
        return sample_uniform(scene.depth, n, seed)
