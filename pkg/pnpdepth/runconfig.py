"""
Ficheros de configuración de ejecución (clave = valor, comentarios con #).

Se leen con python-dotenv y se validan con RunConfigForm. Las claves que
faltan toman el valor de settings.PNP_DEFAULTS; una clave desconocida es
un error. Si PNP_SEED está definido sustituye a la semilla del fichero.
"""
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Optional, Tuple

from django.conf import settings
from dotenv import dotenv_values

from depthnet.training import TrainConfig
from refinement.pnp import PnPConfig, UpdateRule
from scenes.generator import SceneParams
from tensorcore.losses import LossKind

from .errors import ConfigurationError
from .forms import RunConfigForm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    arch: str
    input_mode: str
    tap: str
    alpha: float
    iterations: int
    loss: str
    update_rule: str
    adam_beta1: float
    adam_beta2: float
    adam_eps: float
    n_samples: Optional[int]
    lidar_preset: str
    seed: int
    height: int
    width: int
    d_min: float
    d_max: float
    n_objects: int
    n_scenes: int
    epochs: int
    batch_size: int
    learning_rate: float
    train_loss: str
    train_samples_min: Optional[int]
    train_samples_max: Optional[int]
    scene_dir: str
    output_dir: str

    # ---- vistas para cada app ----

    def scene_params(self):
        return SceneParams(height=self.height, width=self.width, d_min=self.d_min,
                           d_max=self.d_max, n_objects=self.n_objects)

    def pnp_config(self):
        return PnPConfig(
            tap=self.tap or None,
            alpha=self.alpha,
            iterations=self.iterations,
            loss_kind=LossKind.parse(self.loss),
            update_rule=UpdateRule.parse(self.update_rule),
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )

    def train_config(self):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, loss=LossKind.parse(self.train_loss),
                           seed=self.seed, n_samples=self.n_samples,
                           sample_range=self.train_sample_range())

    def train_sample_range(self) -> Optional[Tuple[int, int]]:
        if self.train_samples_min is None or self.train_samples_max is None:
            return None
        return self.train_samples_min, self.train_samples_max

    def output_path(self) -> Path:
        return Path(self.output_dir) if self.output_dir else Path(settings.PNP_OUTPUT_DIR)

    def scene_path(self) -> Optional[Path]:
        return Path(self.scene_dir) if self.scene_dir else None


CONFIG_KEYS = [f.name for f in fields(RunConfig)]


def _as_form_data(values: Dict) -> Dict[str, str]:
    return {key: '' if value is None else str(value) for key, value in values.items()}


def parse_run_config(raw: Dict[str, Optional[str]], source: str = "<config>") -> RunConfig:
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigurationError(f"{source}: unknown config key(s) {', '.join(unknown)}")
    data = _as_form_data(settings.PNP_DEFAULTS)
    data.update(_as_form_data(raw))

    env_seed = getattr(settings, 'PNP_SEED', None)
    if env_seed not in (None, ''):
        logger.info(f"PNP_SEED={env_seed} sustituye la semilla de {source}")
        data['seed'] = str(env_seed)

    form = RunConfigForm(data)
    if not form.is_valid():
        problems = '; '.join(
            f"{field}: {' '.join(str(m) for m in messages)}"
            for field, messages in form.errors.items()
        )
        raise ConfigurationError(f"{source}: invalid configuration ({problems})")
    return RunConfig(**{key: form.cleaned_data.get(key) for key in CONFIG_KEYS})


def load_run_config(path=None, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    """Lee path (si se da) y aplica overrides por encima."""
    raw: Dict[str, Optional[str]] = {}
    source = "<defaults>"
    if path:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file {path} not found")
        raw = dict(dotenv_values(path, interpolate=False))
        source = str(path)
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    cfg = parse_run_config(raw, source)
    logger.debug(f"Configuración {source}: {cfg}")
    return cfg


def dump_run_config(cfg: RunConfig) -> str:
    lines = []
    for key in CONFIG_KEYS:
        value = getattr(cfg, key)
        lines.append(f"{key}={'' if value is None else value}")
    return '\n'.join(lines) + '\n'
