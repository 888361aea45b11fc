"""
Entrenamiento por descenso de gradiente con mini-lotes sobre profundidad densa.

En los modos con profundidad dispersa, cada época vuelve a muestrear las
máscaras uniformes de entrenamiento (semilla derivada de época y escena).
Con sample_range el número de muestras por escena también varía entre
épocas, para que la red vea densidades distintas.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from evaluation.metrics import evaluate
from pnpdepth.errors import ConfigurationError, NumericError
from pnpdepth.seeding import derive_seed, make_rng
from sparsity.sampling import default_sample_count, sample_uniform
from tensorcore import losses
from tensorcore.graph import Graph
from tensorcore.tensor import Tensor

from .layers import ConvLayer
from .networks import Model

logger = logging.getLogger(__name__)


class DenseTarget(NamedTuple):
    values: np.ndarray
    mask: np.ndarray


class DivergenceError(NumericError):
    """La pérdida de una época no es finita; el modelo vuelve a la última época sana."""

    def __init__(self, epoch: int, model: Model):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch
        self.model = model


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 4
    learning_rate: float = 1e-2
    loss: losses.LossKind = losses.LossKind.L1
    seed: int = 0
    n_samples: Optional[int] = None
    sample_range: Optional[Tuple[int, int]] = None
    init_output_bias: bool = True

    def validate(self) -> "TrainConfig":
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0 or not math.isfinite(self.learning_rate):
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.n_samples is not None and self.n_samples < 0:
            raise ConfigurationError(f"n_samples must be >= 0, got {self.n_samples}")
        if self.sample_range is not None and not 1 <= self.sample_range[0] <= self.sample_range[1]:
            raise ConfigurationError(f"sample_range must satisfy 1 <= low <= high, got {self.sample_range}")
        losses.LossKind.parse(self.loss)
        return self


def _draw_count(sample_range: Tuple[int, int], seed: int, index: int, pixels: int) -> int:
    """Número de muestras log-uniforme en [low, high]."""
    low, high = sample_range
    u = make_rng(seed, index, 1).uniform(math.log(low), math.log(high))
    return min(pixels, int(round(math.exp(u))))


def training_inputs(model: Model, scenes: Sequence, n_samples: Optional[int], seed: int,
                    sample_range: Optional[Tuple[int, int]] = None) -> List[Tensor]:
    inputs = []
    for i, scene in enumerate(scenes):
        sparse = None
        if model.input_mode.uses_sparse:
            if sample_range is not None:
                n = _draw_count(sample_range, seed, i, scene.height * scene.width)
            else:
                n = default_sample_count(scene.height, scene.width) if n_samples is None else n_samples
            sparse = sample_uniform(scene.depth, n, derive_seed(seed, i))
        inputs.append(model.input_for(scene, sparse))
    return inputs


def _init_output_bias(model: Model, value: float) -> None:
    """La última capa arranca prediciendo la profundidad media de entrenamiento."""
    head = model.layers[-1]
    if isinstance(head, ConvLayer):
        head.bias.assign(np.full(head.bias.shape, value))


def _step(model: Model, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> float:
    graph = Graph('train')
    out = model.build(graph, graph.leaf(Tensor(x), name='x'))
    node = losses.loss(out, DenseTarget(y, np.ones_like(y)), cfg.loss)
    value = float(graph.forward(node).data)
    graph.backward(node)
    for _, tensor in model.parameters():
        if tensor.grad is not None:
            tensor.data -= cfg.learning_rate * tensor.grad
    return value


def train(model: Model, scenes: Sequence, cfg: Optional[TrainConfig] = None) -> Model:
    """
    Ajusta los parámetros de model in situ y lo devuelve. La curva de
    pérdida media por época queda en model.history.

    Si una época da pérdida no finita se restauran los parámetros de la
    última época finita y se lanza DivergenceError.
    """
    cfg = (cfg or TrainConfig()).validate()
    if not scenes:
        raise ConfigurationError("training needs at least one scene")
    rng = np.random.default_rng(int(cfg.seed))
    targets = np.stack([scene.depth.data for scene in scenes])
    model.history = []
    if cfg.init_output_bias and cfg.epochs > 0:
        _init_output_bias(model, float(targets.mean()))
    last_good = model.snapshot()

    for epoch in range(cfg.epochs):
        inputs = training_inputs(model, scenes, cfg.n_samples, derive_seed(cfg.seed, epoch), cfg.sample_range)
        x_all = np.concatenate([x.data for x in inputs], axis=0)
        order = rng.permutation(len(scenes))
        total = 0.0
        try:
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                total += _step(model, x_all[batch], targets[batch], cfg) * len(batch)
        except NumericError:
            total = math.nan
        epoch_loss = total / len(scenes)
        finite_params = all(np.isfinite(t.data).all() for _, t in model.parameters())
        if not math.isfinite(epoch_loss) or not finite_params:
            model.restore(last_good)
            model.zero_grad()
            logger.error(f"Entrenamiento divergente en la época {epoch}; se restaura la época anterior")
            raise DivergenceError(epoch, model)
        last_good = model.snapshot()
        model.history.append(epoch_loss)
        logger.info(f"Época {epoch + 1}/{cfg.epochs}: pérdida {epoch_loss:.4f}")

    model.zero_grad()
    return model


def mean_depth(scenes: Sequence) -> float:
    return float(np.mean([scene.depth.data.mean() for scene in scenes]))


def beats_mean_predictor(model: Model, train_scenes: Sequence, test_scenes: Sequence,
                         n_samples: Optional[int] = None, seed: int = 0) -> Tuple[bool, float, float]:
    """
    Compara el RMSE medio del modelo con el de predecir la profundidad media
    de entrenamiento. Devuelve (gana, rmse_modelo, rmse_media).
    """
    baseline = mean_depth(train_scenes)
    inputs = training_inputs(model, test_scenes, n_samples, seed)
    model_rmse, mean_rmse = [], []
    for x, scene in zip(inputs, test_scenes):
        model_rmse.append(evaluate(model.run(x).data, scene.depth.data).rmse_m)
        mean_rmse.append(evaluate(np.full(scene.depth.shape, baseline), scene.depth.data).rmse_m)
    ours, ref = float(np.mean(model_rmse)), float(np.mean(mean_rmse))
    if ours >= ref:
        logger.warning(f"Entrenamiento fallido: RMSE {ours:.4f} no mejora la media ({ref:.4f})")
    return ours < ref, ours, ref
