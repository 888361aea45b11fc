"""
Refinamiento en inferencia de la representación intermedia.

Se parte la red en el tap: z0 = front(x). En cada iteración se evalúa la
pérdida dispersa de rear(z) contra las muestras observadas, se retropropaga
solo hasta z y se da un paso z <- z - alpha * U(gradiente). Los pesos no se
tocan.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional

import numpy as np

from depthnet.networks import Model, split
from pnpdepth.errors import ConfigurationError, NumericError
from tensorcore import losses
from tensorcore.graph import Graph
from tensorcore.tensor import Tensor

logger = logging.getLogger(__name__)


class UpdateRule(str, Enum):
    SIGN = 'sign'
    RAW_GRADIENT = 'raw_gradient'
    ADAM = 'adam'

    @classmethod
    def parse(cls, value) -> "UpdateRule":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown update rule '{value}', expected one of {[r.value for r in cls]}"
            ) from None


class RefineStatus(str, Enum):
    OK = 'ok'
    NO_OBSERVATION = 'no_observation'
    NUMERIC_FAILURE = 'numeric_failure'


@dataclass(frozen=True)
class PnPConfig:
    """tap=None usa el tap por defecto de la arquitectura."""
    tap: Optional[str] = None
    alpha: float = 0.01
    iterations: int = 5
    loss_kind: losses.LossKind = losses.LossKind.L1
    update_rule: UpdateRule = UpdateRule.SIGN
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    keep_predictions: bool = False

    def validate(self) -> "PnPConfig":
        if not self.alpha > 0 or not math.isfinite(self.alpha):
            raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        losses.LossKind.parse(self.loss_kind)
        UpdateRule.parse(self.update_rule)
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1) or not self.adam_eps > 0:
            raise ConfigurationError("adam parameters need 0 <= beta < 1 and eps > 0")
        return self


class Updater:
    """U(g) según la regla; el estado de Adam vive solo durante una llamada a refine."""

    def __init__(self, cfg: PnPConfig):
        self.rule = UpdateRule.parse(cfg.update_rule)
        self.cfg = cfg
        self.m: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None
        self.t = 0

    def __call__(self, g: np.ndarray) -> np.ndarray:
        if self.rule is UpdateRule.SIGN:
            return np.sign(g)
        if self.rule is UpdateRule.RAW_GRADIENT:
            return g
        b1, b2 = self.cfg.adam_beta1, self.cfg.adam_beta2
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        self.t += 1
        self.m = b1 * self.m + (1 - b1) * g
        self.v = b2 * self.v + (1 - b2) * g * g
        m_hat = self.m / (1 - b1 ** self.t)
        v_hat = self.v / (1 - b2 ** self.t)
        return m_hat / (np.sqrt(v_hat) + self.cfg.adam_eps)


@dataclass
class TraceEntry:
    iteration: int
    sparse_loss: float
    update_norm: float
    prediction: Optional[np.ndarray] = None


@dataclass
class RefineTrace:
    entries: List[TraceEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def losses(self) -> List[float]:
        return [e.sparse_loss for e in self.entries]

    @property
    def update_norms(self) -> List[float]:
        return [e.update_norm for e in self.entries]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['iteration', 'sparse_loss', 'update_inf_norm'])
        for e in self.entries:
            writer.writerow([e.iteration, f"{e.sparse_loss:.8e}", f"{e.update_norm:.8e}"])
        return buffer.getvalue()

    def write_csv(self, path) -> Path:
        path = Path(path)
        try:
            path.write_text(self.to_csv(), encoding='utf-8')
        except OSError as e:
            raise ConfigurationError(f"cannot write trace {path}: {e}") from e
        return path


@dataclass
class RefineResult:
    depth: Tensor
    trace: RefineTrace
    status: RefineStatus
    base: Tensor
    tap: str
    z: Tensor

    def __iter__(self):
        yield self.depth
        yield self.trace


def _check_inputs(model: Model, x: Tensor, sparse) -> None:
    if len(x.shape) != 4 or x.shape[0] != 1 or x.shape[1] != model.in_channels:
        raise ConfigurationError(
            f"input mode {model.input_mode.value} expects (1, {model.in_channels}, H, W), got {x.shape}"
        )
    pixels = x.shape[2] * x.shape[3]
    for label, value in (('sparse depth', sparse.values), ('mask', sparse.mask)):
        size = np.asarray(getattr(value, 'data', value)).size
        if size != pixels:
            raise ConfigurationError(f"shape mismatch: {label} has {size} pixels, image has {pixels}")


def refine(model: Model, x: Tensor, sparse, cfg: Optional[PnPConfig] = None) -> RefineResult:
    """
    K iteraciones de refinamiento. Devuelve la predicción final, la traza
    (K + 1 entradas, la 0 es la red sin modificar) y el estado.

    Con máscara vacía devuelve la predicción base sin iterar. Si aparece un
    valor no finito se devuelve la última predicción finita.
    """
    cfg = (cfg or PnPConfig()).validate()
    tap = cfg.tap or model.default_tap
    model.check_tap(tap)
    _check_inputs(model, x, sparse)
    front, rear = split(model, tap)

    z0 = front(x)
    graph = Graph(f"pnp:{tap}")
    z = graph.leaf(Tensor(z0.data, name='z'), name='z')
    xn = graph.leaf(x, name='x')
    out = rear.build(graph, z, xn)
    loss_node = losses.loss(out, sparse, cfg.loss_kind)

    loss_value = float(graph.forward(loss_node).data)
    base = Tensor(out.output.data, name='base')
    pred = base

    def entry(k: int, value: float, norm: float) -> TraceEntry:
        return TraceEntry(k, value, norm, pred.data.copy() if cfg.keep_predictions else None)

    trace = RefineTrace([entry(0, loss_value, 0.0)])
    if loss_node.no_observation:
        trace.entries += [entry(k, 0.0, 0.0) for k in range(1, cfg.iterations + 1)]
        logger.info("Máscara vacía: se devuelve la predicción base")
        return RefineResult(pred, trace, RefineStatus.NO_OBSERVATION, base, tap, Tensor(z.output.data, name="z"))

    updater = Updater(cfg)
    status = RefineStatus.OK
    z_last = z.output.data.copy()
    for k in range(1, cfg.iterations + 1):
        try:
            g = graph.backward_to(loss_node, z).data
            step = cfg.alpha * updater(g)
            z_new = z.output.data - step
            if not np.isfinite(z_new).all():
                raise NumericError("non-finite value", node='z')
            z.output.assign(z_new)
            loss_value = float(graph.forward(loss_node).data)
        except NumericError as e:
            status = RefineStatus.NUMERIC_FAILURE
            logger.warning(f"Refinamiento detenido en la iteración {k}: {e}")
            break
        pred = Tensor(out.output.data, name='refined')
        z_last = z.output.data.copy()
        trace.entries.append(entry(k, loss_value, float(np.abs(step).max()) if step.size else 0.0))
        logger.debug(f"Iteración {k}: pérdida {loss_value:.6f}")
    return RefineResult(pred, trace, status, base, tap, Tensor(z_last, name="z"))
