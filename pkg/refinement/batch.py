"""
Refinamiento de un lote de escenas con métricas antes/después.

Cada escena pasa por un PipelineStep: un fallo se registra y el lote sigue.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from depthnet.networks import Model
from evaluation.metrics import MetricRecord, evaluate, format_improvement, improvement, mean_record
from pnpdepth.pipeline import PipelineStep

from .pnp import PnPConfig, RefineResult, RefineStatus, refine

logger = logging.getLogger(__name__)


@dataclass
class SceneOutcome:
    index: int
    before: MetricRecord
    after: MetricRecord
    result: RefineResult
    n_samples: int

    @property
    def loss_decreased(self) -> bool:
        losses = self.result.trace.losses
        return losses[-1] < losses[0]

    @property
    def improvement(self) -> Dict[str, Optional[float]]:
        """Mejora porcentual de la escena en RMSE, MAE y MRE."""
        return improvement(self.before, self.after)


@dataclass
class BatchReport:
    outcomes: List[SceneOutcome] = field(default_factory=list)
    failures: List[Tuple[int, List[str]]] = field(default_factory=list)

    @property
    def failure_count(self) -> int:
        return len(self.failures)

    def mean_before(self) -> MetricRecord:
        return mean_record(o.before for o in self.outcomes)

    def mean_after(self) -> MetricRecord:
        return mean_record(o.after for o in self.outcomes)

    def median_rmse_after(self) -> float:
        return float(np.median([o.after.rmse_m for o in self.outcomes]))

    def improvement(self):
        return improvement(self.mean_before(), self.mean_after())

    def loss_decreased_fraction(self) -> float:
        refined = [o for o in self.outcomes if o.result.status is RefineStatus.OK]
        if not refined:
            return 0.0
        return sum(o.loss_decreased for o in refined) / len(refined)


class RefineSceneStep(PipelineStep):
    """Refina una escena y la evalúa sobre la profundidad densa."""

    def __init__(self, model: Model, cfg: PnPConfig, index: int):
        super().__init__(f"refine[{index}]")
        self.model = model
        self.cfg = cfg
        self.index = index

    def process(self, scene, sparse) -> bool:
        x = self.model.input_for(scene, sparse)
        result = refine(self.model, x, sparse, self.cfg)
        self._result = SceneOutcome(
            index=self.index,
            before=evaluate(result.base, scene.depth),
            after=evaluate(result.depth, scene.depth),
            result=result,
            n_samples=sparse.count,
        )
        if result.status is RefineStatus.NUMERIC_FAILURE:
            self.add_error(f"scene {self.index}: numeric failure, kept last finite prediction")
        return True


def refine_batch(model: Model, items: Sequence[Tuple[object, object]],
                 cfg: Optional[PnPConfig] = None) -> BatchReport:
    """items: pares (escena, SparseDepth)."""
    cfg = (cfg or PnPConfig()).validate()
    report = BatchReport()
    for i, (scene, sparse) in enumerate(items):
        step = RefineSceneStep(model, cfg, i)
        outcome = step.safe_execute(scene, sparse)
        if outcome['success']:
            report.outcomes.append(outcome['result'])
            if step.has_errors():
                report.failures.append((i, step.errors))
        else:
            report.failures.append((i, outcome['errors']))
    if report.outcomes:
        gains = report.improvement()
        logger.info(
            f"Lote de {len(items)} escenas: RMSE {report.mean_before().rmse_m:.4f} -> "
            f"{report.mean_after().rmse_m:.4f} ({format_improvement(gains['rmse_m'])}), "
            f"{report.failure_count} fallos"
        )
    return report
