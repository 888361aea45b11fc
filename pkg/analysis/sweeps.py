"""
Barridos de un parámetro del refinamiento sobre un conjunto de escenas.

Tipos: número de iteraciones, tap, número de muestras uniformes y preset
de LiDAR. Cada punto del barrido se ejecuta como un PipelineStep; con
PNP_WORKERS > 1 los puntos se reparten en hilos (cada uno con su grafo).
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence

from django.conf import settings

from depthnet.networks import Model
from evaluation.metrics import MetricRecord, format_improvement, improvement
from evaluation.reports import render_csv, write_csv
from pnpdepth.errors import ConfigurationError
from pnpdepth.pipeline import CallableStep
from pnpdepth.seeding import derive_seed
from refinement.batch import BatchReport, refine_batch
from refinement.pnp import PnPConfig
from sparsity.lidar import coverage_ordering, get_preset, sample_lidar
from sparsity.sampling import default_sample_count, sample_uniform

from .influence import field_areas

logger = logging.getLogger(__name__)

SWEEP_FIELDS = [
    'kind', 'setting', 'setting_norm', 'n_scenes', 'n_samples_mean', 'rmse_before', 'rmse_after',
    'rmse_after_median', 'mae_before', 'mae_after', 'mre_after', 'd1_after', 'rmse_gain',
    'field_area', 'runtime_s', 'failures',
]


class SweepKind(str, Enum):
    ITERATIONS = 'iters'
    TAP = 'tap'
    SAMPLES = 'samples'
    LIDAR = 'lidar'

    @classmethod
    def parse(cls, value) -> "SweepKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown sweep kind '{value}', expected one of {[k.value for k in cls]}"
            ) from None


DEFAULT_SETTINGS = {
    SweepKind.ITERATIONS: [0, 1, 2, 5, 10, 20],
    SweepKind.SAMPLES: [10, 31, 100, 300],
    SweepKind.LIDAR: ['VLP-16', 'HDL-32E', 'HDL-64E', 'VLP-32C'],
}


@dataclass
class SweepPoint:
    setting: object
    before: Optional[MetricRecord] = None
    after: Optional[MetricRecord] = None
    rmse_after_median: Optional[float] = None
    n_samples_mean: float = 0.0
    setting_norm: Optional[float] = None
    field_area: Optional[int] = None
    runtime_s: float = 0.0
    failures: int = 0
    errors: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.after is not None


@dataclass
class SweepResult:
    kind: SweepKind
    points: List[SweepPoint]
    n_scenes: int
    ordering: List[str] = field(default_factory=list)

    def rows(self) -> List[Dict[str, str]]:
        rows = []
        for p in self.points:
            gain = improvement(p.before, p.after)['rmse_m'] if p.ok else None
            rows.append({
                'kind': self.kind.value,
                'setting': str(p.setting),
                'setting_norm': '' if p.setting_norm is None else f"{p.setting_norm:.3f}",
                'n_scenes': str(self.n_scenes),
                'n_samples_mean': f"{p.n_samples_mean:.1f}",
                'rmse_before': _fmt(p.before, 'rmse_m'),
                'rmse_after': _fmt(p.after, 'rmse_m'),
                'rmse_after_median': '' if p.rmse_after_median is None else f"{p.rmse_after_median:.4f}",
                'mae_before': _fmt(p.before, 'mae_m'),
                'mae_after': _fmt(p.after, 'mae_m'),
                'mre_after': _fmt(p.after, 'mre'),
                'd1_after': '' if p.after is None else f"{100 * p.after.delta1:.2f}",
                'rmse_gain': format_improvement(gain) if p.ok else 'n/a',
                'field_area': '' if p.field_area is None else str(p.field_area),
                'runtime_s': f"{p.runtime_s:.3f}",
                'failures': str(p.failures),
            })
        return rows

    def to_csv(self, include_runtime: bool = True) -> str:
        rows = self.rows()
        if not include_runtime:
            for row in rows:
                row['runtime_s'] = ''
        return render_csv(rows, SWEEP_FIELDS)

    def write_csv(self, path, include_runtime: bool = True):
        rows = self.rows()
        if not include_runtime:
            for row in rows:
                row['runtime_s'] = ''
        return write_csv(path, rows, SWEEP_FIELDS)


def _fmt(record: Optional[MetricRecord], name: str) -> str:
    return '' if record is None else f"{getattr(record, name):.4f}"


def _check_order(kind: SweepKind, values: Sequence, model: Model) -> List:
    values = list(values)
    if not values:
        raise ConfigurationError(f"{kind.value} sweep needs at least one setting")
    if kind in (SweepKind.ITERATIONS, SweepKind.SAMPLES):
        values = [int(v) for v in values]
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigurationError(f"{kind.value} sweep settings must be strictly increasing: {values}")
        if any(v < 0 for v in values):
            raise ConfigurationError(f"{kind.value} sweep settings must be >= 0: {values}")
    elif kind is SweepKind.TAP:
        indices = [model.tap_index(v) for v in values]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ConfigurationError(f"tap sweep settings must follow network order: {values}")
    else:
        for name in values:
            get_preset(name)
        if len(set(values)) != len(values):
            raise ConfigurationError(f"duplicate LiDAR presets: {values}")
    return values


def _uniform_items(scenes: Sequence, n_samples: Optional[int], seed: int):
    items = []
    for i, scene in enumerate(scenes):
        n = default_sample_count(scene.height, scene.width) if n_samples is None else n_samples
        items.append((scene, sample_uniform(scene.depth, n, derive_seed(seed, i))))
    return items


def _point_from_report(setting, report: BatchReport, runtime: float) -> SweepPoint:
    point = SweepPoint(setting=setting, runtime_s=runtime, failures=report.failure_count)
    point.errors = [e for _, errs in report.failures for e in errs]
    if report.outcomes:
        point.before = report.mean_before()
        point.after = report.mean_after()
        point.rmse_after_median = report.median_rmse_after()
        point.n_samples_mean = sum(o.n_samples for o in report.outcomes) / len(report.outcomes)
    return point


def _run_point(kind: SweepKind, setting, model: Model, scenes: Sequence, cfg: PnPConfig,
               n_samples: Optional[int], seed: int) -> SweepPoint:
    if kind is SweepKind.ITERATIONS:
        items, run_cfg = _uniform_items(scenes, n_samples, seed), replace(cfg, iterations=setting)
    elif kind is SweepKind.TAP:
        items, run_cfg = _uniform_items(scenes, n_samples, seed), replace(cfg, tap=setting)
    elif kind is SweepKind.SAMPLES:
        items, run_cfg = _uniform_items(scenes, setting, seed), cfg
    else:
        preset = get_preset(setting)
        items = [(s, sample_lidar(s.depth, preset, seed=derive_seed(seed, i))) for i, s in enumerate(scenes)]
        run_cfg = cfg
    start = time.perf_counter()
    report = refine_batch(model, items, run_cfg)
    return _point_from_report(setting, report, time.perf_counter() - start)


def sweep(kind, model: Model, scenes: Sequence, cfg: Optional[PnPConfig] = None,
          values: Optional[Sequence] = None, n_samples: Optional[int] = None, seed: int = 0,
          workers: Optional[int] = None) -> SweepResult:
    """
    Ejecuta el barrido y devuelve un punto por valor, en el orden dado.
    Un punto que falla queda registrado con sus errores y sin métricas.
    """
    kind = SweepKind.parse(kind)
    cfg = (cfg or PnPConfig()).validate()
    if not scenes:
        raise ConfigurationError("sweep needs at least one scene")
    if values is None:
        values = model.taps if kind is SweepKind.TAP else DEFAULT_SETTINGS[kind]
    values = _check_order(kind, values, model)
    workers = workers or getattr(settings, 'PNP_WORKERS', 1)

    def task(setting):
        step = CallableStep(_run_point, label=f"{kind.value}={setting}")
        outcome = step.safe_execute(kind, setting, model, scenes, cfg, n_samples, seed)
        if outcome['success']:
            return outcome['result']
        return SweepPoint(setting=setting, failures=len(scenes), errors=outcome['errors'])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(task, values))
    else:
        points = [task(v) for v in values]

    result = SweepResult(kind, points, len(scenes))
    if kind is SweepKind.TAP:
        size = (scenes[0].height, scenes[0].width)
        areas = field_areas(model, size=size)
        for p in points:
            p.setting_norm = model.normalized_depth(p.setting)
            p.field_area = areas[p.setting]
    if kind is SweepKind.LIDAR:
        coverage = {p.setting: [p.n_samples_mean] for p in points}
        result.ordering = coverage_ordering(coverage)
    for p in points:
        if p.ok:
            logger.info(
                f"{kind.value}={p.setting}: RMSE {p.before.rmse_m:.4f} -> {p.after.rmse_m:.4f} "
                f"({format_improvement(improvement(p.before, p.after)['rmse_m'])})"
            )
        else:
            logger.warning(f"{kind.value}={p.setting}: fallido ({'; '.join(p.errors)})")
    return result
