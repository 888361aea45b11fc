"""
Métricas de error de profundidad sobre los píxeles válidos.
"""
import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterable, Optional

import numpy as np

from pnpdepth.errors import ConfigurationError, EmptyEvaluationError

logger = logging.getLogger(__name__)

DELTA_BASE = 1.25
MIN_PREDICTION = 1e-6
ERROR_METRICS = ('rmse_m', 'mae_m', 'mre')


@dataclass(frozen=True)
class MetricRecord:
    rmse_m: float
    mae_m: float
    mre: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _flat(value) -> np.ndarray:
    return np.asarray(getattr(value, 'data', value), dtype=np.float64).reshape(-1)


def evaluate(pred, gt, valid=None) -> MetricRecord:
    """
    RMSE, MAE, error relativo medio y precisiones delta (1.25, 1.25², 1.25³).

    Las predicciones se acotan a >= 1e-6 antes de las razones de delta.
    """
    p, d = _flat(pred), _flat(gt)
    if p.size != d.size:
        raise ConfigurationError(f"shape mismatch: prediction has {p.size} pixels, ground truth {d.size}")
    keep = np.ones(d.size, dtype=bool) if valid is None else _flat(valid) > 0
    if keep.size != d.size:
        raise ConfigurationError(f"shape mismatch: valid mask has {keep.size} pixels, ground truth {d.size}")
    if not keep.any():
        raise EmptyEvaluationError()
    p, d = p[keep], d[keep]
    if not (d > 0).all():
        raise ConfigurationError("ground truth depth must be positive on valid pixels")

    err = p - d
    ratio = np.maximum(p, MIN_PREDICTION) / d
    worst = np.maximum(ratio, 1.0 / ratio)
    return MetricRecord(
        rmse_m=float(np.sqrt(np.mean(err * err))),
        mae_m=float(np.mean(np.abs(err))),
        mre=float(np.mean(np.abs(err) / d)),
        delta1=float(np.mean(worst < DELTA_BASE)),
        delta2=float(np.mean(worst < DELTA_BASE ** 2)),
        delta3=float(np.mean(worst < DELTA_BASE ** 3)),
        n_pixels=int(d.size),
    )


def mean_record(records: Iterable[MetricRecord]) -> MetricRecord:
    """Media por campo; n_pixels es la suma."""
    records = list(records)
    if not records:
        raise EmptyEvaluationError("no records to average")
    values = {
        f.name: float(np.mean([getattr(r, f.name) for r in records]))
        for f in fields(MetricRecord) if f.name != 'n_pixels'
    }
    return MetricRecord(n_pixels=sum(r.n_pixels for r in records), **values)


def improvement(before: MetricRecord, after: MetricRecord) -> Dict[str, Optional[float]]:
    """100 * (antes - después) / antes para las métricas de error; None si antes es 0."""
    out: Dict[str, Optional[float]] = {}
    for name in ERROR_METRICS:
        b, a = getattr(before, name), getattr(after, name)
        out[name] = None if b == 0 else 100.0 * (b - a) / b
    return out


def format_improvement(value: Optional[float]) -> str:
    if value is None:
        return 'n/a'
    if round(value, 1) == 0:
        return '0.0%'
    return f"{value:+.1f}%"


def annotate(value: float, pct: Optional[float], digits: int = 4) -> str:
    """'0.5021 (+43.8%)'"""
    return f"{value:.{digits}f} ({format_improvement(pct)})"
