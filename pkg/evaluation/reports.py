"""
Tablas CSV de resultados. El formato numérico es fijo para que dos
ejecuciones con la misma semilla escriban ficheros idénticos.
"""
import csv
import io
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from pnpdepth.errors import ConfigurationError

from .metrics import MetricRecord, annotate, improvement

logger = logging.getLogger(__name__)

METRIC_FIELDS = ['method', 'n_samples', 'pct_samples', 'rmse', 'mae', 'mre', 'd1', 'd2', 'd3']


def metric_row(method: str, record: MetricRecord, n_samples: int, pct_samples: float,
               baseline: Optional[MetricRecord] = None) -> Dict[str, str]:
    """
    Fila de tabla. Con baseline, las métricas de error llevan la mejora
    relativa entre paréntesis. Las delta se expresan en %.
    """
    gains = improvement(baseline, record) if baseline is not None else {}

    def err(name: str) -> str:
        value = getattr(record, name)
        return annotate(value, gains[name]) if baseline is not None else f"{value:.4f}"

    return {
        'method': method,
        'n_samples': str(n_samples),
        'pct_samples': f"{pct_samples:.2f}",
        'rmse': err('rmse_m'),
        'mae': err('mae_m'),
        'mre': err('mre'),
        'd1': f"{100 * record.delta1:.2f}",
        'd2': f"{100 * record.delta2:.2f}",
        'd3': f"{100 * record.delta3:.2f}",
    }


def render_csv(rows: Iterable[Dict[str, str]], fieldnames: List[str]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator='\n')
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def write_csv(path, rows: Iterable[Dict[str, str]], fieldnames: List[str]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_csv(rows, fieldnames), encoding='utf-8')
    except OSError as e:
        raise ConfigurationError(f"cannot write report {path}: {e}") from e
    logger.info(f"Informe escrito en {path}")
    return path


def write_metrics_csv(path, rows: Iterable[Dict[str, str]]) -> Path:
    return write_csv(path, rows, METRIC_FIELDS)
