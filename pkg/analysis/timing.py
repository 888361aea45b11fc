"""
Coste en tiempo de la inferencia base frente a la refinada.
"""
import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from depthnet.networks import Model
from pnpdepth.errors import ConfigurationError
from refinement.pnp import PnPConfig, refine
from sparsity.sampling import SparseDepth
from tensorcore.tensor import Tensor

logger = logging.getLogger(__name__)

MIN_RUNS = 30
TIMING_FIELDS = ['runs', 'iterations', 'base_mean_s', 'base_std_s', 'pnp_mean_s', 'pnp_std_s', 'ratio']


@dataclass(frozen=True)
class TimingResult:
    runs: int
    iterations: int
    base_times: List[float]
    pnp_times: List[float]

    @property
    def base_mean(self) -> float:
        return float(np.mean(self.base_times))

    @property
    def pnp_mean(self) -> float:
        return float(np.mean(self.pnp_times))

    @property
    def ratio(self) -> float:
        return self.pnp_mean / self.base_mean if self.base_mean > 0 else float('inf')

    @property
    def reliable(self) -> bool:
        return self.runs >= MIN_RUNS

    def row(self) -> Dict[str, str]:
        return {
            'runs': str(self.runs),
            'iterations': str(self.iterations),
            'base_mean_s': f"{self.base_mean:.6f}",
            'base_std_s': f"{float(np.std(self.base_times)):.6f}",
            'pnp_mean_s': f"{self.pnp_mean:.6f}",
            'pnp_std_s': f"{float(np.std(self.pnp_times)):.6f}",
            'ratio': f"{self.ratio:.2f}",
        }


def time_inference(model: Model, x: Tensor, sparse: SparseDepth, cfg: Optional[PnPConfig] = None,
                   runs: int = MIN_RUNS) -> TimingResult:
    """Media de `runs` ejecuciones de run(x) y de refine(x) con la misma entrada."""
    cfg = (cfg or PnPConfig()).validate()
    if runs < 1:
        raise ConfigurationError(f"runs must be >= 1, got {runs}")
    if runs < MIN_RUNS:
        logger.warning(f"Solo {runs} repeticiones: la medida de tiempo no es fiable")

    base_times, pnp_times = [], []
    for _ in range(runs):
        start = time.perf_counter()
        model.run(x)
        base_times.append(time.perf_counter() - start)
        start = time.perf_counter()
        refine(model, x, sparse, cfg)
        pnp_times.append(time.perf_counter() - start)

    result = TimingResult(runs, cfg.iterations, base_times, pnp_times)
    logger.info(
        f"Tiempo medio: base {1000 * result.base_mean:.2f} ms, "
        f"refinado {1000 * result.pnp_mean:.2f} ms (x{result.ratio:.1f})"
    )
    return result
