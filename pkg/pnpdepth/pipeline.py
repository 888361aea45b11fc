"""
Pasos de procesamiento con recogida de errores.

Un lote de escenas o un barrido de configuraciones ejecuta cada elemento a
través de un PipelineStep: un fallo se registra y el lote continúa.
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List

from .errors import PnPError

logger = logging.getLogger(__name__)


class PipelineStep(ABC):
    """
    Clase base abstracta para un paso del pipeline.
    Acumula errores en lugar de propagarlos cuando se usa safe_execute.
    """

    def __init__(self, label: str = ""):
        self.label = label or self.__class__.__name__
        self._errors: List[str] = []
        self._result: Any = None

    @property
    def errors(self) -> List[str]:
        """Devuelve los errores acumulados durante el procesamiento."""
        return self._errors

    @property
    def result(self) -> Any:
        """Devuelve el resultado del procesamiento."""
        return self._result

    def add_error(self, error: str) -> None:
        self._errors.append(error)

    def has_errors(self) -> bool:
        return len(self._errors) > 0

    def clear(self) -> None:
        self._errors = []
        self._result = None

    @abstractmethod
    def process(self, *args, **kwargs) -> bool:
        """
        Ejecuta el paso. Debe fijar self._result y devolver True si terminó
        bien, False en caso contrario.
        """

    def safe_execute(self, *args, **kwargs) -> Dict[str, Any]:
        """
        Ejecuta el procesamiento capturando excepciones.
        Devuelve un diccionario con el resultado y los errores.
        """
        try:
            success = self.process(*args, **kwargs)
            return {
                'success': success,
                'result': self.result if success else None,
                'errors': self.errors if not success else [],
            }
        except PnPError as e:
            self.add_error(str(e))
            logger.warning(f"Error en {self.label}: {e}")
            return {
                'success': False,
                'result': None,
                'errors': self.errors,
            }
        except Exception as e:
            self.add_error(f"Error inesperado: {e}")
            logger.exception(f"Error inesperado en {self.label}")
            return {
                'success': False,
                'result': None,
                'errors': self.errors,
            }


class CallableStep(PipelineStep):
    """Envuelve una función; el paso tiene éxito si la función retorna."""

    def __init__(self, func, label: str = ""):
        super().__init__(label or getattr(func, '__name__', ''))
        self.func = func

    def process(self, *args, **kwargs) -> bool:
        self._result = self.func(*args, **kwargs)
        return True
