"""
Jerarquía de errores compartida por todas las apps.

Los comandos traducen estas clases a códigos de salida estables:
configuración / E/S / checkpoint -> 2, fallo numérico -> 3.
"""
from typing import Optional


class PnPError(Exception):
    """Base de todos los errores del proyecto."""


class ConfigurationError(PnPError, ValueError):
    """Parámetros, formas o ficheros de entrada no válidos."""


class GraphError(PnPError):
    """Uso incorrecto del grafo de cómputo (p. ej. nodo que no es ancestro)."""


class ContractError(PnPError):
    """Precondición de una operación incumplida (p. ej. pérdida no escalar)."""


class NumericError(PnPError, ArithmeticError):
    """Aparece un valor no finito durante forward o backward."""

    def __init__(self, message: str, node: Optional[str] = None):
        super().__init__(message if node is None else f"{message} (node {node})")
        self.node = node


class CheckpointError(PnPError):
    """Checkpoint ilegible, versión desconocida o CRC incorrecto."""


class EmptyEvaluationError(PnPError, ValueError):
    """No hay píxeles válidos sobre los que evaluar."""

    def __init__(self, message: str = "empty evaluation set"):
        super().__init__(message)
