"""
Jerarquía de errores del paquete.

Cada clase hereda de ValueError o RuntimeError; capturar el builtin
sigue atrapando estos errores.
"""
from typing import Optional


class InputError(ValueError):
    """Entrada inválida: dimensiones, rangos o parámetros fuera de contrato."""


class TableParseError(InputError):
    """Error de lectura de una tabla, con la ubicación (fila/columna) del problema."""

    def __init__(self, mensaje: str, fila: Optional[int] = None, columna: Optional[str] = None):
        self.fila = fila
        self.columna = columna
        ubicacion = []
        if fila is not None:
            ubicacion.append(f"fila {fila}")
        if columna is not None:
            ubicacion.append(f"columna '{columna}'")
        if ubicacion:
            mensaje = f"{mensaje} ({', '.join(ubicacion)})"
        super().__init__(mensaje)


class NumericError(RuntimeError):
    """Fallo numérico (factorización) que persiste tras escalar el jitter."""

    def __init__(self, mensaje: str, tamano: Optional[int] = None):
        self.tamano = tamano
        super().__init__(mensaje)


class ContractError(RuntimeError):
    """Se llamó una operación violando su precondición."""


class InvariantError(RuntimeError):
    """El estado interno quedó inconsistente."""


class StartupError(RuntimeError):
    """Configuración o salida inválida detectada antes de simular."""
