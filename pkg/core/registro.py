"""
Mensajes de consola con las etiquetas [INFO], [OK], [WARNING] y [ERROR].

Se escriben con tqdm.write hacia stderr: no rompen las barras de progreso
y dejan stdout libre para la salida de la CLI.
"""
import sys

from tqdm import tqdm

_VERBOSO = True


def configurar(verboso: bool = True) -> None:
    """Activa o silencia los mensajes informativos (warning/error siempre se muestran)."""
    global _VERBOSO
    _VERBOSO = bool(verboso)


def es_verboso() -> bool:
    return _VERBOSO


def _escribir(texto: str) -> None:
    tqdm.write(texto, file=sys.stderr)


def info(mensaje: str) -> None:
    if _VERBOSO:
        _escribir(f"[INFO] {mensaje}")


def ok(mensaje: str) -> None:
    if _VERBOSO:
        _escribir(f"[OK] {mensaje}")


def detalle(mensaje: str) -> None:
    """Línea de continuación indentada bajo un mensaje anterior."""
    if _VERBOSO:
        _escribir(f"  {mensaje}")


def warning(mensaje: str) -> None:
    _escribir(f"[WARNING] {mensaje}")


def error(mensaje: str) -> None:
    _escribir(f"[ERROR] {mensaje}")
