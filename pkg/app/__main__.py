# Asegurar directorio raíz en path (por si se ejecuta desde otra ruta)
import sys
from pathlib import Path
_raiz = str(Path(__file__).resolve().parent.parent)
if _raiz not in sys.path:
    sys.path.insert(0, _raiz)

from app.cli import cli_entry, main

__all__ = ["cli_entry", "main"]


if __name__ == "__main__":
    main()
