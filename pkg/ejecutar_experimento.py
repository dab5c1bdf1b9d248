# Asegurar directorio del script en path (por si se ejecuta desde otra ruta)
import sys
from pathlib import Path
_script_dir = str(Path(__file__).resolve().parent)
if _script_dir not in sys.path:
    sys.path.insert(0, _script_dir)

from app.cli import cli_entry

__all__ = ["cli_entry", "main"]


def main() -> None:
    """Sin argumentos ejecuta el experimento de config.json junto al script."""
    argv = sys.argv[1:] or ["run", str(Path(_script_dir) / "config.json")]
    sys.exit(cli_entry(argv))


if __name__ == "__main__":
    main()
