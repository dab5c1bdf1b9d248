"""
Paquete de la aplicación: CLI (`app.cli`) y ejecución de experimentos (`app.experimento`).

Uso: `python -m app run config.json`.
"""
