"""
Interfaz de línea de comandos.

Subcomandos:
    run <config.json> [--seed N] [--jobs K]   experimento completo
    synth-preview <config>                    resumen del kernel sintético y cota MIU
    miu <kernel.csv> --n N                    MiuReport de un kernel
    validate <tabla.csv> [--costs costos.csv] valida una tabla de rendimiento

Los errores se informan con [ERROR] y código de salida 1; los errores de uso
(argparse) salen con código 2.
"""
import argparse
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from app.experimento import load_experiment_config, run_experiment
from core import registro
from core.data_io import (
    SyntheticConfig,
    generate_synthetic,
    load_kernel_csv,
    load_synthetic_config,
    load_table,
    table_spread,
)
from core.errors import InputError
from core.metrics import MIU_CAP, mean_optimal_cost, miu_total


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_experiment_config(args.config, seed=args.seed, jobs=args.jobs)
    registro.ok(f"Configuración cargada: {args.config}")
    return run_experiment(cfg)


def _config_sintetica(ruta: Path) -> SyntheticConfig:
    if ruta.suffix.lower() == ".json":
        cfg = load_experiment_config(ruta)
        if not isinstance(cfg.scenario, SyntheticConfig):
            raise InputError(f"{ruta.name} no describe un escenario sintético")
        return cfg.scenario
    return load_synthetic_config(ruta)


def _cmd_synth_preview(args: argparse.Namespace) -> int:
    cfg = _config_sintetica(Path(args.config))
    escenario = generate_synthetic(cfg)
    n = cfg.n_models
    bloque = escenario.prior.kernel[:n, :n]
    autovalores = np.linalg.eigvalsh(bloque)
    reporte = miu_total(bloque, n)
    verdad = np.array([escenario.truth[m] for m in escenario.catalog.all_models]).reshape(cfg.n_users, n)

    print(f"kernel: {cfg.kernel}")
    print(f"users: {cfg.n_users}")
    print(f"models_per_user: {n}")
    print(f"length_scale: {cfg.length_scale}")
    print(f"variance: {cfg.variance}")
    print(f"kernel_eig_min: {autovalores[0]:.6g}")
    print(f"kernel_eig_max: {autovalores[-1]:.6g}")
    print(f"miu_method: {reporte.method.value}")
    print(f"miu_diag_bound: {reporte.diag_bound}")
    if n <= MIU_CAP:
        print(f"miu_total: {reporte.total}")
    print(f"truth_spread: {float(verdad.std(axis=1, ddof=1).mean()) if n > 1 else 0.0:.6g}")
    print(f"mean_optimal_cost: {mean_optimal_cost(escenario):.6g}")
    return 0


def _cmd_miu(args: argparse.Namespace) -> int:
    K = load_kernel_csv(args.kernel)
    reporte = miu_total(K, args.n)
    for s, valor in reporte.s_values:
        print(f"miu_{s}: {valor}")
    print(f"total: {reporte.total}")
    print(f"diag_bound: {reporte.diag_bound}")
    print(f"method: {reporte.method.value}")
    print(f"bound_holds: {reporte.bound_holds}")
    if args.out:
        reporte.to_csv(args.out)
        registro.ok(f"MIU guardado en {args.out}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    tabla = load_table(args.table, args.costs)
    tamanos = [len(menu) for menu in tabla.menus().values()]
    print(f"users: {len(tabla.users)}")
    print(f"models: {len(tabla.models)}")
    print(f"menu_size_min: {min(tamanos)}")
    print(f"menu_size_max: {max(tamanos)}")
    dispersion = table_spread(tabla)
    if not math.isnan(dispersion):
        print(f"spread: {dispersion:.6g}")
    return 0


def construir_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmgpei",
        description="Planificación multi-dispositivo y multi-usuario de selección de modelos con GP-EI",
    )
    parser.add_argument("--quiet", action="store_true", help="Oculta los mensajes [INFO] y [OK]")
    sub = parser.add_subparsers(dest="comando", required=True)

    p = sub.add_parser("run", help="Ejecuta un experimento desde un JSON")
    p.add_argument("config", help="Archivo JSON del experimento")
    p.add_argument("--seed", type=int, default=None, help="Reemplaza la semilla base")
    p.add_argument("--jobs", type=int, default=None, help="Corridas simultáneas")
    p.set_defaults(funcion=_cmd_run)

    p = sub.add_parser("synth-preview", help="Resumen del escenario sintético")
    p.add_argument("config", help="Archivo .cfg sintético o JSON de experimento")
    p.set_defaults(funcion=_cmd_synth_preview)

    p = sub.add_parser("miu", help="MIU de una matriz de kernel")
    p.add_argument("kernel", help="CSV con la matriz de kernel")
    p.add_argument("--n", type=int, required=True, help="Número de modelos observados")
    p.add_argument("--out", default=None, help="CSV opcional con s,miu_s")
    p.set_defaults(funcion=_cmd_miu)

    p = sub.add_parser("validate", help="Valida una tabla de rendimiento")
    p.add_argument("table", help="CSV o Excel usuario x modelo")
    p.add_argument("--costs", default=None, help="CSV model,cost")
    p.set_defaults(funcion=_cmd_validate)
    return parser


def cli_entry(argv: Optional[List[str]] = None) -> int:
    """
    Punto de entrada de la CLI.

    Args:
        argv: Argumentos (por defecto sys.argv[1:])

    Returns:
        Código de salida
    """
    parser = construir_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2

    registro.configurar(not args.quiet)
    try:
        return args.funcion(args)
    except (FileNotFoundError, ValueError, RuntimeError) as e:
        registro.error(str(e))
        return 1


def main() -> None:
    sys.exit(cli_entry())
