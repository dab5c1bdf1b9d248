"""
Ejecución de experimentos: comparación de políticas, barrido de dispositivos
y estudio de tiempo hasta el umbral (speedup), con réplicas y salidas CSV.

Cada corrida (política, M, réplica) construye su propio escenario a partir de
la semilla de la réplica, simula, calcula el regret y las cotas y escribe su
traza y su curva. Los archivos agregados se arman después, ordenados por
(política, M, réplica), por lo que no dependen del orden en que terminan las
corridas en paralelo.
"""
import json
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from core import registro
from core.data_io import SyntheticConfig, build_table_scenario, generate_synthetic, load_synthetic_config, load_table
from core.errors import ContractError, InvariantError, NumericError, StartupError
from core.metrics import cumulative_regret, estimate_R, mean_optimal_cost, miu_total, theorem1_comparator
from core.scheduler import Policy, PolicyConfig, WarmStartPolicy, WithinUserRule
from core.simulator import FORMATO_DECIMAL, Scenario, run_simulation

# seed_r = seed + r·PASO_SEMILLA
PASO_SEMILLA = 1_000_003

CLAVES_EXPERIMENTO = {
    "scenario", "policies", "device_counts", "horizon", "replicates", "cutoffs", "warm_start",
    "within_user_rule", "output_dir", "seed", "jobs", "report_bounds", "excel_report",
}
COLUMNAS_BOUNDS = [
    "policy", "devices", "replicate", "n_observed", "miu_total", "miu_method",
    "diag_bound", "bound_holds", "empirical_R", "theorem1_comparator",
]
COLUMNAS_SPEEDUP = ["policy", "devices", "cutoff", "mean_time_to_cutoff", "lower_1sigma", "upper_1sigma", "reached"]


@dataclass(frozen=True)
class TableSource:
    values: Path
    costs: Optional[Path]
    heldout_count: int
    split_seed: int = 0
    normalize: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Configuración validada de un experimento.

    Args:
        scenario: SyntheticConfig o TableSource
        policies: Políticas a comparar
        device_counts: Valores de M a barrer
        horizon: Horizonte T de cada simulación
        replicates: Réplicas por (política, M)
        cutoffs: Umbrales de regret instantáneo
        warm_start: Arranque de todas las corridas
        output_dir: Carpeta de salida
        seed: Semilla base
        jobs: Corridas simultáneas
    """

    scenario: Union[SyntheticConfig, TableSource]
    policies: Tuple[Policy, ...]
    device_counts: Tuple[int, ...]
    horizon: float
    replicates: int = 1
    cutoffs: Tuple[float, ...] = ()
    warm_start: WarmStartPolicy = WarmStartPolicy.NONE
    within_user_rule: WithinUserRule = WithinUserRule.EI
    output_dir: Path = Path("resultados")
    seed: int = 0
    jobs: int = 1
    report_bounds: bool = True
    excel_report: bool = False

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise StartupError(f"replicates debe ser >= 1, se recibió {self.replicates}")
        if not self.device_counts or any(m < 1 for m in self.device_counts):
            raise StartupError(f"device_counts debe ser una lista no vacía de enteros positivos: {self.device_counts}")
        if not self.policies:
            raise StartupError("Se necesita al menos una política")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise StartupError(f"El horizonte debe ser positivo, se recibió {self.horizon}")
        if self.jobs < 1:
            raise StartupError(f"jobs debe ser >= 1, se recibió {self.jobs}")
        if any(not (c >= 0 and math.isfinite(c)) for c in self.cutoffs):
            raise StartupError(f"Los umbrales deben ser no negativos: {self.cutoffs}")

    def replicate_seed(self, r: int) -> int:
        return self.seed + r * PASO_SEMILLA

    @property
    def policy_configs(self) -> List[PolicyConfig]:
        return [PolicyConfig(p, self.warm_start, self.within_user_rule) for p in self.policies]


@dataclass
class RunResult:
    policy: str
    devices: int
    replicate: int
    cumulative_regret: float = math.nan
    time_to_cutoff: Dict[float, Optional[float]] = field(default_factory=dict)
    bounds: Optional[Dict[str, Any]] = None
    error: Optional[str] = None


def _ruta(valor: Any, base: Path) -> Path:
    p = Path(str(valor))
    return p if p.is_absolute() else (base / p).resolve()


def _lista(datos: Dict[str, Any], clave: str, defecto: list) -> list:
    valor = datos.get(clave, defecto)
    if not isinstance(valor, list):
        raise StartupError(f"'{clave}' debe ser una lista, se recibió {valor!r}")
    return valor


def _fuente_escenario(datos: Any, base: Path) -> Union[SyntheticConfig, TableSource]:
    if not isinstance(datos, dict) or len(datos) != 1 or next(iter(datos)) not in ("synthetic", "table"):
        raise StartupError("'scenario' debe ser {\"synthetic\": ...} o {\"table\": {...}}")
    tipo, valor = next(iter(datos.items()))
    if tipo == "synthetic":
        if isinstance(valor, str):
            return load_synthetic_config(_ruta(valor, base))
        if isinstance(valor, dict):
            return SyntheticConfig.from_mapping(valor)
        raise StartupError("'synthetic' debe ser una ruta a un archivo .cfg o un objeto")
    if not isinstance(valor, dict) or "values" not in valor or "heldout_count" not in valor:
        raise StartupError("'table' necesita al menos 'values' y 'heldout_count'")
    return TableSource(
        values=_ruta(valor["values"], base),
        costs=_ruta(valor["costs"], base) if valor.get("costs") else None,
        heldout_count=int(valor["heldout_count"]),
        split_seed=int(valor.get("split_seed", 0)),
        normalize=bool(valor.get("normalize", False)),
    )


def load_experiment_config(
    path: Union[str, Path],
    seed: Optional[int] = None,
    jobs: Optional[int] = None,
) -> ExperimentConfig:
    """
    Lee la configuración JSON de un experimento.

    Las rutas relativas se resuelven contra la carpeta del archivo.

    Args:
        path: Ruta del archivo JSON
        seed: Reemplaza la semilla base del archivo (--seed)
        jobs: Reemplaza jobs del archivo (--jobs)

    Returns:
        ExperimentConfig validada
    """
    ruta = Path(path)
    if not ruta.exists():
        raise StartupError(f"No se encontró el archivo de configuración: {ruta}")
    try:
        with open(ruta, "r", encoding="utf-8-sig") as f:
            datos = json.load(f)
    except json.JSONDecodeError as e:
        raise StartupError(f"JSON inválido en {ruta}: {e}") from None
    if not isinstance(datos, dict):
        raise StartupError(f"{ruta} debe contener un objeto JSON")

    desconocidas = sorted(set(datos) - CLAVES_EXPERIMENTO)
    if desconocidas:
        registro.warning(f"Claves desconocidas en {ruta.name} (se ignoran): {', '.join(desconocidas)}")
    for clave in ("scenario", "horizon"):
        if clave not in datos:
            raise StartupError(f"Falta la clave obligatoria '{clave}' en {ruta.name}")

    base = ruta.resolve().parent
    try:
        fuente = _fuente_escenario(datos["scenario"], base)
        if isinstance(fuente, SyntheticConfig):
            semilla_defecto = fuente.seed
        else:
            semilla_defecto = fuente.split_seed
        politicas = tuple(PolicyConfig(p).policy for p in _lista(datos, "policies", [p.value for p in Policy]))
        return ExperimentConfig(
            scenario=fuente,
            policies=politicas,
            device_counts=tuple(int(m) for m in _lista(datos, "device_counts", [1])),
            horizon=float(datos["horizon"]),
            replicates=int(datos.get("replicates", 1)),
            cutoffs=tuple(float(c) for c in _lista(datos, "cutoffs", [])),
            warm_start=PolicyConfig(warm_start=datos.get("warm_start", "None")).warm_start,
            within_user_rule=PolicyConfig(within_user_rule=datos.get("within_user_rule", "EI")).within_user_rule,
            output_dir=_ruta(datos.get("output_dir", "resultados"), base),
            seed=int(datos.get("seed", semilla_defecto)) if seed is None else int(seed),
            jobs=int(datos.get("jobs", 1)) if jobs is None else int(jobs),
            report_bounds=bool(datos.get("report_bounds", True)),
            excel_report=bool(datos.get("excel_report", False)),
        )
    except (TypeError, ValueError) as e:
        raise StartupError(f"Configuración inválida en {ruta.name}: {e}") from None


def build_scenario(cfg: ExperimentConfig, replicate: int) -> Scenario:
    """Escenario de la réplica: muestra sintética o partición de la tabla con seed_r."""
    semilla = cfg.replicate_seed(replicate)
    if isinstance(cfg.scenario, SyntheticConfig):
        return generate_synthetic(replace(cfg.scenario, seed=semilla))
    fuente = cfg.scenario
    tabla = load_table(fuente.values, fuente.costs)
    return build_table_scenario(tabla, fuente.heldout_count, semilla, fuente.normalize)


def nombre_corrida(policy: str, devices: int, replicate: int) -> str:
    return f"{policy}_M{devices}_r{replicate}"


def ejecutar_corrida(cfg: ExperimentConfig, policy: PolicyConfig, devices: int, replicate: int) -> RunResult:
    """
    Una corrida completa: escenario, simulación, regret, cotas y archivos propios.

    Los fallos numéricos quedan en RunResult.error y no detienen el experimento.
    """
    resultado = RunResult(policy.policy.value, devices, replicate)
    nombre = nombre_corrida(policy.policy.value, devices, replicate)
    try:
        escenario = build_scenario(cfg, replicate)
        traza = run_simulation(escenario, policy, devices, cfg.horizon, seed=cfg.replicate_seed(replicate))
        reporte = cumulative_regret(traza, escenario, cfg.horizon, cfg.cutoffs)
        traza.to_csv(cfg.output_dir / f"trace_{nombre}.csv")
        reporte.write_curve_csv(cfg.output_dir / f"curve_{nombre}.csv")
        resultado.cumulative_regret = reporte.cumulative
        resultado.time_to_cutoff = reporte.time_to_cutoff

        if cfg.report_bounds:
            n_obs = len(traza.observed(cfg.horizon))
            miu = miu_total(escenario.prior.kernel, min(n_obs, len(escenario.prior.model_ids)))
            resultado.bounds = {
                "policy": resultado.policy,
                "devices": devices,
                "replicate": replicate,
                "n_observed": n_obs,
                "miu_total": miu.total,
                "miu_method": miu.method.value,
                "diag_bound": miu.diag_bound,
                "bound_holds": miu.bound_holds,
                "empirical_R": estimate_R(traza, escenario),
                "theorem1_comparator": theorem1_comparator(
                    miu.total, devices, escenario.catalog.n_users, mean_optimal_cost(escenario)
                ),
            }
    except (NumericError, InvariantError, ContractError) as e:
        resultado.cumulative_regret = math.nan
        resultado.time_to_cutoff = {}
        resultado.bounds = None
        resultado.error = f"{type(e).__name__}: {e}"
    return resultado


def _formato(valor: float) -> str:
    return FORMATO_DECIMAL % valor


def columna_corte(c: float) -> str:
    return f"ttc_{c:g}"


def summary_frame(cfg: ExperimentConfig, resultados: List[RunResult]) -> pd.DataFrame:
    filas = []
    for r in resultados:
        fila: Dict[str, Any] = {
            "policy": r.policy,
            "devices": r.devices,
            "replicate": r.replicate,
            # el regret fallido se escribe 'nan'; los ttc fallidos quedan vacíos
            "cumulative_regret": _formato(r.cumulative_regret),
        }
        for c in cfg.cutoffs:
            t = r.time_to_cutoff.get(c) if r.error is None else None
            fila[columna_corte(c)] = math.nan if t is None else t
        filas.append(fila)
    columnas = ["policy", "devices", "replicate", "cumulative_regret"] + [columna_corte(c) for c in cfg.cutoffs]
    return pd.DataFrame(filas, columns=columnas)


def speedup_frame(cfg: ExperimentConfig, resultados: List[RunResult]) -> pd.DataFrame:
    """Media y banda de 1σ del tiempo hasta cada umbral, sobre las réplicas que lo alcanzan."""
    filas = []
    for politica in cfg.policies:
        for m in cfg.device_counts:
            grupo = [r for r in resultados if r.policy == politica.value and r.devices == m and r.error is None]
            for c in cfg.cutoffs:
                tiempos = np.array([r.time_to_cutoff[c] for r in grupo if r.time_to_cutoff.get(c) is not None])
                if tiempos.size:
                    media = float(tiempos.mean())
                    sigma = float(tiempos.std(ddof=1)) if tiempos.size > 1 else 0.0
                else:
                    media = sigma = math.nan
                filas.append([politica.value, m, f"{c:g}", media, media - sigma, media + sigma, int(tiempos.size)])
    return pd.DataFrame(filas, columns=COLUMNAS_SPEEDUP)


def _escribir_csv(df: pd.DataFrame, ruta: Path) -> None:
    df.to_csv(ruta, index=False, float_format=FORMATO_DECIMAL, na_rep="", lineterminator="\n")


def _escribir_excel(ruta: Path, resumen: pd.DataFrame, speedup: pd.DataFrame) -> None:
    with pd.ExcelWriter(ruta, engine="openpyxl") as writer:
        resumen.to_excel(writer, sheet_name="summary", index=False)
        speedup.to_excel(writer, sheet_name="speedup", index=False)
        for hoja in writer.sheets.values():
            for columna in hoja.columns:
                ancho = max(len(str(celda.value or "")) for celda in columna)
                hoja.column_dimensions[columna[0].column_letter].width = min(ancho + 2, 40)


def run_experiment(cfg: ExperimentConfig) -> int:
    """
    Ejecuta todas las corridas y escribe summary.csv, speedup.csv y bounds.csv.

    Args:
        cfg: Configuración validada

    Returns:
        Código de salida (0 aunque fallen corridas individuales)
    """
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        prueba = cfg.output_dir / ".escritura"
        prueba.write_text("", encoding="utf-8")
        prueba.unlink()
    except OSError as e:
        raise StartupError(f"No se puede escribir en la carpeta de salida {cfg.output_dir}: {e}") from None

    tareas = [
        (pc, m, r)
        for pc in cfg.policy_configs
        for m in cfg.device_counts
        for r in range(cfg.replicates)
    ]
    registro.info(f"Experimento con {len(tareas)} corridas ({cfg.jobs} en paralelo)")
    registro.detalle(f"Políticas: {', '.join(p.value for p in cfg.policies)}")
    registro.detalle(f"Dispositivos: {', '.join(str(m) for m in cfg.device_counts)}; réplicas: {cfg.replicates}")

    resultados: List[RunResult] = []
    barra = tqdm(total=len(tareas), desc="Simulaciones", unit="corrida", disable=not registro.es_verboso())
    if cfg.jobs == 1:
        for pc, m, r in tareas:
            resultados.append(ejecutar_corrida(cfg, pc, m, r))
            barra.update(1)
    else:
        with ProcessPoolExecutor(
            max_workers=cfg.jobs, initializer=registro.configurar, initargs=(registro.es_verboso(),)
        ) as pool:
            futuros = [pool.submit(ejecutar_corrida, cfg, pc, m, r) for pc, m, r in tareas]
            for futuro in as_completed(futuros):
                resultados.append(futuro.result())
                barra.update(1)
    barra.close()

    orden = {p.value: i for i, p in enumerate(cfg.policies)}
    resultados.sort(key=lambda r: (orden[r.policy], r.devices, r.replicate))
    for r in resultados:
        if r.error is not None:
            registro.error(f"Corrida {nombre_corrida(r.policy, r.devices, r.replicate)} fallida: {r.error}")

    resumen = summary_frame(cfg, resultados)
    speedup = speedup_frame(cfg, resultados)
    _escribir_csv(resumen, cfg.output_dir / "summary.csv")
    _escribir_csv(speedup, cfg.output_dir / "speedup.csv")
    if cfg.report_bounds:
        cotas = pd.DataFrame([r.bounds for r in resultados if r.bounds is not None], columns=COLUMNAS_BOUNDS)
        _escribir_csv(cotas, cfg.output_dir / "bounds.csv")
    if cfg.excel_report:
        _escribir_excel(cfg.output_dir / "resumen.xlsx", resumen, speedup)
        registro.ok(f"Resumen Excel: {cfg.output_dir / 'resumen.xlsx'}")

    fallidas = sum(r.error is not None for r in resultados)
    registro.ok(f"Resultados en {cfg.output_dir} ({len(resultados) - fallidas} corridas, {fallidas} fallidas)")
    return 0
