"""
Lectura y escritura de datos, estimación del prior y generador sintético.

- load_table() / save_table(): tabla de rendimiento usuario x modelo (CSV o Excel).
- load_costs() / save_costs(): costo por modelo (CSV model,cost).
- estimate_prior(): media y covarianza empírica de usuarios reservados, con
  contracción hacia la diagonal hasta que la matriz sea definida positiva.
- build_table_scenario(): separa usuarios reservados y arma el escenario.
- generate_synthetic(): escenarios con kernel Matérn-5/2 o de rango bajo.
"""
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.spatial.distance import cdist

from core import registro
from core.acquisition import TenantCatalog
from core.errors import InputError, TableParseError
from core.gp_core import PriorSpec, sample_prior
from core.simulator import Scenario

Ruta = Union[str, Path]

EXTENSIONES_EXCEL = {".xlsx", ".xlsm", ".xlsb"}
COSTO_POR_DEFECTO = 1.0
# Grilla de contracción α ∈ {0, 0.05, ..., 1}
GRILLA_ALFA = np.round(np.linspace(0.0, 1.0, 21), 2)
EIG_MINIMO = 1e-10

CLAVES_SINTETICO = ("n_users", "n_models", "length_scale", "variance", "cost_model", "cost_params", "seed")
CLAVES_SINTETICO_OPCIONALES = ("kernel", "rank", "embedding")
MODELOS_COSTO = {"constant": 1, "uniform": 2, "lognormal": 2}
KERNELS_SINTETICOS = ("matern52", "low_rank")


@dataclass(eq=False)
class PerformanceTable:
    """
    Rendimiento de cada usuario (fila) en cada modelo (columna).

    NaN en values significa que el modelo no está en el menú del usuario.

    Args:
        values: DataFrame usuarios x modelos
        costs: Serie con el costo de cada modelo (índice = modelos)
    """

    values: pd.DataFrame
    costs: pd.Series

    def __post_init__(self) -> None:
        valores = self.values.astype(float)
        valores.index = valores.index.map(str)
        valores.columns = valores.columns.map(str)
        valores.index.name = "user"
        if valores.index.has_duplicates or valores.columns.has_duplicates:
            raise InputError("La tabla tiene usuarios o modelos repetidos")

        costos = self.costs.astype(float)
        costos.index = costos.index.map(str)
        participan = valores.columns[valores.notna().any(axis=0)]
        faltan = [m for m in participan if m not in costos.index]
        if faltan:
            raise InputError(f"Modelos sin costo: {', '.join(faltan[:5])}")
        costos = costos.reindex(valores.columns)
        malos = [m for m in participan if not (math.isfinite(costos[m]) and costos[m] > 0)]
        if malos:
            raise InputError(f"Costos no positivos para: {', '.join(malos[:5])}")
        costos.index.name = "model"
        costos.name = "cost"

        self.values = valores
        self.costs = costos

    @property
    def users(self) -> List[str]:
        return list(self.values.index)

    @property
    def models(self) -> List[str]:
        return list(self.values.columns)

    def menus(self) -> Dict[str, Tuple[str, ...]]:
        """Modelos con valor de cada usuario, en el orden de las columnas."""
        return {u: tuple(fila.index[fila.notna()]) for u, fila in self.values.iterrows()}

    def subset(self, users: Sequence[str]) -> "PerformanceTable":
        return PerformanceTable(self.values.loc[list(users)], self.costs)


def _exigir_archivo(ruta: Ruta) -> Path:
    ruta = Path(ruta)
    if not ruta.exists():
        raise FileNotFoundError(f"No se encontró el archivo: {ruta}")
    return ruta


def _campos_por_fila(ruta: Path) -> List[int]:
    """Cantidad de campos de cada registro no vacío del CSV, en el orden del archivo."""
    try:
        with open(ruta, newline="", encoding="utf-8") as f:
            return [len(campos) for campos in csv.reader(f) if campos]
    except (csv.Error, UnicodeDecodeError) as e:
        raise TableParseError(f"CSV mal formado en {ruta.name}: {e}") from None


def _leer_crudo(ruta: Path) -> pd.DataFrame:
    """Celdas tal cual vienen del archivo (sin encabezado interpretado)."""
    if ruta.suffix.lower() in EXTENSIONES_EXCEL:
        motor = "pyxlsb" if ruta.suffix.lower() == ".xlsb" else "openpyxl"
        registro.info(f"Leyendo libro Excel: {ruta.name} (motor {motor})")
        return pd.read_excel(ruta, sheet_name=0, header=None, dtype=object, engine=motor)

    # pandas rellena los campos faltantes en silencio; se cuentan antes de leer
    campos = _campos_por_fila(ruta)
    for r, n in enumerate(campos[1:], start=2):
        if n != campos[0]:
            relacion = "menos" if n < campos[0] else "más"
            raise TableParseError(
                f"Fila con {relacion} campos que el encabezado ({n} frente a {campos[0]})", fila=r
            )
    try:
        return pd.read_csv(ruta, header=None, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as e:
        raise TableParseError(f"CSV mal formado en {ruta.name}: {e}") from None
    except pd.errors.EmptyDataError:
        raise TableParseError(f"El archivo {ruta.name} está vacío", fila=1) from None


def _es_vacia(valor: Any) -> bool:
    if valor is None:
        return True
    if isinstance(valor, float) and math.isnan(valor):
        return True
    return isinstance(valor, str) and not valor.strip()


def _etiqueta(valor: Any) -> str:
    if isinstance(valor, float) and valor.is_integer():
        return str(int(valor))
    return str(valor).strip()


def _numero(valor: Any, fila: int, columna: str) -> float:
    if _es_vacia(valor):
        return math.nan
    if isinstance(valor, bool):
        raise TableParseError(f"Valor no numérico: {valor!r}", fila=fila, columna=columna)
    try:
        numero = float(valor.strip() if isinstance(valor, str) else valor)
    except (TypeError, ValueError):
        raise TableParseError(f"Valor no numérico: {valor!r}", fila=fila, columna=columna) from None
    if not math.isfinite(numero):
        raise TableParseError(f"Valor no finito: {valor!r}", fila=fila, columna=columna)
    return numero


def _encabezado(crudo: pd.DataFrame, primera: str) -> List[str]:
    if crudo.empty:
        raise TableParseError("Archivo sin encabezado", fila=1)
    etiquetas = [_etiqueta(v) if not _es_vacia(v) else "" for v in crudo.iloc[0]]
    if etiquetas[0] != primera:
        raise TableParseError(
            f"El encabezado debe comenzar con '{primera}', se encontró '{etiquetas[0]}'", fila=1, columna=etiquetas[0]
        )
    vistos = set()
    for j, etiqueta in enumerate(etiquetas[1:], start=1):
        if not etiqueta:
            raise TableParseError(f"Columna {j + 1} sin nombre", fila=1)
        if etiqueta in vistos:
            raise TableParseError(f"Columna repetida: '{etiqueta}'", fila=1, columna=etiqueta)
        vistos.add(etiqueta)
    return etiquetas


def _parsear_tabla(crudo: pd.DataFrame) -> pd.DataFrame:
    etiquetas = _encabezado(crudo, "user")
    modelos = etiquetas[1:]
    if not modelos:
        raise TableParseError("La tabla no tiene columnas de modelos", fila=1)

    usuarios: List[str] = []
    filas: List[List[float]] = []
    for r in range(1, len(crudo)):
        fila = r + 1
        celdas = list(crudo.iloc[r])
        if _es_vacia(celdas[0]):
            raise TableParseError("Fila sin etiqueta de usuario", fila=fila, columna="user")
        usuario = _etiqueta(celdas[0])
        if usuario in usuarios:
            raise TableParseError(f"Usuario repetido: '{usuario}'", fila=fila, columna="user")
        valores = [_numero(v, fila, m) for v, m in zip(celdas[1:], modelos)]
        negativos = [m for v, m in zip(valores, modelos) if v < 0]
        if negativos:
            raise TableParseError("Rendimiento negativo", fila=fila, columna=negativos[0])
        if all(math.isnan(v) for v in valores):
            raise TableParseError(f"El usuario '{usuario}' no tiene ningún modelo", fila=fila)
        usuarios.append(usuario)
        filas.append(valores)

    if not usuarios:
        raise TableParseError("La tabla no tiene filas de usuarios", fila=2)
    return pd.DataFrame(filas, index=pd.Index(usuarios, name="user"), columns=modelos)


def load_costs(path: Ruta) -> pd.Series:
    """
    Lee el CSV de costos (encabezado model,cost).

    Returns:
        Serie de costos indexada por modelo
    """
    ruta = _exigir_archivo(path)
    crudo = _leer_crudo(ruta)
    etiquetas = _encabezado(crudo, "model")
    if etiquetas != ["model", "cost"]:
        raise TableParseError("El archivo de costos debe tener exactamente las columnas model,cost", fila=1)

    costos: Dict[str, float] = {}
    for r in range(1, len(crudo)):
        modelo, valor = crudo.iloc[r, 0], crudo.iloc[r, 1]
        if _es_vacia(modelo):
            raise TableParseError("Fila sin modelo", fila=r + 1, columna="model")
        modelo = _etiqueta(modelo)
        if modelo in costos:
            raise TableParseError(f"Modelo repetido: '{modelo}'", fila=r + 1, columna="model")
        costo = _numero(valor, r + 1, "cost")
        if not costo > 0:
            raise TableParseError(f"Costo no positivo para '{modelo}'", fila=r + 1, columna="cost")
        costos[modelo] = costo
    return pd.Series(costos, name="cost", dtype=float).rename_axis("model")


def load_table(path: Ruta, cost_path: Optional[Ruta] = None) -> PerformanceTable:
    """
    Lee una tabla de rendimiento (CSV, .xlsx, .xlsm o .xlsb).

    Primera fila: user,<modelo1>,<modelo2>,...; una fila por usuario; celda
    vacía = el modelo no está en el menú de ese usuario.

    Args:
        path: Ruta de la tabla
        cost_path: Ruta opcional del CSV de costos; sin él cada modelo cuesta 1.0

    Returns:
        PerformanceTable validada
    """
    ruta = _exigir_archivo(path)
    valores = _parsear_tabla(_leer_crudo(ruta))

    if cost_path is None:
        registro.warning(f"Sin archivo de costos para {ruta.name}; se usa costo {COSTO_POR_DEFECTO}")
        costos = pd.Series(COSTO_POR_DEFECTO, index=valores.columns, dtype=float)
    else:
        costos = load_costs(cost_path)
        faltan = [m for m in valores.columns if m not in costos.index]
        if faltan:
            registro.warning(f"{len(faltan)} modelos sin costo; se usa {COSTO_POR_DEFECTO}")
            registro.detalle(", ".join(faltan[:10]))
        sobran = [m for m in costos.index if m not in valores.columns]
        if sobran:
            registro.warning(f"Se ignoran {len(sobran)} costos de modelos ausentes en la tabla")
        costos = costos.reindex(valores.columns).fillna(COSTO_POR_DEFECTO)

    tabla = PerformanceTable(valores, costos)
    registro.ok(f"Tabla leída: {len(tabla.users)} usuarios x {len(tabla.models)} modelos")
    return tabla


def save_table(table: PerformanceTable, path: Ruta) -> Path:
    """Escribe la tabla en formato canónico (celda vacía = ausente, fin de línea \\n)."""
    ruta = Path(path)
    table.values.to_csv(ruta, index_label="user", na_rep="", lineterminator="\n")
    return ruta


def save_costs(costs: pd.Series, path: Ruta) -> Path:
    ruta = Path(path)
    costs.rename("cost").to_csv(ruta, index_label="model", header=True, lineterminator="\n")
    return ruta


def empirical_covariance(table: PerformanceTable) -> pd.DataFrame:
    """Covarianza entre modelos tomando cada fila (usuario) como una muestra conjunta."""
    return table.values.cov(min_periods=2)


def _contraer(sigma: np.ndarray) -> Tuple[np.ndarray, Optional[float]]:
    diagonal = np.diag(np.diag(sigma))
    for alfa in GRILLA_ALFA:
        K = (1.0 - alfa) * sigma + alfa * diagonal
        if float(np.linalg.eigvalsh(K)[0]) >= EIG_MINIMO:
            return K, float(alfa)
    return np.diag(np.maximum(np.diag(sigma), EIG_MINIMO)), None


def estimate_prior(heldout: PerformanceTable, normalize: bool = False) -> PriorSpec:
    """
    Prior GP estimado desde los usuarios reservados.

    Args:
        heldout: Tabla de los usuarios reservados (>= 2 filas)
        normalize: Si True reescala para que la varianza máxima sea <= 1

    Returns:
        PriorSpec sobre los modelos de la tabla
    """
    valores = heldout.values
    if len(valores) < 2:
        raise InputError(f"Se necesitan al menos 2 usuarios reservados, hay {len(valores)}")
    conteo = valores.notna().sum(axis=0)
    pocos = list(conteo.index[conteo < 2])
    if pocos:
        raise InputError(f"Modelos observados por menos de 2 usuarios reservados: {', '.join(pocos[:5])}")

    media = valores.mean(axis=0).to_numpy()
    cov = empirical_covariance(heldout)
    if cov.isna().to_numpy().any():
        registro.warning("Pares de modelos sin usuarios en común; su covarianza se fija en 0")
        cov = cov.fillna(0.0)
    sigma = cov.to_numpy()
    sigma = 0.5 * (sigma + sigma.T)

    K, alfa = _contraer(sigma)
    if alfa is None:
        registro.warning("Ninguna contracción dio una matriz definida positiva; se usa la diagonal")
    elif alfa > 0:
        registro.info(f"Covarianza contraída hacia la diagonal con alfa = {alfa:.2f}")

    escala = 1.0
    if normalize:
        maximo = float(np.max(np.diag(K)))
        if maximo > 1.0:
            escala = math.sqrt(maximo)
            media = media / escala
            K = K / maximo
    return PriorSpec(tuple(valores.columns), media, K, normalized=normalize, scale=escala)


def build_table_scenario(
    table: PerformanceTable,
    heldout_count: int,
    split_seed: int,
    normalize: bool = False,
) -> Scenario:
    """
    Aísla heldout_count usuarios al azar para estimar el prior y simula el resto.

    Los modelos del escenario se identifican como "<usuario>/<modelo>"; el
    kernel global es diagonal por bloques (un bloque por usuario) y la verdad
    se divide por el factor de escala del prior.
    """
    n = len(table.users)
    if heldout_count < 2:
        raise InputError(f"heldout_count debe ser >= 2, se recibió {heldout_count}")
    if heldout_count >= n:
        raise InputError(f"Con {n} usuarios no se pueden reservar {heldout_count} y simular al menos uno")

    orden = np.random.default_rng(split_seed).permutation(n)
    reservados = sorted(int(i) for i in orden[:heldout_count])
    simulados = sorted(int(i) for i in orden[heldout_count:])
    prior_tabla = estimate_prior(table.subset([table.users[i] for i in reservados]), normalize=normalize)
    registro.info(f"Usuarios reservados para el prior: {', '.join(table.users[i] for i in reservados)}")

    menus, costos, verdad, ids, medias, bloques = [], {}, {}, [], [], []
    for i in simulados:
        usuario = table.users[i]
        fila = table.values.iloc[i]
        modelos = list(fila.index[fila.notna()])
        pos = prior_tabla.positions(modelos)
        menu = tuple(f"{usuario}/{m}" for m in modelos)
        menus.append(menu)
        for gid, m in zip(menu, modelos):
            costos[gid] = float(table.costs[m])
            verdad[gid] = float(fila[m]) / prior_tabla.scale
        ids.extend(menu)
        medias.append(prior_tabla.mean[pos])
        bloques.append(prior_tabla.kernel[np.ix_(pos, pos)])

    prior = PriorSpec(
        tuple(ids),
        np.concatenate(medias),
        linalg.block_diag(*bloques),
        normalized=prior_tabla.normalized,
        scale=prior_tabla.scale,
    )
    catalogo = TenantCatalog(tuple(menus), costos, tuple(table.users[i] for i in simulados))
    return Scenario(catalogo, verdad, prior, label=f"tabla-{split_seed}")


def table_spread(table: PerformanceTable) -> float:
    """Promedio sobre usuarios de la desviación estándar de sus rendimientos."""
    return float(table.values.std(axis=1).mean())


def load_kernel_csv(path: Ruta) -> np.ndarray:
    """
    Matriz de kernel desde CSV; admite fila de encabezado y columna de etiquetas.
    """
    ruta = _exigir_archivo(path)
    crudo = _leer_crudo(ruta)
    if crudo.empty:
        raise TableParseError("Archivo de kernel vacío", fila=1)

    def numerico(v: Any) -> bool:
        try:
            float(v)
            return True
        except (TypeError, ValueError):
            return False

    fila0 = 0 if all(numerico(v) for v in crudo.iloc[0]) else 1
    col0 = 0
    if len(crudo) > fila0 and not numerico(crudo.iloc[fila0, 0]):
        col0 = 1
    cuerpo = crudo.iloc[fila0:, col0:]
    K = np.empty(cuerpo.shape)
    for r in range(cuerpo.shape[0]):
        for c in range(cuerpo.shape[1]):
            valor = _numero(cuerpo.iat[r, c], r + fila0 + 1, str(c + col0 + 1))
            if math.isnan(valor):
                raise TableParseError("Celda vacía en el kernel", fila=r + fila0 + 1, columna=str(c + col0 + 1))
            K[r, c] = valor
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise InputError(f"El kernel debe ser cuadrado, se leyó forma {K.shape}")
    return K


@dataclass(frozen=True)
class SyntheticConfig:
    """
    Configuración del generador sintético.

    cost_params según cost_model: constant (c0), uniform (c_lo, c_hi),
    lognormal (mu, sigma). embedding = coordenadas 1-D de los modelos
    (por defecto una grilla en [0, 1]).
    """

    n_users: int
    n_models: int
    length_scale: float
    variance: float
    cost_model: str = "constant"
    cost_params: Tuple[float, ...] = (1.0,)
    seed: int = 0
    embedding: Optional[Tuple[float, ...]] = None
    kernel: str = "matern52"
    rank: int = 3

    def __post_init__(self) -> None:
        for nombre in ("n_users", "n_models", "rank"):
            valor = getattr(self, nombre)
            if isinstance(valor, bool) or int(valor) != valor or valor < 1:
                raise InputError(f"{nombre} debe ser un entero positivo, se recibió {valor!r}")
            object.__setattr__(self, nombre, int(valor))
        if not (math.isfinite(self.length_scale) and self.length_scale > 0):
            raise InputError(f"length_scale debe ser positivo, se recibió {self.length_scale}")
        if not (math.isfinite(self.variance) and 0 < self.variance <= 1):
            raise InputError(f"variance debe estar en (0, 1], se recibió {self.variance}")
        if self.cost_model not in MODELOS_COSTO:
            raise InputError(f"cost_model desconocido: '{self.cost_model}' (opciones: {', '.join(MODELOS_COSTO)})")
        if self.kernel not in KERNELS_SINTETICOS:
            raise InputError(f"kernel desconocido: '{self.kernel}' (opciones: {', '.join(KERNELS_SINTETICOS)})")

        params = tuple(float(p) for p in self.cost_params)
        if len(params) != MODELOS_COSTO[self.cost_model]:
            raise InputError(
                f"cost_model '{self.cost_model}' necesita {MODELOS_COSTO[self.cost_model]} parámetros, hay {len(params)}"
            )
        if self.cost_model == "constant" and not params[0] > 0:
            raise InputError("El costo constante debe ser positivo")
        if self.cost_model == "uniform" and not (0 < params[0] <= params[1]):
            raise InputError("uniform necesita 0 < c_lo <= c_hi")
        if self.cost_model == "lognormal" and not params[1] >= 0:
            raise InputError("lognormal necesita sigma >= 0")
        object.__setattr__(self, "cost_params", params)

        if self.embedding is not None:
            puntos = tuple(float(p) for p in self.embedding)
            if len(puntos) != self.n_models:
                raise InputError(f"embedding tiene {len(puntos)} puntos para {self.n_models} modelos")
            object.__setattr__(self, "embedding", puntos)
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_mapping(cls, datos: Mapping[str, Any]) -> "SyntheticConfig":
        """Construye la configuración desde un diccionario (JSON o archivo plano)."""
        faltan = [k for k in CLAVES_SINTETICO if k not in datos]
        if faltan:
            raise InputError(f"Faltan claves en la configuración sintética: {', '.join(faltan)}")
        desconocidas = [k for k in datos if k not in CLAVES_SINTETICO + CLAVES_SINTETICO_OPCIONALES]
        if desconocidas:
            registro.warning(f"Claves sintéticas desconocidas ignoradas: {', '.join(desconocidas)}")

        def lista(valor: Any) -> Tuple[float, ...]:
            if isinstance(valor, str):
                return tuple(float(p) for p in valor.replace(",", " ").split())
            if isinstance(valor, (int, float)):
                return (float(valor),)
            return tuple(float(p) for p in valor)

        try:
            return cls(
                n_users=int(datos["n_users"]),
                n_models=int(datos["n_models"]),
                length_scale=float(datos["length_scale"]),
                variance=float(datos["variance"]),
                cost_model=str(datos["cost_model"]).strip(),
                cost_params=lista(datos["cost_params"]),
                seed=int(datos["seed"]),
                embedding=lista(datos["embedding"]) if datos.get("embedding") not in (None, "") else None,
                kernel=str(datos.get("kernel", "matern52")).strip(),
                rank=int(datos.get("rank", 3)),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, InputError):
                raise
            raise InputError(f"Valor inválido en la configuración sintética: {e}") from None


def load_synthetic_config(path: Ruta) -> SyntheticConfig:
    """
    Lee el archivo plano clave = valor (líneas con # son comentarios).

    Args:
        path: Ruta del archivo .cfg

    Returns:
        SyntheticConfig validada
    """
    ruta = _exigir_archivo(path)
    datos: Dict[str, str] = {}
    for n, linea in enumerate(ruta.read_text(encoding="utf-8").splitlines(), start=1):
        linea = linea.split("#", 1)[0].strip()
        if not linea:
            continue
        if "=" not in linea:
            raise TableParseError(f"Línea sin '=' en {ruta.name}: '{linea}'", fila=n)
        clave, valor = (p.strip() for p in linea.split("=", 1))
        if clave in datos:
            raise TableParseError(f"Clave repetida: '{clave}'", fila=n, columna=clave)
        datos[clave] = valor
    return SyntheticConfig.from_mapping(datos)


def matern52(d, length_scale: float, variance: float):
    """k(d) = σ²(1 + √5 d/ℓ + 5d²/(3ℓ²))·exp(−√5 d/ℓ)."""
    if not (length_scale > 0 and variance > 0):
        raise InputError("length_scale y variance deben ser positivos")
    r = math.sqrt(5.0) * np.abs(np.asarray(d, dtype=float)) / length_scale
    k = variance * (1.0 + r + r ** 2 / 3.0) * np.exp(-r)
    return float(k) if np.ndim(k) == 0 else k


def matern_kernel(points: Sequence[float], length_scale: float, variance: float) -> np.ndarray:
    """Matriz Matérn-5/2 sobre puntos 1-D."""
    x = np.asarray(points, dtype=float).reshape(-1, 1)
    return matern52(cdist(x, x), length_scale, variance)


def _kernel_rango_bajo(cfg: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    # Primer factor constante: el desplazamiento hacia arriba queda dentro del rango de K
    c = math.sqrt(cfg.variance / cfg.rank)
    W = np.empty((cfg.n_models, cfg.rank))
    W[:, 0] = c
    if cfg.rank > 1:
        resto = rng.standard_normal((cfg.n_models, cfg.rank - 1))
        resto *= math.sqrt(cfg.variance - c * c) / np.linalg.norm(resto, axis=1, keepdims=True)
        W[:, 1:] = resto
    K = W @ W.T
    return 0.5 * (K + K.T)


def _costos(cfg: SyntheticConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if cfg.cost_model == "constant":
        return np.full(n, cfg.cost_params[0])
    if cfg.cost_model == "uniform":
        return rng.uniform(cfg.cost_params[0], cfg.cost_params[1], size=n)
    return rng.lognormal(mean=cfg.cost_params[0], sigma=cfg.cost_params[1], size=n)


def generate_synthetic(cfg: SyntheticConfig) -> Scenario:
    """
    Escenario sintético con una muestra independiente del GP por usuario.

    Cada usuario tiene sus propios modelos (u000/m000, ...); el kernel global
    es diagonal por bloques con bloques idénticos K y la muestra de cada
    usuario se desplaza hacia arriba para que no haya valores negativos.

    Args:
        cfg: Configuración del generador

    Returns:
        Scenario determinista dada la semilla
    """
    semillas = np.random.SeedSequence(cfg.seed).spawn(cfg.n_users + 2)
    rng_costos = np.random.default_rng(semillas[0])
    if cfg.kernel == "low_rank":
        K = _kernel_rango_bajo(cfg, np.random.default_rng(semillas[1]))
    else:
        puntos = cfg.embedding if cfg.embedding is not None else np.linspace(0.0, 1.0, cfg.n_models)
        K = matern_kernel(puntos, cfg.length_scale, cfg.variance)

    menus, costos, verdad = [], {}, {}
    for i in range(cfg.n_users):
        menu = tuple(f"u{i:03d}/m{j:03d}" for j in range(cfg.n_models))
        bloque = PriorSpec(menu, np.zeros(cfg.n_models), K)
        muestra = sample_prior(bloque, int(semillas[i + 2].generate_state(1)[0]))
        muestra = muestra + max(0.0, -float(muestra.min()))
        menus.append(menu)
        verdad.update(zip(menu, (float(z) for z in muestra)))
        costos.update(zip(menu, (float(c) for c in _costos(cfg, rng_costos, cfg.n_models))))

    ids = tuple(m for menu in menus for m in menu)
    prior = PriorSpec(ids, np.zeros(len(ids)), linalg.block_diag(*([K] * cfg.n_users)), normalized=True)
    catalogo = TenantCatalog(tuple(menus), costos, tuple(f"u{i:03d}" for i in range(cfg.n_users)))
    return Scenario(catalogo, verdad, prior, label=f"{cfg.kernel}-{cfg.seed}")
