"""
Métricas de una simulación y cantidades de la cota teórica.

- cumulative_regret(): regret acumulado (integral exacta de funciones escalón),
  curva de regret instantáneo y tiempo hasta cada umbral.
- miu_s_exact() / miu_total(): incertidumbre incremental máxima (MIU).
- schur_ratio_check(): det(A)/det(A_{n−1}) frente al complemento de Schur.
- theorem1_comparator(), mean_optimal_cost(), estimate_R(): insumos de la cota.
"""
import itertools
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from core import registro
from core.acquisition import INCUMBENT_FLOOR
from core.errors import InputError, NumericError
from core.gp_core import ObservationSet, PriorSpec, condition
from core.simulator import FORMATO_DECIMAL, Scenario, Trace

# Tope de dimensión para enumerar subconjuntos en MIU exacto
MIU_CAP = 14
SINGULAR_TOL = 1e-12
SIGMA_TOL_R = 1e-10
BOUND_TOL = 1e-9

Curva = List[Tuple[float, float]]


class MiuMethod(str, Enum):
    EXACT = "Exact"
    DIAG_BOUND_ONLY = "DiagBoundOnly"


@dataclass
class RegretReport:
    """
    Regret de una traza hasta el horizonte.

    Las curvas son funciones escalón continuas por la derecha: cada punto
    (t, g) vale g en [t, t_siguiente).
    """

    cumulative: float
    instantaneous_curve: Curva
    per_user_curves: Dict[str, Curva]
    time_to_cutoff: Dict[float, Optional[float]]
    horizon: float

    def instantaneous_at(self, t: float) -> float:
        tiempos = [p[0] for p in self.instantaneous_curve]
        k = int(np.searchsorted(tiempos, t, side="right")) - 1
        return self.instantaneous_curve[max(k, 0)][1]

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.instantaneous_curve, columns=["t", "instantaneous_regret"])

    def write_curve_csv(self, ruta: Union[str, Path]) -> Path:
        ruta = Path(ruta)
        self.curve_frame().to_csv(ruta, index=False, float_format=FORMATO_DECIMAL, lineterminator="\n")
        return ruta


@dataclass
class MiuReport:
    """
    MIU por tamaño s, su suma y la cota diagonal.

    bound_holds indica si total <= diag_bound. Con diagonal constante se
    cumple siempre; con varianzas desiguales cada MIU_s puede volver a elegir
    el modelo de mayor varianza y la suma puede superar la cota.
    """

    s_values: List[Tuple[int, float]]
    total: float
    diag_bound: float
    method: MiuMethod
    n_observed: int
    bound_holds: bool = True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.s_values, columns=["s", "miu_s"])

    def to_csv(self, ruta: Union[str, Path]) -> Path:
        ruta = Path(ruta)
        self.to_frame().to_csv(ruta, index=False, float_format=FORMATO_DECIMAL, lineterminator="\n")
        return ruta


def integrate_step(curve: Sequence[Tuple[float, float]], t0: float, t1: float) -> float:
    """
    Integral exacta de una curva escalón entre t0 y t1.

    Args:
        curve: Puntos (t_k, g_k) ordenados por t; g_k rige en [t_k, t_{k+1})
        t0: Inicio del intervalo
        t1: Fin del intervalo

    Returns:
        Suma de g_k por el largo de cada tramo dentro de [t0, t1]
    """
    if t1 <= t0:
        return 0.0
    terminos = []
    for k, (tk, gk) in enumerate(curve):
        fin = curve[k + 1][0] if k + 1 < len(curve) else math.inf
        a, b = max(tk, t0), min(fin, t1)
        if b > a:
            terminos.append(gk * (b - a))
    return math.fsum(terminos)


def _validar_traza(trace: Trace, scenario: Scenario) -> None:
    for e in trace.events:
        if e.model not in scenario.catalog.model_position:
            raise InputError(f"La traza contiene el modelo '{e.model}', ajeno al escenario")
        if not math.isclose(e.value, scenario.truth[e.model], rel_tol=1e-12, abs_tol=1e-15):
            raise InputError(
                f"La traza registra {e.value!r} para '{e.model}' pero el escenario dice {scenario.truth[e.model]!r}"
            )


def _curva_usuario(scenario: Scenario, usuario: int, observados: List[Tuple[float, float, str]]) -> Curva:
    optimo = scenario.optimum(usuario)[1]
    menu = scenario.catalog.menu_sets[usuario]
    mejor = INCUMBENT_FLOOR
    curva: Curva = [(0.0, max(optimo - mejor, 0.0))]
    for termino, valor, modelo in observados:
        if modelo not in menu or valor <= mejor:
            continue
        mejor = valor
        punto = (termino, max(optimo - mejor, 0.0))
        if curva[-1][0] == termino:
            curva[-1] = punto
        else:
            curva.append(punto)
    return curva


def cumulative_regret(
    trace: Trace,
    scenario: Scenario,
    T: Optional[float] = None,
    cutoffs: Iterable[float] = (),
) -> RegretReport:
    """
    Regret_T = Σ_i ∫_0^T (z(x_i*) − z(x_i*(t))) dt, más la curva instantánea.

    Antes de la primera observación de un usuario su mejor valor es el piso 0.

    Args:
        trace: Traza producida sobre el escenario
        scenario: Escenario con la verdad de cada modelo
        T: Horizonte de integración (por defecto el de la traza)
        cutoffs: Umbrales de regret instantáneo para time_to_cutoff

    Returns:
        RegretReport
    """
    T = trace.horizon if T is None else float(T)
    if not (T > 0 and math.isfinite(T)):
        raise InputError(f"El horizonte debe ser positivo y finito, se recibió {T}")
    _validar_traza(trace, scenario)

    observados = sorted((e.finish, e.value, e.model) for e in trace.events if e.finish <= T)
    curvas = {
        scenario.catalog.user_ids[u]: _curva_usuario(scenario, u, observados)
        for u in range(scenario.catalog.n_users)
    }
    acumulado = math.fsum(integrate_step(c, 0.0, T) for c in curvas.values())

    tiempos = np.array(sorted({t for c in curvas.values() for t, _ in c}), dtype=float)
    brechas = np.empty((len(curvas), tiempos.size))
    for fila, curva in enumerate(curvas.values()):
        tu = np.array([p[0] for p in curva])
        gu = np.array([p[1] for p in curva])
        brechas[fila] = gu[np.searchsorted(tu, tiempos, side="right") - 1]
    instantanea = [(float(t), float(g)) for t, g in zip(tiempos, brechas.mean(axis=0))]

    hasta_umbral = {
        float(c): next((t for t, g in instantanea if g <= c), None) for c in cutoffs
    }
    return RegretReport(acumulado, instantanea, curvas, hasta_umbral, T)


def _matriz(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise InputError(f"Se esperaba una matriz cuadrada no vacía, se recibió forma {K.shape}")
    if not np.all(np.isfinite(K)):
        raise InputError("La matriz contiene valores no finitos")
    return K


def miu_s_exact(K, s: int, cap: int = MIU_CAP) -> float:
    """
    MIU_s(K): mayor desviación condicional al pasar de s−1 a s modelos.

    Se enumeran los S' de tamaño s−1 y, para cada x fuera de S', la varianza
    condicional de x dado S' (complemento de Schur), que es igual al cociente
    det(K_S)/det(K_S') con S = S' ∪ {x}. Si det(K_S') <= 1e-12 el aporte es 0.

    Args:
        K: Matriz de kernel
        s: Tamaño del conjunto (1 <= s <= dim)
        cap: Dimensión máxima admitida para la enumeración exacta

    Returns:
        MIU_s(K)
    """
    K = _matriz(K)
    n = K.shape[0]
    if not (1 <= s <= n):
        raise InputError(f"s debe estar entre 1 y {n}, se recibió {s}")
    if n > cap:
        raise InputError(
            f"Dimensión {n} supera el tope de enumeración exacta ({cap}); use la cota diagonal"
        )

    diag = np.diag(K)
    if s == 1:
        return math.sqrt(max(float(diag.max()), 0.0))

    log_tol = math.log(SINGULAR_TOL)
    todos = np.arange(n)
    mejor = 0.0
    for sub in itertools.combinations(range(n), s - 1):
        sub = np.array(sub)
        try:
            L = linalg.cholesky(K[np.ix_(sub, sub)], lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if 2.0 * float(np.sum(np.log(np.diag(L)))) <= log_tol:
            continue
        resto = np.setdiff1d(todos, sub, assume_unique=True)
        A = linalg.solve_triangular(L, K[np.ix_(sub, resto)], lower=True, check_finite=False)
        condicional = diag[resto] - np.einsum("ij,ij->j", A, A)
        condicional = np.where(condicional <= SINGULAR_TOL, 0.0, condicional)
        mejor = max(mejor, math.sqrt(float(condicional.max())))
    return mejor


def miu_total(K, n_observed: int, cap: int = MIU_CAP) -> MiuReport:
    """
    MIU(T,K) = Σ_{s=2}^{n_observed} MIU_s(K) y la cota Σ top-n √K(i,i).

    Sobre el tope de dimensión sólo se informa la cota (method = DiagBoundOnly,
    total = cota). Con varianzas a priori desiguales el total exacto puede
    superar la cota; el reporte lo indica en bound_holds y se avisa por consola.
    """
    K = _matriz(K)
    n = K.shape[0]
    if not (0 <= n_observed <= n):
        raise InputError(f"n_observed debe estar entre 0 y {n}, se recibió {n_observed}")

    raices = sorted(np.sqrt(np.maximum(np.diag(K), 0.0)), reverse=True)
    cota = math.fsum(raices[:n_observed])
    if n > cap:
        return MiuReport([], cota, cota, MiuMethod.DIAG_BOUND_ONLY, n_observed)

    valores = [(s, miu_s_exact(K, s, cap)) for s in range(2, n_observed + 1)]
    total = math.fsum(v for _, v in valores)
    se_cumple = total <= cota + BOUND_TOL * max(1.0, cota)
    if not se_cumple:
        registro.warning(
            f"MIU total {total:.6g} supera la cota diagonal {cota:.6g} (varianzas a priori desiguales)"
        )
    return MiuReport(valores, total, cota, MiuMethod.EXACT, n_observed, se_cumple)


def theorem1_comparator(miu_total: float, M: int, N: int, cbar: float) -> float:
    """
    (MIU(T,K) + M)·N²·c̄ / M: lado derecho de la cota, salvo constante.

    Sirve para comparar tendencias (por ejemplo al variar M), no como umbral absoluto.
    """
    if M <= 0:
        raise InputError(f"M debe ser positivo, se recibió {M}")
    if miu_total < 0 or N <= 0 or cbar <= 0:
        raise InputError("miu_total debe ser >= 0, y N y cbar positivos")
    return (miu_total + M) * N ** 2 * cbar / M


def mean_optimal_cost(scenario: Scenario) -> float:
    """c̄: costo promedio de los modelos óptimos de cada usuario."""
    costos = [scenario.catalog.costs[scenario.optimum(u)[0]] for u in range(scenario.catalog.n_users)]
    return math.fsum(costos) / len(costos)


def schur_ratio_check(A) -> Tuple[float, float]:
    """
    Compara det(A)/det(A_{n−1}) con a − Bᵀ A_{n−1}⁻¹ B (última fila/columna).

    Returns:
        tuple: (lhs, rhs)
    """
    A = _matriz(A)
    n = A.shape[0]
    if n < 2:
        raise InputError("La matriz debe ser al menos de 2x2")
    if float(np.max(np.abs(A - A.T))) > 1e-10:
        raise InputError("La matriz debe ser simétrica")
    try:
        L_lider = linalg.cholesky(A[:-1, :-1], lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NumericError(f"El bloque principal de {n - 1}x{n - 1} es singular", tamano=n - 1) from None
    try:
        L = linalg.cholesky(A, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NumericError(f"La matriz de {n}x{n} no es definida positiva", tamano=n) from None

    log_cociente = 2.0 * (float(np.sum(np.log(np.diag(L)))) - float(np.sum(np.log(np.diag(L_lider)))))
    y = linalg.solve_triangular(L_lider, A[:-1, -1], lower=True, check_finite=False)
    return math.exp(log_cociente), float(A[-1, -1] - y @ y)


def estimate_R(trace: Trace, scenario: Scenario, prior: Optional[PriorSpec] = None) -> float:
    """
    R empírico: máximo de |z(x) − μ_t̂(x)| / σ_t̂(x) en el inicio t̂ de cada asignación.

    Se omiten las asignaciones con σ < 1e-10; si no queda ninguna, R = 0.
    """
    prior = scenario.prior if prior is None else prior
    por_termino = sorted(trace.events, key=lambda e: (e.finish, e.device))
    entradas: List[Tuple[str, float]] = []
    k = 0
    post = None
    R = 0.0
    for e in sorted(trace.events, key=lambda e: (e.start, e.device)):
        while k < len(por_termino) and por_termino[k].finish <= e.start:
            entradas.append((por_termino[k].model, por_termino[k].value))
            k += 1
        if post is None or len(post.observed) != len(entradas):
            post = condition(prior, ObservationSet(tuple(entradas)), previous=post)
        sigma = post.post_std(e.model)
        if sigma < SIGMA_TOL_R:
            continue
        R = max(R, abs(e.value - post.post_mean(e.model)) / sigma)
    return R
