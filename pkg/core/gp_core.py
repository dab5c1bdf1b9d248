"""
Procesos gaussianos sobre un conjunto finito de modelos.

- PriorSpec: media y kernel a priori sobre todos los modelos.
- condition(): posterior exacta dadas observaciones sin ruido.
- tau() y expected_improvement(): forma cerrada de E[max{X - a, 0}].
- sample_prior(): una muestra conjunta del prior (para generar verdades sintéticas).

El jitter diagonal que se agrega antes de factorizar es puramente numérico;
no representa ruido de observación.
"""
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import erfcx, ndtr

from core.errors import InputError, NumericError

# Jitter relativo a max(diag(K_t)); escala x10 hasta el máximo
JITTERS = (1e-9, 1e-8, 1e-7, 1e-6)
TOL_SIMETRIA = 1e-10
TOL_PSD = 1e-9
SIGMA_MINIMO = 1e-12

_RAIZ_2 = math.sqrt(2.0)
_INV_RAIZ_2PI = 1.0 / math.sqrt(2.0 * math.pi)

Numero = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """
    Prior GP(μ, k) restringido al conjunto global de modelos.

    Args:
        model_ids: Identificadores globales (únicos, en orden)
        mean: Media a priori, una entrada por modelo
        kernel: Matriz de covarianza K, simétrica y semidefinida positiva
        normalized: Si True exige diag(K) <= 1 (cota σ(x) <= 1)
        scale: Factor con que se escalaron medias/valores al normalizar
    """

    model_ids: Tuple[str, ...]
    mean: np.ndarray
    kernel: np.ndarray
    normalized: bool = False
    scale: float = 1.0

    def __post_init__(self) -> None:
        ids = tuple(str(m) for m in self.model_ids)
        media = np.array(self.mean, dtype=float).reshape(-1)
        K = np.array(self.kernel, dtype=float)

        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise InputError(f"El kernel debe ser una matriz cuadrada, se recibió forma {K.shape}")
        if not ids:
            raise InputError("El prior necesita al menos un modelo")
        if not (len(ids) == media.size == K.shape[0]):
            raise InputError(
                f"Dimensiones inconsistentes: {len(ids)} modelos, media de largo {media.size}, "
                f"kernel de {K.shape[0]}x{K.shape[1]}"
            )
        if len(set(ids)) != len(ids):
            repetidos = sorted({m for m in ids if ids.count(m) > 1})
            raise InputError(f"Identificadores de modelo repetidos: {', '.join(repetidos[:5])}")
        if not np.all(np.isfinite(media)) or not np.all(np.isfinite(K)):
            raise InputError("La media y el kernel deben ser finitos")

        asimetria = float(np.max(np.abs(K - K.T)))
        if asimetria > TOL_SIMETRIA:
            raise InputError(f"El kernel no es simétrico (diferencia máxima {asimetria:.3e})")
        K = 0.5 * (K + K.T)

        diag = np.diag(K)
        if np.any(diag < 0):
            raise InputError("El kernel tiene varianzas negativas en la diagonal")
        if self.normalized and diag.max() > 1.0 + 1e-12:
            raise InputError(f"Prior normalizado con varianza máxima {diag.max():.6g} > 1")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise InputError(f"Factor de escala inválido: {self.scale}")

        media.setflags(write=False)
        K.setflags(write=False)
        object.__setattr__(self, "model_ids", ids)
        object.__setattr__(self, "mean", media)
        object.__setattr__(self, "kernel", K)

        # Semidefinida positiva, revisada por bloque independiente
        limite = -TOL_PSD * float(diag.max())
        for idx in self.components:
            if idx.size < 2:
                continue
            eig_min = float(np.linalg.eigvalsh(K[np.ix_(idx, idx)])[0])
            if eig_min < limite:
                raise InputError(
                    f"El kernel no es semidefinido positivo (autovalor mínimo {eig_min:.3e})"
                )

    @cached_property
    def index(self) -> Dict[str, int]:
        return {m: i for i, m in enumerate(self.model_ids)}

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.kernel)

    @cached_property
    def _particion(self) -> Tuple[np.ndarray, Tuple[np.ndarray, ...]]:
        patron = csr_matrix(self.kernel != 0.0)
        n_comp, etiquetas = connected_components(patron, directed=False)
        orden = np.argsort(etiquetas, kind="stable")
        cortes = np.searchsorted(etiquetas[orden], np.arange(1, n_comp))
        return etiquetas, tuple(np.split(orden, cortes))

    @property
    def component_labels(self) -> np.ndarray:
        """Etiqueta de componente conexa de cada modelo."""
        return self._particion[0]

    @property
    def components(self) -> Tuple[np.ndarray, ...]:
        """
        Componentes conexas del patrón de no-ceros de K.

        Modelos en componentes distintas son independientes, así que cada
        componente se condiciona por separado sin cambiar el resultado.
        """
        return self._particion[1]

    def positions(self, model_ids: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.index[m] for m in model_ids], dtype=int)
        except KeyError as e:
            raise InputError(f"Modelo desconocido para el prior: {e.args[0]}") from None


@dataclass(frozen=True)
class ObservationSet:
    """Modelos observados L(t) con su valor z(x). Cada modelo aparece una sola vez."""

    entries: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        entradas = tuple((str(m), float(z)) for m, z in self.entries)
        vistos = set()
        for m, z in entradas:
            if m in vistos:
                raise InputError(f"El modelo '{m}' aparece observado más de una vez")
            if not math.isfinite(z):
                raise InputError(f"Valor observado no finito para '{m}': {z}")
            vistos.add(m)
        object.__setattr__(self, "entries", entradas)

    @classmethod
    def from_mapping(cls, valores: Mapping[str, float]) -> "ObservationSet":
        return cls(tuple(valores.items()))

    @cached_property
    def as_dict(self) -> Dict[str, float]:
        return dict(self.entries)

    @property
    def model_ids(self) -> Tuple[str, ...]:
        return tuple(m for m, _ in self.entries)

    def add(self, model_id: str, value: float) -> "ObservationSet":
        """Retorna un nuevo conjunto con la observación agregada."""
        if model_id in self.as_dict:
            raise InputError(f"El modelo '{model_id}' ya fue observado")
        return ObservationSet(self.entries + ((model_id, value),))

    def __contains__(self, model_id: object) -> bool:
        return model_id in self.as_dict

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Tuple[str, float]]:
        return iter(self.entries)


@dataclass(frozen=True, eq=False)
class PosteriorState:
    """
    Posterior GP(μ_t, k_t) dado un conjunto de observaciones.

    Inmutable una vez construido; `factores` guarda, por componente, el
    factor de Cholesky inferior de K_t (con jitter).
    """

    prior: PriorSpec
    observed: ObservationSet
    means: np.ndarray
    variances: np.ndarray
    factores: Mapping[int, np.ndarray] = field(default_factory=dict)
    observados: Mapping[int, np.ndarray] = field(default_factory=dict)
    claves: Mapping[int, tuple] = field(default_factory=dict)

    def _pos(self, model_id: str) -> int:
        try:
            return self.prior.index[model_id]
        except KeyError:
            raise InputError(f"Modelo desconocido: '{model_id}'") from None

    def post_mean(self, model_id: str) -> float:
        return float(self.means[self._pos(model_id)])

    def post_var(self, model_id: str) -> float:
        return float(self.variances[self._pos(model_id)])

    def post_std(self, model_id: str) -> float:
        return math.sqrt(max(self.post_var(model_id), 0.0))

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.variances, 0.0))

    def post_cov(self, model_ids: Sequence[str]) -> np.ndarray:
        """
        Bloque de covarianza posterior k_t(x, x') para los modelos pedidos.

        Args:
            model_ids: Modelos (filas y columnas del bloque)

        Returns:
            Matriz simétrica de len(model_ids) x len(model_ids)
        """
        pos = self.prior.positions(model_ids)
        K = self.prior.kernel
        cov = np.array(K[np.ix_(pos, pos)], dtype=float)
        for c, L in self.factores.items():
            v = K[np.ix_(self.observados[c], pos)]
            if not np.any(v):
                continue
            A = linalg.solve_triangular(L, v, lower=True, check_finite=False)
            cov -= A.T @ A
        observados = np.array([m in self.observed for m in model_ids], dtype=bool)
        cov[observados, :] = 0.0
        cov[:, observados] = 0.0
        return 0.5 * (cov + cov.T)

    @property
    def cached_factorization(self) -> Tuple[Tuple[str, ...], np.ndarray]:
        """
        Factor de Cholesky de K_t completo, en bloques por componente.

        Returns:
            tuple: (orden de los modelos observados, factor triangular inferior)
        """
        if not self.factores:
            return (), np.zeros((0, 0))
        orden: List[str] = []
        bloques = []
        for c in sorted(self.factores):
            orden.extend(self.prior.model_ids[p] for p in self.observados[c])
            bloques.append(self.factores[c])
        return tuple(orden), linalg.block_diag(*bloques)


def _cholesky_con_jitter(A: np.ndarray) -> np.ndarray:
    """Cholesky inferior de A + jitter·max(diag)·I, escalando el jitter si falla."""
    n = A.shape[0]
    escala = float(np.max(np.diag(A))) if n else 0.0
    if escala <= 0.0:
        escala = 1.0
    identidad = np.eye(n)
    for jitter in JITTERS:
        try:
            return linalg.cholesky(A + jitter * escala * identidad, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
    raise NumericError(
        f"No se pudo factorizar la submatriz de {n}x{n} ni con jitter {JITTERS[-1]:g}",
        tamano=n,
    )


def condition(
    prior: PriorSpec,
    obs: Union[ObservationSet, Mapping[str, float]],
    previous: Optional[PosteriorState] = None,
) -> PosteriorState:
    """
    Condiciona el prior en observaciones sin ruido.

    μ_t(x) = v_t(x)ᵀ K_t⁻¹ (z_t − w_t) + μ(x)
    k_t(x,x) = k(x,x) − v_t(x)ᵀ K_t⁻¹ v_t(x)

    Args:
        prior: Prior sobre todos los modelos
        obs: Observaciones (modelo -> z(x))
        previous: Posterior anterior del mismo prior; las componentes cuyas
            observaciones no cambiaron se reutilizan tal cual

    Returns:
        PosteriorState con medias y varianzas posteriores de todos los modelos
    """
    if not isinstance(obs, ObservationSet):
        obs = ObservationSet.from_mapping(obs)
    if previous is not None and previous.prior is not prior:
        previous = None

    desconocidos = [m for m in obs.model_ids if m not in prior.index]
    if desconocidos:
        raise InputError(f"Modelos observados que no existen en el prior: {', '.join(desconocidos[:5])}")

    K = prior.kernel
    diag = prior.variance
    medias = np.array(prior.mean, dtype=float)
    varianzas = np.array(diag, dtype=float)
    if len(obs) == 0:
        return PosteriorState(prior, obs, medias, varianzas)

    etiquetas = prior.component_labels
    grupos: Dict[int, List[Tuple[int, float]]] = {}
    for m, z in obs.entries:
        p = prior.index[m]
        grupos.setdefault(int(etiquetas[p]), []).append((p, z))

    factores: Dict[int, np.ndarray] = {}
    observados: Dict[int, np.ndarray] = {}
    claves: Dict[int, tuple] = {}
    for c, pares in grupos.items():
        pares.sort()
        clave = tuple(pares)
        idx = prior.components[c]
        claves[c] = clave

        if previous is not None and previous.claves.get(c) == clave:
            medias[idx] = previous.means[idx]
            varianzas[idx] = previous.variances[idx]
            factores[c] = previous.factores[c]
            observados[c] = previous.observados[c]
            continue

        pos_obs = np.array([p for p, _ in pares], dtype=int)
        z = np.array([v for _, v in pares], dtype=float)
        L = _cholesky_con_jitter(K[np.ix_(pos_obs, pos_obs)])
        v = K[np.ix_(pos_obs, idx)]
        A = linalg.solve_triangular(L, v, lower=True, check_finite=False)
        alfa = linalg.cho_solve((L, True), z - prior.mean[pos_obs], check_finite=False)

        medias[idx] = prior.mean[idx] + v.T @ alfa
        varianzas[idx] = np.clip(diag[idx] - np.einsum("ij,ij->j", A, A), 0.0, diag[idx])
        # interpolación exacta en los observados
        medias[pos_obs] = z
        varianzas[pos_obs] = 0.0

        factores[c] = L
        observados[c] = pos_obs

    return PosteriorState(prior, obs, medias, varianzas, factores, observados, claves)


def sample_prior(prior: PriorSpec, seed: int) -> np.ndarray:
    """
    Una muestra conjunta z ~ N(mean, kernel), determinista dada la semilla.

    Args:
        prior: Prior a muestrear
        seed: Semilla del generador

    Returns:
        Vector con un valor por modelo, en el orden de prior.model_ids
    """
    rng = np.random.default_rng(seed)
    ruido = rng.standard_normal(len(prior.model_ids))
    muestra = np.array(prior.mean, dtype=float)
    diag = prior.variance
    for idx in prior.components:
        activos = idx[diag[idx] > 0.0]
        if activos.size == 0:
            continue
        L = _cholesky_con_jitter(prior.kernel[np.ix_(activos, activos)])
        muestra[activos] += L @ ruido[activos]
    return muestra


def tau(y: Numero) -> Numero:
    """
    τ(y) = y·Φ(y) + φ(y).

    Para y < 0 se evalúa como exp(−y²/2)·(y·erfcx(−y/√2)/2 + 1/√(2π)),
    que evita restar dos cantidades casi iguales.
    """
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if not np.all(np.isfinite(y_arr)):
        raise InputError("tau requiere argumentos finitos")
    resultado = np.empty_like(y_arr)

    positivos = y_arr >= 0.0
    yp = y_arr[positivos]
    resultado[positivos] = yp * ndtr(yp) + _INV_RAIZ_2PI * np.exp(-0.5 * yp * yp)

    yn = y_arr[~positivos]
    resultado[~positivos] = np.exp(-0.5 * yn * yn) * (yn * 0.5 * erfcx(-yn / _RAIZ_2) + _INV_RAIZ_2PI)

    resultado = np.maximum(resultado, 0.0)
    if np.ndim(y) == 0:
        return float(resultado[0])
    return resultado.reshape(np.shape(y))


def expected_improvement(mu: float, sigma: float, incumbent: float) -> float:
    """
    E[max{X − a, 0}] con X ~ N(mu, sigma²) y a = incumbent.

    Args:
        mu: Media posterior
        sigma: Desviación estándar posterior (>= 0)
        incumbent: Mejor valor observado del usuario

    Returns:
        sigma·τ((mu − incumbent)/sigma), o max{mu − incumbent, 0} si sigma ≈ 0
    """
    if not math.isfinite(sigma) or sigma < 0:
        raise InputError(f"sigma debe ser >= 0, se recibió {sigma}")
    mejora = max(mu - incumbent, 0.0)
    if sigma < SIGMA_MINIMO:
        return mejora
    return max(sigma * tau((mu - incumbent) / sigma), mejora)


def expected_improvement_array(mu: np.ndarray, sigma: np.ndarray, incumbent: np.ndarray) -> np.ndarray:
    """Versión vectorizada de expected_improvement (mismas reglas, elemento a elemento)."""
    mu, sigma, incumbent = np.broadcast_arrays(
        np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float), np.asarray(incumbent, dtype=float)
    )
    if np.any(sigma < 0):
        raise InputError("sigma debe ser >= 0")
    mejora = np.maximum(mu - incumbent, 0.0)
    degenerado = sigma < SIGMA_MINIMO
    sigma_segura = np.where(degenerado, 1.0, sigma)
    ei = sigma_segura * tau((mu - incumbent) / sigma_segura)
    return np.where(degenerado, mejora, np.maximum(ei, mejora))
