"""
Función de adquisición multi-usuario.

- EI_{i,t}(x): mejora esperada del mejor valor del usuario i si se observa x.
- EI_t(x): suma de EI_{i,t}(x) sobre los usuarios cuyo menú contiene x.
- EIrate_t(x) = EI_t(x) / c(x), y la regla argmax sobre los no seleccionados.
"""
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.errors import ContractError, InputError
from core.gp_core import ObservationSet, PosteriorState, PriorSpec, expected_improvement, expected_improvement_array

# Incumbente de un usuario sin observaciones (rendimientos no negativos)
INCUMBENT_FLOOR = 0.0


@dataclass(frozen=True, eq=False)
class TenantCatalog:
    """
    Usuarios, sus menús de modelos (pueden solaparse) y el costo c(x) de cada modelo.

    Args:
        menus: Un menú L_i por usuario
        costs: Costo (tiempo) de entrenar cada modelo, > 0
        user_ids: Etiquetas de usuario (por defecto u0, u1, ...)
    """

    menus: Tuple[Tuple[str, ...], ...]
    costs: Mapping[str, float]
    user_ids: Tuple[str, ...] = ()
    _cache_prior: Dict[int, Tuple[PriorSpec, np.ndarray]] = field(
        default_factory=dict, init=False, repr=False
    )

    def __post_init__(self) -> None:
        menus = tuple(tuple(str(m) for m in menu) for menu in self.menus)
        if not menus:
            raise InputError("El catálogo necesita al menos un usuario")
        for i, menu in enumerate(menus):
            if not menu:
                raise InputError(f"El menú del usuario {i} está vacío")
            if len(set(menu)) != len(menu):
                raise InputError(f"El menú del usuario {i} repite modelos")

        usuarios = tuple(str(u) for u in self.user_ids) or tuple(f"u{i}" for i in range(len(menus)))
        if len(usuarios) != len(menus):
            raise InputError(f"Hay {len(usuarios)} etiquetas de usuario para {len(menus)} menús")
        if len(set(usuarios)) != len(usuarios):
            raise InputError("Etiquetas de usuario repetidas")

        costos = {str(m): float(c) for m, c in self.costs.items()}
        todos = {m for menu in menus for m in menu}
        sin_costo = sorted(todos - costos.keys())
        if sin_costo:
            raise InputError(f"Modelos sin costo: {', '.join(sin_costo[:5])}")
        sobrantes = sorted(costos.keys() - todos)
        if sobrantes:
            raise InputError(f"Costos para modelos que no están en ningún menú: {', '.join(sobrantes[:5])}")
        for m, c in costos.items():
            if not math.isfinite(c) or c <= 0:
                raise InputError(f"El costo de '{m}' debe ser positivo y finito, se recibió {c}")

        object.__setattr__(self, "menus", menus)
        object.__setattr__(self, "user_ids", usuarios)
        object.__setattr__(self, "costs", MappingProxyType(costos))

    @property
    def n_users(self) -> int:
        return len(self.menus)

    @cached_property
    def all_models(self) -> Tuple[str, ...]:
        """L = unión de los menús, en orden de primera aparición."""
        vistos: Dict[str, None] = {}
        for menu in self.menus:
            for m in menu:
                vistos.setdefault(m, None)
        return tuple(vistos)

    @cached_property
    def model_position(self) -> Dict[str, int]:
        return {m: i for i, m in enumerate(self.all_models)}

    @cached_property
    def users_of(self) -> Dict[str, Tuple[int, ...]]:
        usuarios: Dict[str, list] = {m: [] for m in self.all_models}
        for i, menu in enumerate(self.menus):
            for m in menu:
                usuarios[m].append(i)
        return {m: tuple(us) for m, us in usuarios.items()}

    @cached_property
    def menu_sets(self) -> Tuple[frozenset, ...]:
        return tuple(frozenset(menu) for menu in self.menus)

    @cached_property
    def cost_array(self) -> np.ndarray:
        return np.array([self.costs[m] for m in self.all_models], dtype=float)

    @cached_property
    def _pertenencia(self) -> Tuple[np.ndarray, np.ndarray]:
        modelos, usuarios = [], []
        for i, menu in enumerate(self.menus):
            for m in menu:
                modelos.append(self.model_position[m])
                usuarios.append(i)
        return np.array(modelos, dtype=int), np.array(usuarios, dtype=int)

    def cost(self, model_id: str) -> float:
        try:
            return self.costs[model_id]
        except KeyError:
            raise InputError(f"Modelo desconocido en el catálogo: '{model_id}'") from None

    def prior_positions(self, prior: PriorSpec) -> np.ndarray:
        """Posición en el prior de cada modelo de all_models (memorizado por prior)."""
        guardado = self._cache_prior.get(id(prior))
        if guardado is not None and guardado[0] is prior:
            return guardado[1]
        posiciones = prior.positions(self.all_models)
        self._cache_prior[id(prior)] = (prior, posiciones)
        return posiciones


@dataclass
class IncumbentBoard:
    """
    Mejor valor observado z(x_i*(t)) y su modelo, por usuario.

    None mientras el usuario no tenga observaciones; el valor nunca decrece.
    """

    best_value: Dict[int, Optional[float]]
    best_model: Dict[int, Optional[str]]

    @classmethod
    def empty(cls, catalog: TenantCatalog) -> "IncumbentBoard":
        return cls({i: None for i in range(catalog.n_users)}, {i: None for i in range(catalog.n_users)})

    @classmethod
    def from_observations(cls, catalog: TenantCatalog, obs: ObservationSet) -> "IncumbentBoard":
        tablero = cls.empty(catalog)
        for m, z in obs:
            tablero.update(catalog, m, z)
        return tablero

    def update(self, catalog: TenantCatalog, model_id: str, value: float) -> None:
        """Registra la observación de model_id en todos los usuarios que lo tienen."""
        for u in catalog.users_of.get(model_id, ()):
            actual = self.best_value[u]
            if actual is None or value > actual:
                self.best_value[u] = value
                self.best_model[u] = model_id

    def incumbent(self, user: int) -> float:
        valor = self.best_value[user]
        return INCUMBENT_FLOOR if valor is None else valor

    def incumbents(self) -> np.ndarray:
        return np.array([self.incumbent(u) for u in range(len(self.best_value))], dtype=float)


def _exigir_no_observado(post: PosteriorState, model: str) -> None:
    if model in post.observed:
        raise ContractError(f"El modelo '{model}' ya fue observado; su EI no está definido")


def ei_for_user(post: PosteriorState, incumbent_i: float, model: str) -> float:
    """EI_{i,t}(x) = E[max{z(x) − z(x_i*(t)), 0}] bajo la posterior."""
    _exigir_no_observado(post, model)
    return expected_improvement(post.post_mean(model), post.post_std(model), incumbent_i)


def ei_total(post: PosteriorState, board: IncumbentBoard, catalog: TenantCatalog, model: str) -> float:
    """EI_t(x) = Σ_i 1(x ∈ L_i)·EI_{i,t}(x)."""
    _exigir_no_observado(post, model)
    try:
        usuarios = catalog.users_of[model]
    except KeyError:
        raise InputError(f"Modelo desconocido en el catálogo: '{model}'") from None
    return math.fsum(ei_for_user(post, board.incumbent(u), model) for u in usuarios)


def ei_total_vector(post: PosteriorState, board: IncumbentBoard, catalog: TenantCatalog) -> np.ndarray:
    """
    EI_t(x) para todos los modelos del catálogo a la vez.

    Returns:
        Arreglo alineado con catalog.all_models (los observados quedan con
        EI de una posterior degenerada y deben excluirse por quien llama)
    """
    pos = catalog.prior_positions(post.prior)
    mu = post.means[pos]
    sd = post.stds[pos]
    modelos, usuarios = catalog._pertenencia
    ei_pares = expected_improvement_array(mu[modelos], sd[modelos], board.incumbents()[usuarios])
    return np.bincount(modelos, weights=ei_pares, minlength=len(catalog.all_models))


def eirate(ei_value: float, cost: float) -> float:
    """EIrate = EI / c(x)."""
    if not math.isfinite(cost) or cost <= 0:
        raise InputError(f"El costo debe ser positivo, se recibió {cost}")
    if ei_value < 0:
        raise InputError(f"El EI no puede ser negativo, se recibió {ei_value}")
    return ei_value / cost


def argmax_con_desempate(candidatos: Sequence[str], puntajes: np.ndarray, catalog: TenantCatalog) -> str:
    """Máximo puntaje; empates por menor costo y luego menor identificador."""
    mejor = float(np.max(puntajes))
    empatados = [m for m, p in zip(candidatos, puntajes) if p == mejor]
    return min(empatados, key=lambda m: (catalog.costs[m], m))


def select_next(
    post: PosteriorState,
    board: IncumbentBoard,
    catalog: TenantCatalog,
    unselected: Iterable[str],
) -> Optional[str]:
    """
    Próximo modelo a correr: argmax de EIrate_t sobre los no seleccionados.

    Args:
        post: Posterior actual
        board: Incumbentes por usuario
        catalog: Catálogo de usuarios y costos
        unselected: L menos (observados ∪ en ejecución)

    Returns:
        Identificador del modelo elegido, o None si no quedan candidatos
    """
    candidatos = list(unselected)
    if not candidatos:
        return None
    faltantes = [m for m in candidatos if m not in catalog.model_position]
    if faltantes:
        raise InputError(f"Modelos desconocidos en el catálogo: {', '.join(faltantes[:5])}")
    for m in candidatos:
        _exigir_no_observado(post, m)

    idx = np.array([catalog.model_position[m] for m in candidatos], dtype=int)
    tasas = ei_total_vector(post, board, catalog)[idx] / catalog.cost_array[idx]
    return argmax_con_desempate(candidatos, tasas, catalog)
