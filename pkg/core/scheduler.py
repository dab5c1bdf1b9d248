"""
Políticas de asignación de modelos a dispositivos libres.

- MMGPEI: argmax global de EIrate (suma de EI sobre usuarios / costo).
- RoundRobin: recorre los usuarios en orden cíclico, saltando los agotados.
- Random: elige un usuario no agotado al azar con el RNG de la política.

Las tres comparten el mismo GP global; sólo cambia la regla de elección.
Los modelos de arranque (warm start) se entregan primero, en cola FIFO.
"""
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, List, Optional, Set

import numpy as np

from core.acquisition import IncumbentBoard, TenantCatalog, argmax_con_desempate, select_next
from core.errors import InputError, InvariantError
from core.gp_core import ObservationSet, PosteriorState, PriorSpec, condition, expected_improvement_array


class Policy(str, Enum):
    MMGPEI = "MMGPEI"
    ROUND_ROBIN = "RoundRobin"
    RANDOM = "Random"


class WarmStartPolicy(str, Enum):
    PRIOR_MEAN_ARGMAX = "PriorMeanArgmax"
    TWO_FASTEST_PER_USER = "TwoFastestPerUser"
    NONE = "None"


class WithinUserRule(str, Enum):
    """Regla de las políticas base para elegir el modelo dentro del usuario servido."""

    EI = "EI"
    EIRATE = "EIrate"


def _enum(tipo, valor, nombre: str):
    try:
        return tipo(valor)
    except ValueError:
        opciones = ", ".join(e.value for e in tipo)
        raise InputError(f"Valor inválido para {nombre}: '{valor}' (opciones: {opciones})") from None


@dataclass(frozen=True)
class PolicyConfig:
    policy: Policy = Policy.MMGPEI
    warm_start: WarmStartPolicy = WarmStartPolicy.NONE
    within_user_rule: WithinUserRule = WithinUserRule.EI

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy", _enum(Policy, self.policy, "policy"))
        object.__setattr__(self, "warm_start", _enum(WarmStartPolicy, self.warm_start, "warm_start"))
        object.__setattr__(
            self, "within_user_rule", _enum(WithinUserRule, self.within_user_rule, "within_user_rule")
        )


@dataclass
class SchedulerState:
    """
    Estado mutable del planificador, de un solo dueño (el bucle del simulador).

    running asocia cada modelo en ejecución con su dispositivo.
    """

    policy: Policy
    rng_seed: int
    within_user_rule: WithinUserRule = WithinUserRule.EI
    rr_cursor: int = 0
    pending_warmup: Deque[str] = field(default_factory=deque)
    running: Dict[str, int] = field(default_factory=dict)
    observed: ObservationSet = field(default_factory=ObservationSet)
    board: Optional[IncumbentBoard] = None
    posterior: Optional[PosteriorState] = field(default=None, repr=False)
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.policy = _enum(Policy, self.policy, "policy")
        self.within_user_rule = _enum(WithinUserRule, self.within_user_rule, "within_user_rule")
        self.rng = np.random.default_rng(self.rng_seed)


def init_warmup(catalog: TenantCatalog, prior: PriorSpec, policy: WarmStartPolicy) -> List[str]:
    """
    Cola de modelos de arranque.

    Args:
        catalog: Usuarios, menús y costos
        prior: Prior (se usa su media para PriorMeanArgmax)
        policy: Tipo de arranque

    Returns:
        Modelos sin repetir, ordenados por costo ascendente y luego identificador
    """
    policy = _enum(WarmStartPolicy, policy, "warm_start")
    if policy == WarmStartPolicy.NONE:
        return []

    media = {m: float(prior.mean[p]) for m, p in zip(catalog.all_models, catalog.prior_positions(prior))}
    elegidos: Dict[str, None] = {}
    for menu in catalog.menus:
        if policy == WarmStartPolicy.PRIOR_MEAN_ARGMAX:
            tomados = sorted(menu, key=lambda m: (-media[m], catalog.costs[m], m))[:1]
        else:
            tomados = sorted(menu, key=lambda m: (catalog.costs[m], m))[:2]
        for m in tomados:
            elegidos.setdefault(m, None)
    return sorted(elegidos, key=lambda m: (catalog.costs[m], m))


def new_state(catalog: TenantCatalog, prior: PriorSpec, config: PolicyConfig, seed: int) -> SchedulerState:
    """Estado inicial con la cola de arranque ya armada."""
    return SchedulerState(
        policy=config.policy,
        rng_seed=seed,
        within_user_rule=config.within_user_rule,
        pending_warmup=deque(init_warmup(catalog, prior, config.warm_start)),
        board=IncumbentBoard.empty(catalog),
    )


def _verificar(state: SchedulerState) -> None:
    for m in state.running:
        if m in state.observed:
            raise InvariantError(f"El modelo '{m}' figura en ejecución y observado a la vez")


def _posterior(state: SchedulerState, prior: PriorSpec) -> PosteriorState:
    if state.posterior is None or len(state.posterior.observed) != len(state.observed):
        state.posterior = condition(prior, state.observed, previous=state.posterior)
    return state.posterior


def _mejor_del_usuario(
    state: SchedulerState,
    post: PosteriorState,
    catalog: TenantCatalog,
    usuario: int,
    libres: Set[str],
) -> str:
    candidatos = [m for m in catalog.menus[usuario] if m in libres]
    pos = post.prior.positions(candidatos)
    puntajes = expected_improvement_array(post.means[pos], post.stds[pos], state.board.incumbent(usuario))
    if state.within_user_rule == WithinUserRule.EIRATE:
        puntajes = puntajes / np.array([catalog.costs[m] for m in candidatos])
    return argmax_con_desempate(candidatos, puntajes, catalog)


def next_assignment(
    state: SchedulerState,
    catalog: TenantCatalog,
    prior: PriorSpec,
    now: float,
) -> Optional[str]:
    """
    Modelo para un dispositivo que acaba de quedar libre.

    Args:
        state: Estado del planificador
        catalog: Usuarios, menús y costos
        prior: Prior del GP global
        now: Tiempo actual de la simulación

    Returns:
        Modelo a ejecutar, o None si ya no quedan modelos sin seleccionar
    """
    _verificar(state)
    if state.board is None:
        state.board = IncumbentBoard.from_observations(catalog, state.observed)

    while state.pending_warmup:
        m = state.pending_warmup.popleft()
        if m not in state.running and m not in state.observed:
            return m

    libres = [m for m in catalog.all_models if m not in state.observed and m not in state.running]
    if not libres:
        return None

    post = _posterior(state, prior)
    if state.policy == Policy.MMGPEI:
        return select_next(post, state.board, catalog, libres)

    con_pendientes = {u for m in libres for u in catalog.users_of[m]}
    if state.policy == Policy.ROUND_ROBIN:
        n = catalog.n_users
        for k in range(n):
            u = (state.rr_cursor + k) % n
            if u in con_pendientes:
                state.rr_cursor = (u + 1) % n
                break
    else:
        activos = sorted(con_pendientes)
        u = activos[int(state.rng.integers(len(activos)))]

    return _mejor_del_usuario(state, post, catalog, u, set(libres))


def start_assignment(state: SchedulerState, model_id: str, device_id: int) -> SchedulerState:
    """Registra que model_id comenzó a ejecutarse en device_id."""
    if model_id in state.running or model_id in state.observed:
        raise InvariantError(f"El modelo '{model_id}' ya fue asignado")
    if device_id in state.running.values():
        raise InvariantError(f"El dispositivo {device_id} ya está ocupado")
    state.running[model_id] = device_id
    return state


def record_completion(
    state: SchedulerState,
    model_id: str,
    value: float,
    device_id: int,
    catalog: Optional[TenantCatalog] = None,
) -> SchedulerState:
    """
    Mueve el modelo de en-ejecución a observado y libera el dispositivo.

    Args:
        state: Estado del planificador
        model_id: Modelo que terminó
        value: Valor observado z(x)
        device_id: Dispositivo donde corría
        catalog: Catálogo para actualizar los incumbentes (si el estado tiene tablero)

    Returns:
        El mismo estado, actualizado
    """
    if state.running.get(model_id) != device_id or model_id not in state.running:
        raise InvariantError(f"Término de un modelo que no está en ejecución: '{model_id}' en dispositivo {device_id}")
    del state.running[model_id]
    state.observed = state.observed.add(model_id, value)
    if state.board is not None and catalog is not None:
        state.board.update(catalog, model_id, value)
    elif state.board is not None:
        # sin catálogo el tablero se reconstruye en la próxima asignación
        state.board = None
    return state
