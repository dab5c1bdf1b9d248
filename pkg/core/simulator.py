"""
Simulador de eventos discretos en tiempo continuo.

M dispositivos atómicos ejecutan los modelos que elige el planificador; cada
modelo x tarda exactamente c(x) y al terminar revela su valor real z(x).
"""
import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import pandas as pd

from core.acquisition import TenantCatalog
from core.errors import InputError
from core.gp_core import PriorSpec
from core.scheduler import PolicyConfig, new_state, next_assignment, record_completion, start_assignment

COLUMNAS_TRAZA = ["model", "device", "start", "finish", "value"]
FORMATO_DECIMAL = "%.17g"


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Usuarios y menús (catalog), verdad oculta z(x) y prior del GP.

    Args:
        catalog: Catálogo de usuarios, menús y costos
        truth: Valor real de cada modelo (no negativo)
        prior: Prior sobre (al menos) todos los modelos del catálogo
        label: Nombre descriptivo del escenario
    """

    catalog: TenantCatalog
    truth: Mapping[str, float]
    prior: PriorSpec
    label: str = ""

    def __post_init__(self) -> None:
        verdad = {str(m): float(z) for m, z in self.truth.items()}
        sin_verdad = [m for m in self.catalog.all_models if m not in verdad]
        if sin_verdad:
            raise InputError(f"Falta el valor real de: {', '.join(sin_verdad[:5])}")
        negativos = [m for m in self.catalog.all_models if not (verdad[m] >= 0.0 and math.isfinite(verdad[m]))]
        if negativos:
            raise InputError(f"Valores reales negativos o no finitos en: {', '.join(negativos[:5])}")
        fuera_del_prior = [m for m in self.catalog.all_models if m not in self.prior.index]
        if fuera_del_prior:
            raise InputError(f"Modelos del catálogo ausentes del prior: {', '.join(fuera_del_prior[:5])}")
        object.__setattr__(self, "truth", verdad)

    def optimum(self, user: int) -> Tuple[str, float]:
        """Mejor modelo x_i* del usuario y su valor."""
        mejor = max(self.catalog.menus[user], key=lambda m: (self.truth[m], m))
        return mejor, self.truth[mejor]


@dataclass(frozen=True)
class TraceEvent:
    model: str
    device: int
    start: float
    finish: float
    value: float


@dataclass
class Trace:
    """Registro completo de inicios y términos de una simulación."""

    events: List[TraceEvent]
    horizon: float
    m_devices: int
    policy: str = ""
    seed: int = 0

    def observed(self, t: Optional[float] = None) -> List[TraceEvent]:
        """Eventos cuyo resultado se conoce en t (finish <= t); por defecto t = horizonte."""
        limite = self.horizon if t is None else t
        return [e for e in self.events if e.finish <= limite]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(e.model, e.device, e.start, e.finish, e.value) for e in self.events],
            columns=COLUMNAS_TRAZA,
        )

    def to_csv(self, ruta: Union[str, Path]) -> Path:
        """Escribe la traza con encabezado model,device,start,finish,value (17 dígitos)."""
        ruta = Path(ruta)
        self.to_frame().to_csv(ruta, index=False, float_format=FORMATO_DECIMAL, lineterminator="\n")
        return ruta


def run_simulation(
    scenario: Scenario,
    policy: PolicyConfig,
    m_devices: int,
    horizon: float,
    seed: int = 0,
) -> Trace:
    """
    Ejecuta el bucle de eventos hasta el horizonte o hasta observar todos los modelos.

    Args:
        scenario: Escenario con catálogo, verdad y prior
        policy: Política, arranque y regla intra-usuario
        m_devices: Número de dispositivos M (>= 1)
        horizon: Horizonte T (> 0); no se asigna nada en t >= T
        seed: Semilla del RNG de la política

    Returns:
        Trace con todos los modelos iniciados (incluye los que terminan después de T)
    """
    if not isinstance(m_devices, int) or m_devices < 1:
        raise InputError(f"Se necesita al menos un dispositivo, se recibió {m_devices}")
    if not (horizon > 0 and math.isfinite(horizon)):
        raise InputError(f"El horizonte debe ser positivo y finito, se recibió {horizon}")

    catalog, prior = scenario.catalog, scenario.prior
    state = new_state(catalog, prior, policy, seed)
    eventos: List[TraceEvent] = []
    # (término, dispositivo, modelo)
    cola: List[Tuple[float, int, str]] = []
    ocupados: Dict[int, str] = {}

    def asignar(t: float) -> None:
        for d in range(m_devices):
            if d in ocupados:
                continue
            modelo = next_assignment(state, catalog, prior, t)
            if modelo is None:
                continue
            start_assignment(state, modelo, d)
            termino = t + catalog.costs[modelo]
            ocupados[d] = modelo
            heapq.heappush(cola, (termino, d, modelo))
            eventos.append(TraceEvent(modelo, d, t, termino, scenario.truth[modelo]))

    asignar(0.0)
    while cola and cola[0][0] < horizon:
        t = cola[0][0]
        # todos los términos en t se registran antes de cualquier asignación en t
        while cola and cola[0][0] == t:
            _, d, modelo = heapq.heappop(cola)
            record_completion(state, modelo, scenario.truth[modelo], d, catalog)
            del ocupados[d]
        if len(state.observed) == len(catalog.all_models):
            break
        asignar(t)

    eventos.sort(key=lambda e: (e.start, e.device))
    return Trace(eventos, float(horizon), m_devices, policy.policy.value, seed)
