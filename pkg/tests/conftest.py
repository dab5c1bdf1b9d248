# Asegurar directorio raíz en path (por si pytest se ejecuta desde otra ruta)
import sys
from pathlib import Path
_raiz = str(Path(__file__).resolve().parent.parent)
if _raiz not in sys.path:
    sys.path.insert(0, _raiz)

import numpy as np
import pytest

from core.acquisition import TenantCatalog
from core.gp_core import PriorSpec
from core.simulator import Scenario


def kernel_aleatorio(rng: np.random.Generator, n: int, minimo: float = 0.1) -> np.ndarray:
    """Matriz SPD bien condicionada de n x n."""
    A = rng.standard_normal((n, n))
    K = A @ A.T / n + minimo * np.eye(n)
    return 0.5 * (K + K.T)


def escenario_simple(menus, costs, truth, kernel=None, mean=None, user_ids=()) -> Scenario:
    """Escenario con prior sobre los modelos en orden de primera aparición."""
    catalogo = TenantCatalog(tuple(tuple(m) for m in menus), costs, tuple(user_ids))
    ids = catalogo.all_models
    n = len(ids)
    K = np.eye(n) if kernel is None else np.asarray(kernel, dtype=float)
    mu = np.zeros(n) if mean is None else np.asarray(mean, dtype=float)
    return Scenario(catalogo, truth, PriorSpec(ids, mu, K))


def escenario_aleatorio(rng: np.random.Generator, n_users: int, n_models: int, compartir: bool = True) -> Scenario:
    """Usuarios con menús aleatorios (posiblemente solapados) sobre un prior SPD."""
    ids = [f"m{j:02d}" for j in range(n_models)]
    menus = []
    for _ in range(n_users):
        k = int(rng.integers(1, n_models + 1))
        menus.append(sorted(rng.choice(ids, size=k, replace=False)))
    usados = sorted({m for menu in menus for m in menu})
    if not compartir:
        menus = [[f"{i}:{m}" for m in menu] for i, menu in enumerate(menus)]
        usados = [m for menu in menus for m in menu]
    costos = {m: float(rng.uniform(0.5, 3.0)) for m in usados}
    verdad = {m: float(rng.uniform(0.0, 1.0)) for m in usados}
    catalogo = TenantCatalog(tuple(tuple(m) for m in menus), costos)
    K = kernel_aleatorio(rng, len(catalogo.all_models))
    prior = PriorSpec(catalogo.all_models, np.full(len(catalogo.all_models), 0.5), K)
    return Scenario(catalogo, verdad, prior)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def escenario_dos_usuarios() -> Scenario:
    """Dos usuarios que comparten el modelo C."""
    return escenario_simple(
        menus=[["A", "C"], ["B", "C"]],
        costs={"A": 1.0, "B": 2.0, "C": 0.5},
        truth={"A": 0.4, "B": 0.8, "C": 0.6},
        kernel=[[1.0, 0.3, 0.2], [0.3, 1.0, 0.0], [0.2, 0.0, 1.0]],
    )
