import numpy as np
import pytest

from conftest import escenario_aleatorio
from core.acquisition import (
    INCUMBENT_FLOOR,
    IncumbentBoard,
    TenantCatalog,
    ei_for_user,
    ei_total,
    ei_total_vector,
    eirate,
    select_next,
)
from core.errors import ContractError, InputError
from core.gp_core import ObservationSet, PosteriorState, PriorSpec, condition, expected_improvement


def _posterior_degenerada(medias):
    """Posterior con σ = 0 y las medias dadas (sin observaciones)."""
    ids = tuple(medias)
    prior = PriorSpec(ids, np.zeros(len(ids)), np.zeros((len(ids), len(ids))))
    return PosteriorState(prior, ObservationSet(), np.array(list(medias.values()), dtype=float), np.zeros(len(ids)))


class TestTenantCatalog:
    def test_union_en_orden_de_aparicion(self):
        cat = TenantCatalog((("b", "a"), ("c", "a")), {"a": 1, "b": 2, "c": 3})
        assert cat.all_models == ("b", "a", "c")
        assert cat.users_of["a"] == (0, 1)
        assert cat.user_ids == ("u0", "u1")

    @pytest.mark.parametrize(
        "menus, costs",
        [
            ((), {}),
            (((),), {}),
            ((("a", "a"),), {"a": 1.0}),
            ((("a",),), {}),
            ((("a",),), {"a": 0.0}),
            ((("a",),), {"a": 1.0, "b": 1.0}),
        ],
    )
    def test_catalogos_invalidos(self, menus, costs):
        with pytest.raises(InputError):
            TenantCatalog(menus, costs)


class TestIncumbentBoard:
    def test_vacio_usa_piso(self, escenario_dos_usuarios):
        tablero = IncumbentBoard.empty(escenario_dos_usuarios.catalog)
        assert tablero.incumbent(0) == INCUMBENT_FLOOR
        assert tablero.best_model[1] is None

    def test_modelo_compartido_actualiza_ambos(self, escenario_dos_usuarios):
        cat = escenario_dos_usuarios.catalog
        tablero = IncumbentBoard.from_observations(cat, ObservationSet((("A", 0.4), ("C", 0.6))))
        assert tablero.best_value == {0: 0.6, 1: 0.6}
        assert tablero.best_model == {0: "C", 1: "C"}

    def test_no_decrece(self, escenario_dos_usuarios):
        cat = escenario_dos_usuarios.catalog
        tablero = IncumbentBoard.empty(cat)
        tablero.update(cat, "C", 0.6)
        tablero.update(cat, "A", 0.4)
        assert tablero.incumbent(0) == 0.6


class TestEI:
    def test_ei_para_usuario_degenerado(self):
        post = _posterior_degenerada({"x": 0.9})
        assert ei_for_user(post, 0.8, "x") == pytest.approx(0.1)

    def test_ei_para_usuario_en_el_incumbente(self):
        prior = PriorSpec(("x",), np.array([0.5]), np.eye(1))
        post = condition(prior, {})
        assert ei_for_user(post, 0.5, "x") == pytest.approx(0.3989422804, abs=1e-10)

    def test_ei_para_usuario_coincide_con_primitiva(self):
        prior = PriorSpec(("x",), np.array([0.5]), np.array([[0.04]]))
        post = condition(prior, {})
        assert ei_for_user(post, 0.6, "x") == pytest.approx(expected_improvement(0.5, 0.2, 0.6), rel=1e-12)

    def test_modelo_observado(self):
        prior = PriorSpec(("x", "y"), np.zeros(2), np.eye(2))
        post = condition(prior, {"x": 0.3})
        with pytest.raises(ContractError):
            ei_for_user(post, 0.0, "x")
        board = IncumbentBoard({0: 0.3}, {0: "x"})
        cat = TenantCatalog((("x", "y"),), {"x": 1.0, "y": 1.0})
        with pytest.raises(ContractError):
            ei_total(post, board, cat, "x")

    def test_ei_total_suma_sobre_usuarios(self):
        cat = TenantCatalog((("m",), ("m", "o")), {"m": 1.0, "o": 1.0})
        post = _posterior_degenerada({"m": 0.7, "o": 0.1})
        board = IncumbentBoard({0: 0.2, 1: 0.5}, {0: None, 1: None})
        assert ei_total(post, board, cat, "m") == pytest.approx(0.5 + 0.2)

    def test_ei_total_un_solo_menu(self, escenario_dos_usuarios):
        cat = escenario_dos_usuarios.catalog
        post = condition(escenario_dos_usuarios.prior, {})
        board = IncumbentBoard({0: 0.3, 1: 0.1}, {0: None, 1: None})
        assert ei_total(post, board, cat, "A") == pytest.approx(ei_for_user(post, 0.3, "A"))

    def test_ei_total_cero_bajo_incumbente(self):
        cat = TenantCatalog((("m",), ("m",)), {"m": 1.0})
        post = _posterior_degenerada({"m": 0.3})
        board = IncumbentBoard({0: 0.5, 1: 0.3}, {0: None, 1: None})
        assert ei_total(post, board, cat, "m") == 0.0

    def test_vector_coincide_con_escalar(self, rng):
        esc = escenario_aleatorio(rng, 5, 12)
        cat = esc.catalog
        obs = {m: esc.truth[m] for m in cat.all_models[:3]}
        post = condition(esc.prior, obs)
        board = IncumbentBoard.from_observations(cat, post.observed)
        vector = ei_total_vector(post, board, cat)
        for i, m in enumerate(cat.all_models):
            if m not in obs:
                assert vector[i] == pytest.approx(ei_total(post, board, cat, m), rel=1e-10, abs=1e-14)


class TestEIrate:
    @pytest.mark.parametrize("ei, costo, esperado", [(0.2, 10, 0.02), (0.05, 1, 0.05), (0.0, 3.0, 0.0)])
    def test_cociente(self, ei, costo, esperado):
        assert eirate(ei, costo) == pytest.approx(esperado)

    @pytest.mark.parametrize("costo", [0.0, -1.0])
    def test_costo_no_positivo(self, costo):
        with pytest.raises(InputError):
            eirate(0.1, costo)


class TestSelectNext:
    def test_prefiere_mayor_ei_por_unidad_de_costo(self):
        cat = TenantCatalog((("A", "B"),), {"A": 10.0, "B": 1.0})
        post = _posterior_degenerada({"A": 0.2, "B": 0.05})
        board = IncumbentBoard.empty(cat)
        assert select_next(post, board, cat, ["A", "B"]) == "B"

    def test_sin_candidatos(self):
        cat = TenantCatalog((("A",),), {"A": 1.0})
        assert select_next(_posterior_degenerada({"A": 0.1}), IncumbentBoard.empty(cat), cat, []) is None

    def test_desempate_por_identificador(self):
        cat = TenantCatalog((("B", "A"),), {"A": 1.0, "B": 1.0})
        post = _posterior_degenerada({"B": 0.4, "A": 0.4})
        assert select_next(post, IncumbentBoard.empty(cat), cat, ["B", "A"]) == "A"

    def test_desempate_por_costo(self):
        cat = TenantCatalog((("A", "B"),), {"A": 2.0, "B": 1.0})
        post = _posterior_degenerada({"A": 0.0, "B": 0.0})
        assert select_next(post, IncumbentBoard.empty(cat), cat, ["A", "B"]) == "B"

    def test_invariante_a_permutaciones_y_escala_de_costos(self, rng):
        esc = escenario_aleatorio(rng, 4, 10)
        cat = esc.catalog
        post = condition(esc.prior, {cat.all_models[0]: esc.truth[cat.all_models[0]]})
        board = IncumbentBoard.from_observations(cat, post.observed)
        libres = list(cat.all_models[1:])
        elegido = select_next(post, board, cat, libres)
        assert select_next(post, board, cat, libres[::-1]) == elegido

        escalado = TenantCatalog(cat.menus, {m: 3.5 * c for m, c in cat.costs.items()})
        assert select_next(post, board, escalado, libres) == elegido

    def test_modelo_desconocido(self):
        cat = TenantCatalog((("A",),), {"A": 1.0})
        with pytest.raises(InputError):
            select_next(_posterior_degenerada({"A": 0.1, "Z": 0.2}), IncumbentBoard.empty(cat), cat, ["Z"])
