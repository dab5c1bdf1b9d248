import math
from collections import defaultdict

import numpy as np
import pandas as pd
import pytest

from conftest import escenario_aleatorio, escenario_simple
from core.errors import InputError
from core.gp_core import PriorSpec
from core.metrics import cumulative_regret
from core.scheduler import PolicyConfig
from core.simulator import COLUMNAS_TRAZA, Scenario, Trace, run_simulation


def verificar_traza(traza: Trace, escenario: Scenario) -> None:
    """Sin modelos repetidos, duración = costo, intervalos disjuntos por dispositivo y <= M en paralelo."""
    modelos = [e.model for e in traza.events]
    assert len(modelos) == len(set(modelos))
    por_dispositivo = defaultdict(list)
    for e in traza.events:
        assert e.finish - e.start == pytest.approx(escenario.catalog.costs[e.model], rel=1e-12)
        assert 0 <= e.device < traza.m_devices
        por_dispositivo[e.device].append((e.start, e.finish))
    for intervalos in por_dispositivo.values():
        intervalos.sort()
        for (_, fin), (inicio, _) in zip(intervalos, intervalos[1:]):
            assert inicio >= fin
    claves = [(e.start, e.device) for e in traza.events]
    assert claves == sorted(claves)


def verificar_conservacion(traza: Trace, escenario: Scenario) -> None:
    """Un dispositivo sólo queda ocioso (antes del horizonte) si ya no quedaban modelos sin seleccionar."""
    eventos = traza.events
    momentos = sorted({0.0} | {e.finish for e in eventos if e.finish < traza.horizon})
    total = len(escenario.catalog.all_models)
    for t in momentos:
        if t >= traza.horizon:
            continue
        seleccionados = sum(1 for e in eventos if e.start <= t)
        ocupados = sum(1 for e in eventos if e.start <= t < e.finish)
        observados = sum(1 for e in eventos if e.finish <= t)
        if observados == total:
            break
        if ocupados < traza.m_devices:
            assert seleccionados == total


class TestScenario:
    def test_falta_verdad(self):
        with pytest.raises(InputError):
            escenario_simple([["A", "B"]], {"A": 1.0, "B": 1.0}, {"A": 0.5})

    def test_verdad_negativa(self):
        with pytest.raises(InputError):
            escenario_simple([["A"]], {"A": 1.0}, {"A": -0.1})

    def test_optimo(self, escenario_dos_usuarios):
        assert escenario_dos_usuarios.optimum(0) == ("C", 0.6)
        assert escenario_dos_usuarios.optimum(1) == ("B", 0.8)


class TestRunSimulation:
    def test_ejecucion_serial(self):
        esc = escenario_simple([["A", "B"]], {"A": 3.0, "B": 5.0}, {"A": 0.2, "B": 0.4})
        traza = run_simulation(esc, PolicyConfig(), 1, 100.0)
        assert [(e.model, e.start, e.finish) for e in traza.events] == [("A", 0.0, 3.0), ("B", 3.0, 8.0)]

    def test_paralelismo_completo(self):
        esc = escenario_simple([["A", "B", "C"]], {"A": 1.0, "B": 2.0, "C": 3.0}, {"A": 0.1, "B": 0.2, "C": 0.3})
        traza = run_simulation(esc, PolicyConfig(warm_start="TwoFastestPerUser"), 4, 10.0)
        assert all(e.start == 0.0 for e in traza.events)
        assert len(traza.events) == 3

    def test_horizonte_corta_asignaciones(self):
        esc = escenario_simple([["A", "B", "C"]], {"A": 4.0, "B": 4.0, "C": 4.0}, {"A": 0.1, "B": 0.2, "C": 0.3})
        traza = run_simulation(esc, PolicyConfig(), 1, 6.0)
        assert [e.start for e in traza.events] == [0.0, 4.0]
        assert traza.events[-1].finish == 8.0
        assert len(traza.observed()) == 1

    @pytest.mark.parametrize("m, horizonte", [(0, 1.0), (1, 0.0), (1, -3.0), (1, math.inf)])
    def test_parametros_invalidos(self, m, horizonte):
        esc = escenario_simple([["A"]], {"A": 1.0}, {"A": 0.5})
        with pytest.raises(InputError):
            run_simulation(esc, PolicyConfig(), m, horizonte)

    def test_determinista_y_csv_identico(self, rng, tmp_path):
        esc = escenario_aleatorio(rng, 4, 15)
        config = PolicyConfig(policy="Random", warm_start="PriorMeanArgmax")
        a = run_simulation(esc, config, 2, 20.0, seed=5).to_csv(tmp_path / "a.csv")
        b = run_simulation(esc, config, 2, 20.0, seed=5).to_csv(tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == ",".join(COLUMNAS_TRAZA)

    def test_csv_con_17_digitos(self, tmp_path):
        esc = escenario_simple([["A"]], {"A": 1.0 / 3.0}, {"A": 0.1})
        ruta = run_simulation(esc, PolicyConfig(), 1, 5.0).to_csv(tmp_path / "t.csv")
        df = pd.read_csv(ruta)
        assert df.loc[0, "finish"] == 1.0 / 3.0

    @pytest.mark.parametrize("politica", ["MMGPEI", "RoundRobin", "Random"])
    def test_invariantes_en_escenarios_aleatorios(self, politica):
        rng = np.random.default_rng(123)
        for k in range(100):
            n_users = int(rng.integers(1, 11))
            n_models = int(rng.integers(2, 41))
            esc = escenario_aleatorio(rng, n_users, n_models)
            m = int(rng.choice([1, 2, 4]))
            config = PolicyConfig(policy=politica, warm_start="TwoFastestPerUser")
            horizonte = float(rng.uniform(2.0, 40.0))
            traza = run_simulation(esc, config, m, horizonte, seed=k)
            verificar_traza(traza, esc)
            verificar_conservacion(traza, esc)
            otra = run_simulation(esc, config, m, horizonte, seed=k)
            assert otra.events == traza.events

    def test_modelo_compartido_se_entrena_una_vez(self):
        """C está en ambos menús: se elige primero, corre una sola vez y deja a los dos usuarios sin regret."""
        esc = escenario_simple(
            [["A", "C"], ["B", "C"]], {"A": 5.0, "B": 5.0, "C": 1.0}, {"A": 0.2, "B": 0.3, "C": 0.9}
        )
        traza = run_simulation(esc, PolicyConfig(), 1, 3.0)
        verificar_traza(traza, esc)
        assert [(e.model, e.start, e.finish) for e in traza.events] == [("C", 0.0, 1.0), ("A", 1.0, 6.0)]

        reporte = cumulative_regret(traza, esc, 3.0)
        assert reporte.cumulative == pytest.approx(1.8)
        assert reporte.instantaneous_at(1.0) == 0.0
        for curva in reporte.per_user_curves.values():
            assert curva[-1] == (1.0, 0.0)

    def test_repeticion_desde_la_traza(self, rng):
        """Recalcular con los valores revelados por la traza reproduce el orden de asignación."""
        esc = escenario_aleatorio(rng, 3, 12)
        traza = run_simulation(esc, PolicyConfig(), 2, 50.0, seed=1)
        revelado = {e.model: e.value for e in traza.events}
        faltantes = {m: 0.0 for m in esc.catalog.all_models if m not in revelado}
        replay = Scenario(esc.catalog, {**revelado, **faltantes}, esc.prior)
        otra = run_simulation(replay, PolicyConfig(), 2, 50.0, seed=1)
        assert [(e.model, e.device, e.start) for e in otra.events] == [
            (e.model, e.device, e.start) for e in traza.events
        ]

    def test_prior_con_modelos_extra(self):
        esc = escenario_simple([["A"]], {"A": 1.0}, {"A": 0.5})
        prior = PriorSpec(("Z", "A"), np.zeros(2), np.eye(2))
        ampliado = Scenario(esc.catalog, esc.truth, prior)
        traza = run_simulation(ampliado, PolicyConfig(), 1, 3.0)
        assert [e.model for e in traza.events] == ["A"]
