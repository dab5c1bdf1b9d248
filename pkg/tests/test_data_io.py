import math

import numpy as np
import pandas as pd
import pytest

from core.data_io import (
    PerformanceTable,
    SyntheticConfig,
    build_table_scenario,
    empirical_covariance,
    estimate_prior,
    generate_synthetic,
    load_costs,
    load_kernel_csv,
    load_synthetic_config,
    load_table,
    matern52,
    matern_kernel,
    save_costs,
    save_table,
    table_spread,
)
from core.errors import InputError, TableParseError
from core.metrics import miu_s_exact


def _escribir(ruta, texto):
    ruta.write_text(texto, encoding="utf-8", newline="")
    return ruta


def _tabla(valores, usuarios=None, modelos=None, costos=None):
    df = pd.DataFrame(valores, index=usuarios, columns=modelos)
    costos = pd.Series(1.0, index=df.columns) if costos is None else pd.Series(costos)
    return PerformanceTable(df, costos)


class TestLoadTable:
    def test_menus_completos(self, tmp_path):
        ruta = _escribir(tmp_path / "t.csv", "user,m1,m2\nana,0.5,0.7\nbeto,0.6,0.4\n")
        tabla = load_table(ruta)
        assert tabla.users == ["ana", "beto"]
        assert tabla.menus() == {"ana": ("m1", "m2"), "beto": ("m1", "m2")}
        assert list(tabla.costs) == [1.0, 1.0]

    def test_celda_vacia_excluye_del_menu(self, tmp_path):
        ruta = _escribir(tmp_path / "t.csv", "user,m1,m2\nana,,0.7\nbeto,0.6,0.4\n")
        assert load_table(ruta).menus()["ana"] == ("m2",)

    def test_columna_repetida(self, tmp_path):
        ruta = _escribir(tmp_path / "t.csv", "user,m1,m1\nana,0.5,0.7\n")
        with pytest.raises(TableParseError) as info:
            load_table(ruta)
        assert info.value.fila == 1 and info.value.columna == "m1"

    def test_celda_no_numerica(self, tmp_path):
        ruta = _escribir(tmp_path / "t.csv", "user,m1,m2\nana,0.5,alta\n")
        with pytest.raises(TableParseError) as info:
            load_table(ruta)
        assert info.value.fila == 2 and info.value.columna == "m2"

    def test_usuario_repetido(self, tmp_path):
        ruta = _escribir(tmp_path / "t.csv", "user,m1\nana,0.5\nana,0.7\n")
        with pytest.raises(TableParseError):
            load_table(ruta)

    @pytest.mark.parametrize(
        "texto",
        ["usuario,m1\nana,0.5\n", "user,m1,m2\nana,0.5\n", "user,m1,m2\nana,0.5,0.2,0.9\n", "user,m1\nana,-0.1\n"],
    )
    def test_csv_mal_formado(self, tmp_path, texto):
        with pytest.raises(TableParseError):
            load_table(_escribir(tmp_path / "t.csv", texto))

    @pytest.mark.parametrize(
        "texto, fila",
        [
            ("user,m1,m2\nana,0.5\nbeto,0.6,0.4\n", 2),
            ("user,m1,m2\nana,0.5,0.7\nbeto,0.6,0.4,0.1\n", 3),
            ("user,m1,m2\nana,0.5,0.7\n\nbeto,0.6\n", 3),
        ],
    )
    def test_fila_con_campos_distintos_al_encabezado(self, tmp_path, texto, fila):
        with pytest.raises(TableParseError) as info:
            load_table(_escribir(tmp_path / "t.csv", texto))
        assert info.value.fila == fila

    def test_campo_vacio_explicito_es_modelo_ausente(self, tmp_path):
        tabla = load_table(_escribir(tmp_path / "t.csv", "user,m1,m2\nana,0.5,\nbeto,0.6,0.4\n"))
        assert tabla.menus()["ana"] == ("m1",)

    def test_archivo_inexistente(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_table(tmp_path / "no.csv")

    def test_con_costos(self, tmp_path):
        tabla = _escribir(tmp_path / "t.csv", "user,m1,m2\nana,0.5,0.7\n")
        costos = _escribir(tmp_path / "c.csv", "model,cost\nm1,2.5\n")
        leida = load_table(tabla, costos)
        assert leida.costs["m1"] == 2.5
        assert leida.costs["m2"] == 1.0

    def test_costo_no_positivo(self, tmp_path):
        with pytest.raises(TableParseError):
            load_costs(_escribir(tmp_path / "c.csv", "model,cost\nm1,0\n"))

    def test_excel(self, tmp_path):
        ruta = tmp_path / "t.xlsx"
        df = pd.DataFrame({"user": ["ana", "beto"], "m1": [0.5, None], "m2": [0.7, 0.4]})
        df.to_excel(ruta, index=False, engine="openpyxl")
        tabla = load_table(ruta)
        assert tabla.menus() == {"ana": ("m1", "m2"), "beto": ("m2",)}
        assert tabla.values.loc["ana", "m2"] == 0.7

    def test_ida_y_vuelta_byte_a_byte(self, tmp_path):
        texto = "user,m1,m2,m3\nana,0.5,,0.91\nbeto,0.25,0.125,1.0\n"
        original = _escribir(tmp_path / "t.csv", texto)
        copia = save_table(load_table(original), tmp_path / "copia.csv")
        assert copia.read_bytes() == original.read_bytes()

    def test_costos_ida_y_vuelta(self, tmp_path):
        texto = "model,cost\nm1,2.5\nm2,0.1\n"
        original = _escribir(tmp_path / "c.csv", texto)
        copia = save_costs(load_costs(original), tmp_path / "copia.csv")
        assert copia.read_bytes() == original.read_bytes()


class TestEstimatePrior:
    def test_pocos_usuarios(self):
        with pytest.raises(InputError):
            estimate_prior(_tabla([[0.5, 0.6]], ["a"], ["m1", "m2"]))

    def test_filas_identicas(self):
        tabla = _tabla([[0.5, 0.6, 0.7]] * 3, ["a", "b", "c"], ["m1", "m2", "m3"])
        prior = estimate_prior(tabla)
        np.testing.assert_allclose(prior.mean, [0.5, 0.6, 0.7])
        np.testing.assert_allclose(prior.kernel, 1e-10 * np.eye(3))

    def test_columnas_identicas(self, rng):
        x = rng.uniform(size=6)
        tabla = _tabla(np.column_stack([x, x, rng.uniform(size=6)]), list("abcdef"), ["m1", "m2", "m3"])
        cov = empirical_covariance(tabla).to_numpy()
        assert cov[0, 1] / math.sqrt(cov[0, 0] * cov[1, 1]) == pytest.approx(1.0)
        prior = estimate_prior(tabla)
        assert np.linalg.eigvalsh(prior.kernel)[0] >= 1e-10
        np.testing.assert_allclose(np.diag(prior.kernel), np.diag(cov))

    def test_covarianza_empirica(self):
        rng = np.random.default_rng(3)
        verdadera = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.3], [0.2, 0.3, 1.0]])
        filas = rng.multivariate_normal(np.zeros(3), verdadera, size=8) + 5.0
        tabla = _tabla(filas, [f"u{i}" for i in range(8)], ["a", "b", "c"])
        np.testing.assert_allclose(empirical_covariance(tabla).to_numpy(), np.cov(filas.T, ddof=1), rtol=1e-10)
        prior = estimate_prior(tabla)
        np.testing.assert_allclose(prior.kernel, np.cov(filas.T, ddof=1), rtol=1e-10)

    def test_normalizacion(self):
        tabla = _tabla([[0.0, 1.0], [4.0, 3.0], [2.0, 8.0]], ["a", "b", "c"], ["m1", "m2"])
        prior = estimate_prior(tabla, normalize=True)
        assert prior.normalized
        assert np.max(np.diag(prior.kernel)) == pytest.approx(1.0)
        np.testing.assert_allclose(prior.mean * prior.scale, [2.0, 4.0])

    def test_modelo_poco_observado(self):
        tabla = _tabla([[0.5, np.nan], [0.6, 0.2]], ["a", "b"], ["m1", "m2"])
        with pytest.raises(InputError):
            estimate_prior(tabla)


class TestBuildTableScenario:
    def test_particion_y_bloques(self, rng):
        valores = rng.uniform(0.1, 0.9, size=(6, 4))
        valores[5, 2] = np.nan
        tabla = _tabla(valores, [f"u{i}" for i in range(6)], ["a", "b", "c", "d"], {"a": 1, "b": 2, "c": 3, "d": 4})
        esc = build_table_scenario(tabla, heldout_count=3, split_seed=9)
        assert esc.catalog.n_users == 3
        for usuario, menu in zip(esc.catalog.user_ids, esc.catalog.menus):
            assert all(m.startswith(f"{usuario}/") for m in menu)
        pos_0 = esc.prior.positions(esc.catalog.menus[0])
        pos_1 = esc.prior.positions(esc.catalog.menus[1])
        assert np.all(esc.prior.kernel[np.ix_(pos_0, pos_1)] == 0.0)
        assert esc.catalog.costs[esc.catalog.menus[0][1]] == 2.0

    def test_reserva_insuficiente(self):
        tabla = _tabla(np.full((3, 2), 0.5), ["a", "b", "c"], ["m1", "m2"])
        with pytest.raises(InputError):
            build_table_scenario(tabla, heldout_count=3, split_seed=0)

    def test_dispersion(self):
        tabla = _tabla([[0.0, 2.0], [1.0, 1.0]], ["a", "b"], ["m1", "m2"])
        assert table_spread(tabla) == pytest.approx(math.sqrt(2.0) / 2.0)


class TestSynthetic:
    def test_matern_en_cero(self):
        assert matern52(0.0, 0.3, 0.7) == pytest.approx(0.7)

    def test_matern_en_la_escala(self):
        esperado = (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))
        assert matern52(0.4, 0.4, 1.0) == pytest.approx(esperado, rel=1e-14)

    def test_matern_contra_implementacion_independiente(self):
        d = np.linspace(0.0, 2.0, 41)
        ell = 0.3
        r = d / ell
        esperado = (1 + math.sqrt(5) * r + 5 * r ** 2 / 3) * np.exp(-math.sqrt(5) * r)
        np.testing.assert_allclose(matern52(d, ell, 1.0), esperado, rtol=1e-13)

    def test_escala_grande_correlaciona_todo(self):
        K = matern_kernel(np.linspace(0, 1, 5), 1e6, 1.0)
        assert np.all(K > 1.0 - 1e-9)
        assert miu_s_exact(K, 2) < 1e-4

    def test_parametros_invalidos(self):
        with pytest.raises(InputError):
            SyntheticConfig(2, 3, length_scale=0.0, variance=1.0)
        with pytest.raises(InputError):
            SyntheticConfig(2, 3, length_scale=0.2, variance=0.0)
        with pytest.raises(InputError):
            SyntheticConfig(2, 3, length_scale=0.2, variance=1.0, cost_model="uniform", cost_params=(1.0,))

    def test_generador(self):
        cfg = SyntheticConfig(4, 6, 0.3, 1.0, cost_model="uniform", cost_params=(0.5, 2.0), seed=11)
        esc = generate_synthetic(cfg)
        assert esc.catalog.n_users == 4
        assert esc.catalog.menus[1][0] == "u001/m000"
        assert all(z >= 0 for z in esc.truth.values())
        assert all(0.5 <= c <= 2.0 for c in esc.catalog.costs.values())
        np.testing.assert_allclose(esc.prior.kernel[:6, :6], matern_kernel(np.linspace(0, 1, 6), 0.3, 1.0))
        assert esc.prior.kernel[0, 6] == 0.0
        assert len(esc.prior.components) == 4

    def test_determinista(self):
        cfg = SyntheticConfig(3, 5, 0.2, 0.5, seed=4)
        assert generate_synthetic(cfg).truth == generate_synthetic(cfg).truth

    def test_rango_bajo(self):
        cfg = SyntheticConfig(2, 10, 0.2, 1.0, seed=1, kernel="low_rank", rank=3)
        esc = generate_synthetic(cfg)
        K = esc.prior.kernel[:10, :10]
        assert np.linalg.matrix_rank(K, tol=1e-9) == 3
        np.testing.assert_allclose(np.diag(K), 1.0)

    def test_archivo_plano(self, tmp_path):
        ruta = _escribir(
            tmp_path / "s.cfg",
            "# comentario\nn_users = 3\nn_models = 4\nlength_scale = 0.2\nvariance = 0.8\n"
            "cost_model = lognormal\ncost_params = 0.0, 0.5\nseed = 9\n",
        )
        cfg = load_synthetic_config(ruta)
        assert cfg == SyntheticConfig(3, 4, 0.2, 0.8, "lognormal", (0.0, 0.5), 9)

    def test_archivo_plano_sin_clave(self, tmp_path):
        ruta = _escribir(tmp_path / "s.cfg", "n_users = 3\n")
        with pytest.raises(InputError):
            load_synthetic_config(ruta)


class TestLoadKernelCsv:
    def test_con_etiquetas(self, tmp_path):
        ruta = _escribir(tmp_path / "k.csv", ",a,b\na,1.0,0.5\nb,0.5,1.0\n")
        np.testing.assert_array_equal(load_kernel_csv(ruta), [[1.0, 0.5], [0.5, 1.0]])

    def test_sin_etiquetas(self, tmp_path):
        ruta = _escribir(tmp_path / "k.csv", "1,0\n0,1\n")
        np.testing.assert_array_equal(load_kernel_csv(ruta), np.eye(2))

    def test_no_cuadrada(self, tmp_path):
        ruta = _escribir(tmp_path / "k.csv", "1,0,0\n0,1,0\n")
        with pytest.raises(InputError):
            load_kernel_csv(ruta)
