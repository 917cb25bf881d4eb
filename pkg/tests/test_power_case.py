"""
Testes para o carregamento de casos e a matriz PTDF
"""
import json

import numpy as np
import pytest

from app.exceptions import CaseValidationError, ParseError, SingularNetwork
from app.schemas.case_file import CaseFile
from app.services.power_case import DATA_DIR, build_case, case_ptdf, compute_ptdf, load_case
from tests.conftest import toy_document


def _incidence(case):
    incidence = np.zeros((case.n_lines, case.n_buses))
    incidence[np.arange(case.n_lines), case.line_from] = 1.0
    incidence[np.arange(case.n_lines), case.line_to] = -1.0
    return incidence


class TestLoadCase:
    """Testes de leitura e validação de arquivos de caso"""

    def test_bundled_case5_dimensions(self, case5):
        """Testa as dimensões do caso de 5 barras"""
        assert case5.n_buses == 5
        assert case5.n_generators == 3
        assert case5.n_lines == 6
        assert case5.n_wind == 1
        assert case5.total_demand == pytest.approx(600.0)
        assert case5.ptdf.shape == (6, 5)

    def test_bundled_two_wind_variant(self, case5_2wind):
        """Testa a variante com dois parques"""
        assert case5_2wind.n_wind == 2
        assert case5_2wind.wind_incidence.sum(axis=0).tolist() == [1.0, 1.0]

    def test_missing_file_raises_parse_error(self, tmp_path):
        """Testa arquivo inexistente"""
        with pytest.raises(ParseError):
            load_case(tmp_path / "nao_existe.json")

    def test_malformed_json_raises_parse_error(self, tmp_path):
        """Testa JSON malformado"""
        path = tmp_path / "caso.json"
        path.write_text("{buses: [1, 2", encoding="utf-8")
        with pytest.raises(ParseError):
            load_case(path)

    def test_missing_field_reports_field(self, tmp_path):
        """Testa campo obrigatório ausente"""
        document = toy_document()
        del document["demand_mw"]
        path = tmp_path / "caso.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        with pytest.raises(CaseValidationError) as info:
            load_case(path)
        assert info.value.field == "demand_mw"

    def test_unknown_generator_bus(self):
        """Testa gerador em barra inexistente"""
        document = toy_document()
        document["generators"][0]["bus"] = 9
        with pytest.raises(CaseValidationError) as info:
            build_case(CaseFile.model_validate(document))
        assert info.value.field == "generators.0.bus"

    def test_pmin_above_pmax(self):
        """Testa limites de geração invertidos"""
        document = toy_document()
        document["generators"][0]["pmin_mw"] = 600.0
        with pytest.raises(CaseValidationError):
            build_case(CaseFile.model_validate(document))

    def test_demand_length_mismatch(self):
        """Testa vetor de demanda com tamanho errado"""
        with pytest.raises(CaseValidationError) as info:
            build_case(CaseFile.model_validate(toy_document(demand_mw=[1.0])))
        assert info.value.field == "demand_mw"

    def test_disconnected_network(self):
        """Testa rede desconexa"""
        document = toy_document(buses=[1, 2, 3], demand_mw=[0.0, 300.0, 0.0])
        with pytest.raises(SingularNetwork):
            build_case(CaseFile.model_validate(document))

    def test_consistent_explicit_ptdf_is_accepted(self, case5):
        """Testa PTDF explícita igual à calculada"""
        document = json.loads((DATA_DIR / "case5.json").read_text())
        document["ptdf"] = case5.ptdf.ravel().tolist()
        case = build_case(CaseFile.model_validate(document))
        np.testing.assert_allclose(case.ptdf, case5.ptdf)

    def test_inconsistent_explicit_ptdf_is_rejected(self, case5):
        """Testa PTDF explícita divergente"""
        document = json.loads((DATA_DIR / "case5.json").read_text())
        ptdf = case5.ptdf.copy()
        ptdf[0, 1] += 0.1
        document["ptdf"] = ptdf.tolist()
        with pytest.raises(CaseValidationError) as info:
            build_case(CaseFile.model_validate(document))
        assert info.value.field == "ptdf"


class TestPTDF:
    """Testes das propriedades da PTDF"""

    def test_slack_column_is_zero(self, case5):
        """Testa coluna nula na barra de referência"""
        assert np.all(case5.ptdf[:, case5.slack_bus] == 0.0)

    def test_kirchhoff_current_law(self, case5):
        """Injeções balanceadas: o fluxo líquido em cada barra iguala a injeção"""
        rng = np.random.default_rng(0)
        injection = rng.normal(size=case5.n_buses)
        injection -= injection.mean()
        flows = case5.ptdf @ injection
        np.testing.assert_allclose(_incidence(case5).T @ flows, injection, atol=1e-9)

    def test_slack_change_shifts_columns(self, case5):
        """Trocar a barra de referência subtrai uma coluna de todas as outras"""
        other = case_ptdf(case5, slack_bus=2)
        expected = case5.ptdf - case5.ptdf[:, [2]]
        np.testing.assert_allclose(other, expected, atol=1e-9)

    def test_two_bus_line_carries_full_injection(self):
        """Duas barras: a linha leva toda a injeção da barra 2 até a referência"""
        ptdf = compute_ptdf(2, np.array([0]), np.array([1]), np.array([5.0]), slack_bus=0)
        np.testing.assert_allclose(ptdf, [[0.0, -1.0]])

    def test_triangle_splits_two_thirds_one_third(self):
        """Triângulo com susceptâncias iguais: 2/3 pelo caminho direto, 1/3 pelo indireto"""
        ptdf = compute_ptdf(
            3, np.array([0, 1, 0]), np.array([1, 2, 2]), np.array([4.0, 4.0, 4.0]), slack_bus=0
        )
        np.testing.assert_allclose(ptdf[:, 1], [-2.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0], atol=1e-12)
        np.testing.assert_allclose(ptdf[:, 2], [-1.0 / 3.0, -1.0 / 3.0, -2.0 / 3.0], atol=1e-12)

    def test_net_injection_flows(self, case5):
        """Testa Φ[S_g g + S_w y − d] contra a montagem direta"""
        g = np.array([100.0, 200.0, 150.0])
        y = np.array([150.0])
        injection = case5.gen_incidence @ g + case5.wind_incidence @ y - case5.demand
        np.testing.assert_allclose(case5.net_injection_flows(g, y), case5.ptdf @ injection)
