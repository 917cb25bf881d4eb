"""
Testes para o despacho em tempo real e as derivadas pelo envelope
"""
import numpy as np
import pytest

from app.exceptions import CaseValidationError, DimensionMismatch, InfeasibleDispatch
from app.models.schedule import ScheduleSolution
from app.schemas.calibration import DispatchOptions
from app.schemas.case_file import CaseFile
from app.schemas.solver import SolverStatus
from app.services.dispatch import dispatch_value_partials, solve_dispatch, unmet_imbalance
from app.services.power_case import build_case
from app.services.schedule import solve_schedule
from tests.conftest import toy_document


def toy_schedule(case, g, r_plus, r_minus, forecast):
    """Agendamento montado à mão para um caso de um gerador e um parque"""
    return ScheduleSolution(
        g=np.array([g]),
        r_plus=np.array([r_plus]),
        r_minus=np.array([r_minus]),
        A=np.ones((1, 1)),
        tau=0.0,
        lambda_O=np.zeros(1),
        lambda_C=np.zeros(1),
        s_O=np.zeros((1, 1)),
        s_C_i=np.zeros(1),
        s_C_jik=np.zeros((1, 1, 3)),
        objective_total=0.0,
        objective_stage1=0.0,
        objective_worstcase=0.0,
        forecast=np.array([forecast]),
        status=SolverStatus.OPTIMAL,
    )


class TestSolveDispatch:
    """Testes do LP de ajuste"""

    def test_no_deviation_costs_nothing(self, toy_case):
        """y = ŷ com g* interior: nenhum ajuste"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        solution = solve_dispatch(toy_case, schedule, np.array([150.0]))
        assert solution.cost == pytest.approx(0.0, abs=1e-5)
        np.testing.assert_allclose(solution.adjustment, 0.0, atol=1e-5)

    def test_shortfall_within_reserve(self, toy_case):
        """Falta de 10 MW coberta pela reserva: custo c_in·δ"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        solution = solve_dispatch(toy_case, schedule, np.array([140.0]))
        assert solution.cost == pytest.approx(20.0 * 10.0, rel=1e-6)
        assert solution.r_in[0] == pytest.approx(10.0, abs=1e-5)
        np.testing.assert_allclose(solution.r_out_up, 0.0, atol=1e-5)

    def test_shortfall_beyond_reserve_overflows(self, toy_case):
        """Falta de 50 MW com r⁺=20: o excedente vai para r_out⁺"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        solution = solve_dispatch(toy_case, schedule, np.array([100.0]))
        assert solution.r_in[0] == pytest.approx(20.0, abs=1e-5)
        assert solution.r_out_up[0] == pytest.approx(30.0, abs=1e-5)
        assert solution.cost == pytest.approx(20.0 * 20.0 + 100.0 * 30.0, rel=1e-6)

    def test_surplus_uses_down_reserve(self, toy_case):
        """Sobra de 15 MW: r_in negativo"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        solution = solve_dispatch(toy_case, schedule, np.array([165.0]))
        assert solution.r_in[0] == pytest.approx(-15.0, abs=1e-5)
        assert solution.cost == pytest.approx(20.0 * 15.0, rel=1e-6)

    def test_bundled_case_shortfall_on_cheapest_unit(self, case5, error_model):
        """Caso de 5 barras: falta pequena atendida pela unidade de menor c_in"""
        schedule = solve_schedule(case5, np.array([150.0]), error_model)
        delta = 0.5 * float(schedule.r_plus[2])
        assert delta > 0.1
        solution = solve_dispatch(case5, schedule, np.array([150.0 - delta]))
        assert solution.cost == pytest.approx(float(case5.cost_in.min()) * delta, rel=1e-5)
        assert solution.r_in[2] == pytest.approx(delta, abs=1e-4)

    def test_realized_outside_capacity(self, toy_case):
        """Testa geração realizada acima da capacidade"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        with pytest.raises(CaseValidationError):
            solve_dispatch(toy_case, schedule, np.array([250.0]))

    def test_realized_wrong_shape(self, toy_case):
        """Testa vetor realizado com tamanho errado"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        with pytest.raises(DimensionMismatch):
            solve_dispatch(toy_case, schedule, np.array([100.0, 1.0]))


class TestLoadShedding:
    """Testes do modo com corte de carga"""

    @pytest.fixture
    def tight_case(self):
        """Demanda de 700 MW com um gerador de 500 MW"""
        return build_case(CaseFile.model_validate(toy_document(demand_mw=[0.0, 700.0])))

    def test_shed_mode_serves_what_it_can(self, tight_case):
        """Gerador no máximo e 100 MW de vento faltando: 100 MW cortados"""
        schedule = toy_schedule(tight_case, 500.0, 0.0, 0.0, 200.0)
        options = DispatchOptions(load_shed_cost=1e4)
        solution = solve_dispatch(tight_case, schedule, np.array([100.0]), options)
        assert solution.shed_load.sum() == pytest.approx(100.0, abs=1e-4)
        assert solution.shed_load[1] == pytest.approx(100.0, abs=1e-4)

    def test_unmet_imbalance(self, tight_case):
        """Testa o desequilíbrio mínimo reportado"""
        schedule = toy_schedule(tight_case, 500.0, 0.0, 0.0, 200.0)
        assert unmet_imbalance(tight_case, schedule, np.array([100.0])) == pytest.approx(100.0, abs=1e-4)


class TestDispatchPartials:
    """Testes de ∂custo/∂(g*, r⁺*, r⁻*)"""

    @staticmethod
    def _cost(case, g, r_plus, r_minus, realized):
        schedule = toy_schedule(case, g, r_plus, r_minus, 150.0)
        return solve_dispatch(case, schedule, np.array([realized])).cost

    def test_slack_reserve_has_zero_partials(self, toy_case):
        """Reservas folgadas: ∂custo/∂r± = 0"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        partials = dispatch_value_partials(solve_dispatch(toy_case, schedule, np.array([140.0])), toy_case)
        np.testing.assert_allclose(partials.d_r_plus, 0.0, atol=1e-6)
        np.testing.assert_allclose(partials.d_r_minus, 0.0, atol=1e-6)

    def test_marginal_unit_price(self, toy_case):
        """Falta coberta pela unidade k: ∂custo/∂g* = −c_in,k"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        partials = dispatch_value_partials(solve_dispatch(toy_case, schedule, np.array([140.0])), toy_case)
        assert partials.d_g[0] == pytest.approx(-20.0, rel=1e-6)

    def test_binding_reserve_partials(self, toy_case):
        """Reserva esgotada: ∂custo/∂r⁺* = −(c_out⁺ − c_in)"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        partials = dispatch_value_partials(solve_dispatch(toy_case, schedule, np.array([100.0])), toy_case)
        assert partials.d_g[0] == pytest.approx(-100.0, rel=1e-6)
        assert partials.d_r_plus[0] == pytest.approx(-80.0, rel=1e-6)

    @pytest.mark.parametrize("realized", [100.0, 140.0, 160.0])
    def test_partials_match_central_differences(self, toy_case, realized):
        """Cada derivada confere com diferenças centrais do custo re-resolvido"""
        step = 0.5
        base = (150.0, 20.0, 20.0)
        schedule = toy_schedule(toy_case, *base, 150.0)
        analytic = dispatch_value_partials(
            solve_dispatch(toy_case, schedule, np.array([realized])), toy_case
        ).stacked
        for position in range(3):
            up, down = list(base), list(base)
            up[position] += step
            down[position] -= step
            numeric = (
                self._cost(toy_case, *up, realized) - self._cost(toy_case, *down, realized)
            ) / (2 * step)
            assert analytic[position] == pytest.approx(numeric, rel=1e-4, abs=1e-4)


class TestDispatchInvariants:
    """Propriedades estruturais do despacho e do envelope"""

    def test_negative_reserve_is_infeasible(self, toy_case):
        """Reservas negativas tornam o ajuste inviável: InfeasibleDispatch, sem erro numérico"""
        schedule = toy_schedule(toy_case, 150.0, -1.0, -1.0, 150.0)
        with pytest.raises(InfeasibleDispatch):
            solve_dispatch(toy_case, schedule, np.array([150.0]))

    @pytest.mark.parametrize("delta", [5.0, 15.0, 30.0, 45.0])
    def test_deviation_symmetry(self, toy_case, delta):
        """c_in e c_out iguais nos dois sentidos: falta e sobra de δ custam o mesmo"""
        schedule = toy_schedule(toy_case, 150.0, 20.0, 20.0, 150.0)
        short = solve_dispatch(toy_case, schedule, np.array([150.0 - delta])).cost
        surplus = solve_dispatch(toy_case, schedule, np.array([150.0 + delta])).cost
        assert short == pytest.approx(surplus, rel=1e-6)

    def test_sign_structure(self, case5, error_model):
        """Custo ≥ 0 e mais reserva nunca encarece o ajuste"""
        schedule = solve_schedule(case5, np.array([150.0]), error_model)
        for realized in np.random.default_rng(21).uniform(0.0, 200.0, size=10):
            solution = solve_dispatch(case5, schedule, np.array([realized]))
            partials = dispatch_value_partials(solution, case5)
            assert solution.cost >= -1e-6
            assert np.all(partials.d_r_plus <= 1e-6)
            assert np.all(partials.d_r_minus <= 1e-6)

    def test_bundled_case_envelope_matches_differences(self, case5, error_model):
        """5 barras: derivadas pelo envelope conferem com diferenças centrais onde o custo é liso"""
        step = 0.05
        schedule = solve_schedule(case5, np.array([150.0]), error_model)
        names = ("g", "r_plus", "r_minus")

        def cost(name, index, shift, realized):
            values = getattr(schedule, name).copy()
            values[index] += shift
            moved = schedule.model_copy(update={name: values})
            return solve_dispatch(case5, moved, realized).cost

        stable, total = 0, 0
        for value in np.random.default_rng(22).uniform(100.0, 200.0, size=5):
            realized = np.array([value])
            base = solve_dispatch(case5, schedule, realized)
            analytic = dispatch_value_partials(base, case5)
            for name in names:
                for index, level in enumerate(getattr(schedule, name)):
                    if level <= 2 * step:
                        continue
                    total += 1
                    forward = (cost(name, index, step, realized) - base.cost) / step
                    backward = (base.cost - cost(name, index, -step, realized)) / step
                    if abs(forward - backward) > 1e-4 * (1.0 + abs(forward)):
                        continue
                    stable += 1
                    central = 0.5 * (forward + backward)
                    expected = getattr(analytic, f"d_{name}")[index]
                    assert expected == pytest.approx(central, rel=1e-4, abs=1e-3)
        assert total > 0
        assert stable >= total // 2
