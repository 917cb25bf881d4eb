"""
Testes para perdas, gradientes e o laço de calibração
"""
import numpy as np
import pytest

from app.exceptions import DimensionMismatch, EmptyDataset, LengthMismatch
from app.models.calibration import CalibrationState
from app.models.dataset import Dataset, DatasetRole
from app.schemas.calibration import CalibrationConfig, LossBreakdown
from app.services.calibrator import (
    calibrate,
    evaluate,
    farm_gradient,
    forecast_mse,
    market_pass,
    mse_grad,
    mse_loss,
    should_stop,
    task_losses,
    theta_gradient,
    total_grads,
    update_epsilon,
)
from app.services.datasets import forecast, gen_synthetic_dataset
from app.services.uncertainty import empirical_errors


def _breakdown(total: float) -> LossBreakdown:
    return LossBreakdown.compose(mse=0.0, task1=total, task2=0.0, eta=1.0)


class TestMSE:
    """Testes da perda quadrática"""

    def test_perfect_fit(self):
        """Ajuste perfeito: perda zero e gradiente nulo"""
        data = Dataset(features=[[1.0, 2.0], [3.0, 1.0]], actuals=[[5.0], [5.0]], role=DatasetRole.CALIBRATION)
        theta = np.array([[1.0], [2.0]])
        assert mse_loss(theta, data) == 0.0
        assert np.all(mse_grad(theta, data) == 0.0)

    def test_single_sample(self):
        """y=5, Θᵀx=3 → 4"""
        data = Dataset(features=[[3.0]], actuals=[[5.0]], role=DatasetRole.CALIBRATION)
        assert mse_loss(np.array([[1.0]]), data) == pytest.approx(4.0)

    def test_gradient_hand_computation(self):
        """x=2, y=0, θ=1 → 2·(2−0)·2 = 8"""
        data = Dataset(features=[[2.0]], actuals=[[0.0]], role=DatasetRole.CALIBRATION)
        assert mse_grad(np.array([[1.0]]), data).tolist() == [[8.0]]

    def test_gradient_matches_central_differences(self):
        """Gradiente analítico contra diferenças centrais"""
        rng = np.random.default_rng(5)
        data = Dataset(
            features=rng.uniform(0, 50, size=(6, 2)),
            actuals=rng.uniform(0, 200, size=(6, 2)),
            role=DatasetRole.CALIBRATION,
        )
        theta = rng.normal(size=(2, 2))
        analytic = mse_grad(theta, data)
        numeric = np.zeros_like(theta)
        h = 1e-5
        for index in np.ndindex(theta.shape):
            up, down = theta.copy(), theta.copy()
            up[index] += h
            down[index] -= h
            numeric[index] = (mse_loss(up, data) - mse_loss(down, data)) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6)

    def test_shape_mismatch(self):
        """Testa previsões e observações com formas diferentes"""
        with pytest.raises(DimensionMismatch):
            forecast_mse(np.zeros((2, 1)), np.zeros((3, 1)))

    def test_empty(self):
        """Testa conjunto vazio"""
        with pytest.raises(EmptyDataset):
            forecast_mse(np.zeros((0, 1)), np.zeros((0, 1)))


class TestThetaGradient:
    """Testes do gradiente combinado"""

    def test_farm_gradient_formula(self):
        """(1/N) Xᵀd + η(2/N) Xᵀ(ŷ − y)"""
        features = np.array([[1.0, 2.0], [3.0, 4.0]])
        d_task = np.array([10.0, -2.0])
        actuals = np.array([5.0, 7.0])
        forecasts = np.array([6.0, 4.0])
        expected = features.T @ d_task / 2 + 0.5 * features.T @ (forecasts - actuals)
        np.testing.assert_allclose(farm_gradient(features, d_task, actuals, forecasts, 0.5), expected)

    def test_zero_task_signal_is_scaled_mse_gradient(self, cal_data, theta0):
        """Sem sinal de custo: η vezes o gradiente do MSE"""
        zeros = np.zeros((cal_data.n_samples, 1))
        gradient = theta_gradient(cal_data.features, zeros, cal_data.actuals, theta0, eta=3.0)
        np.testing.assert_allclose(gradient, 3.0 * mse_grad(theta0, cal_data))

    def test_large_eta_follows_mse_direction(self, cal_data, theta0):
        """η → ∞: a direção do gradiente é a do MSE"""
        rng = np.random.default_rng(0)
        d_task = rng.normal(scale=50.0, size=(cal_data.n_samples, 1))
        gradient = theta_gradient(cal_data.features, d_task, cal_data.actuals, theta0, eta=1e9)
        reference = mse_grad(theta0, cal_data)
        np.testing.assert_allclose(
            gradient / np.linalg.norm(gradient), reference / np.linalg.norm(reference), atol=1e-6
        )


class TestTaskLosses:
    """Testes das perdas de custo"""

    def test_length_mismatch(self):
        """Listas de tamanhos diferentes"""
        with pytest.raises(LengthMismatch):
            task_losses([object()], [])

    def test_empty(self):
        """Sem amostras"""
        with pytest.raises(EmptyDataset):
            task_losses([], [])

    def test_market_pass_bookkeeping(self, case5, error_model, cal_data, theta0, fast_config):
        """TaskI é a média dos custos de estágio um por amostra"""
        forecasts = forecast(theta0, cal_data.features)
        result = market_pass(case5, error_model, forecasts, cal_data.actuals, fast_config)
        assert len(result.records) == cal_data.n_samples
        assert result.task1 == pytest.approx(np.mean([r.task1 for r in result.records]), abs=1e-9)
        assert result.task2 == pytest.approx(np.mean([r.task2 for r in result.records]), abs=1e-9)
        assert result.d_task_d_yhat.shape == (cal_data.n_samples, 1)
        assert result.d_task_d_eps.shape == (1,)

    def test_threads_give_identical_results(self, case5, error_model, cal_data, theta0, fast_config):
        """Paralelismo por amostra não altera o resultado"""
        forecasts = forecast(theta0, cal_data.features)
        serial = market_pass(case5, error_model, forecasts, cal_data.actuals, fast_config)
        threaded_config = fast_config.model_copy(update={"workers": 2})
        threaded = market_pass(case5, error_model, forecasts, cal_data.actuals, threaded_config)
        assert serial.task1 == threaded.task1
        assert serial.task2 == threaded.task2
        np.testing.assert_array_equal(serial.d_task_d_yhat, threaded.d_task_d_yhat)

    def test_length_mismatch_in_pass(self, case5, error_model, fast_config):
        """Previsões e observações desalinhadas"""
        with pytest.raises(LengthMismatch):
            market_pass(case5, error_model, np.zeros((2, 1)), np.zeros((3, 1)), fast_config)


class TestUpdates:
    """Testes das regras de atualização e parada"""

    def test_epsilon_floor(self):
        """ε não desce abaixo do piso"""
        updated = update_epsilon(np.array([0.5, 2.0]), np.array([1000.0, -10.0]), 1e-3, 0.0)
        np.testing.assert_allclose(updated, [0.0, 2.01])

    def test_should_stop(self):
        """|ΔL| abaixo do limiar"""
        assert not should_stop([_breakdown(10.0)], 1e-3)
        assert should_stop([_breakdown(10.0), _breakdown(10.0005)], 1e-3)
        assert not should_stop([_breakdown(10.0), _breakdown(10.1)], 1e-3)

    def test_breakdown_total_is_checked(self):
        """O total deve ser task1 + task2 + η·mse"""
        with pytest.raises(ValueError):
            LossBreakdown(mse=1.0, task1=1.0, task2=1.0, eta=1.0, total=10.0)


class TestCalibrate:
    """Testes do laço de calibração"""

    def test_zero_learning_rates_converge_on_second_iteration(self, case5, uq_data, cal_data, theta0):
        """κ=0: parâmetros fixos e ΔL=0 na segunda iteração"""
        config = CalibrationConfig(lr_theta=0.0, lr_eps=0.0, max_iters=5, xi_bound=50.0, risk_level=0.05)
        state = calibrate(case5, uq_data, cal_data, theta0, 1.0, config)
        assert state.converged
        assert state.iter == 2
        np.testing.assert_array_equal(state.theta, theta0)
        assert state.epsilon.tolist() == [1.0]
        assert state.loss_history[0].total == state.loss_history[1].total

    def test_zero_iterations(self, case5, uq_data, cal_data, theta0):
        """max_iters=0 devolve o estado inicial"""
        state = calibrate(case5, uq_data, cal_data, theta0, 1.0, CalibrationConfig(max_iters=0))
        assert state.iter == 0
        assert state.loss_history == []
        assert not state.converged

    def test_history_lengths(self, case5, uq_data, cal_data, theta0, fast_config):
        """Um registro de perda, ε e Θ por iteração"""
        state = calibrate(case5, uq_data, cal_data, theta0, 1.0, fast_config)
        assert 1 <= state.iter <= fast_config.max_iters
        assert len(state.loss_history) == state.iter
        assert len(state.epsilon_history) == state.iter
        assert len(state.theta_history) == state.iter
        assert state.theta_history[0] == theta0.tolist()
        assert all(e >= fast_config.eps_floor for e in state.epsilon)

    def test_deterministic(self, case5, uq_data, cal_data, theta0, fast_config):
        """Mesmas entradas, mesmo resultado bit a bit"""
        first = calibrate(case5, uq_data, cal_data, theta0, 1.0, fast_config)
        second = calibrate(case5, uq_data, cal_data, theta0, 1.0, fast_config)
        np.testing.assert_array_equal(first.theta, second.theta)
        np.testing.assert_array_equal(first.epsilon, second.epsilon)

    def test_initial_epsilon_below_floor(self, case5, uq_data, cal_data, theta0):
        """ε0 abaixo do piso é recusado"""
        with pytest.raises(ValueError):
            calibrate(case5, uq_data, cal_data, theta0, 0.5, CalibrationConfig(eps_floor=1.0, max_iters=1))

    def test_theta_shape_mismatch(self, case5, uq_data, cal_data):
        """Θ0 com número de atributos errado"""
        with pytest.raises(DimensionMismatch):
            calibrate(case5, uq_data, cal_data, np.ones((3, 1)), 1.0, CalibrationConfig(max_iters=1))

    def test_evaluate_matches_first_iteration(self, case5, uq_data, cal_data, theta0, fast_config):
        """A perda da primeira iteração é a avaliação no ponto inicial"""
        state = calibrate(case5, uq_data, cal_data, theta0, 1.0, fast_config)
        uq = empirical_errors(theta0, uq_data, fast_config.xi_bound, fast_config.risk_level)
        breakdown, _ = evaluate(case5, uq, cal_data, theta0, 1.0, fast_config)
        assert breakdown.total == state.loss_history[0].total

    def test_single_iteration_on_bundled_case(self, case5, theta0):
        """Uma iteração completa no caso de 5 barras com N_s=20"""
        uq_data = gen_synthetic_dataset(theta0, 20, 10.0, 4, DatasetRole.UQ, np.array([200.0]))
        cal_data = gen_synthetic_dataset(theta0, 3, 20.0, 5, DatasetRole.CALIBRATION, np.array([200.0]))
        config = CalibrationConfig(lr_theta=1e-6, lr_eps=1e-3, max_iters=1, xi_bound=50.0, risk_level=0.05)
        state = calibrate(case5, uq_data, cal_data, theta0, 1.0, config)
        assert state.iter == 1
        assert np.isfinite(state.loss_history[0].total)
        assert np.all(np.isfinite(state.theta))
        assert not np.array_equal(state.theta, theta0)

    def test_zero_gradient_is_a_fixed_point(self, mocker, case5, uq_data, cal_data, theta0, fast_config):
        """Gradiente nulo: Θ e ε não mudam e o laço para por ΔL = 0"""
        mocker.patch(
            "app.services.calibrator.total_grads",
            return_value=(np.zeros_like(theta0), np.zeros(1), _breakdown(5.0)),
        )
        state = calibrate(case5, uq_data, cal_data, theta0, 1.0, fast_config.model_copy(update={"max_iters": 5}))
        np.testing.assert_array_equal(state.theta, theta0)
        assert state.epsilon.tolist() == [1.0]
        assert state.converged
        assert state.iter == 2

    def test_first_step_descends(self, case5, uq_data, cal_data, theta0, fast_config):
        """Um passo contra o gradiente reduz a perda, com até três reduções do passo"""
        uq = empirical_errors(theta0, uq_data, fast_config.xi_bound, fast_config.risk_level)
        state = CalibrationState(theta=theta0.copy(), epsilon=np.array([1.0]))
        d_theta, d_eps, start = total_grads(state, case5, uq, cal_data, fast_config)
        lr_theta, lr_eps = 1e-6, 1e-3
        losses = []
        for _ in range(4):
            theta = theta0 - lr_theta * d_theta
            epsilon = update_epsilon(np.array([1.0]), d_eps, lr_eps, fast_config.eps_floor)
            losses.append(evaluate(case5, uq, cal_data, theta, epsilon, fast_config)[0].total)
            if losses[-1] <= start.total:
                break
            lr_theta, lr_eps = lr_theta / 2, lr_eps / 2
        assert min(losses) <= start.total
