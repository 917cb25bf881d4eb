"""
Calibração de ponta a ponta de Θ e ε: perdas, gradientes e laço de descida
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import (
    DimensionMismatch,
    DrcalError,
    EmptyDataset,
    LengthMismatch,
    NonFiniteGradient,
    SampleFailure,
)
from app.models.calibration import CalibrationState, MarketPass, SampleRecord
from app.models.dataset import Dataset
from app.models.dispatch import DispatchSolution
from app.models.network import NetworkCase
from app.models.schedule import ScheduleSolution
from app.models.uncertainty import EmpiricalErrorModel
from app.schemas.calibration import CalibrationConfig, LossBreakdown
from app.services.datasets import forecast, validate_dataset
from app.services.dispatch import dispatch_value_partials, solve_dispatch
from app.services.schedule import clip_forecast
from app.services.sensitivity import schedule_jacobians
from app.services.uncertainty import empirical_errors, with_epsilon

logger = logging.getLogger(__name__)


def _as_theta(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta.reshape(-1, 1) if theta.ndim == 1 else theta


def forecast_mse(forecasts: np.ndarray, actuals: np.ndarray) -> float:
    """(1/N) Σᵢ ‖yᵢ − ŷᵢ‖²"""
    if forecasts.shape != actuals.shape:
        raise DimensionMismatch(f"Previsões {forecasts.shape} vs observações {actuals.shape}")
    if forecasts.shape[0] == 0:
        raise EmptyDataset("Conjunto de calibração vazio")
    residual = actuals - forecasts
    return float(np.sum(residual * residual) / forecasts.shape[0])


def mse_loss(theta, cal_data: Dataset) -> float:
    """
    Erro quadrático médio de Θ sobre o conjunto

    Raises:
        EmptyDataset: Conjunto sem amostras
    """
    if cal_data.n_samples == 0:
        raise EmptyDataset("Conjunto de calibração vazio")
    return forecast_mse(forecast(_as_theta(theta), cal_data.features), cal_data.actuals)


def farm_gradient(
    features: np.ndarray,
    d_task_d_yhat: np.ndarray,
    actuals: np.ndarray,
    forecasts: np.ndarray,
    eta: float,
) -> np.ndarray:
    """
    Gradiente de θ_j: (1/N) Xᵀ ∂L/∂ŷ_j + η (2/N) Xᵀ(ŷ_j − y_j)

    É a única conta feita do lado do agente no modo distribuído.
    """
    d_task_d_yhat, actuals, forecasts = (
        np.ascontiguousarray(v, dtype=float) for v in (d_task_d_yhat, actuals, forecasts)
    )
    n = features.shape[0]
    task_part = features.T @ d_task_d_yhat / n
    mse_part = features.T @ (forecasts - actuals) * (2.0 / n)
    return task_part + eta * mse_part


def theta_gradient(
    features: np.ndarray,
    d_task_d_yhat: np.ndarray,
    actuals: np.ndarray,
    theta,
    eta: float,
) -> np.ndarray:
    """Gradiente de Θ montado coluna a coluna (um parque por coluna)"""
    theta = _as_theta(theta)
    forecasts = forecast(theta, features)
    columns = [
        farm_gradient(features, d_task_d_yhat[:, j], actuals[:, j], forecasts[:, j], eta)
        for j in range(theta.shape[1])
    ]
    return np.column_stack(columns)


def mse_grad(theta, cal_data: Dataset) -> np.ndarray:
    """(1/N) Σᵢ 2(Θᵀxᵢ − yᵢ)xᵢ"""
    theta = _as_theta(theta)
    zeros = np.zeros((cal_data.n_samples, theta.shape[1]))
    return theta_gradient(cal_data.features, zeros, cal_data.actuals, theta, eta=1.0)


def task_losses(
    schedules: Sequence[ScheduleSolution], dispatches: Sequence[DispatchSolution]
) -> Tuple[float, float]:
    """
    Médias de TaskI (custo de agendamento sem o termo de pior caso) e TaskII (custo de despacho)

    Raises:
        LengthMismatch: Listas de tamanhos diferentes
    """
    if len(schedules) != len(dispatches):
        raise LengthMismatch(f"{len(schedules)} agendamentos vs {len(dispatches)} despachos")
    if not schedules:
        raise EmptyDataset("Nenhuma amostra")
    task1 = float(np.mean([s.objective_stage1 for s in schedules]))
    task2 = float(np.mean([d.cost for d in dispatches]))
    return task1, task2


def sample_pass(
    case: NetworkCase,
    uq: EmpiricalErrorModel,
    y_hat: np.ndarray,
    realized: np.ndarray,
    config: CalibrationConfig,
    index: int = 0,
) -> Tuple[SampleRecord, ScheduleSolution, DispatchSolution]:
    """Agendamento, despacho e gradientes de uma amostra"""
    try:
        _, mask = clip_forecast(case, y_hat)
        schedule, jacobians = schedule_jacobians(case, y_hat, uq, config.layer, config.solver)
        dispatch = solve_dispatch(case, schedule, realized, config.dispatch)
        partials = dispatch_value_partials(dispatch, case)
    except DrcalError as exc:
        raise SampleFailure(index, exc) from exc

    weights = case.schedule_cost_vector + partials.stacked
    record = SampleRecord(
        index=index,
        task1=schedule.objective_stage1,
        task2=dispatch.cost,
        d_task_d_yhat=(weights @ jacobians.dG_dyhat) * mask,
        d_task_d_eps=weights @ jacobians.dG_deps,
        clipped=bool(np.any(mask == 0.0)),
    )
    return record, schedule, dispatch


def market_pass(
    case: NetworkCase,
    uq: EmpiricalErrorModel,
    forecasts: np.ndarray,
    actuals: np.ndarray,
    config: CalibrationConfig,
) -> MarketPass:
    """
    Passagem completa pelos dois estágios para todas as amostras

    Compartilhado pelo calibrador monolítico e pelo operador distribuído.

    Args:
        case: Rede
        uq: Modelo de erros com ε corrente
        forecasts: ŷ, amostras x parques
        actuals: y realizado, amostras x parques
        config: Configuração da calibração

    Returns:
        MarketPass com TaskI, TaskII, ∂(TaskI+TaskII)/∂ŷ por amostra e ∂/∂ε médio

    Raises:
        SampleFailure: Falha em alguma amostra (com o índice)
    """
    forecasts = np.asarray(forecasts, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if forecasts.shape != actuals.shape:
        raise LengthMismatch(f"Previsões {forecasts.shape} vs observações {actuals.shape}")
    if forecasts.shape[0] == 0:
        raise EmptyDataset("Conjunto de calibração vazio")

    def run(index: int):
        return sample_pass(case, uq, forecasts[index], actuals[index], config, index)

    indices = range(forecasts.shape[0])
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, indices))
    else:
        results = [run(index) for index in indices]

    records = [record for record, _, _ in results]
    task1, task2 = task_losses([s for _, s, _ in results], [d for _, _, d in results])
    return MarketPass(
        task1=task1,
        task2=task2,
        d_task_d_yhat=np.vstack([r.d_task_d_yhat for r in records]),
        d_task_d_eps=np.mean(np.vstack([r.d_task_d_eps for r in records]), axis=0),
        records=records,
    )


def _check_finite(*arrays: np.ndarray) -> None:
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise NonFiniteGradient("Gradiente com valores não finitos")


def total_grads(
    state: CalibrationState,
    case: NetworkCase,
    uq: EmpiricalErrorModel,
    cal_data: Dataset,
    config: CalibrationConfig,
) -> Tuple[np.ndarray, np.ndarray, LossBreakdown]:
    """
    Gradientes da perda total em relação a Θ e ε

    Returns:
        (∂L/∂Θ, ∂L/∂ε, decomposição da perda no ponto corrente)

    Raises:
        SampleFailure: Falha de solver/camada em alguma amostra
        NonFiniteGradient: Gradiente não finito
    """
    theta = _as_theta(state.theta)
    forecasts = forecast(theta, cal_data.features)
    result = market_pass(case, with_epsilon(uq, state.epsilon), forecasts, cal_data.actuals, config)
    breakdown = LossBreakdown.compose(
        forecast_mse(forecasts, cal_data.actuals), result.task1, result.task2, config.eta
    )
    d_theta = theta_gradient(
        cal_data.features, result.d_task_d_yhat, cal_data.actuals, theta, config.eta
    )
    d_eps = result.d_task_d_eps
    _check_finite(d_theta, d_eps)
    return d_theta, d_eps, breakdown


def evaluate(
    case: NetworkCase,
    uq: EmpiricalErrorModel,
    data: Dataset,
    theta,
    epsilon,
    config: Optional[CalibrationConfig] = None,
) -> Tuple[LossBreakdown, MarketPass]:
    """Perda de um par (Θ, ε) em um conjunto, sem atualizar parâmetros"""
    config = config or CalibrationConfig()
    forecasts = forecast(_as_theta(theta), data.features)
    result = market_pass(case, with_epsilon(uq, epsilon), forecasts, data.actuals, config)
    breakdown = LossBreakdown.compose(
        forecast_mse(forecasts, data.actuals), result.task1, result.task2, config.eta
    )
    return breakdown, result


def update_epsilon(epsilon: np.ndarray, gradient: np.ndarray, lr: float, floor: float) -> np.ndarray:
    """ε ← max(piso, ε − κ_ε ∇ε)"""
    return np.maximum(floor, epsilon - lr * gradient)


def should_stop(history: List[LossBreakdown], stop_delta: float) -> bool:
    """|ΔL| entre as duas últimas iterações abaixo do limiar"""
    if len(history) < 2:
        return False
    return abs(history[-1].total - history[-2].total) < stop_delta


def calibrate(
    case: NetworkCase,
    uq_data: Dataset,
    cal_data: Dataset,
    theta0,
    eps0,
    config: Optional[CalibrationConfig] = None,
) -> CalibrationState:
    """
    Calibração de ponta a ponta

    Os erros empíricos são construídos uma vez a partir de Θ0 e ficam fixos.
    Cada iteração avalia a perda no ponto corrente, registra e, se o critério
    de parada não foi atingido, atualiza Θ e ε.

    Args:
        case: Rede
        uq_data: Conjunto de quantificação de incerteza
        cal_data: Conjunto de calibração
        theta0: Θ inicial (atributos x parques)
        eps0: ε inicial (escalar ou por parque)
        config: Hiperparâmetros

    Returns:
        CalibrationState com o histórico completo

    Raises:
        SampleFailure: Falha em alguma amostra
        NonFiniteGradient: Gradiente não finito
    """
    config = config or CalibrationConfig()
    validate_dataset(case, uq_data)
    validate_dataset(case, cal_data)
    theta = _as_theta(theta0).copy()
    if theta.shape != (cal_data.n_features, case.n_wind):
        raise DimensionMismatch(
            f"Θ0 {theta.shape} incompatível com ({cal_data.n_features}, {case.n_wind})"
        )
    epsilon = np.array(np.broadcast_to(np.asarray(eps0, dtype=float), (case.n_wind,)))
    if np.any(epsilon < config.eps_floor):
        raise ValueError(f"ε0={epsilon.tolist()} abaixo do piso {config.eps_floor}")

    uq = empirical_errors(theta, uq_data, config.xi_bound, config.risk_level)
    state = CalibrationState(theta=theta, epsilon=epsilon, stop_delta=config.stop_delta)
    logger.info(
        f"Calibração iniciada: N_s={uq.n_samples}, N_c={cal_data.n_samples}, "
        f"max_iters={config.max_iters}"
    )

    while state.iter < config.max_iters:
        started = time.perf_counter()
        d_theta, d_eps, breakdown = total_grads(state, case, uq, cal_data, config)
        state.record(breakdown, state.theta, state.epsilon)
        if state.stop_delta is None:
            state.stop_delta = config.resolve_stop_delta(breakdown.total)
        logger.info(
            f"Iteração {state.iter}: total={breakdown.total:.6f} mse={breakdown.mse:.4f} "
            f"task1={breakdown.task1:.4f} task2={breakdown.task2:.4f} "
            f"eps={state.epsilon.tolist()} ({time.perf_counter() - started:.2f}s)"
        )
        if should_stop(state.loss_history, state.stop_delta):
            state.converged = True
            break
        state.theta = state.theta - config.lr_theta * d_theta
        state.epsilon = update_epsilon(state.epsilon, d_eps, config.lr_eps, config.eps_floor)

    logger.info(f"Calibração encerrada após {state.iter} iterações (convergiu={state.converged})")
    return state
