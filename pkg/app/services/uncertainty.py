"""
Quantificação de incerteza: erros empíricos e distâncias de Wasserstein
"""
import logging
from typing import Optional

import numpy as np
from scipy.stats import wasserstein_distance

from app.config.settings import settings
from app.exceptions import CaseValidationError, DimensionMismatch, EmptyInput
from app.models.dataset import Dataset, DatasetRole
from app.models.uncertainty import EmpiricalErrorModel
from app.services.datasets import forecast

logger = logging.getLogger(__name__)


def build_error_model(
    raw_errors: np.ndarray,
    xi_lower: np.ndarray,
    xi_upper: np.ndarray,
    risk_level: Optional[float] = None,
    epsilon: Optional[np.ndarray] = None,
) -> EmpiricalErrorModel:
    """
    Recorta erros ao suporte [ξ̲, ξ̄] e monta o modelo empírico

    Args:
        raw_errors: Matriz parques x N_s (MW)
        xi_lower, xi_upper: Suporte por parque
        risk_level: γ; padrão vem da configuração
        epsilon: Raios de ambiguidade (opcional)
    """
    errors = np.asarray(raw_errors, dtype=float)
    if errors.ndim != 2 or errors.shape[1] == 0:
        raise DimensionMismatch("raw_errors deve ser parques x amostras, com amostras")
    xi_lower = np.broadcast_to(np.asarray(xi_lower, dtype=float), (errors.shape[0],))
    xi_upper = np.broadcast_to(np.asarray(xi_upper, dtype=float), (errors.shape[0],))
    if np.any(xi_lower > 0) or np.any(xi_upper < 0):
        raise CaseValidationError("xi_bounds", "o suporte deve conter zero")

    clamped = np.clip(errors, xi_lower[:, None], xi_upper[:, None])
    n_clamped = int(np.sum(clamped != errors))
    if n_clamped:
        logger.warning(f"{n_clamped} erros empíricos recortados ao suporte [ξ̲, ξ̄]")

    return EmpiricalErrorModel(
        errors=clamped,
        xi_lower=np.array(xi_lower),
        xi_upper=np.array(xi_upper),
        epsilon=None if epsilon is None else np.asarray(epsilon, dtype=float),
        risk_level=settings.risk_level if risk_level is None else risk_level,
    )


def empirical_errors(
    theta: np.ndarray,
    uq_data: Dataset,
    xi_bound: Optional[float] = None,
    risk_level: Optional[float] = None,
) -> EmpiricalErrorModel:
    """
    ξ̂_ji = y_ji − θ_jᵀx_ji sobre o conjunto de quantificação de incerteza

    O raio ε fica indefinido; é atribuído pelo calibrador.

    Raises:
        DimensionMismatch: Dimensões de Θ incompatíveis com os dados
    """
    if uq_data.role != DatasetRole.UQ:
        raise DimensionMismatch("empirical_errors exige um conjunto com role=uq")
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        theta = theta.reshape(-1, 1)
    if theta.shape[1] != uq_data.n_wind:
        raise DimensionMismatch(f"Θ tem {theta.shape[1]} parques, dados têm {uq_data.n_wind}")
    bound = settings.xi_bound_mw if xi_bound is None else xi_bound
    errors = (uq_data.actuals - forecast(theta, uq_data.features)).T
    return build_error_model(errors, -bound, bound, risk_level)


def with_epsilon(model: EmpiricalErrorModel, epsilon) -> EmpiricalErrorModel:
    """Cópia do modelo com novos raios ε"""
    epsilon = np.broadcast_to(np.asarray(epsilon, dtype=float), (model.n_wind,))
    return EmpiricalErrorModel(
        errors=model.errors,
        xi_lower=model.xi_lower,
        xi_upper=model.xi_upper,
        epsilon=np.array(epsilon),
        risk_level=model.risk_level,
    )


def wasserstein_1d(samples_a, samples_b) -> float:
    """
    Distância de Wasserstein de ordem 1 entre duas medidas empíricas de pesos iguais

    Raises:
        EmptyInput: Se alguma amostra é vazia
    """
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyInput("Amostras vazias para a distância de Wasserstein")
    return float(wasserstein_distance(a, b))


def distribution_shift(model: EmpiricalErrorModel, errors: np.ndarray) -> np.ndarray:
    """
    Distância W1 por parque entre os erros de UQ e outra amostra de erros
    (por exemplo, os resíduos da calibração)
    """
    errors = np.asarray(errors, dtype=float)
    if errors.ndim == 1:
        errors = errors.reshape(1, -1)
    if errors.shape[0] != model.n_wind:
        raise DimensionMismatch(f"{errors.shape[0]} parques vs {model.n_wind} no modelo")
    return np.array([wasserstein_1d(model.errors[j], errors[j]) for j in range(model.n_wind)])
