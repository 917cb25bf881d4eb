from typing import Optional

from pydantic import BaseModel, Field, model_validator

from app.config.settings import settings
from app.schemas.solver import SolverOptions


class LayerConfig(BaseModel):
    """Configuração da camada diferenciável do agendamento"""

    regularization_rho: float = Field(
        default_factory=lambda: settings.regularization_rho,
        ge=0.0,
        description="Peso ρ da regularização ρ‖x‖²/2",
    )
    active_set_tol: float = Field(
        default_factory=lambda: settings.active_set_tol,
        gt=0.0,
        description="Limiar de folga/dual para restrições ativas",
    )
    fd_step: float = Field(
        default_factory=lambda: settings.fd_step,
        gt=0.0,
        description="Passo relativo das diferenças finitas",
    )

    def require_regularization(self) -> None:
        if self.regularization_rho <= 0.0:
            raise ValueError("regularization_rho deve ser > 0 para jacobianas analíticas")


class DispatchOptions(BaseModel):
    """Opções do despacho em tempo real"""

    load_shed_cost: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="Preço do corte de carga/vertimento; None = inviabilidade é erro",
    )
    solver: SolverOptions = Field(default_factory=SolverOptions)


class CalibrationConfig(BaseModel):
    """Hiperparâmetros da calibração de ponta a ponta"""

    eta: float = Field(default_factory=lambda: settings.eta, ge=0.0, description="Peso η do MSE")
    lr_theta: float = Field(default_factory=lambda: settings.lr_theta, ge=0.0)
    lr_eps: float = Field(default_factory=lambda: settings.lr_eps, ge=0.0)
    stop_delta: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="ΔL_min; None = razão configurada vezes a perda inicial",
    )
    max_iters: int = Field(default_factory=lambda: settings.max_iters, ge=0)
    eps_floor: float = Field(default=0.0, ge=0.0)
    risk_level: float = Field(default_factory=lambda: settings.risk_level, gt=0.0, lt=1.0)
    xi_bound: float = Field(default_factory=lambda: settings.xi_bound_mw, gt=0.0)
    seed: int = 0
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)
    layer: LayerConfig = Field(default_factory=LayerConfig)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    dispatch: DispatchOptions = Field(default_factory=DispatchOptions)

    def resolve_stop_delta(self, initial_loss: float) -> float:
        if self.stop_delta is not None:
            return self.stop_delta
        return max(settings.stop_delta_ratio * abs(initial_loss), 1e-12)


class LossBreakdown(BaseModel):
    """Decomposição da perda total de uma iteração"""

    mse: float = Field(..., description="Erro quadrático médio (MW²)")
    task1: float = Field(..., description="Custo de agendamento médio ($)")
    task2: float = Field(..., description="Custo de despacho médio ($)")
    eta: float = Field(..., ge=0.0)
    total: float

    @classmethod
    def compose(cls, mse: float, task1: float, task2: float, eta: float) -> "LossBreakdown":
        return cls(mse=mse, task1=task1, task2=task2, eta=eta, total=task1 + task2 + eta * mse)

    @model_validator(mode="after")
    def check_total(self):
        expected = self.task1 + self.task2 + self.eta * self.mse
        if abs(self.total - expected) > 1e-9 * max(1.0, abs(expected)):
            raise ValueError(f"total={self.total} difere de task1+task2+eta*mse={expected}")
        return self
