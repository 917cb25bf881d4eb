from enum import Enum

from pydantic import BaseModel, Field

from app.config.settings import settings


class SolverStatus(str, Enum):
    """Estados de término do solver de pontos interiores"""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERS = "max_iters"


class SolverOptions(BaseModel):
    """Parâmetros do solver primal-dual"""

    tol: float = Field(
        default_factory=lambda: settings.solver_tol,
        gt=0.0,
        description="Tolerância relativa dos resíduos KKT",
    )
    max_iters: int = Field(
        default_factory=lambda: settings.solver_max_iters,
        ge=1,
        description="Número máximo de iterações",
    )
    static_regularization: float = Field(
        default_factory=lambda: settings.solver_static_reg,
        ge=0.0,
        description="Regularização estática do sistema aumentado",
    )
    step_fraction: float = Field(
        default_factory=lambda: settings.solver_step_fraction,
        gt=0.0,
        lt=1.0,
        description="Fração do passo máximo até a fronteira",
    )


class KKTResiduals(BaseModel):
    """Resíduos relativos das condições de otimalidade"""

    stationarity: float = Field(..., ge=0.0)
    primal_feas: float = Field(..., ge=0.0)
    dual_feas: float = Field(..., ge=0.0)
    complementarity: float = Field(..., ge=0.0)
    gap: float = Field(default=0.0, ge=0.0, description="Gap relativo primal-dual")

    def max_residual(self) -> float:
        return max(
            self.stationarity, self.primal_feas, self.dual_feas, self.complementarity
        )
