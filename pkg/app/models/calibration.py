from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.base import DomainModel
from app.schemas.calibration import LossBreakdown


class CalibrationState(BaseModel):
    """Estado mutável da calibração; alterado apenas na fronteira de iteração.

    `theta` é None no operador distribuído, que nunca conhece Θ.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    theta: Optional[np.ndarray] = None  # atributos x parques
    epsilon: np.ndarray
    iter: int = 0
    loss_history: List[LossBreakdown] = Field(default_factory=list)
    epsilon_history: List[List[float]] = Field(default_factory=list)
    theta_history: List[List[List[float]]] = Field(default_factory=list)
    converged: bool = False
    stop_delta: Optional[float] = None

    def record(self, breakdown: LossBreakdown, theta: Optional[np.ndarray], epsilon: np.ndarray):
        self.loss_history.append(breakdown)
        self.epsilon_history.append([float(e) for e in epsilon])
        if theta is not None:
            self.theta_history.append(np.asarray(theta).tolist())
        self.iter += 1


class SampleRecord(DomainModel):
    """Resultado de uma amostra: custos e gradientes com relação a ŷ e ε"""

    index: int
    task1: float
    task2: float
    d_task_d_yhat: np.ndarray  # por parque, já com a máscara de recorte
    d_task_d_eps: np.ndarray  # por parque
    clipped: bool = False


class MarketPass(DomainModel):
    """Agregado de uma passagem pelo mercado de dois estágios"""

    task1: float
    task2: float
    d_task_d_yhat: np.ndarray  # N x parques
    d_task_d_eps: np.ndarray  # média por parque
    records: List[SampleRecord]


class AgentState(BaseModel):
    """Estado privado de um agente de previsão; θ_j nunca sai do processo"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    agent_id: str
    farms: List[int]
    theta: np.ndarray  # atributos x parques do agente
    lr_theta: float
    eta: float
    last_iter: int = -1
    theta_history: List[List[List[float]]] = Field(default_factory=list)
