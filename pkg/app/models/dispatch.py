import numpy as np

from app.models.base import DomainModel
from app.schemas.solver import SolverStatus


class DispatchDuals(DomainModel):
    """Duais das restrições originais do despacho (λ livre, demais >= 0)"""

    lambda_balance: float
    mu_lo: np.ndarray
    mu_hi: np.ndarray
    phi_lo: np.ndarray
    phi_hi: np.ndarray
    nu_lo: np.ndarray
    nu_hi: np.ndarray


class DispatchSolution(DomainModel):
    """Ajustes de tempo real e duais para o teorema do envelope"""

    r_in: np.ndarray  # com sinal: r_in⁺ − r_in⁻
    r_in_up: np.ndarray
    r_in_dn: np.ndarray
    r_out_up: np.ndarray
    r_out_dn: np.ndarray
    shed_load: np.ndarray  # por barra; zero sem modo de corte
    spill: np.ndarray  # por parque
    cost: float
    duals: DispatchDuals
    status: SolverStatus

    @property
    def adjustment(self) -> np.ndarray:
        """u = r_in + r_out⁺ − r_out⁻ por gerador"""
        return self.r_in + self.r_out_up - self.r_out_dn


class DispatchPartials(DomainModel):
    """∂custo/∂(g*, r⁺*, r⁻*)"""

    d_g: np.ndarray
    d_r_plus: np.ndarray
    d_r_minus: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.d_g, self.d_r_plus, self.d_r_minus])
