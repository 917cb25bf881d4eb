from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from pydantic import model_validator

from app.exceptions import DimensionMismatch
from app.models.base import DomainModel
from app.schemas.solver import KKTResiduals, SolverStatus


class StandardFormProgram(DomainModel):
    """min ½xᵀQx + cᵀx  s.a.  Ex = b,  Gx ≤ h"""

    quadratic_term: sp.csr_matrix
    linear_cost: np.ndarray
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    ineq_matrix: sp.csr_matrix
    ineq_rhs: np.ndarray
    variable_names: Optional[List[str]] = None

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data):
        if not isinstance(data, dict):
            return data
        n = np.asarray(data["linear_cost"]).shape[0]
        if data.get("quadratic_term") is None:
            data["quadratic_term"] = sp.csr_matrix((n, n))
        if data.get("eq_matrix") is None:
            data["eq_matrix"] = sp.csr_matrix((0, n))
            data["eq_rhs"] = np.zeros(0)
        if data.get("ineq_matrix") is None:
            data["ineq_matrix"] = sp.csr_matrix((0, n))
            data["ineq_rhs"] = np.zeros(0)
        for key in ("quadratic_term", "eq_matrix", "ineq_matrix"):
            data[key] = sp.csr_matrix(data[key], dtype=float)
        for key in ("linear_cost", "eq_rhs", "ineq_rhs"):
            data[key] = np.atleast_1d(np.asarray(data[key], dtype=float))
        return data

    @model_validator(mode="after")
    def _check_dimensions(self):
        n = self.n
        if self.quadratic_term.shape != (n, n):
            raise DimensionMismatch(f"quadratic_term {self.quadratic_term.shape} != ({n}, {n})")
        if self.eq_matrix.shape != (self.eq_rhs.shape[0], n):
            raise DimensionMismatch(f"eq_matrix {self.eq_matrix.shape} incompatível")
        if self.ineq_matrix.shape != (self.ineq_rhs.shape[0], n):
            raise DimensionMismatch(f"ineq_matrix {self.ineq_matrix.shape} incompatível")
        if self.variable_names is not None and len(self.variable_names) != n:
            raise DimensionMismatch("variable_names deve nomear todas as variáveis")
        asymmetry = abs(self.quadratic_term - self.quadratic_term.T)
        if asymmetry.nnz and asymmetry.max() > 1e-12:
            raise DimensionMismatch("quadratic_term não é simétrica")
        return self

    @property
    def n(self) -> int:
        return int(self.linear_cost.shape[0])

    @property
    def m_eq(self) -> int:
        return int(self.eq_rhs.shape[0])

    @property
    def m_ineq(self) -> int:
        return int(self.ineq_rhs.shape[0])

    def objective_value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.quadratic_term @ x) + self.linear_cost @ x)

    def with_regularization(self, rho: float) -> "StandardFormProgram":
        """Cópia com Q + ρI"""
        return self.model_copy(
            update={"quadratic_term": (self.quadratic_term + rho * sp.identity(self.n)).tocsr()}
        )


class SolverSolution(DomainModel):
    primal: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    objective: float
    status: SolverStatus
    kkt_residuals: KKTResiduals
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status == SolverStatus.OPTIMAL
