from typing import Optional

import numpy as np
from pydantic import model_validator

from app.exceptions import CaseValidationError, DimensionMismatch
from app.models.base import DomainModel


class EmpiricalErrorModel(DomainModel):
    """Distribuição empírica dos erros de previsão e raios de ambiguidade"""

    errors: np.ndarray  # parques x N_s (MW)
    xi_lower: np.ndarray
    xi_upper: np.ndarray
    epsilon: Optional[np.ndarray] = None
    risk_level: float

    @model_validator(mode="after")
    def _check(self):
        if self.errors.ndim != 2:
            raise DimensionMismatch("errors deve ser parques x amostras")
        n_wind = self.errors.shape[0]
        for name in ("xi_lower", "xi_upper"):
            if getattr(self, name).shape != (n_wind,):
                raise DimensionMismatch(f"{name} deve ter {n_wind} entradas")
        if np.any(self.errors < self.xi_lower[:, None] - 1e-12) or np.any(
            self.errors > self.xi_upper[:, None] + 1e-12
        ):
            raise CaseValidationError("errors", "erro fora do suporte [ξ̲, ξ̄]")
        if self.epsilon is not None:
            if self.epsilon.shape != (n_wind,):
                raise DimensionMismatch(f"epsilon deve ter {n_wind} entradas")
            if np.any(self.epsilon < 0.0):
                raise CaseValidationError("epsilon", "raios devem ser >= 0")
        if not 0.0 < self.risk_level < 1.0:
            raise CaseValidationError("risk_level", "γ deve estar em (0, 1)")
        return self

    @property
    def n_wind(self) -> int:
        return int(self.errors.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.errors.shape[1])
