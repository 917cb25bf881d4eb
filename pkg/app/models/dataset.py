from enum import Enum

import numpy as np
from pydantic import model_validator

from app.exceptions import DimensionMismatch
from app.models.base import DomainModel


class DatasetRole(str, Enum):
    """Uso do conjunto: quantificação de incerteza (N_s) ou calibração (N_c)"""

    UQ = "uq"
    CALIBRATION = "calibration"


class Dataset(DomainModel):
    features: np.ndarray  # amostras x atributos
    actuals: np.ndarray  # amostras x parques (MW)
    role: DatasetRole

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data):
        if isinstance(data, dict):
            for key in ("features", "actuals"):
                if key in data and data[key] is not None:
                    array = np.asarray(data[key], dtype=float)
                    if array.ndim == 1:
                        array = array.reshape(-1, 1)
                    data[key] = array
        return data

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.features.ndim != 2 or self.actuals.ndim != 2:
            raise DimensionMismatch("features e actuals devem ser matrizes")
        if self.features.shape[0] != self.actuals.shape[0]:
            raise DimensionMismatch(
                f"{self.features.shape[0]} amostras de atributos vs "
                f"{self.actuals.shape[0]} amostras de geração"
            )
        return self

    @property
    def n_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_wind(self) -> int:
        return int(self.actuals.shape[1])

    def select_farms(self, farms) -> "Dataset":
        """Subconjunto de colunas de geração (visão de um agente)"""
        return Dataset(features=self.features, actuals=self.actuals[:, list(farms)], role=self.role)
