import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator


class DomainModel(BaseModel):
    """Base dos registros imutáveis do domínio.

    Arrays numpy recebidos são copiados e marcados como somente leitura,
    de modo que instâncias possam ser compartilhadas entre threads.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def _freeze_arrays(self):
        for name, value in list(self.__dict__.items()):
            if isinstance(value, np.ndarray):
                frozen = np.array(value, copy=True)
                frozen.setflags(write=False)
                object.__setattr__(self, name, frozen)
        return self


def as_float_array(value, ndim: int) -> np.ndarray:
    """Converte listas/escalares para array float com o número de dimensões pedido"""
    array = np.asarray(value, dtype=float)
    if array.ndim != ndim:
        raise ValueError(f"esperado array com {ndim} dimensões, recebido {array.ndim}")
    return array
