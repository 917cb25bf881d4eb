"""
Formato JSON dos arquivos de caso (rede, geradores, eólicas e demanda)
"""
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class GeneratorSpec(BaseModel):
    """Gerador convencional conectado a uma barra"""

    bus: int = Field(..., description="Rótulo da barra")
    pmin_mw: float = Field(..., description="Geração mínima (MW)")
    pmax_mw: float = Field(..., description="Geração máxima (MW)")
    cost_energy: float = Field(..., ge=0.0, description="c_g ($/MW)")
    cost_reserve: float = Field(..., ge=0.0, description="c_r ($/MW)")
    cost_activation: float = Field(..., ge=0.0, description="c_a ($/MW)")
    cost_in: float = Field(..., ge=0.0, description="Ajuste dentro da reserva ($/MW)")
    cost_out_up: float = Field(..., ge=0.0, description="Ajuste acima da reserva ($/MW)")
    cost_out_dn: float = Field(..., ge=0.0, description="Ajuste abaixo da reserva ($/MW)")


class LineSpec(BaseModel):
    """Linha de transmissão no modelo DC"""

    model_config = ConfigDict(populate_by_name=True)

    from_bus: int = Field(..., alias="from")
    to_bus: int = Field(..., alias="to")
    susceptance_pu: float = Field(..., description="Susceptância (p.u.)")
    limit_mw: float = Field(..., description="Limite térmico (MW)")


class WindSpec(BaseModel):
    """Parque eólico"""

    bus: int
    capacity_mw: float = Field(..., gt=0.0, description="Capacidade instalada (MW)")


class CaseFile(BaseModel):
    """Documento de caso completo, como lido do disco"""

    name: str = "case"
    buses: List[int] = Field(..., min_length=1, description="Rótulos das barras")
    generators: List[GeneratorSpec] = Field(..., min_length=1)
    lines: List[LineSpec] = Field(..., min_length=1)
    wind: List[WindSpec] = Field(..., min_length=1)
    demand_mw: List[float]
    ptdf: Optional[Union[List[float], List[List[float]]]] = Field(
        default=None, description="PTDF explícita (linhas x barras, row-major)"
    )
    slack_bus: Optional[int] = None
