from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    """Registro de reprodutibilidade de uma execução"""

    command: List[str] = Field(..., description="Linha de comando completa")
    config: Dict[str, Any] = Field(default_factory=dict, description="Configuração resolvida")
    input_hashes: Dict[str, str] = Field(
        default_factory=dict, description="SHA-256 de cada arquivo de entrada"
    )
    seed: Optional[int] = None
    tool_version: str
    started_at: datetime = Field(default_factory=datetime.now)
    duration_s: float = Field(default=0.0, ge=0.0)
