from typing import Optional

from pydantic import AliasChoices, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Configurações centralizadas da aplicação"""

    model_config = SettingsConfigDict(
        env_prefix="DRCAL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Rede elétrica
    default_slack_bus: int = 1  # Rótulo da barra de referência (1-based)
    ptdf_consistency_tol: float = 1e-6  # Tolerância ao comparar PTDF explícita
    wind_capacity_mw: float = 200.0

    # Quantificação de incerteza
    xi_bound_mw: float = 50.0  # Suporte simétrico do erro: ξ̄ = -ξ̲
    risk_level: float = 0.05  # γ
    feature_low: float = 0.0
    feature_high: Optional[float] = None  # None = capacidade / soma(θ0)

    # Solver de pontos interiores
    solver_tol: float = 1e-8
    solver_max_iters: int = 100
    solver_static_reg: float = 1e-10
    solver_step_fraction: float = 0.99

    # Camada diferenciável
    regularization_rho: float = 1e-6
    active_set_tol: float = 1e-7
    fd_step: float = 1e-4

    # Calibração
    eta: float = 1.0
    lr_theta: float = 1e-4
    lr_eps: float = 1e-3
    eps0: float = 1.0
    stop_delta_ratio: float = 1e-5  # ΔL_min relativo à perda inicial
    max_iters: int = 100
    workers: int = 1  # Threads para as amostras de calibração

    # Protocolo distribuído
    protocol_version: str = "1"
    phase_timeout_s: float = 30.0
    agent_idle_timeout_s: float = 600.0

    # Logging
    log_level: str = Field(
        default="INFO", validation_alias=AliasChoices("DRCAL_LOG", "LOG_LEVEL")
    )
    log_dir: str = "./logs"


# Singleton instance
settings = Settings()
