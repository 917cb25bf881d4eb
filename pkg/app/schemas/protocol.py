"""
Mensagens do protocolo operador/agente.

Nenhuma mensagem possui campo de parâmetros do modelo de previsão: os
agentes mantêm θ_j localmente.
"""
from enum import Enum
from typing import Dict, List, Type

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.calibration import LossBreakdown


class MessageType(str, Enum):
    HELLO = "Hello"
    UQ_SUBMIT = "UqSubmit"
    ROUND_START = "RoundStart"
    FORECAST_REPLY = "ForecastReply"
    GRAD_SIGNAL = "GradSignal"
    UPDATE_ACK = "UpdateAck"
    ROUND_RESULT = "RoundResult"
    SHUTDOWN = "Shutdown"
    PROTOCOL_ERROR = "ProtocolError"


class ErrorCode(str, Enum):
    BAD_LENGTH = "BAD_LENGTH"
    OUT_OF_ORDER = "OUT_OF_ORDER"
    BAD_ITER = "BAD_ITER"
    MALFORMED = "MALFORMED"
    UNEXPECTED = "UNEXPECTED"
    FRAME_TOO_LARGE = "FRAME_TOO_LARGE"
    VERSION_MISMATCH = "VERSION_MISMATCH"
    BAD_FARMS = "BAD_FARMS"


class Payload(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Hello(Payload):
    agent_id: str
    farms: List[int] = Field(..., description="Índices (0-based) dos parques do agente")
    n_features: int = Field(..., ge=1)
    version: str


class UqSubmit(Payload):
    agent_id: str
    errors: List[List[float]] = Field(..., description="Erros ξ̂ por parque, na ordem de farms")


class RoundStart(Payload):
    samples: List[List[float]] = Field(..., description="Vetores de atributos x_i")
    actuals: List[List[float]] = Field(..., description="y_i dos parques do agente, por amostra")


class ForecastReply(Payload):
    agent_id: str
    forecasts: List[List[float]] = Field(..., description="ŷ por amostra e parque do agente")


class GradSignal(Payload):
    agent_id: str
    d_loss_d_yhat: List[List[float]] = Field(..., description="∂L/∂ŷ por amostra e parque")


class UpdateAck(Payload):
    agent_id: str
    local_mse_grad_applied: bool


class RoundResult(Payload):
    breakdown: LossBreakdown
    epsilon: List[float]
    converged: bool = False


class Shutdown(Payload):
    reason: str


class ProtocolErrorMessage(Payload):
    code: ErrorCode
    detail: str = ""


PAYLOAD_MODELS: Dict[MessageType, Type[Payload]] = {
    MessageType.HELLO: Hello,
    MessageType.UQ_SUBMIT: UqSubmit,
    MessageType.ROUND_START: RoundStart,
    MessageType.FORECAST_REPLY: ForecastReply,
    MessageType.GRAD_SIGNAL: GradSignal,
    MessageType.UPDATE_ACK: UpdateAck,
    MessageType.ROUND_RESULT: RoundResult,
    MessageType.SHUTDOWN: Shutdown,
    MessageType.PROTOCOL_ERROR: ProtocolErrorMessage,
}


class Envelope(BaseModel):
    """Envelope comum: tipo, número de sequência, rodada e conteúdo"""

    model_config = ConfigDict(extra="forbid")

    type: MessageType
    seq: int = Field(..., ge=0)
    iter: int = Field(..., ge=0)
    payload: dict
