"""
Agente de previsão eólica: guarda θ_j, responde previsões e aplica a própria
atualização a partir de ∂L/∂ŷ_j recebido do operador
"""
import asyncio
import logging
from typing import Optional, Sequence

import numpy as np

from app.config.settings import settings
from app.distributed.wire import Channel, parse_endpoint
from app.exceptions import ConnectionLost, DimensionMismatch, ProtocolError, VersionMismatch
from app.models.calibration import AgentState
from app.models.dataset import Dataset, DatasetRole
from app.schemas.protocol import (
    ErrorCode,
    ForecastReply,
    GradSignal,
    Hello,
    MessageType,
    RoundResult,
    RoundStart,
    UpdateAck,
    UqSubmit,
)
from app.services.calibrator import farm_gradient
from app.services.datasets import forecast

logger = logging.getLogger(__name__)


class ForecastAgent:
    """Laço requisição/resposta de um agente; θ_j nunca é serializado"""

    def __init__(
        self,
        agent_id: str,
        farms: Sequence[int],
        uq_data: Dataset,
        theta0,
        lr_theta: Optional[float] = None,
        eta: Optional[float] = None,
        idle_timeout: Optional[float] = None,
    ):
        theta = np.array(theta0, dtype=float)
        if theta.ndim == 1:
            theta = theta.reshape(-1, 1)
        if uq_data.role != DatasetRole.UQ:
            raise DimensionMismatch("O agente precisa de um conjunto com role=uq")
        if theta.shape != (uq_data.n_features, len(farms)) or uq_data.n_wind != len(farms):
            raise DimensionMismatch(
                f"θ {theta.shape} e dados ({uq_data.n_features}, {uq_data.n_wind}) "
                f"incompatíveis com {len(farms)} parque(s)"
            )
        self.uq_data = uq_data
        self.state = AgentState(
            agent_id=agent_id,
            farms=list(farms),
            theta=theta,
            lr_theta=settings.lr_theta if lr_theta is None else lr_theta,
            eta=settings.eta if eta is None else eta,
        )
        self.idle_timeout = idle_timeout or settings.agent_idle_timeout_s
        self._round: Optional[dict] = None

    @property
    def theta(self) -> np.ndarray:
        return self.state.theta

    def local_errors(self) -> np.ndarray:
        """ξ̂ por parque no conjunto de UQ do agente"""
        return (self.uq_data.actuals - forecast(self.state.theta, self.uq_data.features)).T

    def apply_gradient(self, d_loss_d_yhat: np.ndarray) -> None:
        """θ_j ← θ_j − κ_θ[(1/N) Xᵀ ∂L/∂ŷ_j + η·gradiente local do MSE]"""
        features = self._round["features"]
        actuals = self._round["actuals"]
        forecasts = self._round["forecasts"]
        theta = self.state.theta.copy()
        for j in range(theta.shape[1]):
            gradient = farm_gradient(
                features, d_loss_d_yhat[:, j], actuals[:, j], forecasts[:, j], self.state.eta
            )
            theta[:, j] = theta[:, j] - self.state.lr_theta * gradient
        self.state.theta = theta

    async def run(self, host: str, port: int) -> np.ndarray:
        """
        Conecta ao operador e participa das rodadas até o Shutdown

        Returns:
            θ final do agente

        Raises:
            ConnectionLost: Operador inacessível ou conexão encerrada
            VersionMismatch: Operador com outra versão de protocolo
            ProtocolError: Mensagem inválida
        """
        try:
            reader, writer = await asyncio.open_connection(host, port)
        except OSError as exc:
            raise ConnectionLost(f"Operador inacessível em {host}:{port}: {exc}") from exc
        channel = Channel(reader, writer, peer="operator")
        try:
            await self._handshake(channel)
            await self._loop(channel)
        finally:
            await channel.close()
        return self.state.theta

    async def _handshake(self, channel: Channel) -> None:
        hello = Hello(
            agent_id=self.state.agent_id,
            farms=self.state.farms,
            n_features=self.uq_data.n_features,
            version=settings.protocol_version,
        )
        await channel.send(MessageType.HELLO, hello)
        envelope, payload = await self._receive(channel)
        if envelope.type == MessageType.PROTOCOL_ERROR:
            if payload.code == ErrorCode.VERSION_MISMATCH:
                raise VersionMismatch(settings.protocol_version, payload.detail)
            raise ProtocolError(payload.code.value, payload.detail)
        if envelope.type != MessageType.HELLO:
            raise ProtocolError(ErrorCode.UNEXPECTED.value, f"esperado Hello, recebido {envelope.type.value}")
        if payload.version != settings.protocol_version:
            raise VersionMismatch(settings.protocol_version, payload.version)

        submission = UqSubmit(agent_id=self.state.agent_id, errors=self.local_errors().tolist())
        await channel.send(MessageType.UQ_SUBMIT, submission)
        logger.info(f"Agente {self.state.agent_id} registrado com parques {self.state.farms}")

    async def _receive(self, channel: Channel):
        try:
            return await channel.receive(self.idle_timeout)
        except asyncio.TimeoutError as exc:
            raise ConnectionLost("Operador sem mensagens dentro do prazo") from exc

    async def _loop(self, channel: Channel) -> None:
        agent_id = self.state.agent_id
        while True:
            envelope, payload = await self._receive(channel)
            iteration = envelope.iter

            if envelope.type == MessageType.ROUND_START:
                await self._on_round_start(channel, payload, iteration)
            elif envelope.type == MessageType.GRAD_SIGNAL:
                await self._on_grad_signal(channel, payload, iteration)
            elif envelope.type == MessageType.ROUND_RESULT:
                result: RoundResult = payload
                logger.info(
                    f"Agente {agent_id}, rodada {iteration}: total={result.breakdown.total:.6f} "
                    f"eps={result.epsilon}"
                )
            elif envelope.type == MessageType.SHUTDOWN:
                logger.info(f"Agente {agent_id} encerrado: {payload.reason}")
                return
            elif envelope.type == MessageType.PROTOCOL_ERROR:
                raise ProtocolError(payload.code.value, payload.detail)
            else:
                await channel.send_error(ErrorCode.UNEXPECTED, envelope.type.value, iteration)
                raise ProtocolError(ErrorCode.UNEXPECTED.value, envelope.type.value)

    async def _on_round_start(self, channel: Channel, start: RoundStart, iteration: int) -> None:
        features = np.array(start.samples, dtype=float)
        actuals = np.array(start.actuals, dtype=float)
        n_farms = len(self.state.farms)
        if (
            features.ndim != 2
            or features.shape[1] != self.state.theta.shape[0]
            or actuals.shape != (features.shape[0], n_farms)
        ):
            await channel.send_error(ErrorCode.BAD_LENGTH, "RoundStart com dimensões inválidas", iteration)
            raise ProtocolError(ErrorCode.BAD_LENGTH.value, "RoundStart com dimensões inválidas")
        forecasts = forecast(self.state.theta, features)
        self._round = {"iter": iteration, "features": features, "actuals": actuals, "forecasts": forecasts}
        reply = ForecastReply(agent_id=self.state.agent_id, forecasts=forecasts.tolist())
        await channel.send(MessageType.FORECAST_REPLY, reply, iteration)

    async def _on_grad_signal(self, channel: Channel, signal: GradSignal, iteration: int) -> None:
        if self._round is None or self._round["iter"] != iteration:
            await channel.send_error(ErrorCode.BAD_ITER, f"GradSignal da rodada {iteration}", iteration)
            raise ProtocolError(ErrorCode.BAD_ITER.value, f"GradSignal sem RoundStart da rodada {iteration}")
        gradient = np.array(signal.d_loss_d_yhat, dtype=float)
        expected = self._round["forecasts"].shape
        if gradient.shape != expected:
            await channel.send_error(
                ErrorCode.BAD_LENGTH, f"forma {gradient.shape}, esperado {expected}", iteration
            )
            raise ProtocolError(
                ErrorCode.BAD_LENGTH.value, f"GradSignal com forma {gradient.shape}, esperado {expected}"
            )
        self.apply_gradient(gradient)
        self.state.last_iter = iteration
        self.state.theta_history.append(self.state.theta.tolist())
        ack = UpdateAck(agent_id=self.state.agent_id, local_mse_grad_applied=self.state.eta > 0)
        await channel.send(MessageType.UPDATE_ACK, ack, iteration)


def run_agent(
    uq_data: Dataset,
    theta0,
    operator_endpoint: str,
    farms: Sequence[int] = (0,),
    agent_id: str = "agent",
    lr_theta: Optional[float] = None,
    eta: Optional[float] = None,
) -> np.ndarray:
    """
    Executa um agente até o fim da calibração

    Args:
        uq_data: Conjunto de UQ restrito aos parques do agente
        theta0: θ inicial (atributos x parques do agente)
        operator_endpoint: 'host:porta' do operador
        farms: Índices dos parques do agente
        agent_id: Identificador
        lr_theta, eta: Passo e peso do MSE; padrão vem da configuração

    Returns:
        θ final
    """
    host, port = parse_endpoint(operator_endpoint)
    agent = ForecastAgent(agent_id, farms, uq_data, theta0, lr_theta, eta)
    return asyncio.run(agent.run(host, port))
