"""
Operador do sistema no modo distribuído: limpa os dois estágios do mercado,
calcula ∂L/∂ŷ_j por agente e atualiza ε localmente. Nunca conhece Θ.
"""
import asyncio
import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from app.config.settings import settings
from app.distributed.wire import Channel, parse_endpoint
from app.exceptions import (
    AgentTimeout,
    ConnectionLost,
    DimensionMismatch,
    NonFiniteGradient,
    ProtocolError,
    VersionMismatch,
)
from app.models.calibration import CalibrationState
from app.models.dataset import Dataset
from app.models.network import NetworkCase
from app.models.uncertainty import EmpiricalErrorModel
from app.schemas.calibration import CalibrationConfig, LossBreakdown
from app.schemas.protocol import (
    ErrorCode,
    ForecastReply,
    GradSignal,
    Hello,
    MessageType,
    RoundResult,
    RoundStart,
    Shutdown,
    UpdateAck,
)
from app.services.calibrator import forecast_mse, market_pass, should_stop, update_epsilon
from app.services.datasets import validate_dataset
from app.services.uncertainty import build_error_model, with_epsilon

logger = logging.getLogger(__name__)


class AgentSession:
    """Conexão aceita e identificada de um agente"""

    def __init__(self, channel: Channel, hello: Hello):
        self.channel = channel
        self.agent_id = hello.agent_id
        self.farms = list(hello.farms)
        self.n_features = hello.n_features

    async def expect(self, message_type: MessageType, phase: str, iteration: int, timeout: float):
        """Recebe a próxima mensagem, que deve ser do tipo e rodada indicados"""
        try:
            envelope, payload = await self.channel.receive(timeout)
        except asyncio.TimeoutError as exc:
            raise AgentTimeout(self.agent_id, phase) from exc
        except ConnectionLost as exc:
            raise AgentTimeout(self.agent_id, phase, "conexão encerrada") from exc
        if envelope.type == MessageType.PROTOCOL_ERROR:
            raise ProtocolError(payload.code.value, f"agente {self.agent_id}: {payload.detail}")
        if envelope.type != message_type:
            await self.channel.send_error(ErrorCode.UNEXPECTED, envelope.type.value, iteration)
            raise ProtocolError(
                ErrorCode.UNEXPECTED.value,
                f"{envelope.type.value} de {self.agent_id}, esperado {message_type.value}",
            )
        if envelope.iter != iteration:
            await self.channel.send_error(ErrorCode.BAD_ITER, f"iter {envelope.iter}", iteration)
            raise ProtocolError(
                ErrorCode.BAD_ITER.value, f"iter {envelope.iter} de {self.agent_id}, esperado {iteration}"
            )
        if getattr(payload, "agent_id", self.agent_id) != self.agent_id:
            raise ProtocolError(ErrorCode.MALFORMED.value, f"agent_id trocado na sessão {self.agent_id}")
        return payload


class OperatorServer:
    """
    Coordena as rodadas síncronas com N agentes

    O estado só é alterado ao fim de uma rodada completa; uma rodada abortada
    deixa o estado igual ao da última rodada concluída.
    """

    def __init__(
        self,
        case: NetworkCase,
        cal_data: Dataset,
        n_agents: int,
        eps0,
        config: Optional[CalibrationConfig] = None,
        phase_timeout: Optional[float] = None,
    ):
        validate_dataset(case, cal_data)
        self.case = case
        self.cal_data = cal_data
        self.n_agents = n_agents
        self.config = config or CalibrationConfig()
        self.phase_timeout = phase_timeout or settings.phase_timeout_s
        epsilon = np.array(np.broadcast_to(np.asarray(eps0, dtype=float), (case.n_wind,)))
        if np.any(epsilon < self.config.eps_floor):
            raise ValueError(f"ε0={epsilon.tolist()} abaixo do piso {self.config.eps_floor}")
        self.state = CalibrationState(theta=None, epsilon=epsilon, stop_delta=self.config.stop_delta)
        self.sessions: List[AgentSession] = []
        self.uq: Optional[EmpiricalErrorModel] = None
        self.port: Optional[int] = None
        self._server: Optional[asyncio.AbstractServer] = None
        self._pending: asyncio.Queue = asyncio.Queue()
        self._channels: List[Channel] = []

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> int:
        """Abre o socket de escuta; com port=0 o sistema escolhe a porta"""
        self._server = await asyncio.start_server(self._accept, host, port)
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info(f"Operador escutando em {host}:{self.port}, aguardando {self.n_agents} agente(s)")
        return self.port

    async def _accept(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        channel = Channel(reader, writer, peer=str(peer))
        self._channels.append(channel)
        await self._pending.put(channel)

    async def run(self) -> CalibrationState:
        """
        Executa o protocolo completo até o critério de parada

        Raises:
            AgentTimeout: Agente não respondeu no prazo ou desconectou
            ProtocolError: Mensagem malformada, fora de ordem ou inesperada
            VersionMismatch: Agente com versão de protocolo diferente
        """
        if self._server is None:
            await self.start()
        try:
            await self._handshake()
            while self.state.iter < self.config.max_iters:
                if await self._round():
                    break
            await self._broadcast_shutdown("calibração concluída")
        except Exception as exc:
            logger.error(f"Rodada {self.state.iter} abortada: {exc}")
            await self._broadcast_shutdown(f"abortado: {exc}")
            raise
        finally:
            await self.close()
        logger.info(
            f"Calibração distribuída encerrada após {self.state.iter} rodadas "
            f"(convergiu={self.state.converged})"
        )
        return self.state

    async def _handshake(self) -> None:
        submissions: Dict[int, List[float]] = {}
        for _ in range(self.n_agents):
            try:
                channel = await asyncio.wait_for(self._pending.get(), settings.agent_idle_timeout_s)
            except asyncio.TimeoutError as exc:
                raise AgentTimeout("?", "conexão") from exc
            session = await self._greet(channel)
            self.sessions.append(session)
            submission = await session.expect(MessageType.UQ_SUBMIT, "uq", 0, self.phase_timeout)
            if len(submission.errors) != len(session.farms):
                await channel.send_error(ErrorCode.BAD_LENGTH, "um vetor de erros por parque")
                raise ProtocolError(ErrorCode.BAD_LENGTH.value, f"UqSubmit de {session.agent_id}")
            for farm, errors in zip(session.farms, submission.errors):
                submissions[farm] = errors

        owned = sorted(farm for session in self.sessions for farm in session.farms)
        if owned != list(range(self.case.n_wind)):
            for session in self.sessions:
                await session.channel.send_error(ErrorCode.BAD_FARMS, f"parques {owned}")
            raise ProtocolError(
                ErrorCode.BAD_FARMS.value,
                f"parques {owned} não particionam 0..{self.case.n_wind - 1}",
            )
        if len({len(errors) for errors in submissions.values()}) != 1:
            raise ProtocolError(ErrorCode.BAD_LENGTH.value, "número de erros difere entre parques")

        raw = np.array([submissions[j] for j in range(self.case.n_wind)], dtype=float)
        bound = self.config.xi_bound
        self.uq = build_error_model(raw, -bound, bound, self.config.risk_level)
        logger.info(f"Handshake concluído: {len(self.sessions)} agente(s), N_s={self.uq.n_samples}")

    async def _greet(self, channel: Channel) -> AgentSession:
        try:
            envelope, hello = await channel.receive(self.phase_timeout)
        except asyncio.TimeoutError as exc:
            raise AgentTimeout(channel.peer, "hello") from exc
        except ConnectionLost as exc:
            raise AgentTimeout(channel.peer, "hello", "conexão encerrada") from exc
        if envelope.type != MessageType.HELLO:
            await channel.send_error(ErrorCode.UNEXPECTED, f"esperado Hello, recebido {envelope.type.value}")
            raise ProtocolError(ErrorCode.UNEXPECTED.value, envelope.type.value)
        if hello.version != settings.protocol_version:
            await channel.send_error(ErrorCode.VERSION_MISMATCH, f"operador usa versão {settings.protocol_version}")
            raise VersionMismatch(settings.protocol_version, hello.version)
        if hello.n_features != self.cal_data.n_features:
            await channel.send_error(ErrorCode.MALFORMED, "n_features difere do conjunto de calibração")
            raise DimensionMismatch(
                f"Agente {hello.agent_id} com {hello.n_features} atributos, dados têm {self.cal_data.n_features}"
            )
        reply = Hello(
            agent_id="operator",
            farms=hello.farms,
            n_features=self.cal_data.n_features,
            version=settings.protocol_version,
        )
        await channel.send(MessageType.HELLO, reply)
        logger.info(f"Agente {hello.agent_id} conectado com parques {hello.farms}")
        return AgentSession(channel, hello)

    async def _gather(self, message_type: MessageType, phase: str, iteration: int) -> list:
        return await asyncio.gather(
            *(s.expect(message_type, phase, iteration, self.phase_timeout) for s in self.sessions)
        )

    async def _round(self) -> bool:
        """Uma rodada; devolve True quando o critério de parada foi atingido"""
        iteration = self.state.iter
        features, actuals = self.cal_data.features, self.cal_data.actuals
        n_samples = self.cal_data.n_samples

        for session in self.sessions:
            start = RoundStart(samples=features.tolist(), actuals=actuals[:, session.farms].tolist())
            await session.channel.send(MessageType.ROUND_START, start, iteration)

        replies: List[ForecastReply] = await self._gather(MessageType.FORECAST_REPLY, "forecast", iteration)
        forecasts = np.zeros((n_samples, self.case.n_wind))
        for session, reply in zip(self.sessions, replies):
            block = np.array(reply.forecasts, dtype=float)
            if block.shape != (n_samples, len(session.farms)):
                await session.channel.send_error(ErrorCode.BAD_LENGTH, f"forma {block.shape}", iteration)
                raise ProtocolError(ErrorCode.BAD_LENGTH.value, f"ForecastReply de {session.agent_id}")
            forecasts[:, session.farms] = block

        uq = with_epsilon(self.uq, self.state.epsilon)
        result = await asyncio.to_thread(market_pass, self.case, uq, forecasts, actuals, self.config)
        breakdown = LossBreakdown.compose(
            forecast_mse(forecasts, actuals), result.task1, result.task2, self.config.eta
        )
        if not (np.all(np.isfinite(result.d_task_d_yhat)) and np.all(np.isfinite(result.d_task_d_eps))):
            raise NonFiniteGradient("Gradiente com valores não finitos")

        stop_delta = self.state.stop_delta
        if stop_delta is None:
            stop_delta = self.config.resolve_stop_delta(breakdown.total)
        if should_stop(self.state.loss_history + [breakdown], stop_delta):
            self._commit(breakdown, self.state.epsilon, stop_delta, converged=True)
            await self._broadcast_result(iteration, breakdown, converged=True)
            return True

        for session in self.sessions:
            signal = GradSignal(
                agent_id=session.agent_id,
                d_loss_d_yhat=result.d_task_d_yhat[:, session.farms].tolist(),
            )
            await session.channel.send(MessageType.GRAD_SIGNAL, signal, iteration)
        acks: List[UpdateAck] = await self._gather(MessageType.UPDATE_ACK, "update", iteration)
        for session, ack in zip(self.sessions, acks):
            if not ack.local_mse_grad_applied:
                logger.warning(f"Agente {session.agent_id} não aplicou o termo de MSE")

        next_epsilon = update_epsilon(
            self.state.epsilon, result.d_task_d_eps, self.config.lr_eps, self.config.eps_floor
        )
        self._commit(breakdown, next_epsilon, stop_delta, converged=False)
        await self._broadcast_result(iteration, breakdown, converged=False)
        return False

    def _commit(self, breakdown: LossBreakdown, next_epsilon: np.ndarray, stop_delta: float, converged: bool):
        self.state.record(breakdown, None, self.state.epsilon)
        self.state.stop_delta = stop_delta
        self.state.epsilon = next_epsilon
        self.state.converged = converged
        logger.info(
            f"Rodada {self.state.iter}: total={breakdown.total:.6f} mse={breakdown.mse:.4f} "
            f"eps={self.state.epsilon_history[-1]}"
        )

    async def _broadcast_result(self, iteration: int, breakdown: LossBreakdown, converged: bool):
        message = RoundResult(
            breakdown=breakdown, epsilon=[float(e) for e in self.state.epsilon], converged=converged
        )
        for session in self.sessions:
            await session.channel.send(MessageType.ROUND_RESULT, message, iteration)

    async def _broadcast_shutdown(self, reason: str) -> None:
        for session in self.sessions:
            try:
                await session.channel.send(MessageType.SHUTDOWN, Shutdown(reason=reason), self.state.iter)
            except ConnectionLost:
                logger.debug(f"Agente {session.agent_id} já desconectado")

    async def close(self) -> None:
        # inclui conexões recusadas antes do registro
        for channel in self._channels:
            await channel.close()
        self._channels = []
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None


async def serve(
    case: NetworkCase,
    cal_data: Dataset,
    n_agents: int,
    eps0,
    config: Optional[CalibrationConfig],
    host: str,
    port: int,
    on_abort: Optional[Callable[[CalibrationState], None]] = None,
) -> CalibrationState:
    server = OperatorServer(case, cal_data, n_agents, eps0, config)
    await server.start(host, port)
    try:
        return await server.run()
    except Exception:
        if on_abort is not None:
            on_abort(server.state)
        raise


def run_operator(
    case: NetworkCase,
    cal_data: Dataset,
    config: Optional[CalibrationConfig],
    listen_endpoint: str,
    n_agents: int,
    eps0=None,
    on_abort: Optional[Callable[[CalibrationState], None]] = None,
) -> CalibrationState:
    """
    Executa o operador até o fim da calibração

    Args:
        case: Rede
        cal_data: Conjunto de calibração (compartilhado com os agentes)
        config: Hiperparâmetros (η, κ_ε, critério de parada)
        listen_endpoint: 'host:porta'
        n_agents: Número de agentes esperados
        eps0: ε inicial; padrão vem da configuração
        on_abort: Recebe o estado da última rodada concluída se o protocolo falhar

    Returns:
        CalibrationState com theta=None
    """
    host, port = parse_endpoint(listen_endpoint)
    eps0 = settings.eps0 if eps0 is None else eps0
    return asyncio.run(serve(case, cal_data, n_agents, eps0, config, host, port, on_abort))
