"""
Enquadramento das mensagens: prefixo de 4 bytes big-endian com o tamanho,
seguido de um objeto JSON UTF-8 {type, seq, iter, payload}
"""
import asyncio
import json
import logging
import struct
from typing import Optional, Tuple

from pydantic import ValidationError

from app.exceptions import ConnectionLost, ProtocolError
from app.schemas.protocol import (
    PAYLOAD_MODELS,
    Envelope,
    ErrorCode,
    MessageType,
    Payload,
    ProtocolErrorMessage,
)

logger = logging.getLogger(__name__)

HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 64 * 1024 * 1024


def encode_frame(message_type: MessageType, payload: Payload, seq: int, iteration: int) -> bytes:
    """Serializa uma mensagem com o prefixo de tamanho"""
    envelope = Envelope(
        type=message_type, seq=seq, iter=iteration, payload=payload.model_dump(mode="json")
    )
    body = json.dumps(
        envelope.model_dump(mode="json"), separators=(",", ":"), allow_nan=False
    ).encode("utf-8")
    return HEADER.pack(len(body)) + body


def decode_body(body: bytes) -> Tuple[Envelope, Payload]:
    """
    Valida o corpo JSON de um quadro

    Raises:
        ProtocolError: MALFORMED se o JSON ou o conteúdo não seguem o esquema
    """
    try:
        envelope = Envelope.model_validate(json.loads(body.decode("utf-8")))
        payload = PAYLOAD_MODELS[envelope.type].model_validate(envelope.payload)
    except (UnicodeDecodeError, json.JSONDecodeError, ValidationError) as exc:
        raise ProtocolError(ErrorCode.MALFORMED.value, str(exc)) from exc
    return envelope, payload


class Channel:
    """Conexão de fluxo com números de sequência independentes por sentido"""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter, peer: str = "?"):
        self.reader = reader
        self.writer = writer
        self.peer = peer
        self.send_seq = 0
        self.recv_seq = 0

    async def send(self, message_type: MessageType, payload: Payload, iteration: int = 0) -> None:
        frame = encode_frame(message_type, payload, self.send_seq, iteration)
        self.send_seq += 1
        try:
            self.writer.write(frame)
            await self.writer.drain()
        except (ConnectionError, RuntimeError) as exc:
            raise ConnectionLost(f"Conexão com {self.peer} perdida ao enviar: {exc}") from exc
        logger.debug(f"→ {self.peer}: {message_type.value} seq={self.send_seq - 1} iter={iteration}")

    async def send_error(self, code: ErrorCode, detail: str, iteration: int = 0) -> None:
        """Envia ProtocolError sem propagar falhas de transporte"""
        try:
            await self.send(MessageType.PROTOCOL_ERROR, ProtocolErrorMessage(code=code, detail=detail), iteration)
        except ConnectionLost:
            logger.debug(f"Não foi possível avisar {self.peer} sobre {code.value}")

    async def receive(self, timeout: Optional[float] = None) -> Tuple[Envelope, Payload]:
        """
        Lê o próximo quadro

        Raises:
            asyncio.TimeoutError: Prazo esgotado
            ConnectionLost: Conexão encerrada pelo par
            ProtocolError: Quadro grande demais, malformado ou fora de ordem
        """
        return await asyncio.wait_for(self._read(), timeout)

    async def _read(self) -> Tuple[Envelope, Payload]:
        try:
            header = await self.reader.readexactly(HEADER.size)
            (length,) = HEADER.unpack(header)
            if length > MAX_FRAME_BYTES:
                raise ProtocolError(ErrorCode.FRAME_TOO_LARGE.value, f"{length} bytes")
            body = await self.reader.readexactly(length)
        except (asyncio.IncompleteReadError, ConnectionError) as exc:
            raise ConnectionLost(f"Conexão com {self.peer} encerrada") from exc

        envelope, payload = decode_body(body)
        if envelope.seq != self.recv_seq:
            raise ProtocolError(
                ErrorCode.OUT_OF_ORDER.value,
                f"seq {envelope.seq} recebido de {self.peer}, esperado {self.recv_seq}",
            )
        self.recv_seq += 1
        logger.debug(f"← {self.peer}: {envelope.type.value} seq={envelope.seq} iter={envelope.iter}")
        return envelope, payload

    async def close(self) -> None:
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except (ConnectionError, RuntimeError):
            pass


def parse_endpoint(text: str) -> Tuple[str, int]:
    """'host:porta' → (host, porta)"""
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"Endereço inválido '{text}', use host:porta")
    return host, int(port)
