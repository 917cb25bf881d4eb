"""
Exceções do domínio.

Cada exceção carrega um `exit_code` usado pela linha de comando:
2 uso/parse, 3 modelo inviável, 4 falha numérica.
"""
from typing import Optional


class DrcalError(Exception):
    """Erro base da aplicação"""

    exit_code = 4

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message


# Dados de entrada


class ParseError(DrcalError):
    exit_code = 2


class CaseValidationError(DrcalError):
    """Invariante do caso violada; `field` identifica o campo"""

    exit_code = 2

    def __init__(self, field: str, detail: str):
        super().__init__(f"{field}: {detail}")
        self.field = field
        self.detail = detail


class SingularNetwork(DrcalError):
    exit_code = 2


class DimensionMismatch(DrcalError):
    exit_code = 2


class EmptyInput(DrcalError):
    exit_code = 2


class EmptyDataset(DrcalError):
    exit_code = 2


class LengthMismatch(DrcalError):
    exit_code = 2


class UnsetEpsilon(DrcalError):
    exit_code = 2


# Mercado


class InfeasibleSchedule(DrcalError):
    exit_code = 3


class InfeasibleDispatch(DrcalError):
    exit_code = 3

    def __init__(self, imbalance_mw: float, message: Optional[str] = None):
        super().__init__(
            message or f"Despacho inviável: desequilíbrio não atendido de {imbalance_mw:.4f} MW"
        )
        self.imbalance_mw = imbalance_mw


class SolverFailure(DrcalError):
    """Solver terminou sem otimalidade (iterações, ilimitado, numérico)"""

    exit_code = 4

    def __init__(self, status: str, message: str = ""):
        super().__init__(message or f"Solver terminou com status {status}")
        self.status = status


# Diferenciação


class SingularKKT(DrcalError):
    exit_code = 4

    def __init__(self, condition: float, message: str = ""):
        super().__init__(message or f"Sistema KKT singular (condição estimada {condition:.3e})")
        self.condition = condition


class InfeasiblePerturbation(DrcalError):
    exit_code = 3

    def __init__(self, coordinate: int, cause: Optional[Exception] = None):
        super().__init__(f"Perturbação inviável na coordenada {coordinate}: {cause}")
        self.coordinate = coordinate
        self.cause = cause


# Calibração


class NonFiniteGradient(DrcalError):
    exit_code = 4


class SampleFailure(DrcalError):
    """Falha em uma amostra de calibração; herda o exit_code da causa"""

    def __init__(self, sample_index: int, cause: Exception):
        super().__init__(f"Amostra {sample_index}: {cause}")
        self.sample_index = sample_index
        self.cause = cause

    @property
    def exit_code(self) -> int:
        return getattr(self.cause, "exit_code", 4)


# Protocolo distribuído


class AgentTimeout(DrcalError):
    exit_code = 4

    def __init__(self, agent_id: str, phase: str, detail: str = "prazo esgotado"):
        super().__init__(f"Agente {agent_id} na fase {phase}: {detail}")
        self.agent_id = agent_id
        self.phase = phase


class ProtocolError(DrcalError):
    exit_code = 4

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"[{code}] {detail}")
        self.code = code
        self.detail = detail


class ConnectionLost(DrcalError):
    exit_code = 4


class VersionMismatch(ProtocolError):
    def __init__(self, expected: str, received: str):
        super().__init__("VERSION_MISMATCH", f"esperado {expected}, recebido {received}")
        self.expected = expected
        self.received = received
