"""
Camada diferenciável do agendamento: diferenciação implícita das condições KKT
do programa regularizado e oráculo de diferenças finitas
"""
import logging
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from app.exceptions import (
    DimensionMismatch,
    InfeasiblePerturbation,
    InfeasibleSchedule,
    SingularKKT,
    SolverFailure,
)
from app.models.network import NetworkCase
from app.models.program import SolverSolution, StandardFormProgram
from app.models.schedule import ScheduleJacobians, ScheduleProgramLayout, ScheduleSolution
from app.models.uncertainty import EmpiricalErrorModel
from app.schemas.calibration import LayerConfig
from app.schemas.solver import SolverOptions
from app.services.schedule import solve_schedule_program
from app.services.uncertainty import with_epsilon

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6


class Perturbation(str, Enum):
    YHAT = "yhat"
    EPS = "eps"


def active_rows(program: StandardFormProgram, raw: SolverSolution, tol: float) -> Tuple[np.ndarray, int]:
    """
    Classifica as desigualdades no ponto do método de pontos interiores

    Uma linha é ativa quando o dual passa de `tol` e domina a folga; é degenerada
    quando folga e dual ficam ambos abaixo de `tol`.

    Returns:
        (índices ativos, número de linhas degeneradas)
    """
    slack = program.ineq_rhs - program.ineq_matrix @ raw.primal
    duals = raw.ineq_duals
    active = (duals >= tol) & (slack <= duals)
    degenerate = (~active) & (slack <= tol) & (duals < tol)
    return np.flatnonzero(active), int(np.sum(degenerate))


def active_set_signature(program: StandardFormProgram, raw: SolverSolution, tol: float) -> Tuple[int, ...]:
    """Identificador do conjunto ativo, usado para filtrar pontos instáveis"""
    indices, _ = active_rows(program, raw, tol)
    return tuple(int(i) for i in indices)


def kkt_matrix(program: StandardFormProgram, raw: SolverSolution) -> np.ndarray:
    """
    Jacobiana das condições KKT perturbadas no par primal-dual

        [ Q      Eᵀ   Gᵀ  ] [dx]
        [ E      0    0   ] [dy]
        [ −WZG   0    WS  ] [dz]

    com s = h − Gx, Z = diag(z), S = diag(s) e W = diag(1/(z + s)) escalando a
    complementaridade linha a linha.
    """
    Q = program.quadratic_term.toarray()
    E = program.eq_matrix.toarray()
    G = program.ineq_matrix.toarray()
    n, m_e, m_i = program.n, program.m_eq, program.m_ineq
    z = np.maximum(raw.ineq_duals, 0.0)
    s = np.maximum(program.ineq_rhs - G @ raw.primal, 0.0)
    w = 1.0 / np.maximum(z + s, np.finfo(float).tiny)

    K = np.zeros((n + m_e + m_i, n + m_e + m_i))
    K[:n, :n] = Q
    K[:n, n : n + m_e] = E.T
    K[:n, n + m_e :] = G.T
    K[n : n + m_e, :n] = E
    K[n + m_e :, :n] = -(w * z)[:, None] * G
    K[n + m_e :, n + m_e :] = np.diag(w * s)
    return K


def _perturbations(
    case: NetworkCase,
    uq: EmpiricalErrorModel,
    layout: ScheduleProgramLayout,
    program: StandardFormProgram,
    wrt: Perturbation,
    farm: int,
):
    """(dc, db, dh, dG) da perturbação unitária no dado do parque `farm`"""
    dc = np.zeros(program.n)
    db = np.zeros(program.m_eq)
    dh = np.zeros(program.m_ineq)
    dG = {}  # (linha, coluna) -> valor

    if wrt == Perturbation.YHAT:
        db[layout.eq_groups["balance"][0]] = -1.0
        dh[layout.ineq_rows("line_upper")] = -case.ptdf_wind[:, farm]
        dh[layout.ineq_rows("line_lower")] = case.ptdf_wind[:, farm]
    else:
        dc[layout.lambda_o_index(farm)] = 1.0
        dG[(layout.ineq_groups["cvar"][0], layout.lambda_c_index(farm))] = 1.0 / uq.risk_level
    return dc, db, dh, dG


def _right_hand_side(program: StandardFormProgram, raw: SolverSolution, dc, db, dh, dG) -> np.ndarray:
    """Lado direito do sistema de kkt_matrix para a perturbação (dc, db, dh, dG)"""
    x = raw.primal
    z = np.maximum(raw.ineq_duals, 0.0)
    s = np.maximum(program.ineq_rhs - program.ineq_matrix @ x, 0.0)
    w = 1.0 / np.maximum(z + s, np.finfo(float).tiny)

    r_stat = dc.copy()
    dh_eff = dh.copy()
    for (row, col), value in dG.items():
        r_stat[col] += value * z[row]
        dh_eff[row] -= value * x[col]
    return np.concatenate([-r_stat, db, -w * z * dh_eff])


def schedule_jacobians(
    case: NetworkCase,
    forecast: np.ndarray,
    uq: EmpiricalErrorModel,
    config: Optional[LayerConfig] = None,
    options: Optional[SolverOptions] = None,
) -> Tuple[ScheduleSolution, ScheduleJacobians]:
    """
    Resolve o agendamento regularizado e diferencia G* = (g, r⁺, r⁻) em relação a ŷ e ε

    Diferencia o sistema KKT completo no ponto devolvido pelo solver, sem
    escolher conjunto ativo: no interior (z, s > 0) a matriz é não singular
    sempre que E tem posto completo e Q = ρI.

    Args:
        case: Rede
        forecast: ŷ por parque
        uq: Modelo de erros com ε definido
        config: ρ, tolerância do conjunto ativo e passo de diferenças finitas
        options: Opções do solver

    Returns:
        (solução regularizada, jacobianas |G| x parques)

    Raises:
        SingularKKT: Sistema linearizado numericamente singular
        InfeasibleSchedule: Programa inviável
    """
    config = config or LayerConfig()
    config.require_regularization()
    program, layout, raw, solution = solve_schedule_program(
        case, forecast, uq, options, config.regularization_rho
    )

    active, degenerate = active_rows(program, raw, config.active_set_tol)
    if degenerate:
        logger.debug(f"{degenerate} restrições degeneradas (folga e dual abaixo da tolerância)")

    K = kkt_matrix(program, raw)
    try:
        factor = scipy.linalg.lu_factor(K, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularKKT(float("inf"), f"Fatoração KKT falhou: {exc}") from exc
    gecon = scipy.linalg.get_lapack_funcs("gecon", (factor[0],))
    rcond, _ = gecon(factor[0], np.linalg.norm(K, 1), norm="1")
    condition = float(1.0 / rcond) if rcond > 0 else float("inf")
    if not np.isfinite(condition):
        raise SingularKKT(condition)
    logger.debug(f"Sistema KKT {K.shape[0]}x{K.shape[0]}, condição estimada {condition:.3e}")

    n_w = case.n_wind
    block = layout.schedule_slice()
    n_block = block.stop - block.start
    jacobians = {}
    worst_residual = 0.0
    for wrt in (Perturbation.YHAT, Perturbation.EPS):
        columns = np.zeros((n_block, n_w))
        for farm in range(n_w):
            rhs = _right_hand_side(program, raw, *_perturbations(case, uq, layout, program, wrt, farm))
            delta = scipy.linalg.lu_solve(factor, rhs)
            # um passo de refinamento iterativo
            delta = delta + scipy.linalg.lu_solve(factor, rhs - K @ delta)
            residual = np.linalg.norm(K @ delta - rhs) / (1.0 + np.linalg.norm(rhs))
            worst_residual = max(worst_residual, float(residual))
            columns[:, farm] = delta[block]
        jacobians[wrt] = columns

    if worst_residual > RESIDUAL_TOL:
        raise SingularKKT(condition, f"Sistema KKT inconsistente (resíduo {worst_residual:.3e})")

    result = ScheduleJacobians(
        dG_dyhat=jacobians[Perturbation.YHAT],
        dG_deps=jacobians[Perturbation.EPS],
        active_count=int(active.size),
        degenerate_count=degenerate,
        condition=condition,
    )
    if not (np.all(np.isfinite(result.dG_dyhat)) and np.all(np.isfinite(result.dG_deps))):
        raise SingularKKT(condition, "Jacobianas não finitas")
    return solution, result


def finite_difference_jacobian(
    case: NetworkCase,
    forecast: np.ndarray,
    uq: EmpiricalErrorModel,
    wrt: Perturbation,
    step: Optional[float] = None,
    config: Optional[LayerConfig] = None,
    options: Optional[SolverOptions] = None,
) -> np.ndarray:
    """
    Diferenças finitas centrais de G* regularizado, coordenada a coordenada

    O passo é relativo: h = step·max(1, |v|). Para ε próximo de zero usa
    diferença progressiva, pois ε < 0 não define um conjunto de ambiguidade.

    Raises:
        ValueError: step <= 0
        InfeasiblePerturbation: Programa inviável em algum ponto perturbado
    """
    config = config or LayerConfig()
    step = config.fd_step if step is None else step
    if step <= 0:
        raise ValueError("step deve ser > 0")
    wrt = Perturbation(wrt)
    forecast = np.asarray(forecast, dtype=float)
    if uq.epsilon is None:
        raise DimensionMismatch("ε indefinido no modelo de erros")
    rho = config.regularization_rho

    def evaluate(coordinate: int, y_hat: np.ndarray, epsilon: np.ndarray) -> np.ndarray:
        try:
            solution = solve_schedule_program(case, y_hat, with_epsilon(uq, epsilon), options, rho)[3]
        except (InfeasibleSchedule, SolverFailure) as exc:
            raise InfeasiblePerturbation(coordinate, exc) from exc
        return solution.stacked

    base_values = forecast if wrt == Perturbation.YHAT else np.asarray(uq.epsilon, dtype=float)
    columns = []
    for coordinate in range(base_values.shape[0]):
        value = base_values[coordinate]
        h = step * max(1.0, abs(value))
        forward = base_values.copy()
        forward[coordinate] += h
        backward = base_values.copy()
        central = not (wrt == Perturbation.EPS and value - h < 0)
        if central:
            backward[coordinate] -= h

        def point(values):
            if wrt == Perturbation.YHAT:
                return evaluate(coordinate, values, uq.epsilon)
            return evaluate(coordinate, forecast, values)

        upper = point(forward)
        lower = point(backward)
        columns.append((upper - lower) / (2.0 * h if central else h))
    return np.column_stack(columns)
