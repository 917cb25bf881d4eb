"""
Agendamento de estágio um: programa DR-OPF reformulado (LP) com reservas,
fatores de participação e restrição de chance aproximada por CVaR
"""
import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from app.exceptions import (
    DimensionMismatch,
    InfeasibleSchedule,
    SolverFailure,
    UnsetEpsilon,
)
from app.models.network import NetworkCase
from app.models.program import SolverSolution, StandardFormProgram
from app.models.schedule import ScheduleProgramLayout, ScheduleSolution
from app.models.uncertainty import EmpiricalErrorModel
from app.schemas.solver import SolverOptions, SolverStatus
from app.services.convex_solver import dump_program, solve
from app.services.program_builder import RowBuilder

logger = logging.getLogger(__name__)

# Os tetos dos multiplicadores não alteram o ótimo: com λ >= |a| o primeiro
# ramo do epígrafo domina e |a| <= max(c_a) (ou <= 1 no CVaR) pois Aᵀ1 = 1.
LAMBDA_O_CAP_FACTOR = 2.0
LAMBDA_C_CAP = 2.0


def clip_forecast(case: NetworkCase, forecast: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Recorta ŷ em [0, capacidade]

    Returns:
        (ŷ recortado, máscara com 1.0 onde o valor não foi alterado)
    """
    forecast = np.asarray(forecast, dtype=float)
    if forecast.shape != (case.n_wind,):
        raise DimensionMismatch(f"Previsão com forma {forecast.shape}, esperado ({case.n_wind},)")
    clipped = np.clip(forecast, 0.0, case.wind_capacity)
    mask = (clipped == forecast).astype(float)
    if not np.all(mask):
        logger.warning(f"Previsão {forecast.tolist()} recortada para {clipped.tolist()}")
    return clipped, mask


def build_schedule_program(
    case: NetworkCase, forecast: np.ndarray, uq: EmpiricalErrorModel
) -> Tuple[StandardFormProgram, ScheduleProgramLayout]:
    """
    Monta o LP do DR-OPF reformulado

    Args:
        case: Rede
        forecast: ŷ por parque (MW)
        uq: Modelo empírico de erros com ε definido

    Returns:
        (programa na forma padrão, layout dos blocos)

    Raises:
        UnsetEpsilon: Se uq.epsilon não foi definido
        DimensionMismatch: Dimensões incompatíveis
    """
    if uq.epsilon is None:
        raise UnsetEpsilon("O modelo de erros não tem ε definido")
    if uq.n_wind != case.n_wind:
        raise DimensionMismatch(f"Modelo de erros com {uq.n_wind} parques, caso com {case.n_wind}")
    y_hat, _ = clip_forecast(case, forecast)

    n_g, n_w, n_s = case.n_generators, case.n_wind, uq.n_samples
    layout = ScheduleProgramLayout.create(n_g, n_w, n_s)
    n_k = layout.n_k
    g_idx = np.arange(*layout.blocks["g"])
    rp_idx = np.arange(*layout.blocks["r_plus"])
    rm_idx = np.arange(*layout.blocks["r_minus"])
    tau = layout.tau_index()
    gamma = uq.risk_level
    xi_hat, xi_lo, xi_hi = uq.errors, uq.xi_lower, uq.xi_upper
    c_a = case.cost_activation

    # custo
    cost = np.zeros(layout.n_variables)
    cost[g_idx] = case.cost_energy
    cost[rp_idx] = case.cost_reserve
    cost[rm_idx] = case.cost_reserve
    for j in range(n_w):
        cost[layout.lambda_o_index(j)] = uq.epsilon[j]
        for i in range(n_s):
            cost[layout.s_o_index(j, i)] = 1.0 / n_s

    eq = RowBuilder(layout.n_variables)
    with eq.group("balance"):
        eq.add(((col, 1.0) for col in g_idx), case.total_demand - float(y_hat.sum()))
    with eq.group("participation"):
        for j in range(n_w):
            eq.add(((layout.a_index(g, j), 1.0) for g in range(n_g)), 1.0)

    ineq = RowBuilder(layout.n_variables)
    with ineq.group("gen_upper"):
        for g in range(n_g):
            ineq.add([(g_idx[g], 1.0), (rp_idx[g], 1.0)], case.gen_max[g])
    with ineq.group("gen_lower"):
        for g in range(n_g):
            ineq.add([(g_idx[g], -1.0), (rm_idx[g], 1.0)], -case.gen_min[g])

    exogenous_flow = case.ptdf_wind @ y_hat - case.ptdf @ case.demand
    with ineq.group("line_upper"):
        for line in range(case.n_lines):
            row = zip(g_idx, case.ptdf_gen[line])
            ineq.add(row, case.line_limit[line] - exogenous_flow[line])
    with ineq.group("line_lower"):
        for line in range(case.n_lines):
            row = zip(g_idx, -case.ptdf_gen[line])
            ineq.add(row, case.line_limit[line] + exogenous_flow[line])

    # epígrafo do termo de pior caso; a^O_j = −Σ_g c_a,g A_gj
    def a_o_terms(j: int, scale: float):
        return [(layout.a_index(g, j), -c_a[g] * scale) for g in range(n_g)]

    with ineq.group("s_O_sample"):
        for j in range(n_w):
            for i in range(n_s):
                ineq.add(a_o_terms(j, xi_hat[j, i]) + [(layout.s_o_index(j, i), -1.0)], 0.0)
    with ineq.group("s_O_upper"):
        for j in range(n_w):
            for i in range(n_s):
                terms = a_o_terms(j, xi_hi[j])
                terms += [
                    (layout.lambda_o_index(j), -(xi_hi[j] - xi_hat[j, i])),
                    (layout.s_o_index(j, i), -1.0),
                ]
                ineq.add(terms, 0.0)
    with ineq.group("s_O_lower"):
        for j in range(n_w):
            for i in range(n_s):
                terms = a_o_terms(j, xi_lo[j])
                terms += [
                    (layout.lambda_o_index(j), xi_lo[j] - xi_hat[j, i]),
                    (layout.s_o_index(j, i), -1.0),
                ]
                ineq.add(terms, 0.0)

    # restrição de chance (CVaR)
    with ineq.group("cvar"):
        terms = [(tau, 1.0)]
        terms += [(layout.lambda_c_index(j), uq.epsilon[j] / gamma) for j in range(n_w)]
        terms += [(layout.s_c_i_index(i), 1.0 / (gamma * n_s)) for i in range(n_s)]
        ineq.add(terms, 0.0)

    # b_k = [0; −r⁺ − τ1; −r⁻ − τ1]
    def b_terms(k: int):
        if k == 0:
            return []
        if k <= n_g:
            return [(rp_idx[k - 1], -1.0), (tau, -1.0)]
        return [(rm_idx[k - 1 - n_g], -1.0), (tau, -1.0)]

    with ineq.group("s_C_aggregate"):
        for i in range(n_s):
            for k in range(n_k):
                terms = b_terms(k) + [(layout.s_c_i_index(i), -1.0)]
                terms += [(layout.s_c_jik_index(j, i, k), 1.0) for j in range(n_w)]
                ineq.add(terms, 0.0)

    # a^C_kj = [0; A; −A]
    def a_c_terms(k: int, j: int, scale: float):
        if k == 0:
            return []
        if k <= n_g:
            return [(layout.a_index(k - 1, j), scale)]
        return [(layout.a_index(k - 1 - n_g, j), -scale)]

    with ineq.group("s_C_sample"):
        for j in range(n_w):
            for i in range(n_s):
                for k in range(n_k):
                    terms = a_c_terms(k, j, xi_hat[j, i]) + [(layout.s_c_jik_index(j, i, k), -1.0)]
                    ineq.add(terms, 0.0)
    with ineq.group("s_C_upper"):
        for j in range(n_w):
            for i in range(n_s):
                for k in range(n_k):
                    terms = a_c_terms(k, j, xi_hi[j])
                    terms += [
                        (layout.lambda_c_index(j), -(xi_hi[j] - xi_hat[j, i])),
                        (layout.s_c_jik_index(j, i, k), -1.0),
                    ]
                    ineq.add(terms, 0.0)
    with ineq.group("s_C_lower"):
        for j in range(n_w):
            for i in range(n_s):
                for k in range(n_k):
                    terms = a_c_terms(k, j, xi_lo[j])
                    terms += [
                        (layout.lambda_c_index(j), xi_lo[j] - xi_hat[j, i]),
                        (layout.s_c_jik_index(j, i, k), -1.0),
                    ]
                    ineq.add(terms, 0.0)

    with ineq.group("nonnegativity"):
        for name in ("r_plus", "r_minus", "A", "lambda_O", "lambda_C"):
            for col in range(*layout.blocks[name]):
                ineq.add([(col, -1.0)], 0.0)

    with ineq.group("multiplier_caps"):
        lambda_o_cap = LAMBDA_O_CAP_FACTOR * max(float(np.max(c_a)), 1.0)
        for j in range(n_w):
            ineq.add([(layout.lambda_o_index(j), 1.0)], lambda_o_cap)
        for j in range(n_w):
            ineq.add([(layout.lambda_c_index(j), 1.0)], LAMBDA_C_CAP)

    program = StandardFormProgram(
        linear_cost=cost,
        eq_matrix=eq.matrix(),
        eq_rhs=eq.rhs(),
        ineq_matrix=ineq.matrix(),
        ineq_rhs=ineq.rhs(),
        variable_names=layout.variable_names(),
    )
    return program, layout.with_groups(eq.groups, ineq.groups)


def check_capacity(case: NetworkCase, forecast: np.ndarray) -> None:
    """Condição necessária de viabilidade: a demanda líquida cabe nos limites de geração"""
    net_demand = case.total_demand - float(np.sum(forecast))
    if net_demand > float(case.gen_max.sum()) + 1e-9 or net_demand < float(case.gen_min.sum()) - 1e-9:
        raise InfeasibleSchedule(
            f"Demanda líquida {net_demand:.2f} MW fora de "
            f"[{case.gen_min.sum():.2f}, {case.gen_max.sum():.2f}] MW"
        )


def solve_schedule_program(
    case: NetworkCase,
    forecast: np.ndarray,
    uq: EmpiricalErrorModel,
    options: Optional[SolverOptions] = None,
    regularization: float = 0.0,
) -> Tuple[StandardFormProgram, ScheduleProgramLayout, SolverSolution, ScheduleSolution]:
    """Monta, (opcionalmente) regulariza e resolve; devolve também o programa e a solução bruta"""
    y_hat, _ = clip_forecast(case, forecast)
    check_capacity(case, y_hat)
    program, layout = build_schedule_program(case, y_hat, uq)
    if regularization > 0.0:
        program = program.with_regularization(regularization)

    raw = solve(program, options)
    if raw.status == SolverStatus.INFEASIBLE:
        raise InfeasibleSchedule(f"DR-OPF inviável para ŷ={y_hat.tolist()}")
    if raw.status != SolverStatus.OPTIMAL:
        raise SolverFailure(raw.status.value, f"DR-OPF sem otimalidade ({raw.status.value})")

    solution = unpack_schedule(case, uq, layout, raw.primal, y_hat, regularization)
    return program, layout, raw, solution


def solve_schedule(
    case: NetworkCase,
    forecast: np.ndarray,
    uq: EmpiricalErrorModel,
    options: Optional[SolverOptions] = None,
    regularization: float = 0.0,
) -> ScheduleSolution:
    """
    Resolve o agendamento DR-OPF

    Raises:
        InfeasibleSchedule: Programa inviável (ex.: demanda acima da capacidade)
        SolverFailure: Solver não atingiu otimalidade
    """
    return solve_schedule_program(case, forecast, uq, options, regularization)[3]


def unpack_schedule(
    case: NetworkCase,
    uq: EmpiricalErrorModel,
    layout: ScheduleProgramLayout,
    x: np.ndarray,
    y_hat: np.ndarray,
    regularization: float,
) -> ScheduleSolution:
    n_g, n_w, n_s = layout.n_generators, layout.n_wind, layout.n_samples
    g = x[layout.block("g")]
    r_plus = x[layout.block("r_plus")]
    r_minus = x[layout.block("r_minus")]
    lambda_o = x[layout.block("lambda_O")]
    s_o = x[layout.block("s_O")].reshape(n_w, n_s)

    stage1 = float(case.cost_energy @ g + case.cost_reserve @ (r_plus + r_minus))
    worstcase = float(uq.epsilon @ lambda_o + s_o.sum() / n_s)
    return ScheduleSolution(
        g=g,
        r_plus=r_plus,
        r_minus=r_minus,
        A=x[layout.block("A")].reshape(n_g, n_w),
        tau=float(x[layout.tau_index()]),
        lambda_O=lambda_o,
        lambda_C=x[layout.block("lambda_C")],
        s_O=s_o,
        s_C_i=x[layout.block("s_C_i")],
        s_C_jik=x[layout.block("s_C_jik")].reshape(n_w, n_s, layout.n_k),
        objective_total=stage1 + worstcase,
        objective_stage1=stage1,
        objective_worstcase=worstcase,
        forecast=y_hat,
        regularization=regularization,
        status=SolverStatus.OPTIMAL,
    )


def worst_case_term(solution: ScheduleSolution, uq: EmpiricalErrorModel) -> float:
    """Σ_j (λᴼ_j ε_j + (1/N_s) Σ_i sᴼ_ji), recalculado a partir dos blocos"""
    if uq.epsilon is None:
        raise UnsetEpsilon("O modelo de erros não tem ε definido")
    total = 0.0
    for j in range(solution.s_O.shape[0]):
        total += float(solution.lambda_O[j] * uq.epsilon[j]) + float(np.mean(solution.s_O[j]))
    return total


def dump_schedule_program(
    case: NetworkCase, forecast: np.ndarray, uq: EmpiricalErrorModel, directory: Path
) -> Path:
    """Grava o LP montado e o layout (layout.json) para inspeção"""
    program, layout = build_schedule_program(case, forecast, uq)
    directory = dump_program(program, directory)
    (Path(directory) / "layout.json").write_text(layout.model_dump_json(indent=2), encoding="utf-8")
    return directory
