"""
Despacho em tempo real (estágio dois) e derivadas pelo teorema do envelope
"""
import logging
from typing import Optional, Tuple

import numpy as np

from app.exceptions import (
    CaseValidationError,
    DimensionMismatch,
    InfeasibleDispatch,
    SolverFailure,
)
from app.models.dispatch import DispatchDuals, DispatchPartials, DispatchSolution
from app.models.network import NetworkCase
from app.models.program import SolverSolution, StandardFormProgram
from app.models.schedule import ScheduleSolution
from app.schemas.calibration import DispatchOptions
from app.schemas.solver import SolverStatus
from app.services.convex_solver import solve
from app.services.program_builder import RowBuilder

logger = logging.getLogger(__name__)

BLOCKS = ("r_in_up", "r_in_dn", "r_out_up", "r_out_dn")
TOLERANCE = 1e-9


def _check_inputs(case: NetworkCase, schedule: ScheduleSolution, realized: np.ndarray) -> np.ndarray:
    if schedule.status != SolverStatus.OPTIMAL:
        raise SolverFailure(schedule.status.value, "Agendamento sem otimalidade")
    realized = np.asarray(realized, dtype=float)
    if realized.shape != (case.n_wind,):
        raise DimensionMismatch(f"Geração realizada com forma {realized.shape}, esperado ({case.n_wind},)")
    if np.any(realized < -TOLERANCE) or np.any(realized > case.wind_capacity + TOLERANCE):
        raise CaseValidationError("realized", "geração eólica fora de [0, capacidade]")
    return np.clip(realized, 0.0, case.wind_capacity)


def _shed_price(case: NetworkCase) -> float:
    """Preço padrão do corte: acima de todos os custos de ajuste"""
    costs = np.concatenate([case.cost_energy, case.cost_in, case.cost_out_up, case.cost_out_dn])
    return 100.0 * max(float(np.max(costs)), 1.0)


def build_dispatch_program(
    case: NetworkCase,
    schedule: ScheduleSolution,
    realized: np.ndarray,
    shed_cost: Optional[float] = None,
) -> Tuple[StandardFormProgram, dict, RowBuilder, RowBuilder]:
    """
    Monta o LP de despacho

    Variáveis: r_in⁺, r_in⁻, r_out⁺, r_out⁻ (por gerador) e, com `shed_cost`,
    corte de carga por barra e vertimento por parque.

    Returns:
        (programa, blocos de variáveis, linhas de igualdade, linhas de desigualdade)
    """
    n_g = case.n_generators
    blocks = {}
    offset = 0
    for name in BLOCKS:
        blocks[name] = (offset, offset + n_g)
        offset += n_g
    shed_buses = np.flatnonzero(case.demand > 0) if shed_cost is not None else np.array([], dtype=int)
    spill_farms = np.flatnonzero(realized > 0) if shed_cost is not None else np.array([], dtype=int)
    blocks["shed"] = (offset, offset + shed_buses.size)
    offset += shed_buses.size
    blocks["spill"] = (offset, offset + spill_farms.size)
    offset += spill_farms.size
    n_variables = offset

    def cols(name: str) -> np.ndarray:
        return np.arange(*blocks[name])

    r_in_up, r_in_dn = cols("r_in_up"), cols("r_in_dn")
    r_out_up, r_out_dn = cols("r_out_up"), cols("r_out_dn")
    shed, spill = cols("shed"), cols("spill")

    cost = np.zeros(n_variables)
    cost[r_in_up] = case.cost_in
    cost[r_in_dn] = case.cost_in
    cost[r_out_up] = case.cost_out_up
    cost[r_out_dn] = case.cost_out_dn
    if shed_cost is not None:
        cost[shed] = shed_cost
        cost[spill] = shed_cost

    # u_k = r_in⁺ − r_in⁻ + r_out⁺ − r_out⁻
    def adjustment_terms(k: int, scale: float):
        return [
            (r_in_up[k], scale),
            (r_in_dn[k], -scale),
            (r_out_up[k], scale),
            (r_out_dn[k], -scale),
        ]

    # injeção líquida de corte/vertimento na barra b, por linha: Φ[:, b]
    def slack_flow_terms(line: int, scale: float):
        terms = [(shed[m], scale * case.ptdf[line, b]) for m, b in enumerate(shed_buses)]
        terms += [(spill[m], -scale * case.ptdf_wind[line, j]) for m, j in enumerate(spill_farms)]
        return terms

    g_star = schedule.g
    eq = RowBuilder(n_variables)
    with eq.group("balance"):
        terms = [t for k in range(n_g) for t in adjustment_terms(k, 1.0)]
        terms += [(col, 1.0) for col in shed] + [(col, -1.0) for col in spill]
        eq.add(terms, case.total_demand - float(g_star.sum()) - float(realized.sum()))

    ineq = RowBuilder(n_variables)
    with ineq.group("gen_lower"):
        for k in range(n_g):
            ineq.add(adjustment_terms(k, -1.0), g_star[k] - case.gen_min[k])
    with ineq.group("gen_upper"):
        for k in range(n_g):
            ineq.add(adjustment_terms(k, 1.0), case.gen_max[k] - g_star[k])

    base_flow = case.net_injection_flows(g_star, realized)
    with ineq.group("line_lower"):
        for line in range(case.n_lines):
            terms = [t for k in range(n_g) for t in adjustment_terms(k, -case.ptdf_gen[line, k])]
            ineq.add(terms + slack_flow_terms(line, -1.0), case.line_limit[line] + base_flow[line])
    with ineq.group("line_upper"):
        for line in range(case.n_lines):
            terms = [t for k in range(n_g) for t in adjustment_terms(k, case.ptdf_gen[line, k])]
            ineq.add(terms + slack_flow_terms(line, 1.0), case.line_limit[line] - base_flow[line])

    # caixa composta −r⁻* <= r_in <= r⁺*, mantida como linhas explícitas (duais ν)
    with ineq.group("reserve_lower"):
        for k in range(n_g):
            ineq.add([(r_in_up[k], -1.0), (r_in_dn[k], 1.0)], schedule.r_minus[k])
    with ineq.group("reserve_upper"):
        for k in range(n_g):
            ineq.add([(r_in_up[k], 1.0), (r_in_dn[k], -1.0)], schedule.r_plus[k])

    with ineq.group("nonnegativity"):
        for col in range(n_variables):
            ineq.add([(col, -1.0)], 0.0)
    with ineq.group("slack_caps"):
        for m, b in enumerate(shed_buses):
            ineq.add([(shed[m], 1.0)], case.demand[b])
        for m, j in enumerate(spill_farms):
            ineq.add([(spill[m], 1.0)], realized[j])

    program = StandardFormProgram(
        linear_cost=cost,
        eq_matrix=eq.matrix(),
        eq_rhs=eq.rhs(),
        ineq_matrix=ineq.matrix(),
        ineq_rhs=ineq.rhs(),
    )
    blocks["shed_buses"] = tuple(int(b) for b in shed_buses)
    blocks["spill_farms"] = tuple(int(j) for j in spill_farms)
    return program, blocks, eq, ineq


def _unpack(
    case: NetworkCase,
    raw: SolverSolution,
    blocks: dict,
    eq: RowBuilder,
    ineq: RowBuilder,
) -> DispatchSolution:
    x, z = raw.primal, raw.ineq_duals

    def part(name: str) -> np.ndarray:
        return x[slice(*blocks[name])]

    def duals(group: str) -> np.ndarray:
        return np.maximum(z[slice(*ineq.groups[group])], 0.0)

    shed_load = np.zeros(case.n_buses)
    shed_load[list(blocks["shed_buses"])] = part("shed")
    spill = np.zeros(case.n_wind)
    spill[list(blocks["spill_farms"])] = part("spill")

    return DispatchSolution(
        r_in=part("r_in_up") - part("r_in_dn"),
        r_in_up=part("r_in_up"),
        r_in_dn=part("r_in_dn"),
        r_out_up=part("r_out_up"),
        r_out_dn=part("r_out_dn"),
        shed_load=shed_load,
        spill=spill,
        cost=raw.objective,
        duals=DispatchDuals(
            lambda_balance=float(raw.eq_duals[eq.groups["balance"][0]]),
            mu_lo=duals("gen_lower"),
            mu_hi=duals("gen_upper"),
            phi_lo=duals("line_lower"),
            phi_hi=duals("line_upper"),
            nu_lo=duals("reserve_lower"),
            nu_hi=duals("reserve_upper"),
        ),
        status=raw.status,
    )


def solve_dispatch(
    case: NetworkCase,
    schedule: ScheduleSolution,
    realized: np.ndarray,
    options: Optional[DispatchOptions] = None,
) -> DispatchSolution:
    """
    Resolve o despacho de tempo real

    Args:
        case: Rede
        schedule: Agendamento ótimo do estágio um
        realized: Geração eólica realizada por parque (MW)
        options: Solver e, opcionalmente, preço do corte de carga

    Returns:
        DispatchSolution com duais mapeados para as restrições originais

    Raises:
        InfeasibleDispatch: Desvio excede a flexibilidade total (sem modo de corte)
        SolverFailure: Solver não atingiu otimalidade
    """
    options = options or DispatchOptions()
    realized = _check_inputs(case, schedule, realized)

    program, blocks, eq, ineq = build_dispatch_program(
        case, schedule, realized, options.load_shed_cost
    )
    raw = solve(program, options.solver)

    if raw.status == SolverStatus.INFEASIBLE and options.load_shed_cost is None:
        imbalance = unmet_imbalance(case, schedule, realized, options)
        logger.warning(f"Despacho inviável; desequilíbrio não atendido de {imbalance:.4f} MW")
        raise InfeasibleDispatch(imbalance)
    if raw.status == SolverStatus.INFEASIBLE:
        raise InfeasibleDispatch(float("nan"), "Despacho inviável mesmo com corte de carga")
    if raw.status != SolverStatus.OPTIMAL:
        raise SolverFailure(raw.status.value, f"Despacho sem otimalidade ({raw.status.value})")

    solution = _unpack(case, raw, blocks, eq, ineq)
    if options.load_shed_cost is not None and solution.shed_load.sum() + solution.spill.sum() > 1e-6:
        logger.warning(
            f"Despacho com corte de carga {solution.shed_load.sum():.4f} MW "
            f"e vertimento {solution.spill.sum():.4f} MW"
        )
    return solution


def unmet_imbalance(
    case: NetworkCase,
    schedule: ScheduleSolution,
    realized: np.ndarray,
    options: Optional[DispatchOptions] = None,
) -> float:
    """MW de corte + vertimento necessários para tornar o despacho viável"""
    options = options or DispatchOptions()
    program, blocks, eq, ineq = build_dispatch_program(
        case, schedule, realized, _shed_price(case)
    )
    raw = solve(program, options.solver)
    if raw.status != SolverStatus.OPTIMAL:
        return float(
            abs(case.total_demand - schedule.g.sum() - np.sum(realized))
        )
    solution = _unpack(case, raw, blocks, eq, ineq)
    return float(solution.shed_load.sum() + solution.spill.sum())


def dispatch_value_partials(solution: DispatchSolution, case: NetworkCase) -> DispatchPartials:
    """
    ∂custo/∂g* = λ1 − μ̲ + μ̄ + (ΦS_g)ᵀ(φ̄ − φ̲);  ∂custo/∂r⁺* = −ν̄;  ∂custo/∂r⁻* = −ν̲
    """
    duals = solution.duals
    d_g = (
        duals.lambda_balance * np.ones(case.n_generators)
        - duals.mu_lo
        + duals.mu_hi
        + case.ptdf_gen.T @ (duals.phi_hi - duals.phi_lo)
    )
    return DispatchPartials(d_g=d_g, d_r_plus=-duals.nu_hi, d_r_minus=-duals.nu_lo)
