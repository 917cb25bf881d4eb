"""
Solver primal-dual de pontos interiores (preditor-corretor de Mehrotra)
para programas lineares e quadráticos convexos na forma

    min ½xᵀQx + cᵀx   s.a.   Ex = b,   Gx ≤ h

com convenção de sinais do Lagrangiano f + yᵀ(Ex − b) + zᵀ(Gx − h).
"""
import json
import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import scipy.io
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from app.exceptions import DimensionMismatch
from app.models.program import SolverSolution, StandardFormProgram
from app.schemas.solver import KKTResiduals, SolverOptions, SolverStatus

logger = logging.getLogger(__name__)

# Certificados de inviabilidade/ilimitação são aceitos com esta razão
CERTIFICATE_TOL = 1e-9
DIVERGENCE_LIMIT = 1e12


def _norm_inf(vector: np.ndarray) -> float:
    return float(np.max(np.abs(vector))) if vector.size else 0.0


def _max_step(value: np.ndarray, direction: np.ndarray) -> float:
    """Maior α com value + α·direction >= 0"""
    negative = direction < 0
    if not np.any(negative):
        return np.inf
    return float(np.min(-value[negative] / direction[negative]))


def _require_finite(*vectors: np.ndarray) -> None:
    if not all(np.all(np.isfinite(v)) for v in vectors):
        raise FloatingPointError("direção de Newton não finita")


def verify_kkt(
    program: StandardFormProgram,
    solution: SolverSolution,
) -> KKTResiduals:
    """
    Recalcula os resíduos KKT de uma solução, sem depender do estado interno do solver

    Args:
        program: Programa na forma padrão
        solution: Par primal-dual a verificar

    Returns:
        KKTResiduals com estacionariedade, viabilidade primal e dual,
        complementaridade e gap relativo

    Raises:
        DimensionMismatch: Se as dimensões da solução não batem com o programa
    """
    if (
        solution.primal.shape != (program.n,)
        or solution.eq_duals.shape != (program.m_eq,)
        or solution.ineq_duals.shape != (program.m_ineq,)
    ):
        raise DimensionMismatch("Solução incompatível com o programa")
    return kkt_residuals(program, solution.primal, solution.eq_duals, solution.ineq_duals)


def kkt_residuals(
    program: StandardFormProgram, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> KKTResiduals:
    Q, c = program.quadratic_term, program.linear_cost
    E, b = program.eq_matrix, program.eq_rhs
    G, h = program.ineq_matrix, program.ineq_rhs

    Qx = Q @ x
    cost_scale = 1.0 + _norm_inf(c)
    rhs_scale = 1.0 + max(_norm_inf(b), _norm_inf(h))

    gradient = Qx + c + E.T @ y + G.T @ z
    slack = h - G @ x
    violation = max(_norm_inf(E @ x - b), _norm_inf(np.maximum(-slack, 0.0)))

    primal_objective = 0.5 * float(x @ Qx) + float(c @ x)
    dual_objective = -0.5 * float(x @ Qx) - float(b @ y) - float(h @ z)
    objective_scale = 1.0 + abs(primal_objective)

    return KKTResiduals(
        stationarity=_norm_inf(gradient) / cost_scale,
        primal_feas=violation / rhs_scale,
        dual_feas=max(0.0, -float(np.min(z))) / cost_scale if z.size else 0.0,
        complementarity=float(np.sum(np.abs(z * slack))) / objective_scale,
        gap=abs(primal_objective - dual_objective) / objective_scale,
    )


class InteriorPointSolver:
    """Preditor-corretor de Mehrotra sobre o sistema aumentado denso"""

    def __init__(self, options: Optional[SolverOptions] = None):
        self.options = options or SolverOptions()

    def solve(self, program: StandardFormProgram) -> SolverSolution:
        """
        Resolve o programa

        Args:
            program: Programa na forma padrão

        Returns:
            SolverSolution; o status indica otimalidade, inviabilidade,
            ilimitação ou esgotamento de iterações (nunca lança exceção por isso)
        """
        opts = self.options
        Q = program.quadratic_term.toarray()
        E = program.eq_matrix.toarray()
        G = program.ineq_matrix.toarray()
        c, b, h = program.linear_cost, program.eq_rhs, program.ineq_rhs
        n, m_e, m_i = program.n, program.m_eq, program.m_ineq
        delta = opts.static_regularization

        x, y, z, s = self._starting_point(Q, c, E, b, G, h, delta)
        status = SolverStatus.MAX_ITERS
        iteration = 0

        for iteration in range(opts.max_iters + 1):
            residuals = kkt_residuals(program, x, y, z)
            if self._converged(residuals, opts.tol):
                status = SolverStatus.OPTIMAL
                break

            certificate = self._certificate(Q, c, E, b, G, h, x, y, z)
            if certificate is not None:
                status = certificate
                break

            if iteration == opts.max_iters:
                break

            r_d = Q @ x + c + E.T @ y + G.T @ z
            r_p = E @ x - b
            r_g = G @ x + s - h
            mu = float(s @ z) / m_i if m_i else 0.0

            try:
                step = self._newton_system(Q, E, G, s, z, delta)
                dx, dy, dz, ds = step(r_d, r_p, r_g, s * z)
                if m_i:
                    _require_finite(dx, dy, dz, ds)
                    alpha_aff = min(1.0, _max_step(s, ds), _max_step(z, dz))
                    mu_aff = float((s + alpha_aff * ds) @ (z + alpha_aff * dz)) / m_i
                    sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
                    r_c = s * z + ds * dz - sigma * mu
                    dx, dy, dz, ds = step(r_d, r_p, r_g, r_c)
                    alpha = min(1.0, opts.step_fraction * min(_max_step(s, ds), _max_step(z, dz)))
                else:
                    alpha = 1.0
                _require_finite(dx, dy, dz, ds)
            except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
                logger.warning(f"Falha numérica no passo de Newton: {exc}")
                break

            x = x + alpha * dx
            y = y + alpha * dy
            z = z + alpha * dz
            s = s + alpha * ds
            logger.debug(
                f"ipm iter={iteration} mu={mu:.3e} alpha={alpha:.3f} "
                f"res={residuals.max_residual():.3e} gap={residuals.gap:.3e}"
            )

        if status == SolverStatus.MAX_ITERS and not self._is_feasible(program):
            status = SolverStatus.INFEASIBLE

        residuals = kkt_residuals(program, x, y, z)
        if status != SolverStatus.OPTIMAL:
            logger.info(
                f"Solver terminou com status {status.value} após {iteration} iterações "
                f"(n={n}, m_e={m_e}, m_i={m_i})"
            )
        return SolverSolution(
            primal=x,
            eq_duals=y,
            ineq_duals=z,
            objective=program.objective_value(x),
            status=status,
            kkt_residuals=residuals,
            iterations=iteration,
        )

    @staticmethod
    def _converged(residuals: KKTResiduals, tol: float) -> bool:
        return residuals.max_residual() <= tol and residuals.gap <= tol

    @staticmethod
    def _starting_point(Q, c, E, b, G, h, delta) -> Tuple[np.ndarray, ...]:
        """Ponto inicial: mínimos quadrados regularizados e deslocamento de s, z para o interior"""
        n, m_e, m_i = Q.shape[0], E.shape[0], G.shape[0]
        reg = max(delta, 1e-8)
        K = np.block(
            [
                [Q + G.T @ G + reg * np.eye(n), E.T],
                [E, -reg * np.eye(m_e)],
            ]
        )
        rhs = np.concatenate([-c + G.T @ h, b])
        solution = scipy.linalg.solve(K, rhs, assume_a="sym")
        x, y = solution[:n], solution[n:]

        s_raw = h - G @ x
        z_raw = -s_raw
        if m_i:
            shift_p = -float(np.min(s_raw))
            s = s_raw if shift_p < 0 else s_raw + (1.0 + shift_p)
            shift_d = -float(np.min(z_raw))
            z = z_raw if shift_d < 0 else z_raw + (1.0 + shift_d)
        else:
            s, z = np.zeros(0), np.zeros(0)
        return x, y, z, s

    @staticmethod
    def _newton_system(Q, E, G, s, z, delta):
        """Fatora o sistema aumentado e devolve uma função que resolve a direção"""
        n, m_e = Q.shape[0], E.shape[0]
        d = z / s if s.size else np.zeros(0)
        H = Q + G.T @ (d[:, None] * G)
        K_exact = np.block([[H, E.T], [E, np.zeros((m_e, m_e))]])
        K = K_exact + np.diag(np.concatenate([np.full(n, delta), np.full(m_e, -delta)]))
        factor = scipy.linalg.lu_factor(K, check_finite=True)

        def solve(r_d, r_p, r_g, r_c):
            rhs1 = -r_d - G.T @ (d * r_g) + G.T @ (r_c / s) if s.size else -r_d
            rhs = np.concatenate([rhs1, -r_p])
            sol = scipy.linalg.lu_solve(factor, rhs)
            # um passo de refinamento contra o sistema sem regularização
            sol = sol + scipy.linalg.lu_solve(factor, rhs - K_exact @ sol)
            dx, dy = sol[:n], sol[n:]
            if s.size:
                dz = d * (G @ dx + r_g) - r_c / s
                ds = -(r_c + s * dz) / z
            else:
                dz, ds = np.zeros(0), np.zeros(0)
            return dx, dy, dz, ds

        return solve

    @staticmethod
    def _is_feasible(program: StandardFormProgram) -> bool:
        """Fase um com HiGHS; chamada só quando o método de pontos interiores não conclui"""
        if program.m_eq == 0 and program.m_ineq == 0:
            return True
        result = scipy.optimize.linprog(
            np.zeros(program.n),
            A_ub=program.ineq_matrix if program.m_ineq else None,
            b_ub=program.ineq_rhs if program.m_ineq else None,
            A_eq=program.eq_matrix if program.m_eq else None,
            b_eq=program.eq_rhs if program.m_eq else None,
            bounds=(None, None),
            method="highs",
        )
        # status 2: inviável
        return result.status != 2

    @staticmethod
    def _certificate(Q, c, E, b, G, h, x, y, z) -> Optional[SolverStatus]:
        """Testa certificados de Farkas para inviabilidade primal ou dual"""
        if z.size or y.size:
            farkas = -(float(h @ z) + float(b @ y))
            ray = _norm_inf(E.T @ y + G.T @ z)
            if farkas > 0 and ray <= CERTIFICATE_TOL * farkas:
                return SolverStatus.INFEASIBLE
            if max(_norm_inf(z), _norm_inf(y)) > DIVERGENCE_LIMIT * (1.0 + _norm_inf(c)):
                return SolverStatus.INFEASIBLE

        descent = float(c @ x)
        if descent < 0:
            recession = max(
                _norm_inf(E @ x),
                _norm_inf(np.maximum(G @ x, 0.0)),
                _norm_inf(Q @ x),
            )
            if recession <= CERTIFICATE_TOL * abs(descent):
                return SolverStatus.UNBOUNDED
            if _norm_inf(x) > DIVERGENCE_LIMIT * (1.0 + max(_norm_inf(b), _norm_inf(h))):
                return SolverStatus.UNBOUNDED
        return None


def solve(program: StandardFormProgram, options: Optional[SolverOptions] = None) -> SolverSolution:
    """Atalho para InteriorPointSolver(options).solve(program)"""
    return InteriorPointSolver(options).solve(program)


def dump_program(program: StandardFormProgram, directory: Path) -> Path:
    """
    Grava o programa para conferência com solvers de terceiros

    Escreve Q.mtx, E.mtx, G.mtx (Matrix Market) e vectors.json com c, b, h e nomes.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, matrix in (
        ("Q", program.quadratic_term),
        ("E", program.eq_matrix),
        ("G", program.ineq_matrix),
    ):
        scipy.io.mmwrite(str(directory / f"{name}.mtx"), sp.coo_matrix(matrix))
    vectors = {
        "c": program.linear_cost.tolist(),
        "b": program.eq_rhs.tolist(),
        "h": program.ineq_rhs.tolist(),
        "variable_names": program.variable_names,
    }
    (directory / "vectors.json").write_text(json.dumps(vectors, indent=2), encoding="utf-8")
    logger.info(f"Programa gravado em {directory}")
    return directory
