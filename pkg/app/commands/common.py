"""
Opções compartilhadas pelos subcomandos
"""
import argparse
from pathlib import Path
from typing import List, Optional

from app.config.settings import settings
from app.exceptions import ParseError
from app.schemas.calibration import CalibrationConfig, DispatchOptions, LayerConfig
from app.schemas.solver import SolverOptions


def parse_floats(text: str) -> List[float]:
    """'15,20,25' → [15.0, 20.0, 25.0]"""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ParseError(f"Lista de números inválida: '{text}'") from exc
    if not values:
        raise ParseError(f"Lista de números vazia: '{text}'")
    return values


def parse_ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ParseError(f"Lista de inteiros inválida: '{text}'") from exc


def add_case_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--case",
        default="case5",
        help="Arquivo JSON do caso ou nome embutido (case5, case5_2wind)",
    )


def add_calibration_flags(parser: argparse.ArgumentParser, eta_grid: bool = False) -> None:
    """Hiperparâmetros da calibração; padrões vêm de Settings (DRCAL_*)"""
    group = parser.add_argument_group("calibração")
    if eta_grid:
        group.add_argument("--eta", default=str(settings.eta), help="Lista de η, ex.: '0.1,1,10'")
    else:
        group.add_argument("--eta", type=float, default=settings.eta, help="Peso η do MSE")
    group.add_argument("--lr-theta", type=float, default=settings.lr_theta, help="Passo κ_θ")
    group.add_argument("--lr-eps", type=float, default=settings.lr_eps, help="Passo κ_ε")
    group.add_argument("--eps0", type=float, default=settings.eps0, help="ε inicial")
    group.add_argument("--eps-floor", type=float, default=0.0, help="Piso de ε")
    group.add_argument("--stop-delta", type=float, default=None, help="ΔL_min absoluto")
    group.add_argument("--max-iters", type=int, default=settings.max_iters)
    group.add_argument("--risk-level", type=float, default=settings.risk_level, help="γ")
    group.add_argument("--xi-bound", type=float, default=settings.xi_bound_mw, help="ξ̄ = −ξ̲ (MW)")
    group.add_argument("--rho", type=float, default=settings.regularization_rho, help="Regularização ρ")
    group.add_argument("--workers", type=int, default=settings.workers, help="Threads por iteração")
    group.add_argument(
        "--load-shed-cost",
        type=float,
        default=None,
        help="Habilita corte de carga no despacho com este preço ($/MW)",
    )
    group.add_argument("--seed", type=int, default=0)


def build_config(args: argparse.Namespace, eta: Optional[float] = None) -> CalibrationConfig:
    """Monta CalibrationConfig a partir das opções (erros de validação viram código 2)"""
    return CalibrationConfig(
        eta=args.eta if eta is None else eta,
        lr_theta=args.lr_theta,
        lr_eps=args.lr_eps,
        stop_delta=args.stop_delta,
        max_iters=args.max_iters,
        eps_floor=args.eps_floor,
        risk_level=args.risk_level,
        xi_bound=args.xi_bound,
        seed=args.seed,
        workers=args.workers,
        layer=LayerConfig(regularization_rho=args.rho),
        solver=SolverOptions(),
        dispatch=DispatchOptions(load_shed_cost=args.load_shed_cost),
    )


def output_dir(path: str) -> Path:
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory
