"""
drcal operator / drcal agent: calibração com Θ privado nos agentes
"""
import argparse
import logging
import time
from pathlib import Path

from app.commands.common import (
    add_calibration_flags,
    add_case_flag,
    build_config,
    output_dir,
    parse_ints,
)
from app.distributed.agent import run_agent
from app.distributed.operator import run_operator
from app.models.dataset import DatasetRole
from app.services.datasets import parse_theta, read_dataset
from app.services.power_case import load_case, resolve_case_path
from app.services.reporting import plot_trajectory, write_json, write_manifest, write_run

logger = logging.getLogger(__name__)


def add_operator_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("operator", help="Operador do sistema (modo distribuído)")
    add_case_flag(parser)
    parser.add_argument("--cal-data", required=True, help="CSV do conjunto de calibração")
    parser.add_argument("--listen", default="127.0.0.1:7070", help="host:porta")
    parser.add_argument("--agents", type=int, default=1, help="Número de agentes esperados")
    parser.add_argument("--out", required=True, help="Pasta da execução")
    parser.add_argument("--plot", action="store_true")
    add_calibration_flags(parser)
    parser.set_defaults(handler=run_operator_command, log_dir=lambda args: output_dir(args.out) / "logs")
    return parser


def add_agent_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("agent", help="Agente de previsão eólica (modo distribuído)")
    parser.add_argument("--uq-data", required=True, help="CSV de UQ (colunas y dos parques do agente)")
    parser.add_argument("--theta0", required=True, help="θ0 dos parques do agente")
    parser.add_argument("--connect", default="127.0.0.1:7070", help="host:porta do operador")
    parser.add_argument("--farms", default="0", help="Índices 0-based dos parques, ex.: '0,1'")
    parser.add_argument("--agent-id", default="agent")
    parser.add_argument("--lr-theta", type=float, default=None)
    parser.add_argument("--eta", type=float, default=None)
    parser.add_argument("--out", default=None, help="Pasta local para o θ final (opcional)")
    parser.set_defaults(
        handler=run_agent_command,
        log_dir=lambda args: output_dir(args.out) / "logs" if args.out else None,
    )
    return parser


def run_operator_command(args: argparse.Namespace, argv) -> int:
    started = time.perf_counter()
    out = output_dir(args.out)
    config = build_config(args)
    case = load_case(args.case)
    cal_data = read_dataset(args.cal_data, DatasetRole.CALIBRATION)

    resolved = {
        "command": "operator",
        "case": args.case,
        "cal_data": args.cal_data,
        "agents": args.agents,
        "eps0": args.eps0,
        "calibration": config.model_dump(mode="json"),
    }

    def keep_partial(partial):
        write_run(partial, out, resolved)
        logger.warning(f"Trajetória parcial ({partial.iter} rodadas) gravada em {out}")

    state = run_operator(case, cal_data, config, args.listen, args.agents, args.eps0, on_abort=keep_partial)
    write_run(state, out, resolved)
    if args.plot:
        plot_trajectory(state, out)
    write_manifest(
        out,
        ["drcal", *argv],
        resolved,
        [resolve_case_path(args.case), args.cal_data],
        config.seed,
        time.perf_counter() - started,
    )
    return 0


def run_agent_command(args: argparse.Namespace, argv) -> int:
    farms = parse_ints(args.farms)
    uq_data = read_dataset(args.uq_data, DatasetRole.UQ)
    if uq_data.n_wind != len(farms):
        uq_data = uq_data.select_farms(farms)
    theta0 = parse_theta(args.theta0)

    theta = run_agent(uq_data, theta0, args.connect, farms, args.agent_id, args.lr_theta, args.eta)
    if args.out:
        # θ fica apenas no disco local do agente
        write_json(Path(args.out) / f"{args.agent_id}_theta.json", {"farms": farms, "theta": theta.tolist()})
    logger.info(f"Agente {args.agent_id} concluído")
    return 0
