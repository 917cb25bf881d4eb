"""
drcal sweep: grade de calibrações sobre σ_c e η
"""
import argparse
import logging
import time

from app.commands.common import (
    add_calibration_flags,
    add_case_flag,
    build_config,
    output_dir,
    parse_floats,
)
from app.services.datasets import parse_theta
from app.services.power_case import resolve_case_path
from app.services.reporting import write_manifest
from app.services.sweep import run_sweep

logger = logging.getLogger(__name__)


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("sweep", help="Varredura de σ_c e η com relatório de tendência")
    add_case_flag(parser)
    parser.add_argument("--uq-data", required=True, help="CSV do conjunto de UQ")
    parser.add_argument("--theta0", required=True)
    parser.add_argument("--sigma-c", default="20", help="Lista de σ_c, ex.: '15,18,20,22,25'")
    parser.add_argument("--n-cal", type=int, default=20, help="Amostras de calibração por ponto")
    parser.add_argument("--jobs", type=int, default=1, help="Processos em paralelo")
    parser.add_argument("--out", required=True)
    add_calibration_flags(parser, eta_grid=True)
    parser.set_defaults(handler=run, log_dir=lambda args: output_dir(args.out) / "logs")
    return parser


def run(args: argparse.Namespace, argv) -> int:
    started = time.perf_counter()
    out = output_dir(args.out)
    eta_grid = parse_floats(args.eta)
    config = build_config(args, eta=eta_grid[0])
    sigma_grid = parse_floats(args.sigma_c)
    if args.jobs < 1:
        raise ValueError("--jobs deve ser >= 1")
    theta0 = parse_theta(args.theta0)

    summary = run_sweep(
        args.case,
        args.uq_data,
        theta0,
        args.eps0,
        sigma_grid,
        eta_grid,
        args.n_cal,
        args.seed,
        config,
        out,
        args.jobs,
    )
    write_manifest(
        out,
        ["drcal", *argv],
        {
            "command": "sweep",
            "sigma_c": sigma_grid,
            "eta": eta_grid,
            "n_cal": args.n_cal,
            "theta0": theta0.tolist(),
            "eps0": args.eps0,
            "calibration": config.model_dump(mode="json"),
        },
        [resolve_case_path(args.case), args.uq_data],
        args.seed,
        time.perf_counter() - started,
    )
    ok = int((summary["status"] == "ok").sum())
    logger.info(f"Varredura concluída: {ok}/{len(summary)} pontos")
    # sem nenhum ponto válido não há tendência a relatar
    return 0 if ok else 4
