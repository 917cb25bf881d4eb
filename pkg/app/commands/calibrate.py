"""
drcal calibrate: calibração monolítica de Θ e ε
"""
import argparse
import logging
import time

from app.commands.common import add_calibration_flags, add_case_flag, build_config, output_dir
from app.models.dataset import DatasetRole
from app.services.calibrator import calibrate
from app.services.datasets import forecast, parse_theta, read_dataset
from app.services.power_case import load_case, resolve_case_path
from app.services.reporting import plot_trajectory, write_manifest, write_run
from app.services.schedule import dump_schedule_program
from app.services.uncertainty import empirical_errors, with_epsilon

logger = logging.getLogger(__name__)


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("calibrate", help="Calibra Θ e ε de ponta a ponta")
    add_case_flag(parser)
    parser.add_argument("--uq-data", required=True, help="CSV do conjunto de UQ")
    parser.add_argument("--cal-data", required=True, help="CSV do conjunto de calibração")
    parser.add_argument("--theta0", required=True, help="Θ0, ex.: '1,2'")
    parser.add_argument("--out", required=True, help="Pasta da execução")
    parser.add_argument("--plot", action="store_true", help="Grava loss.svg e epsilon.svg")
    parser.add_argument(
        "--dump-program",
        action="store_true",
        help="Grava o LP de agendamento da primeira amostra em OUT/program",
    )
    add_calibration_flags(parser)
    parser.set_defaults(handler=run, log_dir=lambda args: output_dir(args.out) / "logs")
    return parser


def run(args: argparse.Namespace, argv) -> int:
    started = time.perf_counter()
    out = output_dir(args.out)
    config = build_config(args)
    case = load_case(args.case)
    uq_data = read_dataset(args.uq_data, DatasetRole.UQ)
    cal_data = read_dataset(args.cal_data, DatasetRole.CALIBRATION)
    theta0 = parse_theta(args.theta0)

    if args.dump_program:
        uq = with_epsilon(empirical_errors(theta0, uq_data, config.xi_bound, config.risk_level), args.eps0)
        first = forecast(theta0, cal_data.features)[0]
        dump_schedule_program(case, first, uq, out / "program")

    state = calibrate(case, uq_data, cal_data, theta0, args.eps0, config)

    resolved = {
        "command": "calibrate",
        "case": args.case,
        "uq_data": args.uq_data,
        "cal_data": args.cal_data,
        "theta0": theta0.tolist(),
        "eps0": args.eps0,
        "calibration": config.model_dump(mode="json"),
    }
    write_run(state, out, resolved)
    if args.plot:
        plot_trajectory(state, out)
    write_manifest(
        out,
        ["drcal", *argv],
        resolved,
        [resolve_case_path(args.case), args.uq_data, args.cal_data],
        config.seed,
        time.perf_counter() - started,
    )
    return 0
