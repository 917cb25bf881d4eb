"""
drcal evaluate: avalia um par (Θ*, ε*) em um conjunto, sem atualizar parâmetros
"""
import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np

from app.commands.common import add_calibration_flags, add_case_flag, build_config, output_dir
from app.exceptions import ParseError
from app.models.dataset import DatasetRole
from app.services.calibrator import evaluate
from app.services.datasets import forecast, parse_theta, read_dataset
from app.services.power_case import load_case, resolve_case_path
from app.services.reporting import write_json, write_manifest
from app.services.uncertainty import distribution_shift, empirical_errors

logger = logging.getLogger(__name__)


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("evaluate", help="Avalia final.json em um conjunto de dados")
    add_case_flag(parser)
    parser.add_argument("--final", required=True, help="final.json de uma calibração")
    parser.add_argument("--uq-data", required=True, help="CSV de UQ usado na calibração")
    parser.add_argument("--theta0", required=True, help="Θ0 usado para os erros empíricos")
    parser.add_argument("--data", required=True, help="CSV a avaliar")
    parser.add_argument("--out", required=True, help="Pasta de saída (evaluation.json)")
    add_calibration_flags(parser)
    parser.set_defaults(handler=run, log_dir=lambda args: output_dir(args.out) / "logs")
    return parser


def load_final(path) -> dict:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ParseError(f"Arquivo não encontrado: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"JSON inválido em {path}: {exc}") from exc
    if "theta" not in document or "epsilon" not in document:
        raise ParseError(f"{path} deve conter theta e epsilon")
    return document


def run(args: argparse.Namespace, argv) -> int:
    started = time.perf_counter()
    out = output_dir(args.out)
    config = build_config(args)
    case = load_case(args.case)
    final = load_final(args.final)
    theta = np.array(final["theta"], dtype=float)
    epsilon = np.array(final["epsilon"], dtype=float)
    uq_data = read_dataset(args.uq_data, DatasetRole.UQ)
    data = read_dataset(args.data, DatasetRole.CALIBRATION)

    uq = empirical_errors(parse_theta(args.theta0), uq_data, config.xi_bound, config.risk_level)
    breakdown, result = evaluate(case, uq, data, theta, epsilon, config)
    residuals = (data.actuals - forecast(theta, data.features)).T
    shift = distribution_shift(uq, residuals)

    report = {
        "breakdown": breakdown.model_dump(),
        "epsilon": epsilon.tolist(),
        "distribution_shift": shift.tolist(),
        "samples": [
            {"index": r.index, "task1": r.task1, "task2": r.task2, "clipped": r.clipped}
            for r in result.records
        ],
    }
    write_json(out / "evaluation.json", report)
    write_manifest(
        out,
        ["drcal", *argv],
        {"command": "evaluate", "final": args.final, "data": args.data, "theta0": args.theta0},
        [resolve_case_path(args.case), args.final, args.uq_data, args.data],
        config.seed,
        time.perf_counter() - started,
    )
    logger.info(f"Avaliação: total={breakdown.total:.6f}, deslocamento W1={shift.tolist()}")
    return 0
