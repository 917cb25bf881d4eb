"""
drcal gen-data: conjunto sintético y = Θ0ᵀx + ξ, ξ ~ N(0, σ²)
"""
import argparse
import logging
import time
from pathlib import Path

from app.commands.common import add_case_flag
from app.models.dataset import DatasetRole
from app.services.datasets import gen_synthetic_dataset, parse_theta, write_dataset
from app.services.power_case import load_case, resolve_case_path
from app.services.reporting import write_manifest

logger = logging.getLogger(__name__)


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("gen-data", help="Gera um conjunto de dados sintético (CSV)")
    parser.add_argument("--theta0", required=True, help="Θ0, ex.: '1,2' ou '1,2;0.5,1' (parques por ';')")
    parser.add_argument("--n", type=int, required=True, help="Número de amostras")
    parser.add_argument("--sigma", type=float, required=True, help="Desvio padrão do erro (MW)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--role", choices=[r.value for r in DatasetRole], required=True)
    parser.add_argument("--out", required=True, help="Arquivo CSV de saída")
    parser.add_argument("--feature-low", type=float, default=None)
    parser.add_argument("--feature-high", type=float, default=None)
    add_case_flag(parser)
    parser.set_defaults(handler=run, log_dir=lambda args: Path(args.out).parent / "logs")
    return parser


def run(args: argparse.Namespace, argv) -> int:
    started = time.perf_counter()
    theta0 = parse_theta(args.theta0)
    case = load_case(args.case)
    feature_range = None
    if args.feature_low is not None or args.feature_high is not None:
        if args.feature_low is None or args.feature_high is None:
            raise ValueError("--feature-low e --feature-high devem ser usados juntos")
        feature_range = (args.feature_low, args.feature_high)
    capacity = case.wind_capacity if theta0.shape[1] == case.n_wind else None

    dataset = gen_synthetic_dataset(
        theta0, args.n, args.sigma, args.seed, DatasetRole(args.role), capacity, feature_range
    )
    out = write_dataset(dataset, args.out)
    write_manifest(
        out.parent,
        ["drcal", *argv],
        {
            "theta0": theta0.tolist(),
            "n": args.n,
            "sigma": args.sigma,
            "role": args.role,
            "case": args.case,
            "feature_range": list(feature_range) if feature_range else None,
        },
        [resolve_case_path(args.case)],
        args.seed,
        time.perf_counter() - started,
        name=f"{out.stem}.manifest.json",
    )
    logger.info(f"{dataset.n_samples} amostras gravadas em {out}")
    return 0
