"""
Linha de comando drcal

Códigos de saída: 0 sucesso, 2 uso/leitura, 3 modelo inviável, 4 falha numérica.
"""
import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from app import __version__
from app.commands import calibrate, distributed, evaluate, gen_data, sweep
from app.config.logging import setup_logging
from app.exceptions import DrcalError

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drcal",
        description="Calibração de previsões eólicas orientada a custo com DR-OPF",
    )
    parser.add_argument("--version", action="version", version=f"drcal {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    gen_data.add_parser(subparsers)
    calibrate.add_parser(subparsers)
    sweep.add_parser(subparsers)
    evaluate.add_parser(subparsers)
    distributed.add_operator_parser(subparsers)
    distributed.add_agent_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Ponto de entrada

    Args:
        argv: Argumentos (sem o nome do programa); padrão sys.argv[1:]

    Returns:
        Código de saída
    """
    load_dotenv()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    log_dir = args.log_dir(args)
    setup_logging(log_dir=log_dir, to_file=log_dir is not None)

    try:
        return args.handler(args, argv)
    except DrcalError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        print(f"drcal {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValidationError, ValueError, OSError) as exc:
        logger.error(f"Entrada inválida: {exc}")
        print(f"drcal {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        logger.exception(f"Erro inesperado: {exc}")
        print(f"drcal {args.command}: erro inesperado: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
