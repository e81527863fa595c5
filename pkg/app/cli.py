"""Command-line front end.

Exit codes: 0 ok, 1 check failure, 2 usage, 3 data, 4 checkpoint, 130 interrupted.
"""

import argparse
import logging
import os
from pathlib import Path
from typing import Optional, Sequence

from app.commands.report import cmd_report, cmd_report_across
from app.commands.search import cmd_resume, cmd_search
from app.commands.tools import cmd_eval_genome, cmd_gen_data, cmd_grad_check
from app.config import load_config
from app.errors import EXIT_CHECK_FAILED, EXIT_INTERRUPTED, CnnGaError, InvalidArgumentError

logger = logging.getLogger(__name__)

# flag dest -> RunConfig field
RUN_FLAGS = {
    "seed": "seed",
    "pop_size": "population_size",
    "generations": "max_generations",
    "evaluator": "evaluator",
    "data": "data",
    "image_size": "image_size",
    "epochs": "epochs",
    "lr": "learning_rate",
    "batch_size": "batch_size",
    "out": "out",
    "parallel": "parallel",
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat 'key = value' config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--pop-size", type=int)
    parser.add_argument("--generations", type=int)
    parser.add_argument("--evaluator", choices=["cnn", "surrogate"])
    parser.add_argument("--data", help="directory with 0/ and 1/ subfolders, or synthetic:<n>:<size>")
    parser.add_argument("--image-size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--out", type=Path)
    parser.add_argument("--parallel", type=int, help="worker processes for offspring evaluation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnn-ga", description="Genetic algorithm search over CNN hyperparameters")
    parser.add_argument("--log-level", default=os.getenv("CNNGA_LOG_LEVEL", "INFO"))
    sub = parser.add_subparsers(dest="command", required=True)

    search = sub.add_parser("search", help="run a GA search")
    _add_run_flags(search)

    resume = sub.add_parser("resume", help="continue a run from its checkpoint")
    resume.add_argument("checkpoint", type=Path)

    gen = sub.add_parser("gen-data", help="write a synthetic two-class image directory")
    gen.add_argument("--n", type=int, default=250)
    gen.add_argument("--size", type=int, default=32)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)

    grad = sub.add_parser("grad-check", help="finite-difference check of every layer")
    grad.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("eval-genome", help="train and score one genome")
    ev.add_argument("genome", help="16 space-separated gene indices")
    ev.add_argument("--save-weights", type=Path)
    _add_run_flags(ev)

    report = sub.add_parser("report", help="fitness table and CSV for a run, or a summary across runs")
    report.add_argument("history", type=Path, nargs="?", help="history.jsonl of one run")
    report.add_argument("--csv", type=Path)
    report.add_argument("--across", type=Path, nargs="+", metavar="RUN_DIR")
    return parser


def _run_config(args: argparse.Namespace):
    overrides = {field: getattr(args, dest) for dest, field in RUN_FLAGS.items()}
    return load_config(args.config, overrides)


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "search":
        return cmd_search(_run_config(args))
    if args.command == "resume":
        return cmd_resume(args.checkpoint)
    if args.command == "gen-data":
        return cmd_gen_data(args.n, args.size, args.seed, args.out)
    if args.command == "grad-check":
        return cmd_grad_check(args.seed)
    if args.command == "eval-genome":
        return cmd_eval_genome(args.genome, _run_config(args), args.save_weights)
    if args.across:
        return cmd_report_across(args.across)
    if args.history is None:
        raise InvalidArgumentError("report needs a history file or --across RUN_DIR...")
    return cmd_report(args.history, args.csv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return dispatch(args)
    except KeyboardInterrupt:
        logger.warning("interrupted; the last checkpoint is intact")
        return EXIT_INTERRUPTED
    except CnnGaError as e:
        logger.error(str(e))
        return e.exit_code
    except Exception as e:
        logger.exception(f"unexpected error: {e}")
        return EXIT_CHECK_FAILED
