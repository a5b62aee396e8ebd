from dotenv import load_dotenv
load_dotenv()  # loads .env before any module reads os.getenv()

import argparse
import json
import logging
import sys

from core.config import SyntheticSpec, TrainConfig, default_log_level, default_output_dir, resolve
from core.orchestrator import Orchestrator
from reports.export import metrics_csv

logger = logging.getLogger("cscd")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


# ── argument groups ───────────────────────────────────────────────────────────

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="output directory (default: $CSCD_OUTPUT_DIR or runs/)")
    parser.add_argument("--config", default=None, help="JSON file of defaults; flags override it")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ... (default: $CSCD_LOG_LEVEL)")
    parser.add_argument("--progress", action="store_true", help="show an epoch progress bar")


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="directory holding concepts/relations/qmatrix/responses CSVs")
    parser.add_argument("--learners", type=int, default=None, help="declared learner count (default: max id + 1)")
    parser.add_argument("--exercises", type=int, default=None, help="declared exercise count (default: max id + 1)")


def _add_counts(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--learner-count", type=int, default=None, help="declared learner count (default: from checkpoint)")
    parser.add_argument("--exercise-count", type=int, default=None, help="declared exercise count (default: from checkpoint)")


def _add_train_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", choices=["cscd", "irt"], default=None)
    parser.add_argument("--dim", type=int, default=None, help="embedding dimension d")
    parser.add_argument("--layers", type=int, default=None, help="EGAT layers per channel")
    parser.add_argument("--hidden1", type=int, default=None)
    parser.add_argument("--hidden2", type=int, default=None)
    parser.add_argument("--batch", dest="batch_size", type=int, default=None, help="8, 16, 32 or 64")
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--lr-decay", type=float, default=None)
    parser.add_argument("--dropout", type=float, default=None)
    parser.add_argument("--max-epochs", type=int, default=None)
    parser.add_argument("--patience", type=int, default=None)
    parser.add_argument("--min-delta", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--ablation", choices=["K", "R", "K+R"], default=None)
    parser.add_argument("--monotone-head", action="store_true", default=None)
    parser.add_argument("--leaky-slope", type=float, default=None)
    parser.add_argument("--ratio", type=int, nargs=3, default=None, metavar=("TRAIN", "VALID", "TEST"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cscd", description="Cognitive-structure diagnosis: train, evaluate and explain learner models."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset with planted KS/KUS truth")
    _add_common(p)
    p.add_argument("--learners", type=int, default=None)
    p.add_argument("--exercises", type=int, default=None)
    p.add_argument("--concepts", type=int, default=None)
    p.add_argument("--d-true", type=int, default=None)
    p.add_argument("--prereq-prob", type=float, default=None)
    p.add_argument("--dep-prob", type=float, default=None)
    p.add_argument("--defect-rate", type=float, default=None)
    p.add_argument("--guess", type=float, default=None)
    p.add_argument("--slip", type=float, default=None)
    p.add_argument("--answer-rate", type=float, default=None)
    p.add_argument("--max-concepts", dest="max_concepts_per_exercise", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="fit a model and save the best checkpoint")
    _add_common(p)
    _add_data(p)
    _add_train_config(p)

    p = sub.add_parser("evaluate", help="print one metrics CSV row for a checkpoint")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p.add_argument("--header", action="store_true", help="print the CSV header first")

    p = sub.add_parser("ablate", help="train K, R and K+R variants and compare them")
    _add_common(p)
    _add_data(p)
    _add_train_config(p)
    p.add_argument("--with-irt", action="store_true", help="append the IRT baseline row")

    p = sub.add_parser("diagnose", help="export KS/KUS for learners")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--learner", dest="learners", type=int, nargs="+", required=True)
    p.add_argument("--svg", action="store_true", help="also write a radar chart per learner")
    p.add_argument("--edges", type=int, default=5, help="weakest relations shown on the radar")
    _add_counts(p)

    p = sub.add_parser("recover", help="score diagnoses against planted truth files")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--truth", default=None, help="directory of truth_ks.csv/truth_kus.csv (default: --data)")
    _add_counts(p)

    p = sub.add_parser("stats", help="print the datasets summary table")
    _add_common(p)
    _add_data(p)
    return parser


# ── dispatch ──────────────────────────────────────────────────────────────────

SYNTHETIC_FIELDS = [
    "learners",
    "exercises",
    "concepts",
    "d_true",
    "prereq_prob",
    "dep_prob",
    "defect_rate",
    "guess",
    "slip",
    "answer_rate",
    "max_concepts_per_exercise",
    "seed",
]
TRAIN_FIELDS = list(TrainConfig.model_fields)


def _flags(args: argparse.Namespace, names: list[str]) -> dict:
    values = {name: getattr(args, name, None) for name in names}
    if values.get("ratio") is not None:
        values["ratio"] = tuple(values["ratio"])
    return values


def run(args: argparse.Namespace) -> int:
    out_dir = args.out or default_output_dir()
    orchestrator = Orchestrator(out_dir, progress=args.progress)

    if args.command == "generate":
        spec = resolve(SyntheticSpec, args.config, **_flags(args, SYNTHETIC_FIELDS))
        orchestrator.generate(spec)
    elif args.command == "train":
        config = resolve(TrainConfig, args.config, **_flags(args, TRAIN_FIELDS))
        outcome = orchestrator.train(args.data, config, args.learners, args.exercises)
        print(metrics_csv([outcome["test"]]), end="")
    elif args.command == "evaluate":
        row = orchestrator.evaluate(args.checkpoint, args.data, args.split, args.learners, args.exercises)
        print(metrics_csv([row], header=args.header), end="")
    elif args.command == "ablate":
        config = resolve(TrainConfig, args.config, **_flags(args, TRAIN_FIELDS))
        rows = orchestrator.ablate(args.data, config, args.with_irt, args.learners, args.exercises)
        print(metrics_csv(rows), end="")
    elif args.command == "diagnose":
        for path in orchestrator.diagnose(
            args.checkpoint, args.data, args.learners, args.svg, args.edges, args.learner_count, args.exercise_count
        ):
            print(path)
    elif args.command == "recover":
        summary = orchestrator.recover(args.checkpoint, args.data, args.truth, args.learner_count, args.exercise_count)
        print(json.dumps(summary, indent=2))
    elif args.command == "stats":
        print(orchestrator.stats(args.data, args.learners, args.exercises).to_string())
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        logging.basicConfig(
            level=(args.log_level or default_log_level()).upper(),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        return run(args)
    except ArithmeticError as e:
        logger.error("numerical failure: %s", e)
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error("I/O failure: %s", e)
        return EXIT_IO
    except (ValueError, LookupError) as e:
        logger.error("%s", e)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
