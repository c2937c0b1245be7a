"""Command-line entry point orchestrating the pipeline stages.

Exit codes: 0 success, 1 validation/usage error, 2 backend or transport
error, 3 internal error. Logs go to stderr, artifacts to the configured
output directory.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__, pipeline
from .analysis import (
    NoiseSpec,
    diversity_scores,
    inject_noise,
    retained_noise,
    unit_count_stats,
)
from .augment import augment_corpus, load_generations
from .config import RunConfig, load_config
from .corpus import Corpus, Document, load_corpus
from .errors import GatewayError, ValidationError
from .llm import TASK_EE, TASK_QAG
from .theory import hand_instance, normalized_margin, sweep_theorem1, sweep_theorem2

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        raise ValidationError(message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--corpus", type=Path, default=None)
    parser.add_argument("--queries", type=Path, default=None)
    parser.add_argument("--qrels", type=Path, default=None)
    parser.add_argument("--seed", type=int, default=None, help="sampling / mock seed")
    parser.add_argument("--tau", type=int, default=None, help="regeneration threshold")
    parser.add_argument("--strategy", choices=["tri", "tmo"], default=None)
    parser.add_argument(
        "--components",
        default=None,
        help="comma-separated subset of original,qa,event",
    )
    parser.add_argument("--k", default=None, help="comma-separated cutoffs, e.g. 1,10")
    parser.add_argument("--parallelism", type=int, default=None)
    parser.add_argument("--language", choices=["en", "zh"], default=None)
    parser.add_argument("--sample-size", type=int, default=None)


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    out: dict[str, Any] = {"paths": {}}
    if args.out is not None:
        out["paths"]["output_dir"] = str(args.out)
    for name in ("corpus", "queries", "qrels"):
        value = getattr(args, name, None)
        if value is not None:
            out["paths"][name] = str(value)
    if not out["paths"]:
        del out["paths"]
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "tau", None) is not None:
        out["threshold"] = args.tau
    if getattr(args, "strategy", None) is not None:
        out["strategy"] = args.strategy
    if getattr(args, "components", None) is not None:
        out["components"] = [c.strip() for c in args.components.split(",") if c.strip()]
    if getattr(args, "k", None) is not None:
        out["k_values"] = [int(k) for k in args.k.split(",")]
    if getattr(args, "parallelism", None) is not None:
        out["parallelism"] = args.parallelism
    if getattr(args, "language", None) is not None:
        out["language"] = args.language
    if getattr(args, "sample_size", None) is not None:
        out["sample_size"] = args.sample_size
    return out


def _config(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config, _overrides(args))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qaea-dr", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("ingest", "validate and normalize corpus/queries/qrels"),
        ("embed", "embed originals and generated texts"),
        ("index", "build the per-component vector indexes"),
        ("retrieve", "run top-k retrieval over the selected components"),
        ("ablate", "evaluate all seven component combinations"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("augment", help="generate QA pairs and events per document")
    _add_common(p)
    p.add_argument(
        "--import-generations",
        type=Path,
        default=None,
        help="skip generation; import an existing generations.jsonl",
    )

    p = sub.add_parser("eval", help="score rankings against the qrels")
    _add_common(p)
    p.add_argument("--force", action="store_true", help="allow mixed-config inputs")

    p = sub.add_parser("run", help="all stages end to end")
    _add_common(p)

    p = sub.add_parser("verify-theory", help="margin-dominance Monte-Carlo checks")
    p.add_argument("--instances", type=int, default=10000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--d-max", type=int, default=64)

    p = sub.add_parser("analyze", help="diversity / noise / count analyses")
    p.add_argument("action", choices=["diversity", "noise", "counts"])
    _add_common(p)
    p.add_argument("--max-texts", type=int, default=200, help="diversity sample cap")
    p.add_argument(
        "--percentages", default="0.2,0.5,1.0", help="noise levels, e.g. 0.2,0.5,1.0"
    )
    return parser


def _cmd_verify_theory(args: argparse.Namespace) -> int:
    hand = hand_instance()
    margin_best = normalized_margin(hand.v_q, hand.v1_gen[0], hand.v2)
    margin_orig = normalized_margin(hand.v_q, hand.v1, hand.v2)
    print(
        f"hand check (d=4): best-generated margin {margin_best:.6f} "
        f">= original margin {margin_orig:.6f}"
    )

    failures = 0
    for label, sweep in [
        ("single-type augmentation", sweep_theorem1),
        ("pooled qa+event augmentation", sweep_theorem2),
    ]:
        result = sweep(args.instances, args.seed, d_max=args.d_max)
        status = "PASS" if result.violations == 0 else "FAIL"
        print(
            f"{status} {label}: {result.instances} instances, "
            f"{result.violations} violations, worst slack {result.worst_slack:.3e}"
        )
        failures += result.violations
    return 0 if failures == 0 else 1


def _cmd_analyze(args: argparse.Namespace) -> int:
    config = _config(args)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)

    if args.action == "counts":
        records = load_generations(out / "generations.jsonl")
        stats = unit_count_stats(records)
        path = out / "counts.csv"
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["mean_qa_per_doc", "mean_events_per_doc"])
            writer.writerow(
                [f"{stats.mean_qa_per_doc:.4f}", f"{stats.mean_events_per_doc:.4f}"]
            )
        print(
            f"mean QA per doc: {stats.mean_qa_per_doc:.2f}; "
            f"mean events per doc: {stats.mean_events_per_doc:.2f} -> {path}"
        )
        return 0

    if args.action == "diversity":
        import random

        records = load_generations(out / "generations.jsonl")
        provider = config.build_embedder()
        rows = []
        for task, kind in [(TASK_QAG, "qa"), (TASK_EE, "event")]:
            texts = [
                u.text for r in records if r.task == task and not r.failed for u in r.units
            ]
            if len(texts) > args.max_texts:
                texts = random.Random(config.seed).sample(texts, args.max_texts)
            if len(texts) < 2:
                logger.warning("skipping %s diversity: fewer than two texts", kind)
                continue
            scores = diversity_scores(texts, provider)
            rows.append(
                [
                    kind,
                    len(texts),
                    f"{scores.compression_ratio:.4f}",
                    f"{scores.self_bleu:.4f}",
                    f"{scores.self_embed_score:.4f}",
                    f"{scores.self_repetition:.4f}",
                ]
            )
        path = out / "diversity.csv"
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                [
                    "kind",
                    "texts",
                    "compression_ratio",
                    "self_bleu",
                    "self_embed_score",
                    "self_repetition",
                ]
            )
            writer.writerows(rows)
        print(f"wrote {path}")
        return 0

    # noise: inject at each level, regenerate, measure retention
    corpus = load_corpus(out / "corpus.jsonl")
    generator = config.build_generator()
    evaluator = config.build_evaluator()
    percentages = [float(p) for p in args.percentages.split(",")]
    rows = []
    for pct in percentages:
        noisy_docs = []
        tokens_per_doc: dict[str, list[str]] = {}
        for doc in corpus:
            noisy_text, tokens = inject_noise(
                doc.text, NoiseSpec(percentage=pct, seed=config.seed)
            )
            noisy_docs.append(Document(doc_id=doc.doc_id, text=noisy_text))
            tokens_per_doc[doc.doc_id] = tokens
        records = augment_corpus(
            Corpus(documents=tuple(noisy_docs)),
            threshold=config.threshold,
            generator=generator,
            evaluator=evaluator,
            language=config.language,
            parallelism=config.parallelism,
        )
        for task, kind in [(TASK_QAG, "qa"), (TASK_EE, "event")]:
            fractions = []
            for record in records:
                if record.task != task or record.failed:
                    continue
                tokens = tokens_per_doc[record.doc_id]
                if tokens:
                    fractions.append(
                        retained_noise([u.text for u in record.units], tokens)
                    )
            mean = sum(fractions) / len(fractions) if fractions else 0.0
            rows.append([f"{pct:.2f}", kind, f"{mean:.4f}"])
    path = out / "noise.csv"
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["input_noise", "kind", "retained_noise"])
        writer.writerows(rows)
    print(f"wrote {path}")
    return 0


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "verify-theory":
        return _cmd_verify_theory(args)
    if args.command == "analyze":
        return _cmd_analyze(args)

    config = _config(args)
    if args.command == "ingest":
        pipeline.stage_ingest(config)
    elif args.command == "augment":
        pipeline.stage_augment(config, import_generations=args.import_generations)
    elif args.command == "embed":
        pipeline.stage_embed(config)
    elif args.command == "index":
        pipeline.stage_index(config)
    elif args.command == "retrieve":
        pipeline.stage_retrieve(config)
    elif args.command == "eval":
        report = pipeline.stage_eval(config, force=args.force)
        for name in sorted(report.aggregates):
            print(f"{name}: {report.aggregates[name]:.4f}")
    elif args.command == "ablate":
        reports = pipeline.stage_ablate(config)
        for report in reports:
            summary = ", ".join(
                f"{m}={report.aggregates[m]:.4f}" for m in sorted(report.aggregates)
            )
            print(
                f"{report.scenario.label}: vectors={report.vector_count} "
                f"sim_count={report.sim_count} {summary}"
            )
    elif args.command == "run":
        report = pipeline.run_mock_pipeline(config)
        for name in sorted(report.aggregates):
            print(f"{name}: {report.aggregates[name]:.4f}")
    else:  # pragma: no cover - argparse enforces choices
        raise ValidationError(f"unknown command {args.command!r}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args)
    except ValidationError as e:
        logger.error("validation error: %s", e)
        return 1
    except GatewayError as e:
        logger.error("backend error: %s", e)
        return 2
    except Exception:
        logger.exception("internal error")
        return 3


if __name__ == "__main__":
    sys.exit(main())
