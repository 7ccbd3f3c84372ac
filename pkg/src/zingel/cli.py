"""Command-line interface: train, predict, evaluate, gradcheck, preprocess.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import backprop, data, scoring, training
from .errors import DataError, IdMismatchError, ZingelError
from .text import normalize


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports flag misuse as exit code 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zingel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train the 5-member ensemble")
    train.add_argument("--instances", action="append", required=True, metavar="PATH")
    train.add_argument("--truth", action="append", required=True, metavar="PATH")
    train.add_argument("--embeddings", required=True, metavar="PATH")
    train.add_argument("--out", required=True, metavar="DIR")
    train.add_argument("--seed", type=int, required=True)
    train.add_argument("--config", metavar="PATH", help="flat key = value overrides")
    train.add_argument("--report-dir", metavar="DIR", help="write validation-curve CSV and figures")

    predict = sub.add_parser("predict", help="score tweets with a trained ensemble")
    predict.add_argument("--model", required=True, metavar="DIR")
    predict.add_argument("--instances", required=True, metavar="PATH")
    predict.add_argument("--out", required=True, metavar="PATH")
    predict.add_argument("--emit-attention", metavar="PATH", help="also write per-token attention weights")

    evaluate = sub.add_parser("evaluate", help="compare predictions against truth")
    evaluate.add_argument("--pred", required=True, metavar="PATH")
    evaluate.add_argument("--truth", required=True, metavar="PATH")
    evaluate.add_argument("--report-dir", metavar="DIR", help="write score CSV and figures")

    gradcheck = sub.add_parser("gradcheck", help="validate analytic gradients numerically")
    gradcheck.add_argument("--seed", type=int, required=True)
    gradcheck.add_argument("--trials", type=int, default=20)
    gradcheck.add_argument(
        "--corrupt-gradients",
        action="store_true",
        help="debug hook: offset the analytic gradients so the check must fail",
    )

    sub.add_parser("preprocess", help="normalize and tokenize stdin lines to stdout")
    return parser


def _load_corpus(instance_paths, truth_paths):
    if len(instance_paths) != len(truth_paths):
        raise _UsageError("zingel train: --instances and --truth must be given in matching pairs")
    pairs = []
    seen_ids: set[str] = set()
    for inst_path, truth_path in zip(instance_paths, truth_paths):
        tweets = data.load_instances(inst_path)
        truth = data.load_truth(truth_path)
        for tweet in tweets:
            if tweet.id in seen_ids:
                raise DataError(f"duplicate id {tweet.id!r} across datasets")
            seen_ids.add(tweet.id)
        pairs.extend(data.match_instances_to_truth(tweets, truth))
    return pairs


def _run_train(args) -> int:
    from .embeddings import load_pretrained

    config = training.TrainConfig()
    if args.config:
        config = config.replace(**training.parse_config_file(args.config))
    config = config.replace(seed=args.seed)

    pairs = _load_corpus(args.instances, args.truth)
    pretrained = load_pretrained(args.embeddings, config.embed_dim)
    ensemble = training.train_ensemble(pairs, pretrained, config)
    training.save_ensemble(args.out, ensemble)

    members_info = [
        {
            "fold": i,
            "best_epoch": m.best_epoch,
            "validation_mse": m.validation_mse,
            "val_curve": m.val_curve,
        }
        for i, m in enumerate(ensemble.members)
    ]
    if args.report_dir:
        from .report import write_training_report

        write_training_report(args.report_dir, members_info)
    print(
        json.dumps(
            {
                "out": args.out,
                "samples": len(pairs),
                "vocab_size": len(ensemble.vocab),
                "seq_len": ensemble.seq_len,
                "members": [
                    {k: info[k] for k in ("fold", "best_epoch", "validation_mse")}
                    for info in members_info
                ],
            }
        )
    )
    return 0


def _run_predict(args) -> int:
    ensemble = training.load_ensemble(args.model)
    tweets = data.load_instances(args.instances)
    predictions = []
    attention_lines = []
    for tweet in tweets:
        p, alpha, tokens = training.predict_with_attention(ensemble, tweet)
        predictions.append(scoring.Prediction.from_distribution(tweet.id, p))
        if args.emit_attention:
            attention_lines.append(
                {"id": tweet.id, "tokens": tokens, "weights": [float(a) for a in alpha]}
            )
    scoring.write_predictions(predictions, args.out)
    if args.emit_attention:
        with open(args.emit_attention, "w", encoding="utf-8") as fh:
            for line in attention_lines:
                fh.write(json.dumps(line, separators=(",", ":")))
                fh.write("\n")
    return 0


def _run_evaluate(args) -> int:
    scores = scoring.read_predictions(args.pred)
    truth = data.load_truth(args.truth)
    if set(scores) != set(truth):
        raise IdMismatchError("prediction and truth files cover different id sets")
    metrics = scoring.classification_metrics(
        {tweet_id: scoring.class_from_score(s) for tweet_id, s in scores.items()},
        {tweet_id: record.truth_class for tweet_id, record in truth.items()},
    ).with_mse(
        scoring.mse(
            [(scores[tweet_id], truth[tweet_id].truth_mean) for tweet_id in scores]
        )
    )
    if args.report_dir:
        from .report import write_evaluation_report

        rows = [
            {
                "id": tweet_id,
                "predicted_score": scores[tweet_id],
                "true_score": truth[tweet_id].truth_mean,
                "predicted_class": scoring.class_from_score(scores[tweet_id]),
                "true_class": truth[tweet_id].truth_class,
            }
            for tweet_id in scores
        ]
        write_evaluation_report(args.report_dir, rows, metrics)
    print(metrics.to_json())
    return 0


def _run_gradcheck(args) -> int:
    if args.trials < 1:
        raise _UsageError("zingel gradcheck: --trials must be at least 1")
    perturbation = 1e-2 if args.corrupt_gradients else 0.0
    worst = backprop.gradcheck_trials(args.trials, args.seed, grad_perturbation=perturbation)
    passed = worst < backprop.GRADCHECK_THRESHOLD
    print(
        json.dumps(
            {
                "trials": args.trials,
                "worst_relative_error": worst,
                "threshold": backprop.GRADCHECK_THRESHOLD,
                "passed": passed,
            }
        )
    )
    return 0 if passed else 3


def _run_preprocess(_args) -> int:
    for line in sys.stdin:
        print(normalize(line.rstrip("\r\n")))
    return 0


_HANDLERS = {
    "train": _run_train,
    "predict": _run_predict,
    "evaluate": _run_evaluate,
    "gradcheck": _run_gradcheck,
    "preprocess": _run_preprocess,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ZingelError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
