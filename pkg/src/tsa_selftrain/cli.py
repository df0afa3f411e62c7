"""Command-line interface exposing the pipeline stages as subcommands.

Every subcommand accepts --seed where randomness exists; all stage seeds
are derived from that single root seed by stage name. Logs go to stderr,
data to files. Each run persists its resolved configuration next to its
outputs so a run can be reproduced from that file alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

from . import corpus as corpus_mod
from . import evaluation, formats, loop as loop_mod, synthkit, weaklabel
from .baseline import BaselineTagger, train_baseline
from .config import TrainConfig
from .lexicon import LexiconError, load_lexicon, save_lexicon
from .protocol import ExternalTaggerModel, ProtocolError, TaggerClient
from .seeding import derive_seed
from .tagging import LabeledSentence, TaggingError

log = logging.getLogger("tsa")

DEFAULT_DOMAIN_FILE = os.path.join(os.path.dirname(__file__), "data", "yelp_domains.txt")


class CliError(Exception):
    pass


def _write_run_config(path: str, command: str, options: dict) -> None:
    payload = {"command": command, "options": options}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- ingest

def cmd_ingest(args) -> int:
    lexicon = load_lexicon(args.lexicon, args.lexicon_threshold)
    domains = corpus_mod.load_domain_list(args.domains or DEFAULT_DOMAIN_FILE)
    counters = corpus_mod.IngestCounters()
    reviews = corpus_mod.load_reviews(args.reviews, args.business, counters)
    pool = corpus_mod.build_sentence_pool(
        reviews,
        domains,
        lexicon,
        max_sentences=args.max_sentences,
        seed=derive_seed(args.seed, "ingest"),
    )
    formats.write_sentences(pool, args.out)
    histogram = corpus_mod.domain_histogram(pool)
    stats = {
        "sentences": len(pool),
        "per_domain": dict(sorted(histogram.items())),
        "warnings": {
            "malformed_records": counters.malformed,
            "missing_business_join": counters.missing_business,
        },
    }
    with open(args.out + ".stats.json", "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_config(args.out + ".run.json", "ingest", _options(args))
    log.info("wrote %d sentences to %s", len(pool), args.out)
    return 0


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    spec = synthkit.SynthSpec.from_json(args.spec) if args.spec else synthkit.SynthSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    corpus = synthkit.generate(spec)
    os.makedirs(args.out, exist_ok=True)
    formats.write_labeled(corpus.labeled, os.path.join(args.out, "labeled.jsonl"))
    formats.write_sentences(corpus.pool, os.path.join(args.out, "pool.jsonl"))
    test_rows = [row for domain in sorted(corpus.test_sets) for row in corpus.test_sets[domain]]
    formats.write_labeled(test_rows, os.path.join(args.out, "test.jsonl"))
    save_lexicon(corpus.lexicon, os.path.join(args.out, "lexicon.tsv"))
    _write_run_config(os.path.join(args.out, "run_config.json"), "synth", _options(args))
    log.info(
        "generated %d labeled, %d pool, %d test sentences in %s",
        len(corpus.labeled),
        len(corpus.pool),
        len(test_rows),
        args.out,
    )
    return 0


# ---------------------------------------------------------------- train

def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        adam_epsilon=args.adam_epsilon,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        min_delta=args.min_delta,
        dev_fraction=args.dev_fraction,
    )


def cmd_train(args) -> int:
    labeled = formats.read_labeled(args.labeled)
    lexicon = load_lexicon(args.lexicon) if args.lexicon else None
    config = _train_config_from_args(args)
    train_part, dev = loop_mod.split_dev(
        labeled, config.dev_fraction, derive_seed(args.seed, "dev", 0)
    )
    seed = derive_seed(args.seed, "train", 0)
    os.makedirs(args.out, exist_ok=True)
    model_dir = os.path.join(args.out, "model")
    if args.tagger == "baseline":
        model = train_baseline(train_part, dev, config, seed, lexicon)
        model.save(model_dir)
        trace = model.dev_trace
    else:
        if not args.endpoint:
            raise CliError("--tagger external requires --endpoint")
        with TaggerClient.open(args.endpoint) as client:
            model_id = client.train(train_part, dev, config, seed)
        os.makedirs(model_dir, exist_ok=True)
        with open(os.path.join(model_dir, "model_ref.json"), "w", encoding="utf-8") as fh:
            json.dump({"kind": "external", "model_id": model_id, "endpoint": args.endpoint}, fh)
        trace = []
    with open(os.path.join(args.out, "dev_trace.json"), "w", encoding="utf-8") as fh:
        json.dump(trace, fh)
    _write_run_config(os.path.join(args.out, "run_config.json"), "train", _options(args))
    log.info("trained %s model into %s", args.tagger, model_dir)
    return 0


# ---------------------------------------------------------------- predict

def _predictions_to_records(pairs) -> list:
    records = []
    for sentence, spans in pairs:
        records.append(
            formats.labeled_to_record(
                LabeledSentence(sentence, spans, provenance="prediction"),
                with_confidence=True,
            )
        )
    return records


def _shard(items: list, n: int) -> list[list]:
    return [items[i::n] for i in range(n)]


def cmd_predict(args) -> int:
    sentences = list(formats.read_sentences(args.input))
    if args.tagger == "baseline":
        model = BaselineTagger.load(os.path.join(args.model, "model"))
        pairs = loop_mod.predict_pool(model, sentences)
    else:
        if not args.endpoint or not args.model_id:
            raise CliError("--tagger external requires --endpoint and --model-id")
        workers = max(1, args.workers)
        if workers == 1:
            with TaggerClient.open(args.endpoint) as client:
                model = ExternalTaggerModel(client, args.model_id)
                pairs = loop_mod.predict_pool(model, sentences)
        else:
            # One session per worker; requires a server that can resolve the
            # model id in every session (e.g. a saved model path).
            from concurrent.futures import ThreadPoolExecutor

            def run_shard(shard):
                if not shard:
                    return []
                with TaggerClient.open(args.endpoint) as client:
                    model = ExternalTaggerModel(client, args.model_id)
                    return loop_mod.predict_pool(model, shard)

            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_shard, _shard(sentences, workers)))
            by_identity = {
                sentence.identity: spans
                for shard_pairs in results
                for sentence, spans in shard_pairs
            }
            pairs = [(s, by_identity[s.identity]) for s in sentences]
    with open(args.out, "w", encoding="utf-8") as fh:
        for record in _predictions_to_records(pairs):
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    _write_run_config(args.out + ".run.json", "predict", _options(args))
    log.info("wrote predictions for %d sentences to %s", len(sentences), args.out)
    return 0


# ---------------------------------------------------------------- select

def cmd_select(args) -> int:
    stats = formats.LoadStats()
    predicted = formats.read_labeled(args.pred, stats)
    predictions = [(rec.sentence, rec.gold_spans) for rec in predicted]
    cfg = weaklabel.SelectionConfig(
        target_high=args.target_high,
        target_low=args.target_low,
        non_target_fraction=args.non_target_fraction,
        per_domain_cap=args.per_domain_cap,
        rng_seed=derive_seed(args.seed, "select"),
    )
    weak = weaklabel.build_weak_labeled_set(predictions, cfg)
    os.makedirs(args.out, exist_ok=True)
    formats.write_labeled(
        weaklabel.weak_as_labeled(weak),
        os.path.join(args.out, "weak_labels.jsonl"),
        with_confidence=True,
    )
    with open(os.path.join(args.out, "selection_stats.json"), "w", encoding="utf-8") as fh:
        json.dump(weaklabel.selection_stats(predictions, weak, cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_config(os.path.join(args.out, "run_config.json"), "select", _options(args))
    log.info(
        "selected %d target + %d non-target sentences",
        len(weak.target_part),
        len(weak.non_target_part),
    )
    return 0


# ---------------------------------------------------------------- loop

def cmd_loop(args) -> int:
    file_options = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            saved = json.load(fh)
        file_options = saved.get("options", saved)
    options = _options(args)
    options.pop("out", None)
    # flags left at their defaults are overridden by the saved config
    for key, value in file_options.items():
        if key in options and options[key] == _LOOP_DEFAULTS.get(key, options[key]):
            options[key] = value
    if not options.get("labeled") or not options.get("pool"):
        raise CliError("loop needs --labeled and --pool (directly or via --config)")

    labeled = formats.read_labeled(options["labeled"])
    pool = list(formats.read_sentences(options["pool"]))
    lexicon = load_lexicon(options["lexicon"]) if options.get("lexicon") else None
    cfg = loop_mod.LoopConfig(
        iterations=options["iterations"],
        selection=weaklabel.SelectionConfig(
            target_high=options["target_high"],
            target_low=options["target_low"],
            non_target_fraction=options["non_target_fraction"],
            per_domain_cap=options["per_domain_cap"],
            rng_seed=derive_seed(options["seed"], "select"),
        ),
        train=TrainConfig(
            learning_rate=options["learning_rate"],
            adam_epsilon=options["adam_epsilon"],
            batch_size=options["batch_size"],
            max_epochs=options["max_epochs"],
            min_delta=options["min_delta"],
            dev_fraction=options["dev_fraction"],
        ),
        seed=options["seed"],
        artifact_dir=args.out,
        dev_from_labeled_only=options["dev_from_labeled_only"],
    )
    os.makedirs(args.out, exist_ok=True)
    _write_run_config(os.path.join(args.out, "cli_config.json"), "loop", options)
    loop_mod.run_self_training(
        labeled,
        pool,
        cfg,
        tagger_kind=options["tagger"],
        endpoint=options.get("endpoint"),
        lexicon=lexicon,
    )
    log.info("self-training finished; artifacts in %s", args.out)
    return 0


# ---------------------------------------------------------------- evaluate

def _read_prediction_map(path: str):
    stats = formats.LoadStats()
    return formats.predictions_as_map(formats.read_labeled(path, stats))


def cmd_evaluate(args) -> int:
    gold_records = formats.read_labeled(args.gold)
    gold, _texts = formats.labeled_as_gold(gold_records)
    if args.seeds:
        files = sorted(
            os.path.join(args.seeds, f)
            for f in os.listdir(args.seeds)
            if f.endswith(".jsonl")
        )
        if not files:
            raise CliError(f"no .jsonl prediction files in {args.seeds}")
    elif args.pred:
        files = [args.pred]
    else:
        raise CliError("evaluate needs --pred or --seeds")

    per_seed_maps = [_read_prediction_map(f) for f in files]
    per_seed = [evaluation.evaluate_run(m, gold) for m in per_seed_maps]
    report = evaluation.aggregate_seeds(per_seed, dataset=args.dataset or os.path.basename(args.gold))
    os.makedirs(args.out, exist_ok=True)
    evaluation.write_report(
        report,
        os.path.join(args.out, "report.json"),
        os.path.join(args.out, "report.txt"),
    )

    thresholds = [float(t) for t in args.thresholds.split(",")] if args.thresholds else [
        round(0.05 * i, 2) for i in range(21)
    ]
    curves = evaluation.pr_curve(per_seed_maps, gold, thresholds)
    with open(os.path.join(args.out, "pr_curves.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["domain", "threshold", "precision", "recall"])
        for domain in sorted(curves):
            for t, p, r in curves[domain]:
                writer.writerow([domain, t, f"{p:.6f}", f"{r:.6f}"])
    _write_run_config(os.path.join(args.out, "run_config.json"), "evaluate", _options(args))
    sys.stderr.write(evaluation.render_report_table(report))
    return 0


# ---------------------------------------------------------------- sample-errors

def cmd_sample_errors(args) -> int:
    gold_records = formats.read_labeled(args.gold)
    gold, texts = formats.labeled_as_gold(gold_records)
    predictions = _read_prediction_map(args.pred)
    sample = evaluation.sample_errors(
        predictions, gold, texts, args.n, derive_seed(args.seed, "errors")
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(sample, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_config(args.out + ".run.json", "sample-errors", _options(args))
    log.info("sampled %d error records to %s", len(sample["samples"]), args.out)
    return 0


# ---------------------------------------------------------------- report

def cmd_report(args) -> int:
    with open(args.report, encoding="utf-8") as fh:
        data = json.load(fh)
    report = evaluation.EvalReport(
        dataset=data.get("dataset", ""),
        n_seeds=data.get("n_seeds", 0),
        per_domain={
            d: {m: evaluation.MetricStats(**s) for m, s in metrics.items()}
            for d, metrics in data.get("per_domain", {}).items()
        },
        macro={m: evaluation.MetricStats(**s) for m, s in data.get("macro", {}).items()},
    )
    table = evaluation.render_report_table(report)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(table)
    return 0


# ---------------------------------------------------------------- parser

def _options(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in vars(args).items() if k not in skip}


_LOOP_DEFAULTS = {
    "labeled": None,
    "pool": None,
    "iterations": 3,
    "seed": 0,
    "tagger": "baseline",
    "endpoint": None,
    "lexicon": None,
    "target_high": 0.9,
    "target_low": 0.5,
    "non_target_fraction": 0.1,
    "per_domain_cap": 20000,
    "learning_rate": 3e-5,
    "adam_epsilon": 1e-8,
    "batch_size": 32,
    "max_epochs": 15,
    "min_delta": 0.005,
    "dev_fraction": 0.2,
    "dev_from_labeled_only": False,
}


def _add_train_flags(parser) -> None:
    parser.add_argument("--learning-rate", type=float, default=3e-5, dest="learning_rate")
    parser.add_argument("--adam-epsilon", type=float, default=1e-8, dest="adam_epsilon")
    parser.add_argument("--batch-size", type=int, default=32, dest="batch_size")
    parser.add_argument("--max-epochs", type=int, default=15, dest="max_epochs")
    parser.add_argument("--min-delta", type=float, default=0.005, dest="min_delta")
    parser.add_argument("--dev-fraction", type=float, default=0.2, dest="dev_fraction")


def _add_selection_flags(parser) -> None:
    parser.add_argument("--target-high", type=float, default=0.9, dest="target_high")
    parser.add_argument("--target-low", type=float, default=0.5, dest="target_low")
    parser.add_argument(
        "--non-target-fraction", type=float, default=0.1, dest="non_target_fraction"
    )
    parser.add_argument("--per-domain-cap", type=int, default=20000, dest="per_domain_cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="extract the unlabeled sentence pool from raw reviews")
    p.add_argument("--reviews", required=True)
    p.add_argument("--business", default=None, help="two-file mode: business categories file")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--lexicon-threshold", type=float, default=0.7, dest="lexicon_threshold")
    p.add_argument("--domains", default=None, help="ordered domain list file")
    p.add_argument("--max-sentences", type=int, default=None, dest="max_sentences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic multi-domain corpus")
    p.add_argument("--spec", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a tagger on labeled data")
    p.add_argument("--labeled", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--tagger", choices=["baseline", "external"], default="baseline")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict target spans for a sentence file")
    p.add_argument("--model", default=None, help="baseline model directory")
    p.add_argument("--model-id", default=None, dest="model_id", help="external model reference")
    p.add_argument("--tagger", choices=["baseline", "external"], default="baseline")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("select", help="select weak labels from predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_selection_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("loop", help="run the full self-training loop")
    p.add_argument("--labeled", default=None)
    p.add_argument("--pool", default=None)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--tagger", choices=["baseline", "external"], default="baseline")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument(
        "--dev-from-labeled-only", action="store_true", dest="dev_from_labeled_only"
    )
    p.add_argument("--config", default=None, help="load options from a saved run config")
    p.add_argument("--out", required=True)
    _add_selection_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("evaluate", help="exact-match evaluation with per-domain breakdown")
    p.add_argument("--pred", default=None, help="single prediction file")
    p.add_argument("--seeds", default=None, help="directory of per-seed prediction files")
    p.add_argument("--gold", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--thresholds", default=None, help="comma-separated PR-curve thresholds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sample-errors", help="sample false positives for manual categorization")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample_errors)

    p = sub.add_parser("report", help="render a report file as an aligned text table")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        CliError,
        corpus_mod.CorpusError,
        evaluation.EvalError,
        formats.FormatError,
        loop_mod.LoopError,
        synthkit.SynthError,
        LexiconError,
        ProtocolError,
        TaggingError,
        OSError,
        ValueError,
    ) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
