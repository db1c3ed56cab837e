"""Command-line entry point for the full pipeline.

Subcommands: ingest, mock-embed, tune, train, evaluate, classify,
aggregate, pipeline. Option precedence is flags > config file > built-in
defaults; every output file gets a ``<file>.meta.json`` sidecar recording
the tool version, a hash of the resolved configuration, and the seed, so
runs are attributable and reruns are byte-identical.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import ClassifierSpec, fit
from .corpus import (
    CANONICAL_LABELS,
    DEFAULT_MERGE_RULES,
    LabeledDataset,
    apply_merge_rules,
    label_distribution,
    load_labeled_dataset,
    load_merge_rules,
    save_labeled_dataset,
    stratified_kfold,
)
from .errors import DataError
from .evaluation import confusion_to_csv, cross_validate, save_report
from .hyperopt import bayes_optimize, default_search_space, save_trials, theta_to_hyperparameters
from .model_io import load_model, save_model
from .store import (
    TweetRecord,
    load_sidecar,
    load_store,
    mock_embed,
    read_store_header,
    sidecar_path,
    write_store,
)
from .surveillance import aggregate_daily, batch_classify, emit_report

logger = logging.getLogger("dscope")

# Found optima from the reference experiments; used by `train` when no
# tuned spec file is supplied.
DEFAULT_HYPERPARAMETERS = {
    "knn": {"k": 7, "metric": "cosine"},
    "svm": {"c": 5.07, "kernel": "rbf"},
    "logreg": {"c": 4.94e3},
}

_GLOBAL_DEFAULTS = {"seed": 42, "threads": os.cpu_count() or 1, "verbose": False}

_DEFAULTS: dict[str, dict] = {
    "ingest": {"rules": None},
    "mock-embed": {"dim": 768, "noise": 0.3, "kind": "auto"},
    "tune": {"family": "svm", "iterations": 30, "initial": 5, "folds": 10},
    "train": {"family": None, "spec_file": None},
    "evaluate": {
        "family": None,
        "spec_file": None,
        "folds": 10,
        "report": None,
        "confusion": None,
    },
    "classify": {"threshold": None, "chunk_size": 8192},
    "aggregate": {"format": "csv", "start": None, "end": None},
    "pipeline": {
        "family": "svm",
        "iterations": 30,
        "initial": 5,
        "folds": 10,
        "threshold": None,
        "chunk_size": 8192,
        "format": "csv",
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dscope", description=__doc__, add_help=True)
    parser.add_argument("--version", action="store_true", help="print version and exit")
    parser.add_argument("--json", action="store_true", help="machine-readable --version output")
    parser.add_argument("--config", help="key = value config file (flags take precedence)")
    parser.add_argument("--seed", type=int, help="global RNG seed (default 42)")
    parser.add_argument("--threads", type=int, help="worker threads for parallel-safe stages")
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="load a raw corpus, apply merge rules, write canonical JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--rules", help="merge-rule JSON file (default: built-in taxonomy rules)")

    p = sub.add_parser("mock-embed", help="embed a JSONL file with the deterministic mock encoder")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--dim", type=int, help="vector width (default 768)")
    p.add_argument("--noise", type=float, help="mock-embedder noise weight (default 0.3)")
    p.add_argument("--kind", choices=("auto", "corpus", "tweets"), help="input schema (default auto)")

    p = sub.add_parser("tune", help="Bayesian hyperparameter optimization over CV accuracy")
    p.add_argument("--corpus", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--family", choices=("knn", "logreg", "svm"), help="classifier family (default svm)")
    p.add_argument("--iterations", type=int, help="objective evaluations (default 30)")
    p.add_argument("--initial", type=int, help="quasi-random warmup points (default 5)")
    p.add_argument("--folds", type=int, help="CV folds (default 10)")
    p.add_argument("--output-dir", required=True, dest="output_dir")

    p = sub.add_parser("train", help="fit a model on the full dataset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--spec-file", dest="spec_file", help="tuned spec JSON from `tune`")
    p.add_argument("--family", choices=("knn", "logreg", "svm"), help="family with reference defaults")
    p.add_argument("--output", required=True)

    p = sub.add_parser("evaluate", help="cross-validate a spec and report metrics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--spec-file", dest="spec_file")
    p.add_argument("--family", choices=("knn", "logreg", "svm"))
    p.add_argument("--folds", type=int, help="CV folds (default 10)")
    p.add_argument("--report", help="metrics JSON output path")
    p.add_argument("--confusion", help="normalized confusion-matrix CSV output path")

    p = sub.add_parser("classify", help="batch inference over an embedding store")
    p.add_argument("--model", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--output", required=True, help="predictions JSONL {row, label, confidence}")
    p.add_argument("--threshold", type=float, help="confidence threshold (default: none)")
    p.add_argument("--chunk-size", type=int, dest="chunk_size", help="rows per chunk (default 8192)")

    p = sub.add_parser("aggregate", help="daily category distributions from predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--sidecar", required=True, help="store sidecar JSONL with dates")
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=("csv", "json"), help="report format (default csv)")
    p.add_argument("--start", help="inclusive ISO date window start")
    p.add_argument("--end", help="inclusive ISO date window end")

    p = sub.add_parser("pipeline", help="tune, train on the full corpus, classify, aggregate")
    p.add_argument("--corpus", required=True)
    p.add_argument("--train-store", required=True, dest="train_store")
    p.add_argument("--tweet-store", required=True, dest="tweet_store")
    p.add_argument("--family", choices=("knn", "logreg", "svm"), help="classifier family (default svm)")
    p.add_argument("--iterations", type=int, help="tuning budget (default 30)")
    p.add_argument("--initial", type=int)
    p.add_argument("--folds", type=int, help="CV folds (default 10)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--chunk-size", type=int, dest="chunk_size")
    p.add_argument("--format", choices=("csv", "json"), help="report format (default csv)")
    p.add_argument("--output-dir", required=True, dest="output_dir")
    return parser


def _parse_config_file(path: str) -> dict:
    cfg: dict[str, object] = {}
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {path}")
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise DataError(f"{path}: line {lineno}: expected `key = value`")
        key, _, raw = stripped.partition("=")
        key = key.strip().replace("-", "_")
        raw = raw.strip()
        value: object
        if raw.lower() in ("true", "false"):
            value = raw.lower() == "true"
        else:
            try:
                value = int(raw)
            except ValueError:
                try:
                    value = float(raw)
                except ValueError:
                    value = raw
        cfg[key] = value
    return cfg


def _resolve_config(args: argparse.Namespace) -> dict:
    command = args.command
    merged = dict(_GLOBAL_DEFAULTS)
    merged.update(_DEFAULTS.get(command, {}))
    explicit = {
        k: v for k, v in vars(args).items() if v is not None and v is not False
    }
    config_path = explicit.pop("config", None)
    if config_path:
        file_cfg = _parse_config_file(str(config_path))
        merged.update({k: v for k, v in file_cfg.items() if k in merged})
    merged.update(explicit)
    merged["command"] = command
    return merged


def _config_hash(cfg: dict) -> str:
    canonical = json.dumps(
        {k: v for k, v in sorted(cfg.items()) if k not in ("verbose",)}, sort_keys=True
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _write_meta(output: str | Path, cfg: dict) -> None:
    meta = {
        "tool": "dscope",
        "version": __version__,
        "config_hash": _config_hash(cfg),
        "seed": cfg["seed"],
    }
    Path(str(output) + ".meta.json").write_text(
        json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_training_data(corpus_path: str, store_path: str) -> tuple[np.ndarray, list[str]]:
    dataset = load_labeled_dataset(corpus_path)
    bad = sorted({s.category for s in dataset} - set(CANONICAL_LABELS))
    if bad:
        raise DataError(f"corpus has non-canonical categories (run `ingest` first): {bad}")
    header, X = load_store(store_path)
    if header.count != len(dataset):
        raise DataError(
            f"store rows ({header.count}) != corpus samples ({len(dataset)}); "
            "embed the corpus file that is being trained on"
        )
    return X.astype(np.float64), dataset.labels()


def _spec_from_config(cfg: dict) -> ClassifierSpec:
    spec_file = cfg.get("spec_file")
    family = cfg.get("family")
    if spec_file:
        path = Path(str(spec_file))
        if not path.is_file():
            raise DataError(f"spec file not found: {path}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        return ClassifierSpec(family=doc["family"], hyperparameters=doc["hyperparameters"])
    if family:
        return ClassifierSpec(family=str(family), hyperparameters=DEFAULT_HYPERPARAMETERS[str(family)])
    raise UsageError("either --spec-file or --family is required")


def _save_spec(spec: ClassifierSpec, path: Path) -> None:
    path.write_text(
        json.dumps(
            {"family": spec.family, "hyperparameters": dict(spec.hyperparameters)},
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )


# --- subcommand implementations ------------------------------------------------


def _cmd_ingest(cfg: dict) -> int:
    dataset = load_labeled_dataset(str(cfg["input"]))
    rules = load_merge_rules(str(cfg["rules"])) if cfg.get("rules") else DEFAULT_MERGE_RULES
    merged = apply_merge_rules(dataset, rules)
    save_labeled_dataset(merged, str(cfg["output"]))
    _write_meta(cfg["output"], cfg)
    dist = label_distribution(merged)
    print(f"ingested {len(merged)} samples ({len(dataset) - len(merged)} discarded)")
    for label in sorted(dist):
        print(f"  {label}: {dist[label]}")
    if dataset.unknown_field_warnings:
        print(f"warning: ignored {dataset.unknown_field_warnings} unknown field(s)")
    return 0


def _detect_kind(path: str) -> str:
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                if "record_id" in rec and "date" in rec:
                    return "tweets"
                if "category" in rec:
                    return "corpus"
                raise DataError(f"{path}: cannot infer input kind from keys {sorted(rec)}")
    return "corpus"  # empty file; schema is irrelevant


def _cmd_mock_embed(cfg: dict) -> int:
    import datetime as dt

    path = str(cfg["input"])
    kind = str(cfg["kind"])
    if kind == "auto":
        if not Path(path).is_file():
            raise DataError(f"input file not found: {path}")
        kind = _detect_kind(path)
    dim = int(cfg["dim"])
    noise = float(cfg["noise"])
    seed = int(cfg["seed"])
    vectors = []
    meta: list[TweetRecord] | None = None
    if kind == "corpus":
        dataset = load_labeled_dataset(path)
        for s in dataset:
            vectors.append(mock_embed(s.text, dim, seed, noise=noise))
    else:
        meta = []
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    record_id = str(rec["record_id"])
                    date = dt.date.fromisoformat(rec["date"])
                    text = str(rec["text"])
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise DataError(f"{path}: malformed line {lineno}: {exc}") from exc
                vectors.append(mock_embed(text, dim, seed, noise=noise))
                meta.append(TweetRecord(record_id=record_id, date=date, row=len(vectors) - 1))
    matrix = np.stack(vectors) if vectors else np.empty((0, dim), dtype=np.float32)
    write_store(matrix, str(cfg["output"]), meta=meta, normalized=True)
    _write_meta(cfg["output"], cfg)
    print(f"embedded {len(vectors)} texts (dim {dim}) -> {cfg['output']}")
    return 0


def _make_objective(cfg: dict, X: np.ndarray, y: list[str], family: str):
    folds = stratified_kfold(y, int(cfg["folds"]), int(cfg["seed"]))
    n_threads = int(cfg["threads"])

    def objective(theta):
        spec = ClassifierSpec(family=family, hyperparameters=theta_to_hyperparameters(family, theta))
        report, _ = cross_validate(spec, X, y, folds, n_threads=n_threads)
        return report.fold_accuracies

    return objective


def _cmd_tune(cfg: dict) -> int:
    X, y = _load_training_data(str(cfg["corpus"]), str(cfg["store"]))
    family = str(cfg["family"])
    objective = _make_objective(cfg, X, y, family)
    best, history = bayes_optimize(
        objective,
        default_search_space(family),
        n_iterations=int(cfg["iterations"]),
        n_initial=int(cfg["initial"]),
        seed=int(cfg["seed"]),
    )
    out_dir = Path(str(cfg["output_dir"]))
    out_dir.mkdir(parents=True, exist_ok=True)
    trials_path = out_dir / "trials.jsonl"
    spec_path = out_dir / "best_spec.json"
    save_trials(history, trials_path)
    best_spec = ClassifierSpec(
        family=family, hyperparameters=theta_to_hyperparameters(family, best.theta)
    )
    _save_spec(best_spec, spec_path)
    _write_meta(trials_path, cfg)
    _write_meta(spec_path, cfg)
    print(f"best {family} CV accuracy {best.value:.4f} at iteration {best.iteration}")
    print(f"best hyperparameters: {json.dumps(best_spec.hyperparameters, sort_keys=True)}")
    return 0


def _cmd_train(cfg: dict) -> int:
    X, y = _load_training_data(str(cfg["corpus"]), str(cfg["store"]))
    spec = _spec_from_config(cfg)
    model = fit(spec, X, y, classes=CANONICAL_LABELS)
    for w in model.warnings:
        print(f"warning: {w}", file=sys.stderr)
    save_model(model, str(cfg["output"]))
    _write_meta(cfg["output"], cfg)
    print(f"trained {spec.family} on {X.shape[0]} samples -> {cfg['output']}")
    return 0


def _cmd_evaluate(cfg: dict) -> int:
    X, y = _load_training_data(str(cfg["corpus"]), str(cfg["store"]))
    spec = _spec_from_config(cfg)
    folds = stratified_kfold(y, int(cfg["folds"]), int(cfg["seed"]))
    report, cm = cross_validate(spec, X, y, folds, n_threads=int(cfg["threads"]))
    print(f"accuracy {report.accuracy:.4f}")
    print(f"accuracy_pooled {report.accuracy_pooled:.4f}")
    print(f"f1_micro {report.f1_micro:.4f}")
    print(f"f1_macro {report.f1_macro:.4f}")
    if cfg.get("report"):
        save_report(report, str(cfg["report"]), cm)
        _write_meta(cfg["report"], cfg)
    if cfg.get("confusion"):
        confusion_to_csv(cm, str(cfg["confusion"]))
        _write_meta(cfg["confusion"], cfg)
    return 0


def _cmd_classify(cfg: dict) -> int:
    model = load_model(str(cfg["model"]))
    threshold = cfg.get("threshold")
    stream = batch_classify(
        model,
        str(cfg["store"]),
        chunk_size=int(cfg["chunk_size"]),
        threshold=float(threshold) if threshold is not None else None,
        n_threads=int(cfg["threads"]),
    )
    count = 0
    with Path(str(cfg["output"])).open("w", encoding="utf-8", newline="\n") as fh:
        for row, label, confidence in stream:
            fh.write(
                json.dumps(
                    {"row": row, "label": label, "confidence": round(confidence, 6)},
                    sort_keys=True,
                )
                + "\n"
            )
            count += 1
    _write_meta(cfg["output"], cfg)
    print(f"classified {count} rows -> {cfg['output']}")
    return 0


def _parse_date_range(cfg: dict):
    import datetime as dt

    start, end = cfg.get("start"), cfg.get("end")
    if (start is None) != (end is None):
        raise UsageError("--start and --end must be given together")
    if start is None:
        return None
    return (dt.date.fromisoformat(str(start)), dt.date.fromisoformat(str(end)))


def _cmd_aggregate(cfg: dict) -> int:
    predictions = []
    path = Path(str(cfg["predictions"]))
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                predictions.append((int(rec["row"]), str(rec["label"]), float(rec["confidence"])))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataError(f"{path}: malformed prediction line {lineno}: {exc}") from exc
    records = load_sidecar(str(cfg["sidecar"]))
    series = aggregate_daily(
        predictions, records, CANONICAL_LABELS, date_range=_parse_date_range(cfg)
    )
    emit_report(series, str(cfg["format"]), str(cfg["output"]))
    _write_meta(cfg["output"], cfg)
    print(f"aggregated {len(series.days)} days -> {cfg['output']}")
    return 0


def _cmd_pipeline(cfg: dict) -> int:
    out_dir = Path(str(cfg["output_dir"]))
    out_dir.mkdir(parents=True, exist_ok=True)
    X, y = _load_training_data(str(cfg["corpus"]), str(cfg["train_store"]))
    family = str(cfg["family"])

    objective = _make_objective(cfg, X, y, family)
    best, history = bayes_optimize(
        objective,
        default_search_space(family),
        n_iterations=int(cfg["iterations"]),
        n_initial=int(cfg["initial"]),
        seed=int(cfg["seed"]),
    )
    save_trials(history, out_dir / "trials.jsonl")
    best_spec = ClassifierSpec(
        family=family, hyperparameters=theta_to_hyperparameters(family, best.theta)
    )
    _save_spec(best_spec, out_dir / "best_spec.json")
    print(f"tuned {family}: CV accuracy {best.value:.4f}")

    model = fit(best_spec, X, y, classes=CANONICAL_LABELS)
    save_model(model, out_dir / "model.bin")
    print(f"trained on full dataset of {X.shape[0]} samples")

    tweet_store = str(cfg["tweet_store"])
    header = read_store_header(tweet_store)
    records = load_sidecar(sidecar_path(tweet_store), count=header.count)
    threshold = cfg.get("threshold")
    stream = batch_classify(
        model,
        tweet_store,
        chunk_size=int(cfg["chunk_size"]),
        threshold=float(threshold) if threshold is not None else None,
        n_threads=int(cfg["threads"]),
    )
    # Classification feeds aggregation directly; predictions never pool in memory.
    series = aggregate_daily(stream, records, model.classes)
    fmt = str(cfg["format"])
    report_path = out_dir / f"report.{fmt}"
    emit_report(series, fmt, report_path)
    for artifact in ("trials.jsonl", "best_spec.json", "model.bin", f"report.{fmt}"):
        _write_meta(out_dir / artifact, cfg)
    print(f"aggregated {len(series.days)} days -> {report_path}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "mock-embed": _cmd_mock_embed,
    "tune": _cmd_tune,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "classify": _cmd_classify,
    "aggregate": _cmd_aggregate,
    "pipeline": _cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.version:
            if args.json:
                print(json.dumps({"name": "dscope", "version": __version__}, sort_keys=True))
            else:
                print(f"dscope {__version__}")
            return 0
        if not args.command:
            parser.print_help()
            return 1
        cfg = _resolve_config(args)
        logging.basicConfig(
            level=logging.INFO if cfg.get("verbose") else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:  # pragma: no cover
        return 130
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
