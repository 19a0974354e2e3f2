"""Command-line interface: train, selftrain, eval, predict, export-dicts.

Exit codes: 0 success, 2 usage/configuration error, 3 data error,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import difflib
import json
import sys
from pathlib import Path

from .config import RunConfig
from .data import LoadReport, export_dictionaries, load_dataset
from .errors import ConfigError, DataError, DimensionError, KGLinkError, NumericError
from .evaluation import metrics_to_text
from .model import LinkPredictor
from .selftrain import export_generated, self_train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="key=value configuration file")
    parser.add_argument("--seed", type=int, metavar="N")
    parser.add_argument("--decoder", choices=("transe", "distmult", "conve"))
    parser.add_argument("--layers", type=int, choices=(1, 2))
    parser.add_argument("--attention", choices=("kbgsat", "kbgat"))
    parser.add_argument("--filter", choices=("train", "standard"))
    parser.add_argument("--workers", type=int, metavar="N")
    parser.add_argument("--dataset-dir", metavar="DIR")
    parser.add_argument("--output-dir", metavar="DIR")
    parser.add_argument("--checkpoint", metavar="PATH")
    parser.add_argument("--epochs", type=int, metavar="N")
    parser.add_argument("--verbose", type=int, metavar="N")


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if args.config:
        config.apply_file(args.config)
    for key in ("seed", "decoder", "layers", "attention", "filter", "workers",
                "dataset_dir", "output_dir", "checkpoint", "epochs", "verbose"):
        value = getattr(args, key, None)
        if value is not None:
            config.set_value(key, str(value), where=f"--{key.replace('_', '-')}")
    print("# resolved configuration")
    print(config.to_text(), end="")
    return config


def _require(config: RunConfig, attr: str, flag: str) -> str:
    value = getattr(config, attr)
    if not value:
        raise ConfigError(f"{attr} is required; set it in the config file or with {flag}")
    return value


def _load_store(config: RunConfig):
    return load_dataset(_require(config, "dataset_dir", "--dataset-dir"))


def _write_history(path: Path, history: list[tuple[int, float, float]]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        handle.write("epoch\tloss\tvalid_mrr\n")
        for epoch, loss, mrr in history:
            handle.write(f"{epoch}\t{loss!r}\t{mrr!r}\n")


def _write_metrics(out_dir: Path, name: str, metrics: dict) -> None:
    (out_dir / f"{name}.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / f"{name}.txt").write_text(metrics_to_text(metrics), encoding="utf-8")


def cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    store = _load_store(config)
    report = LoadReport.from_store(store)
    print("# load report")
    print(report.to_text(), end="")

    model = LinkPredictor(**config.model_kwargs())
    model.fit(store)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "load_report.txt").write_text(report.to_text(), encoding="utf-8")
    model.save(out_dir / "checkpoint.kgl")
    _write_history(out_dir / "history.tsv", model.history_)
    print(f"best_epoch\t{model.best_epoch_}")
    print(f"best_valid_mrr\t{model.best_valid_mrr_!r}")
    print(f"checkpoint\t{out_dir / 'checkpoint.kgl'}")
    return EXIT_OK


def cmd_selftrain(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    store = _load_store(config)
    checkpoint = _require(config, "checkpoint", "--checkpoint")
    model = LinkPredictor.load(checkpoint, store)
    model.set_params(workers=config.workers, verbose=config.verbose,
                     filter_policy=config.filter)

    if config.selftrain_rounds >= 1:
        model, generated = self_train(
            model, store,
            source_splits=config.selftrain_sources(),
            rounds=config.selftrain_rounds,
            retrain_epochs=config.selftrain_epochs,
            warm_start=config.selftrain_warm_start,
        )
    else:
        # generation disabled: plain resume training from the checkpoint
        model.set_params(warm_start=True, epochs=config.selftrain_epochs)
        model.fit(store)
        generated = []

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    export_generated(store, generated, out_dir / "generated_triples.tsv")
    model.save(out_dir / "selftrain_checkpoint.kgl")
    _write_history(out_dir / "history.tsv", model.history_)
    print(f"generated_triples\t{len(generated)}")
    print(f"best_valid_mrr\t{model.best_valid_mrr_!r}")
    print(f"checkpoint\t{out_dir / 'selftrain_checkpoint.kgl'}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    if args.split not in ("train", "valid", "test"):
        raise ConfigError(f"unknown split {args.split!r}; expected train, valid, or test")
    store = _load_store(config)
    checkpoint = _require(config, "checkpoint", "--checkpoint")
    model = LinkPredictor.load(checkpoint, store)
    model.set_params(workers=config.workers)
    metrics = model.evaluate(args.split, filter_policy=config.filter)

    print(metrics_to_text(metrics), end="")
    print(json.dumps(metrics, sort_keys=True))
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_metrics(out_dir, f"metrics_{args.split}", metrics)
    return EXIT_OK


def _resolve_name(name: str, table: dict[str, int], what: str) -> int:
    if name in table:
        return table[name]
    close = difflib.get_close_matches(name, table.keys(), n=5)
    hint = f"; closest: {', '.join(close)}" if close else ""
    raise DataError(f"unknown {what} {name!r}{hint}")


def cmd_predict(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    store = _load_store(config)
    checkpoint = _require(config, "checkpoint", "--checkpoint")
    model = LinkPredictor.load(checkpoint, store)

    entity_id = _resolve_name(args.entity, store.entity_dict, "entity")
    relation_id = _resolve_name(args.relation, store.relation_dict, "relation")
    if args.direction == "head":
        relation_id += store.n_relations
    from .data import known_tails

    filter_ids = known_tails(store, {"train"}).get((entity_id, relation_id), set())
    rows = model.topk(entity_id, relation_id, k=args.k, filter_ids=filter_ids)
    names = store.id_to_entity
    print("entity\tprobability")
    for idx, prob in rows:
        print(f"{names[idx]}\t{prob!r}")
    return EXIT_OK


def cmd_export_dicts(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    store = _load_store(config)
    out_dir = Path(config.output_dir)
    ent_path, rel_path = export_dictionaries(store, out_dir)
    print(f"entities\t{ent_path}")
    print(f"relations\t{rel_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kglink",
        description="Knowledge-graph link prediction with graph self-attention",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    train = subparsers.add_parser("train", help="supervised training run")
    _add_common_flags(train)
    train.set_defaults(handler=cmd_train)

    selftrain = subparsers.add_parser(
        "selftrain", help="generate unverified triples from a checkpoint and retrain"
    )
    _add_common_flags(selftrain)
    selftrain.set_defaults(handler=cmd_selftrain)

    evaluate = subparsers.add_parser("eval", help="filtered ranking metrics on a split")
    _add_common_flags(evaluate)
    evaluate.add_argument("--split", default="test", metavar="SPLIT")
    evaluate.set_defaults(handler=cmd_eval)

    predict = subparsers.add_parser("predict", help="top-k completions for one query")
    _add_common_flags(predict)
    predict.add_argument("--entity", required=True, help="surface form of the known entity")
    predict.add_argument("--relation", required=True, help="surface form of the relation")
    predict.add_argument("--direction", choices=("tail", "head"), default="tail",
                         help="predict the tail of (e, r, ?) or the head of (?, r, e)")
    predict.add_argument("--k", type=int, default=10)
    predict.set_defaults(handler=cmd_predict)

    export = subparsers.add_parser("export-dicts", help="write id/surface dictionaries")
    _add_common_flags(export)
    export.set_defaults(handler=cmd_export_dicts)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, DimensionError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, KGLinkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
