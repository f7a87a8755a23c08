"""Batch entry points: ingest | mine | train | index | eval | serve | report.

A JSON config file supplies defaults; command-line flags win. Every run
echoes its config digest for provenance. Exit codes: 0 success, 1 domain
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .embedding import AdapterModel, HashProvider, config_digest
from .errors import HilragError
from .evaluation import (
    EvalQuery,
    LabeledReport,
    compare_reports,
    top1_accuracy,
    triplet_accuracy,
)
from .mining import MiningConfig, mine_hard_negatives, mine_positive_pairs, synthesize_triplets
from .training import TrainingConfig, train_adapter
from .vindex import VectorIndex, build_index


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _setting(args, config: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def _provider(args, config):
    return HashProvider(int(_setting(args, config, "dimension", 256)))


def _maybe_adapter(args, config) -> AdapterModel | None:
    path = _setting(args, config, "adapter")
    return AdapterModel.load(path) if path else None


def _echo_digest(settings: dict):
    print(f"config digest: {config_digest(settings)}")


def _load_queries(path) -> list[EvalQuery]:
    queries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            queries.append(EvalQuery(query=obj["query"],
                                     true_doc_id=obj["true_doc_id"]))
    return queries


def cmd_ingest(args, config):
    report = corpus_mod.ingest_directory(
        root=_setting(args, config, "corpus_dir"),
        checkpoint_path=_setting(args, config, "checkpoint"),
        output_path=_setting(args, config, "out"),
        reset=bool(args.reset),
    )
    print(f"ingested: total={report.total} accepted={report.accepted} "
          f"rejected={len(report.rejected)}")
    for locator, reason in report.rejected:
        print(f"  rejected {locator}: {reason}", file=sys.stderr)
    return 0


def cmd_mine(args, config):
    docs = corpus_mod.load_corpus(Path(_setting(args, config, "corpus")))
    seed = int(_setting(args, config, "seed", 0))
    mining = MiningConfig(seed=seed)
    pairs = mine_positive_pairs(docs, mining)
    anchors: dict[str, list[str]] = {}
    for p in pairs:
        anchors.setdefault(p.anchor_id, []).append(p.candidate_id)
    provider = _provider(args, config)
    triplets, skipped = mine_hard_negatives(anchors, docs, provider, mining)
    n_synth = int(_setting(args, config, "synthetic", 0))
    if n_synth:
        triplets = triplets + synthesize_triplets(docs, n_synth, seed=seed)
    corpus_mod.save_triplets(triplets, _setting(args, config, "out"))
    print(f"mined: pairs={len(pairs)} triplets={len(triplets)} "
          f"skipped={len(skipped)}")
    return 0


def cmd_train(args, config):
    triplets = corpus_mod.load_triplets(_setting(args, config, "triplets"))
    tc = TrainingConfig(
        loss=_setting(args, config, "loss", "triplet"),
        margin=float(_setting(args, config, "margin", 0.2)),
        learning_rate=float(_setting(args, config, "learning_rate", 0.05)),
        epochs=int(_setting(args, config, "epochs", 20)),
        batch_size=int(_setting(args, config, "batch_size", 32)),
        seed=int(_setting(args, config, "seed", 0)),
        use_negatives=not args.no_negatives,
    )
    provider = _provider(args, config)
    benchmark = [t for t in triplets if t.negative is not None] or None
    model, history = train_adapter(provider, triplets, tc, benchmark=benchmark)
    out = Path(_setting(args, config, "adapter", "adapter.json"))
    model.save(out)
    if history.epoch_loss:
        from .reporting import render_training_figure

        render_training_figure(history, out.with_suffix(".png"))
    print(f"trained adapter: epochs={tc.epochs} "
          f"final_loss={history.epoch_loss[-1]:.6f} -> {out}")
    if history.epoch_accuracy:
        print(f"final benchmark triplet accuracy: "
              f"{history.epoch_accuracy[-1]:.4f}")
    return 0


def cmd_index(args, config):
    docs = corpus_mod.load_corpus(Path(_setting(args, config, "corpus")))
    provider = _provider(args, config)
    adapter = _maybe_adapter(args, config)
    index = build_index(docs, provider, adapter)
    out = _setting(args, config, "index", "index.snapshot.json")
    index.save_snapshot(out)
    print(f"indexed {len(index)} documents -> {out}")
    return 0


def cmd_eval(args, config):
    provider = _provider(args, config)
    adapter = _maybe_adapter(args, config)
    out = Path(_setting(args, config, "out", "eval_report.jsonl"))
    label = _setting(args, config, "label", "current")
    rows = []
    if _setting(args, config, "triplets"):
        triplets = corpus_mod.load_triplets(_setting(args, config, "triplets"))
        report = triplet_accuracy(provider, triplets, adapter)
        obj = report.to_json_obj()
        obj["label"] = label
        rows.append(obj)
        print(f"triplet accuracy: {report.correct}/{report.n} "
              f"({report.accuracy_pct}%)")
    if _setting(args, config, "queries"):
        snapshot = _setting(args, config, "index")
        if snapshot:
            index = VectorIndex.load_snapshot(snapshot)
        else:
            docs = corpus_mod.load_corpus(Path(_setting(args, config, "corpus")))
            index = build_index(docs, provider, adapter)
        queries = _load_queries(_setting(args, config, "queries"))
        report = top1_accuracy(index, provider, queries, adapter)
        obj = report.to_json_obj()
        obj["label"] = label
        rows.append(obj)
        print(f"top-1 accuracy: {report.top1_correct}/{report.n} "
              f"({report.accuracy_pct}%)")
    if not rows:
        print("nothing to evaluate: pass --triplets and/or --queries",
              file=sys.stderr)
        return 1
    out.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows),
                   encoding="utf-8")
    print(f"report -> {out}")
    return 0


def cmd_report(args, config):
    reports = []
    for path in args.inputs:
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            reports.append(LabeledReport(
                label=obj.get("label", Path(path).stem),
                accuracy_pct=float(obj["accuracy_pct"]),
                params_m=obj.get("params_m")))
    table, jsonl = compare_reports(reports)
    out = Path(_setting(args, config, "out", "comparison"))
    out.with_suffix(".txt").write_text(table + "\n", encoding="utf-8")
    out.with_suffix(".jsonl").write_text("".join(r + "\n" for r in jsonl),
                                         encoding="utf-8")
    from .reporting import render_comparison_figure

    figure = render_comparison_figure(reports, out.with_suffix(".png"))
    print(table)
    print(f"report -> {out.with_suffix('.txt')}, {out.with_suffix('.jsonl')}, "
          f"{figure}")
    return 0


def cmd_serve(args, config):
    import uvicorn

    from .pipeline import EchoClient, RagPipeline, ScriptedClient, HttpChatClient
    from .service import ServiceState, build_app

    docs = corpus_mod.load_corpus(Path(_setting(args, config, "corpus")))
    provider = _provider(args, config)
    adapter = _maybe_adapter(args, config)
    script = _setting(args, config, "script")
    endpoint = _setting(args, config, "client_endpoint")
    if script:
        client = ScriptedClient.load(script)
    elif endpoint:
        import os

        client = HttpChatClient(endpoint, token=os.environ.get("HILRAG_TOKEN"))
    else:
        client = EchoClient()
    pipeline = RagPipeline.from_corpus(docs, provider, client, adapter)
    state = ServiceState(
        pipeline,
        audit_path=_setting(args, config, "audit_journal", "audit.jsonl"),
        feedback_path=_setting(args, config, "feedback_journal",
                               "feedback.jsonl"))
    app = build_app(state)
    uvicorn.run(app, host=_setting(args, config, "host", "127.0.0.1"),
                port=int(_setting(args, config, "port", 8000)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hilrag")
    parser.add_argument("--config", help="JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--dimension", type=int)

    p = sub.add_parser("ingest", help="checkpointed corpus ingestion")
    p.add_argument("--corpus-dir", dest="corpus_dir")
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--reset", action="store_true",
                   help="discard a corrupt or stale checkpoint")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("mine", help="mine triplets with hard negatives")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--synthetic", type=int)
    common(p)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("train", help="fit the embedding adapter")
    p.add_argument("--triplets")
    p.add_argument("--adapter")
    p.add_argument("--loss", choices=["triplet", "pairwise"])
    p.add_argument("--margin", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--no-negatives", action="store_true",
                   help="train from anchor-positive pairs only")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="embed the corpus and write a snapshot")
    p.add_argument("--corpus")
    p.add_argument("--adapter")
    p.add_argument("--index")
    common(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("eval", help="triplet / top-1 accuracy reports")
    p.add_argument("--triplets")
    p.add_argument("--queries")
    p.add_argument("--corpus")
    p.add_argument("--index")
    p.add_argument("--adapter")
    p.add_argument("--label")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="compare labeled accuracy reports")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP/WebSocket service")
    p.add_argument("--corpus")
    p.add_argument("--adapter")
    p.add_argument("--script", help="scripted generation client file")
    p.add_argument("--client-endpoint", dest="client_endpoint")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--audit-journal", dest="audit_journal")
    p.add_argument("--feedback-journal", dest="feedback_journal")
    common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
    except (OSError, json.JSONDecodeError) as e:
        print(f"bad config file: {e}", file=sys.stderr)
        return 2
    settings = {k: v for k, v in vars(args).items()
                if k not in ("func", "config") and v is not None}
    settings.update({k: v for k, v in config.items() if k not in settings})
    _echo_digest(settings)
    try:
        return args.func(args, config)
    except HilragError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
