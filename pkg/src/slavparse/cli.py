"""The ``slavparse`` command line tool.

Eight subcommands cover the pipeline end to end: ``convert`` turns
positional-tag CoNLL-X files into CoNLL-U, ``split`` partitions corpus
texts, ``stats`` counts tokens, ``train`` and ``grid`` fit models,
``predict`` annotates new files, ``eval`` scores predictions, and
``report`` collects scores into comparison tables.

Exit codes: 0 on success, 1 on usage errors (unknown subcommand or flag,
contradictory flags), 2 on data errors (unreadable or malformed files,
mismatched inputs, bad hyperparameter values).

Training and evaluation runs each write a ``*.run.json`` record next to
their primary output: the exact command line, the configuration, SHA-256
digests of every input file, and UTC timestamps. Records are the one
output that differs between otherwise identical reruns (timestamps);
every data file this tool writes is byte-identical on rerun.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .corpusops import (
    MACRO_FILTERS,
    Section,
    SplitMode,
    assemble_dataset,
    corpus_stats,
    load_manifest,
    text_sections,
)
from .evaluation import EvalResult, LabelMode, evaluate, format_score, report_tables
from .jointmodel import (
    ModelConfig,
    ModelFormatError,
    grid_search,
    load_model,
    predict,
    save_model,
    train,
)
from .treebank import (
    MorphMapping,
    Treebank,
    bundled_morph_map_path,
    read_conllu,
    read_conllx,
    write_conllu,
)

__all__ = ["RunRecord", "build_parser", "run", "main"]


class UsageError(Exception):
    """A flag combination the parser grammar cannot rule out."""


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


@dataclass(frozen=True)
class RunRecord:
    """What a training or evaluation run saw and produced.

    ``inputs`` maps each input path to the SHA-256 of its content, so a
    record pins down exactly which data went in. ``config`` is None for
    runs without hyperparameters (eval).
    """

    command: str
    argv: list[str]
    seed: int | None
    config: dict | None
    inputs: dict[str, str]
    outputs: list[str]
    started: str
    finished: str


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_record(path: str | Path, record: RunRecord) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(record), fh, indent=2)
        fh.write("\n")


def _write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _prepare_out(path: str) -> Path:
    out = Path(path)
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# convert


def _cmd_convert(args) -> int:
    mapping = MorphMapping.from_file(args.map)
    tb = read_conllx(args.in_path, mapping, source_label=Path(args.in_path).stem)
    write_conllu(tb, _prepare_out(args.out))
    print(f"wrote {args.out} ({len(tb.sentences)} sentences, "
          f"{tb.token_count} tokens)")
    return 0


# ---------------------------------------------------------------------------
# split


def _cmd_split(args) -> int:
    manifests = load_manifest(args.manifest, base_dir=args.base_dir)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    width = max(len(m.label) for m in manifests)
    for m in manifests:
        sections = text_sections(m)
        counts = []
        for section in Section:
            tb = sections[section]
            if m.split_mode is SplitMode.TRAIN_ONLY and section is not Section.TRAIN:
                continue
            write_conllu(tb, out_dir / f"{m.label}.{section.value}.conllu")
            counts.append(f"{section.value} {tb.token_count}")
        print(f"{m.label:<{width}}  [{m.split_mode.value}]  {'  '.join(counts)}")
    return 0


# ---------------------------------------------------------------------------
# stats


def _cmd_stats(args) -> int:
    manifests = load_manifest(args.manifest, base_dir=args.base_dir)
    stats = corpus_stats(manifests)
    label_w = max([len(r.label) for r in stats.rows] + [len("text")])
    print(f"{'text':<{label_w}}  {'variety':<7}  {'area':<11}  "
          f"{'tokens':>8}  {'sentences':>9}")
    for r in stats.rows:
        print(f"{r.label:<{label_w}}  {r.variety.value:<7}  "
              f"{r.macro_area.value:<11}  {r.tokens:>8}  {r.sentences:>9}")
    print()
    print(f"{'variety':<7}  {'texts':>5}  {'tokens':>8}  {'sentences':>9}")
    for variety, vs in stats.by_variety.items():
        print(f"{variety.value:<7}  {vs.texts:>5}  {vs.tokens:>8}  "
              f"{vs.sentences:>9}")
    print(f"{'total':<7}  {len(stats.rows):>5}  {stats.total_tokens:>8}  "
          f"{stats.total_sentences:>9}")
    if args.json:
        payload = {
            "texts": [
                {"label": r.label, "variety": r.variety.value,
                 "macro_area": r.macro_area.value, "tokens": r.tokens,
                 "sentences": r.sentences}
                for r in stats.rows
            ],
            "by_variety": {
                variety.value: {"texts": vs.texts, "tokens": vs.tokens,
                                "sentences": vs.sentences}
                for variety, vs in stats.by_variety.items()
            },
            "total": {"texts": len(stats.rows),
                      "tokens": stats.total_tokens,
                      "sentences": stats.total_sentences},
        }
        _write_json(args.json, payload)
    return 0


# ---------------------------------------------------------------------------
# train and grid


def _config_from(args) -> ModelConfig:
    return ModelConfig(
        d_char=args.char_dim,
        d_word=args.word_dim,
        d_pos=args.pos_dim,
        n_bilstm_layers=args.layers,
        d_lstm=args.lstm_dim,
        d_mlp=args.mlp_dim,
        epochs=args.epochs,
        seed=args.seed,
        word_dropout_alpha=args.word_dropout_alpha,
        unk_threshold=args.unk_threshold,
    )


def _load_train_dev(args) -> tuple[Treebank, Treebank, list[Path]]:
    """Resolve the two data sources a training run can name.

    Either explicit treebank files, or a manifest plus a macro-area
    filter. Returns the train and dev treebanks and the list of files
    actually read, for digesting into the run record.
    """
    if args.train_file:
        for flag, value in (("--filter", args.filter),
                            ("--base-dir", args.base_dir)):
            if value is not None:
                raise UsageError(f"{flag} requires --manifest")
        train_tb = read_conllu(args.train_file,
                               source_label=Path(args.train_file).stem)
        inputs = [Path(args.train_file)]
        if args.dev_file:
            dev_tb = read_conllu(args.dev_file,
                                 source_label=Path(args.dev_file).stem)
            inputs.append(Path(args.dev_file))
        else:
            dev_tb = Treebank()
        return train_tb, dev_tb, inputs

    if args.dev_file:
        raise UsageError("--dev-file requires --train-file; manifests carry "
                         "their own dev sections")
    area = MACRO_FILTERS[args.filter or "GEN"]
    manifests = load_manifest(args.manifest, base_dir=args.base_dir)
    inputs = [Path(args.manifest)]
    for m in manifests:
        if area is not None and m.macro_area is not area:
            continue
        if m.split_mode is SplitMode.PREDEFINED:
            inputs.extend(m.predefined[s] for s in Section)
        else:
            inputs.append(m.path)
    train_tb = assemble_dataset(manifests, Section.TRAIN, area=area)
    dev_tb = assemble_dataset(manifests, Section.DEV, area=area)
    return train_tb, dev_tb, inputs


def _show_epoch(stats) -> None:
    line = f"epoch {stats.epoch:>3}  loss {stats.mean_train_loss:.4f}"
    if stats.dev_las is not None:
        line += (f"  dev UAS {format_score(stats.dev_uas)}"
                 f" LAS {format_score(stats.dev_las)}"
                 f" UPOS {format_score(stats.dev_upos)}")
    print(line, flush=True)


def _log_payload(tlog) -> dict:
    return {"best_epoch": tlog.best_epoch,
            "epochs": [asdict(e) for e in tlog.epochs]}


def _cmd_train(args) -> int:
    started = _utc_now()
    config = _config_from(args)
    train_tb, dev_tb, inputs = _load_train_dev(args)
    print(f"training on {train_tb.token_count} tokens in "
          f"{len(train_tb.sentences)} sentences "
          f"(dev: {dev_tb.token_count} tokens)", flush=True)
    model, tlog = train(config, train_tb, dev_tb, on_epoch=_show_epoch)
    out = _prepare_out(args.out)
    save_model(model, str(out))
    log_path = Path(f"{args.out}.log.json")
    _write_json(log_path, _log_payload(tlog))
    record = RunRecord(
        command="train", argv=list(args._argv), seed=config.seed,
        config=asdict(config),
        inputs={str(p): _sha256(p) for p in inputs},
        outputs=[str(out), str(log_path)],
        started=started, finished=_utc_now(),
    )
    _write_record(f"{args.out}.run.json", record)
    print(f"best epoch {tlog.best_epoch}")
    print(f"saved {args.out} ({model.params.n_entries()} parameters)")
    return 0


def _cmd_grid(args) -> int:
    started = _utc_now()
    base = _config_from(args)
    train_tb, dev_tb, inputs = _load_train_dev(args)
    result = grid_search(base, train_tb, dev_tb,
                         lstm_grid=args.lstm_grid, mlp_grid=args.mlp_grid)
    print(result.format_table())
    out = _prepare_out(args.out)
    save_model(result.best_model, str(out))
    results_path = Path(args.results or f"{args.out}.grid.json")
    best = result.rows[0]
    _write_json(results_path, {
        "rows": [asdict(r) for r in result.rows],
        "best": {"d_lstm": best.d_lstm, "d_mlp": best.d_mlp},
        "best_log": _log_payload(result.best_log),
    })
    record = RunRecord(
        command="grid", argv=list(args._argv), seed=base.seed,
        config=asdict(base),
        inputs={str(p): _sha256(p) for p in inputs},
        outputs=[str(out), str(results_path)],
        started=started, finished=_utc_now(),
    )
    _write_record(f"{args.out}.run.json", record)
    print(f"best configuration: d_lstm {best.d_lstm}, d_mlp {best.d_mlp}")
    print(f"saved {args.out}")
    return 0


# ---------------------------------------------------------------------------
# predict


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    tb = read_conllu(args.in_path, source_label=Path(args.in_path).stem)
    annotated = predict(model, tb)
    write_conllu(annotated, _prepare_out(args.out))
    print(f"wrote {args.out} ({len(annotated.sentences)} sentences, "
          f"{annotated.token_count} tokens)")
    return 0


# ---------------------------------------------------------------------------
# eval


def _cmd_eval(args) -> int:
    started = _utc_now()
    gold = read_conllu(args.gold, source_label=Path(args.gold).stem)
    pred = read_conllu(args.pred, source_label=Path(args.pred).stem)
    result = evaluate(gold, pred, label_mode=LabelMode(args.label_mode))
    print(f"{'UAS':<5}{format_score(result.uas)}")
    print(f"{'LAS':<5}{format_score(result.las)}")
    print(f"{'UPOS':<5}{format_score(result.upos_acc)}")
    model_label = args.model_label or Path(args.pred).stem
    test_set = args.test_set or "test"
    if args.json:
        _write_json(args.json, {
            "test_set": test_set,
            "model": model_label,
            "label_mode": args.label_mode,
            "counts": {
                "n_words": result.n_words,
                "n_head_correct": result.n_head_correct,
                "n_head_and_label_correct": result.n_head_and_label_correct,
                "n_upos_correct": result.n_upos_correct,
            },
            "scores": {"uas": result.uas, "las": result.las,
                       "upos": result.upos_acc},
            "formatted": {"uas": format_score(result.uas),
                          "las": format_score(result.las),
                          "upos": format_score(result.upos_acc)},
        })
    record = RunRecord(
        command="eval", argv=list(args._argv), seed=None, config=None,
        inputs={str(p): _sha256(p) for p in (args.gold, args.pred)},
        outputs=[args.json] if args.json else [],
        started=started, finished=_utc_now(),
    )
    record_base = args.json or args.pred
    _write_record(f"{record_base}.run.json", record)
    return 0


# ---------------------------------------------------------------------------
# report


def _cmd_report(args) -> int:
    results: dict[tuple[str, str], EvalResult] = {}
    sources: dict[tuple[str, str], str] = {}
    for path in args.results:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from None
        try:
            counts = payload["counts"]
            key = (payload["test_set"], payload["model"])
            result = EvalResult(
                n_words=counts["n_words"],
                n_head_correct=counts["n_head_correct"],
                n_head_and_label_correct=counts["n_head_and_label_correct"],
                n_upos_correct=counts["n_upos_correct"],
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(
                f"{path}: not an eval results file (missing {exc})") from None
        if key in results:
            raise ValueError(
                f"{path}: duplicate result for test set {key[0]!r}, "
                f"model {key[1]!r} (first seen in {sources[key]})")
        results[key] = result
        sources[key] = path
    text, payload = report_tables(results)
    print(text)
    if args.json:
        _write_json(args.json, payload)
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--train-file", metavar="FILE",
                        help="training treebank (CoNLL-U)")
    source.add_argument("--manifest", metavar="FILE",
                        help="corpus manifest to assemble train and dev from")
    p.add_argument("--dev-file", metavar="FILE",
                   help="development treebank (only with --train-file)")
    p.add_argument("--filter", choices=list(MACRO_FILTERS), default=None,
                   help="macro-area filter for manifest assembly "
                        "(default GEN, meaning no filter)")
    p.add_argument("--base-dir", metavar="DIR", default=None,
                   help="directory manifest data paths are relative to")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    d = ModelConfig()
    p.add_argument("--char-dim", type=int, default=d.d_char, metavar="N",
                   help=f"character BiLSTM output size (default {d.d_char})")
    p.add_argument("--word-dim", type=int, default=d.d_word, metavar="N",
                   help=f"word embedding size (default {d.d_word})")
    p.add_argument("--pos-dim", type=int, default=d.d_pos, metavar="N",
                   help=f"POS embedding size (default {d.d_pos})")
    p.add_argument("--layers", type=int, default=d.n_bilstm_layers, metavar="N",
                   help="BiLSTM layers, tagger plus parser "
                        f"(default {d.n_bilstm_layers})")
    p.add_argument("--lstm-dim", type=int, default=d.d_lstm, metavar="N",
                   help=f"BiLSTM state size per direction (default {d.d_lstm})")
    p.add_argument("--mlp-dim", type=int, default=d.d_mlp, metavar="N",
                   help=f"scorer hidden layer size (default {d.d_mlp})")
    p.add_argument("--epochs", type=int, default=d.epochs, metavar="N",
                   help=f"training epochs (default {d.epochs})")
    p.add_argument("--seed", type=int, default=d.seed, metavar="N",
                   help=f"seed for every random choice (default {d.seed})")
    p.add_argument("--word-dropout-alpha", type=float,
                   default=d.word_dropout_alpha, metavar="A",
                   help="rare-word dropout strength "
                        f"(default {d.word_dropout_alpha})")
    p.add_argument("--unk-threshold", type=int, default=d.unk_threshold,
                   metavar="N",
                   help="words at most this frequent can drop to UNK "
                        f"(default {d.unk_threshold})")


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{text!r} is not a comma-separated list of integers") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="slavparse",
        description="Joint POS tagging and dependency parsing for "
                    "pre-modern Slavic treebanks.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND",
                                required=True)

    p = sub.add_parser("convert",
                       help="convert positional-tag CoNLL-X to CoNLL-U")
    p.add_argument("--in", dest="in_path", required=True, metavar="FILE",
                   help="CoNLL-X input file")
    p.add_argument("--out", required=True, metavar="FILE",
                   help="CoNLL-U output file")
    p.add_argument("--map", default=str(bundled_morph_map_path()),
                   metavar="FILE",
                   help="positional-tag table (default: bundled table)")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("split",
                       help="write per-text train/dev/test files "
                            "from a manifest")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR",
                   help="output directory")
    p.add_argument("--base-dir", metavar="DIR", default=None,
                   help="directory manifest data paths are relative to")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("stats", help="token and sentence counts per text "
                                     "and variety")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--base-dir", metavar="DIR", default=None,
                   help="directory manifest data paths are relative to")
    p.add_argument("--json", metavar="FILE",
                   help="also write the counts as JSON")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("train", help="train a joint tagger-parser")
    _add_data_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True, metavar="FILE",
                   help="model file to write")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("grid",
                       help="train every lstm/mlp size combination and "
                            "keep the best")
    _add_data_flags(p)
    _add_config_flags(p)
    p.add_argument("--lstm-grid", type=_int_tuple, default=(128, 256),
                   metavar="N,N,...",
                   help="BiLSTM sizes to try (default 128,256); "
                        "overrides --lstm-dim")
    p.add_argument("--mlp-grid", type=_int_tuple, default=(100, 200, 300),
                   metavar="N,N,...",
                   help="scorer sizes to try (default 100,200,300); "
                        "overrides --mlp-dim")
    p.add_argument("--out", required=True, metavar="FILE",
                   help="best model file to write")
    p.add_argument("--results", metavar="FILE",
                   help="results table as JSON (default <out>.grid.json)")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("predict", help="annotate a CoNLL-U file with a "
                                       "trained model")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--in", dest="in_path", required=True, metavar="FILE",
                   help="input CoNLL-U; unannotated rows may carry head 0 "
                        "and deprel _")
    p.add_argument("--out", required=True, metavar="FILE")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="score a prediction against gold")
    p.add_argument("--gold", required=True, metavar="FILE")
    p.add_argument("--pred", required=True, metavar="FILE")
    p.add_argument("--label-mode", choices=[m.value for m in LabelMode],
                   default=LabelMode.FULL.value,
                   help="compare full deprels or strip subtypes "
                        "(default full)")
    p.add_argument("--test-set", metavar="NAME",
                   help="test set label for collected reports")
    p.add_argument("--model-label", metavar="NAME",
                   help="model label for collected reports "
                        "(default: prediction file stem)")
    p.add_argument("--json", metavar="FILE",
                   help="machine-readable scores for `report`")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report",
                       help="collect eval JSON files into comparison tables")
    p.add_argument("results", nargs="+", metavar="RESULTS.json",
                   help="files written by `eval --json`")
    p.add_argument("--json", metavar="FILE",
                   help="also write the tables as JSON")
    p.set_defaults(func=_cmd_report)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse argv and dispatch; returns the process exit code."""
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    args._argv = list(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"slavparse: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ModelFormatError, OSError) as exc:
        print(f"slavparse: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
