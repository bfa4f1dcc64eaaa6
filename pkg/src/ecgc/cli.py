"""Command-line interface: ``ecgc <command> [options]``.

Exit codes: 0 success, 1 domain error (bad data, infeasible request),
2 usage or I/O error. ``ECGC_LOG`` sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import features as F
from . import pipeline as P
from .record_io import CLASSES, RecordFormatError, list_records, read_labels, read_record, write_labels

log = logging.getLogger("ecgc")


class UsageError(Exception):
    pass


def _load_dir(data, labels_path=None):
    paths = list_records(data)
    if not Path(data).is_dir():
        raise FileNotFoundError(f"{data}: not a directory")
    if not paths:
        raise UsageError(f"{data}: no records found")
    records = sorted((read_record(p) for p in paths), key=lambda r: r.id)
    labels = None
    if labels_path is not None:
        lab = read_labels(labels_path).as_dict()
        missing = [r.id for r in records if r.id not in lab]
        if missing:
            raise RecordFormatError(f"{len(missing)} records have no label (first: {missing[0]})")
        labels = [lab[r.id] for r in records]
    return records, labels


def _config(args) -> P.StackConfig:
    cfg = P.FAST_CONFIG if args.fast else P.StackConfig()
    seq = cfg.seq
    over = {k: getattr(args, k) for k in ("max_epochs", "lstm_hidden", "embed", "mlp_hidden",
                                          "out_hidden", "batch_size")
            if getattr(args, k, None) is not None}
    if over:
        seq = seq.scaled(**over)
    gbt = cfg.gbt
    if args.rounds is not None:
        gbt = replace(gbt, rounds=args.rounds)
    return replace(cfg, seq=seq, gbt=gbt, outer_folds=args.outer_folds)


def _rows(records, args):
    log.info("featurizing %d records", len(records))
    return P.process_records(records, jobs=args.jobs)


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    from .synthgen import generate_corpus, write_corpus

    if args.per_class < 1:
        raise ValueError("--per-class must be at least 1")
    lo, hi = args.duration
    if not 0 < lo <= hi:
        raise ValueError("--duration needs 0 < min <= max")
    manifest = write_corpus(generate_corpus(args.per_class, args.seed, duration_range=(lo, hi)),
                            args.out)
    manifest["seed"] = args.seed
    print(json.dumps(manifest, sort_keys=True))
    return 0


def cmd_interpret(args) -> int:
    r = read_record(args.record)
    _, _, itp, inverted = P.interpret_record(r)
    d = itp.to_json()
    if not args.show_discarded:
        d.pop("discarded")
    d["id"] = r.id
    d["inverted"] = inverted
    print(json.dumps(d, indent=1))
    return 0


def cmd_featurize(args) -> int:
    records, _ = _load_dir(args.data)
    rows = _rows(records, args)
    F.write_global_csv([(rf.id, rf.globals) for rf in rows], args.out)
    if args.beats:
        F.write_beat_jsonl([(rf.id, rf.beats) for rf in rows], args.beats)
    print(json.dumps({"records": len(rows), "global_csv": str(args.out),
                      "flagged": sum(rf.flagged for rf in rows)}))
    return 0


def cmd_train(args) -> int:
    records, labels = _load_dir(args.data, args.labels)
    rows = _rows(records, args)
    m = P.train_stacked(rows, labels, seed=args.seed, config=_config(args))
    P.save_bundle(m, args.model)
    print(json.dumps({"model": str(args.model), "records": len(rows),
                      "digest": P.bundle_digest(args.model)}))
    return 0


def cmd_predict(args) -> int:
    if not (Path(args.model) / "manifest.json").is_file():
        raise FileNotFoundError(f"{args.model}: no model bundle")
    m = P.load_bundle(args.model)
    records, _ = _load_dir(args.data)
    rows = P.process_records(records, m.inversion, jobs=args.jobs)
    cls, _ = m.predict_rows(rows)
    answers = [(rf.id, CLASSES[int(c)]) for rf, c in zip(rows, cls)]
    if args.out:
        write_labels(answers, args.out)
    else:
        sys.stdout.write("".join(f"{rid},{'~' if c == 'NOISE' else c}\n" for rid, c in answers))
    return 0


def _emit_report(rep: P.EvaluationReport, fmt) -> None:
    if fmt == "json":
        print(json.dumps(rep.to_json(), indent=1))
        return
    lines = ["truth\\pred " + "".join(f"{c:>7}" for c in CLASSES)]
    for c, row in zip(CLASSES, rep.confusion):
        lines.append(f"{c:<10} " + "".join(f"{int(v):7d}" for v in row))
    lines.append("F1  " + "  ".join(f"{c}={rep.f1[c]:.3f}" for c in CLASSES))
    lines.append(f"score {rep.score:.4f}")
    print("\n".join(lines))


def cmd_evaluate(args) -> int:
    truth = read_labels(args.truth).as_dict()
    ans = read_labels(args.answers).as_dict()
    missing = sorted(set(truth) - set(ans))
    if missing:
        raise RecordFormatError(f"{len(missing)} records have no answer (first: {missing[0]})")
    ids = sorted(truth)
    _emit_report(P.challenge_score([truth[i] for i in ids], [ans[i] for i in ids]), args.format)
    return 0


def cmd_cv(args) -> int:
    records, labels = _load_dir(args.data, args.labels)
    rows = _rows(records, args)
    cv = P.cross_validate(rows, labels, k=args.k, seed=args.seed, config=_config(args))
    if args.format == "json":
        print(json.dumps(cv.to_json(), indent=1))
    else:
        print(cv.table())
    return 0


# ------------------------------------------------------------------ parser

def _add_jobs(p):
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-record work")


def _add_train_flags(p):
    _add_jobs(p)
    p.add_argument("--data", required=True, help="directory of records")
    p.add_argument("--labels", required=True, help="id,class label file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--outer-folds", type=int, default=6, help="stacking folds (default 6)")
    p.add_argument("--fast", action="store_true", help="small recurrent nets and fewer epochs")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lstm-hidden", type=int)
    p.add_argument("--embed", type=int)
    p.add_argument("--mlp-hidden", type=int)
    p.add_argument("--out-hidden", type=int)
    p.add_argument("--rounds", type=int, help="boosting rounds")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ecgc", description="Single-lead ECG interpretation "
                                 "and rhythm classification")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic labelled corpus")
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, nargs=2, default=(20.0, 30.0), metavar=("MIN", "MAX"))
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("interpret", help="rhythm interpretation of one record as JSON")
    p.add_argument("record", help="record header path or stem")
    p.add_argument("--show-discarded", action="store_true",
                   help="list beat annotations rejected as false positives")
    p.set_defaults(func=cmd_interpret)

    p = sub.add_parser("featurize", help="global features CSV (and optional per-beat JSONL)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beats")
    _add_jobs(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a stacked model bundle")
    _add_train_flags(p)
    p.add_argument("--model", required=True, help="output bundle directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write id,class answers")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    _add_jobs(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score answers against truth labels")
    p.add_argument("--truth", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    _add_train_flags(p)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=cmd_cv)
    return ap


def main(argv=None) -> int:
    level = getattr(logging, os.environ.get("ECGC_LOG", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"ecgc: {e}", file=sys.stderr)
        return 2
    except (RecordFormatError, ValueError) as e:
        print(f"ecgc: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"ecgc: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
