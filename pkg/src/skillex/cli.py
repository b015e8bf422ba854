"""Command-line interface.

Every command reads flags first from the command line, then from an optional
JSON config file (``--config``), then from built-in defaults.  Each written
output gets a sibling ``<name>.manifest.json`` recording input hashes, the
effective configuration, the seed, and tool versions, so any artifact can be
traced back to exactly what produced it.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys

import numpy as np

from . import __version__
from . import datastore as ds
from . import evaluation, inference, weakmatch
from .corpus import (DEFAULT_BUCKETS, corpus_stats, jaccard_overlap, load_conll,
                     span_frequency_index, unique_span_surfaces)
from .embedio import align, read_distributions, read_embeddings
from .errors import SkillexError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this project reserves 2 for data
    errors, so remap usage problems to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_path: str, command: str, inputs: list[str],
                    config: dict, seed: int | None) -> None:
    manifest = {
        "command": command,
        "inputs": {p: f"sha256:{_sha256(p)}" for p in inputs},
        "config": config,
        "seed": seed,
        "versions": {
            "skillex": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    with open(f"{out_path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """Resolve each option: explicit flag, then config file, then default."""
    file_cfg = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise _UsageError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise _UsageError(
                f"unknown config keys: {', '.join(sorted(unknown))}"
            )
    effective = {}
    for key, default in defaults.items():
        value = getattr(args, key, None)
        if value is None:
            value = file_cfg.get(key, default)
        setattr(args, key, value)
        effective[key] = value
    return effective


def _load_aligned(args, need_distributions: bool):
    corpus = load_conll(args.corpus, merge_nested=bool(args.merge_nested))
    embeddings = read_embeddings(args.embeddings)
    dists = read_distributions(args.base_dists) if need_distributions else None
    return align(corpus, embeddings, dists)


# -- commands -------------------------------------------------------------------

_STATS_DEFAULTS = {"merge_nested": False, "json": False, "out": None}


def _cmd_stats(args) -> int:
    cfg = _merge_config(args, _STATS_DEFAULTS)
    rows = []
    for path in args.files:
        corpus = load_conll(path, merge_nested=bool(args.merge_nested))
        stats = corpus_stats(corpus)
        rows.append({
            "corpus": corpus.name,
            "sentences": stats.sentences,
            "tokens": stats.tokens,
            "spans": stats.spans,
            "mean_span_length": round(stats.mean_span_length, 4),
        })
    if args.json:
        text = json.dumps(rows, indent=2) + "\n"
    else:
        header = f"{'corpus':<24}{'sentences':>12}{'tokens':>12}{'spans':>10}{'mean len':>10}"
        lines = [header]
        for r in rows:
            lines.append(
                f"{r['corpus']:<24}{r['sentences']:>12}{r['tokens']:>12}"
                f"{r['spans']:>10}{r['mean_span_length']:>10.4f}"
            )
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_manifest(args.out, "stats", list(args.files), cfg, None)
    else:
        sys.stdout.write(text)
    return 0


_BUILD_DEFAULTS = {
    "whiten": False, "index": False, "centroids": ds.DEFAULT_CENTROIDS,
    "seed": 0, "merge_nested": False,
}


def _cmd_build_store(args) -> int:
    cfg = _merge_config(args, _BUILD_DEFAULTS)
    if len(args.corpus) != len(args.embeddings):
        raise _UsageError(
            f"{len(args.corpus)} --corpus but {len(args.embeddings)} --embeddings"
        )
    pairs = []
    for c_path, e_path in zip(args.corpus, args.embeddings):
        corpus = load_conll(c_path, merge_nested=bool(args.merge_nested))
        pairs.append((corpus, read_embeddings(e_path)))
    store = ds.build(pairs, use_whitening=bool(args.whiten))
    if args.index:
        store.build_index(n_centroids=int(args.centroids), seed=int(args.seed))
    store.save(args.out)
    _write_manifest(args.out, "build-store",
                    list(args.corpus) + list(args.embeddings), cfg, int(args.seed))
    print(f"wrote {args.out}: {len(store)} entries, dims={store.dims}, "
          f"whitening={'yes' if store.whitening else 'no'}, "
          f"index={'yes' if store.index else 'no'}")
    return 0


_INFER_DEFAULTS = {
    "k": 8, "interpolation": 0.5, "temperature": 1.0, "nprobe": None,
    "merge_nested": False, "report": None,
}


def _cmd_infer(args) -> int:
    cfg = _merge_config(args, _INFER_DEFAULTS)
    aligned = _load_aligned(args, need_distributions=True)
    store = ds.load(args.store)
    knn_cfg = inference.KnnConfig(
        k=int(args.k), temperature=float(args.temperature),
        interpolation=float(args.interpolation),
        nprobe=None if args.nprobe is None else int(args.nprobe),
    )
    pred = inference.predict(aligned, store, knn_cfg)
    inference.write_predictions(aligned.corpus, pred, args.out)
    inputs = [args.corpus, args.embeddings, args.base_dists, args.store]
    _write_manifest(args.out, "infer", inputs, cfg, None)
    if args.report:
        reports = {
            mode: evaluation.evaluate_corpora(aligned.corpus, pred, mode)
            for mode in evaluation.MODES
        }
        evaluation.emit_report(reports, "json", args.report)
        _write_manifest(args.report, "infer", inputs, cfg, None)
    return 0


_GRID_DEFAULTS = {
    "k_grid": list(inference.DEFAULT_K_GRID),
    "lambda_grid": list(inference.DEFAULT_INTERPOLATION_GRID),
    "temperature_grid": list(inference.DEFAULT_TEMPERATURE_GRID),
    "nprobe": None, "merge_nested": False, "best": None,
}


def _cmd_grid_search(args) -> int:
    cfg = _merge_config(args, _GRID_DEFAULTS)
    aligned = _load_aligned(args, need_distributions=True)
    store = ds.load(args.store)
    result = inference.grid_search(
        aligned, store,
        k_grid=args.k_grid,
        interpolation_grid=args.lambda_grid,
        temperature_grid=args.temperature_grid,
        nprobe=None if args.nprobe is None else int(args.nprobe),
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(inference.grid_rows_to_csv(result.rows))
    inputs = [args.corpus, args.embeddings, args.base_dists, args.store]
    _write_manifest(args.out, "grid-search", inputs, cfg, None)
    best = {
        "k": result.best.k,
        "lambda": result.best.interpolation,
        "T": result.best.temperature,
        "nprobe": result.best.nprobe,
        "precision": round(result.best_report.precision, 4),
        "recall": round(result.best_report.recall, 4),
        "f1": round(result.best_report.f1, 4),
    }
    if args.best:
        with open(args.best, "w", encoding="utf-8") as fh:
            json.dump(best, fh, indent=2)
            fh.write("\n")
        _write_manifest(args.best, "grid-search", inputs, cfg, None)
    print(f"best: k={best['k']} lambda={best['lambda']} T={best['T']} "
          f"f1={best['f1']:.4f}")
    return 0


_WEAKMATCH_DEFAULTS = {
    "method": "iso", "tau": 0.8, "ngram_min": 1, "ngram_max": 4,
    "merge_nested": False, "report": None,
}


def _cmd_weakmatch(args) -> int:
    cfg = _merge_config(args, _WEAKMATCH_DEFAULTS)
    aligned = _load_aligned(args, need_distributions=False)
    rep_matrix = read_embeddings(args.skill_reps)
    ids = weakmatch.read_representation_ids(args.skill_ids)
    if len(ids) != rep_matrix.rows:
        raise _UsageError(
            f"{rep_matrix.rows} representation rows but {len(ids)} ids"
        )
    reps = [
        weakmatch.SkillRepresentation(skill_id, args.method, row)
        for skill_id, row in zip(ids, rep_matrix.data)
    ]
    match_cfg = weakmatch.MatchConfig(
        ngram_range=(int(args.ngram_min), int(args.ngram_max)),
        threshold=float(args.tau),
    )
    pred = weakmatch.match_corpus(aligned, reps, match_cfg)
    inference.write_predictions(aligned.corpus, pred, args.out)
    inputs = [args.corpus, args.embeddings, args.skill_reps, args.skill_ids]
    _write_manifest(args.out, "weakmatch", inputs, cfg, None)
    if args.report:
        reports = {
            mode: evaluation.evaluate_corpora(aligned.corpus, pred, mode)
            for mode in evaluation.MODES
        }
        evaluation.emit_report(reports, "json", args.report)
        _write_manifest(args.report, "weakmatch", inputs, cfg, None)
    return 0


_EVAL_DEFAULTS = {
    "gold": None, "mode": "both", "train": None, "format": "json",
    "out": None, "merge_nested": False,
}


def _cmd_evaluate(args) -> int:
    cfg = _merge_config(args, _EVAL_DEFAULTS)
    inputs = [args.pred]
    if args.gold:
        gold = load_conll(args.gold, merge_nested=bool(args.merge_nested))
        pred = load_conll(args.pred)
        inputs.append(args.gold)
    else:
        gold, pred = inference.read_predictions(args.pred)
    modes = list(evaluation.MODES) if args.mode == "both" else [args.mode]
    reports = {
        mode: evaluation.evaluate_corpora(gold, pred, mode) for mode in modes
    }
    if args.train:
        train = load_conll(args.train, merge_nested=bool(args.merge_nested))
        freq = span_frequency_index(train)
        inputs.append(args.train)
        for mode in modes:
            bucketed = evaluation.bucketed_f1(gold, pred, freq, DEFAULT_BUCKETS, mode)
            for label, report in bucketed.items():
                reports[f"{mode}:{label}"] = report
    text = evaluation.render_report(reports, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_manifest(args.out, "evaluate", inputs, cfg, None)
    else:
        sys.stdout.write(text)
    return 0


_OVERLAP_DEFAULTS = {"merge_nested": False, "json": False, "out": None}


def _cmd_overlap(args) -> int:
    cfg = _merge_config(args, _OVERLAP_DEFAULTS)
    if len(args.files) < 2:
        raise _UsageError("overlap needs at least two corpora")
    corpora = [load_conll(p, merge_nested=bool(args.merge_nested)) for p in args.files]
    surfaces = [unique_span_surfaces(c) for c in corpora]
    rows = []
    for i in range(len(corpora)):
        for j in range(i + 1, len(corpora)):
            result = jaccard_overlap(surfaces[i], surfaces[j])
            rows.append({
                "a": corpora[i].name, "b": corpora[j].name,
                "intersection": result.intersection,
                "union": result.union,
                "jaccard": round(result.coefficient, 4),
            })
    if args.json:
        text = json.dumps(rows, indent=2) + "\n"
    else:
        lines = [
            f"{r['a']} vs {r['b']}: jaccard={r['jaccard']:.4f} "
            f"(intersection={r['intersection']}, union={r['union']})"
            for r in rows
        ]
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_manifest(args.out, "overlap", list(args.files), cfg, None)
    else:
        sys.stdout.write(text)
    return 0


# -- parser wiring ---------------------------------------------------------------

def _add_common(p: _Parser) -> None:
    p.add_argument("--config", help="JSON file supplying defaults for this command")
    p.add_argument("--merge-nested", dest="merge_nested",
                   action="store_const", const=True, default=None,
                   help="give the first tag column priority when merging two columns")


def build_parser() -> _Parser:
    parser = _Parser(prog="skillex",
                     description="Retrieval-augmented occupational skill extraction")
    parser.add_argument("--version", action="version", version=f"skillex {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("files", nargs="+", metavar="CONLL")
    p.add_argument("--json", action="store_const", const=True, default=None)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("build-store", help="assemble a retrieval datastore")
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--embeddings", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--whiten", action="store_const", const=True, default=None)
    p.add_argument("--index", action="store_const", const=True, default=None,
                   help="attach an inverted-file index")
    p.add_argument("--centroids", type=int)
    p.add_argument("--seed", type=int)
    _add_common(p)
    p.set_defaults(func=_cmd_build_store)

    p = sub.add_parser("infer", help="retrieval-augmented tagging")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--base-dists", dest="base_dists", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--lambda", dest="interpolation", type=float,
                   help="retrieval weight in [0, 1]")
    p.add_argument("--T", dest="temperature", type=float)
    p.add_argument("--nprobe", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="also write strict/loose scores here")
    _add_common(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("grid-search", help="sweep k / lambda / T on a dev set")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--base-dists", dest="base_dists", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--nprobe", type=int)
    p.add_argument("--out", required=True, help="CSV of every configuration")
    p.add_argument("--best", help="write the winning configuration here")
    _add_common(p)
    p.set_defaults(func=_cmd_grid_search)

    p = sub.add_parser("weakmatch", help="weakly supervised inventory matching")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--skill-reps", dest="skill_reps", required=True)
    p.add_argument("--skill-ids", dest="skill_ids", required=True)
    p.add_argument("--method", choices=weakmatch.METHODS)
    p.add_argument("--tau", type=float)
    p.add_argument("--ngram-min", dest="ngram_min", type=int)
    p.add_argument("--ngram-max", dest="ngram_max", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    _add_common(p)
    p.set_defaults(func=_cmd_weakmatch)

    p = sub.add_parser("evaluate", help="score predictions against gold spans")
    p.add_argument("--pred", required=True,
                   help="3-column prediction file, or 1-column CoNLL with --gold")
    p.add_argument("--gold")
    p.add_argument("--mode", choices=("strict", "loose", "both"))
    p.add_argument("--train", help="training corpus for frequency-bucketed scores")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("overlap", help="pairwise span-surface Jaccard overlap")
    p.add_argument("files", nargs="+", metavar="CONLL")
    p.add_argument("--json", action="store_const", const=True, default=None)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=_cmd_overlap)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except SkillexError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
