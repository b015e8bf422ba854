"""Span-level evaluation: strict and loose F1, long-tail buckets, reports.

Strict credit requires exact boundary agreement; loose credit requires at
least one shared token.  Matching is one-to-one in both modes — every gold
span rewards at most one prediction.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import (FrequencyBuckets, SpanSet, TaggedCorpus, extract_spans,
                     span_surface)
from .errors import AlignmentError, ParameterError

MODES = ("strict", "loose")

_REPORT_FIELDS = ("mode", "tp", "fp", "fn", "precision", "recall", "f1",
                  "zero_division")


@dataclass(frozen=True)
class EvalReport:
    """Span confusion counts and the derived scores.

    ``zero_division`` flags that at least one of precision/recall/F1 had a
    zero denominator and was reported as 0 by convention.
    """

    mode: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    zero_division: bool = False


def _make_report(mode: str, tp: int, fp: int, fn: int) -> EvalReport:
    zero = False
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision, zero = 0.0, True
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall, zero = 0.0, True
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, zero = 0.0, True
    return EvalReport(mode, tp, fp, fn, precision, recall, f1, zero)


def _overlaps(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def match_spans(gold: SpanSet, pred: SpanSet, mode: str
                ) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """One-to-one span matching inside a single sentence.

    Returns (matched index pairs, unmatched pred indices, unmatched gold
    indices).  Strict mode pairs exactly equal spans.  Loose mode walks the
    predictions left to right, greedily pairing each with the leftmost
    still-unmatched gold span it overlaps.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    pairs: list[tuple[int, int]] = []
    if mode == "strict":
        gold_pos = {span: i for i, span in enumerate(gold.spans)}
        taken: set[int] = set()
        for pi, span in enumerate(pred.spans):
            gi = gold_pos.get(span)
            if gi is not None and gi not in taken:
                taken.add(gi)
                pairs.append((pi, gi))
    else:
        taken = set()
        for pi, p_span in enumerate(pred.spans):
            for gi, g_span in enumerate(gold.spans):
                if gi in taken:
                    continue
                if g_span[0] > p_span[1]:
                    break
                if _overlaps(p_span, g_span):
                    taken.add(gi)
                    pairs.append((pi, gi))
                    break
    matched_pred = {pi for pi, _ in pairs}
    matched_gold = {gi for _, gi in pairs}
    unmatched_pred = [i for i in range(len(pred.spans)) if i not in matched_pred]
    unmatched_gold = [i for i in range(len(gold.spans)) if i not in matched_gold]
    return pairs, unmatched_pred, unmatched_gold


def evaluate(gold: Sequence[SpanSet], pred: Sequence[SpanSet], mode: str) -> EvalReport:
    """Corpus-level span precision/recall/F1 under the given mode.

    ``gold`` and ``pred`` must cover the same sentences in the same order.
    Zero denominators yield 0 scores with the ``zero_division`` flag set.
    """
    if len(gold) != len(pred):
        raise AlignmentError(
            f"gold covers {len(gold)} sentences but predictions cover {len(pred)}"
        )
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        if g.n_tokens != p.n_tokens:
            raise AlignmentError(
                f"sentence length mismatch: gold {g.n_tokens} vs predicted {p.n_tokens}"
            )
        pairs, un_pred, un_gold = match_spans(g, p, mode)
        tp += len(pairs)
        fp += len(un_pred)
        fn += len(un_gold)
    return _make_report(mode, tp, fp, fn)


def evaluate_corpora(gold: TaggedCorpus, pred: TaggedCorpus, mode: str) -> EvalReport:
    """Convenience wrapper extracting spans from two parallel corpora."""
    _check_parallel(gold, pred)
    return evaluate([extract_spans(s) for s in gold],
                    [extract_spans(s) for s in pred], mode)


def _check_parallel(gold: TaggedCorpus, pred: TaggedCorpus) -> None:
    if len(gold) != len(pred):
        raise AlignmentError(
            f"gold has {len(gold)} sentences but predictions have {len(pred)}"
        )
    for i, (g, p) in enumerate(zip(gold, pred)):
        if g.tokens != p.tokens:
            raise AlignmentError(f"sentence {i}: gold and predicted tokens differ")


def bucketed_f1(gold: TaggedCorpus, pred: TaggedCorpus,
                frequency_index: Mapping[str, int],
                buckets: FrequencyBuckets, mode: str) -> dict[str, EvalReport]:
    """Split span F1 by how often each span's surface occurred in training.

    Matching runs sentence by sentence exactly as in :func:`evaluate`; each
    matched pair and each missed gold span is credited to the bucket of the
    gold surface's training count, while an unmatched prediction counts
    against the bucket of its own surface's training count (0 when unseen).
    """
    _check_parallel(gold, pred)
    counts = {label: [0, 0, 0] for label in buckets.labels}  # tp, fp, fn

    for g_sent, p_sent in zip(gold, pred):
        g_spans = extract_spans(g_sent)
        p_spans = extract_spans(p_sent)
        pairs, un_pred, un_gold = match_spans(g_spans, p_spans, mode)

        def bucket_for(sentence, span) -> str:
            surface = span_surface(sentence, span)
            return buckets.bucket_of(frequency_index.get(surface, 0))

        for _, gi in pairs:
            counts[bucket_for(g_sent, g_spans.spans[gi])][0] += 1
        for pi in un_pred:
            counts[bucket_for(p_sent, p_spans.spans[pi])][1] += 1
        for gi in un_gold:
            counts[bucket_for(g_sent, g_spans.spans[gi])][2] += 1

    return {
        label: _make_report(mode, *counts[label]) for label in buckets.labels
    }


# -- report emission -----------------------------------------------------------

def _report_dict(report: EvalReport) -> dict:
    return {
        "mode": report.mode,
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn,
        "precision": round(report.precision, 4),
        "recall": round(report.recall, 4),
        "f1": round(report.f1, 4),
        "zero_division": report.zero_division,
    }


def render_report(reports, fmt: str = "json") -> str:
    """Render one report, a list, or a {label: report} mapping.

    JSON keeps the field order of :class:`EvalReport`; CSV emits one row per
    report with an extra leading ``label`` column for mappings.  Floats are
    written with 4 decimals in both formats.
    """
    if fmt not in ("json", "csv"):
        raise ParameterError(f"format must be json or csv, got {fmt!r}")
    if isinstance(reports, EvalReport):
        items: list[tuple[str | None, EvalReport]] = [(None, reports)]
        shape = "single"
    elif isinstance(reports, Mapping):
        items = list(reports.items())
        shape = "mapping"
    else:
        items = [(None, r) for r in reports]
        shape = "list"

    if fmt == "json":
        if shape == "single":
            payload = _report_dict(items[0][1])
        elif shape == "mapping":
            payload = {label: _report_dict(r) for label, r in items}
        else:
            payload = [_report_dict(r) for _, r in items]
        return json.dumps(payload, indent=2) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(_REPORT_FIELDS)
    if shape == "mapping":
        header = ["label"] + header
    writer.writerow(header)
    for label, report in items:
        row = [
            report.mode, report.tp, report.fp, report.fn,
            f"{report.precision:.4f}", f"{report.recall:.4f}", f"{report.f1:.4f}",
            report.zero_division,
        ]
        if shape == "mapping":
            row = [label] + row
        writer.writerow(row)
    return buf.getvalue()


def emit_report(reports, fmt: str, path: str | os.PathLike) -> None:
    """Render and write reports to ``path`` (see :func:`render_report`)."""
    text = render_report(reports, fmt)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
