"""Command-line entry point.

Exit codes match the skillex convention: 0 success, 1 usage error,
2 data/model error.
"""

from __future__ import annotations

import argparse
import sys

from skillex.errors import SkillexError

from .export import LAYERS, POOLING, ExportConfig, ExportError, export


class _Parser(argparse.ArgumentParser):
    """Remap argparse's usage-error exit code from 2 to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="skillex-export",
        description="Encode a CoNLL corpus with a pretrained token encoder "
                    "and write skillex's binary embedding/distribution files.",
    )
    parser.add_argument("corpus", help="CoNLL corpus to encode")
    parser.add_argument("model", help="model directory or identifier")
    parser.add_argument("--out-embeddings", required=True,
                        help="embedding file to write")
    parser.add_argument("--out-distributions",
                        help="also write softmaxed (B, I, O) rows here")
    parser.add_argument("--pool", choices=POOLING, default="first",
                        help="subword pooling (default: first)")
    parser.add_argument("--layer", choices=LAYERS, default="hidden",
                        help="embedding source (default: final hidden states)")
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExportConfig(pool=args.pool, layer=args.layer,
                           batch_size=args.batch_size)
        summary = export(args.corpus, args.model, args.out_embeddings,
                         args.out_distributions, cfg)
    except (ExportError, SkillexError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    wrote = "embeddings + distributions" if summary.wrote_distributions \
        else "embeddings"
    print(f"wrote {wrote}: {summary.tokens} rows "
          f"({summary.sentences} sentences), dims={summary.embedding_dims}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
