"""Command-line front end: training, translation, embedding, evaluation."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_model, save_model
from .config import Architecture, RunConfig
from .data import (BOS, EOS, BpeModel, Vocabulary, filter_pairs, load_parallel,
                   read_lines)
from .errors import (CatnmtError, ConfigError, DataError,
                     DegenerateDistributionError, DivergenceError,
                     EmptyInputError, ShapeError, UndefinedCorrelationError,
                     UnsupportedArchitectureError)
from .evaluation import (EmbeddingItem, EmbeddingSet, bleu_lines,
                         cluster_classification, idb, nn_retrieval,
                         position_histogram, probe_classify, similarity_eval)
from .evaluation.attention import alignment_export
from .model import build_model
from .training import train

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # bad flags are usage errors, exit 1
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="catnmt",
                     description="Compound-attention NMT: train, translate, "
                                 "and evaluate sentence representations.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--arch", help="override the configured architecture")
    p.add_argument("--size", type=int, help="override representation size")
    p.add_argument("--heads", type=int, help="override attention head count")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--src", help="override source corpus path")
    p.add_argument("--tgt", help="override target corpus path")
    p.add_argument("--out", default="run", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="greedy-decode a source file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("embed", help="write sentence embeddings as JSONL")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="one cluster label per source line")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval-bleu", help="score candidates against references")
    p.add_argument("--src", required=True, help="candidate translations")
    p.add_argument("--tgt", required=True, help="reference translations")
    p.add_argument("--out", help="report JSON (default stdout)")
    p.set_defaults(func=cmd_eval_bleu)

    p = sub.add_parser("eval-para",
                       help="cluster metrics over a labeled embedding file")
    p.add_argument("--src", required=True, help="embedding JSONL")
    p.add_argument("--metric", choices=("cosine", "l2"), default="cosine")
    p.add_argument("--holdout", choices=("one", "half"), default="one")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON (default stdout)")
    p.set_defaults(func=cmd_eval_para)

    p = sub.add_parser("eval-probe",
                       help="train/test a probing classifier on embeddings")
    p.add_argument("--src", required=True, help="training embedding JSONL")
    p.add_argument("--tgt", required=True, help="test embedding JSONL")
    p.add_argument("--out", help="report JSON (default stdout)")
    p.set_defaults(func=cmd_eval_probe)

    p = sub.add_parser("eval-sim",
                       help="correlate cosine similarities with gold scores")
    p.add_argument("--src", required=True,
                   help='JSONL of {"a": [...], "b": [...], "gold": x}')
    p.add_argument("--out", help="report JSON (default stdout)")
    p.set_defaults(func=cmd_eval_sim)

    p = sub.add_parser("analyze-attention",
                       help="alignment JSON + positional histogram CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_analyze_attention)

    return parser


# ---------------------------------------------------------------------------
# shared helpers

def _echo_args(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "command") and v is not None}


def _write_report(args, metrics: dict, model_name: str = "") -> None:
    obj = {"command": args.command, "args": _echo_args(args),
           "model": model_name, "metrics": metrics}
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _line_to_ids(line: str, run_cfg: RunConfig, bpe: BpeModel | None,
                 vocab: Vocabulary) -> list[int]:
    if run_cfg.data.lowercase:
        line = line.lower()
    tokens = bpe.apply(line) if bpe is not None else line.split()
    return vocab.encode(tokens)


def _wrap(ids: list[int]) -> list[int]:
    return [BOS] + ids + [EOS]


# ---------------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if args.arch is not None:
        raw["architecture"] = args.arch
    if args.size is not None:
        raw["size"] = args.size
    if args.heads is not None:
        raw["heads"] = args.heads
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.src is not None or args.tgt is not None:
        data = dict(raw.get("data") or {})
        if args.src is not None:
            data["source"] = args.src
        if args.tgt is not None:
            data["target"] = args.tgt
        raw["data"] = data
    cfg = RunConfig.from_dict(raw)
    cfg.validate()
    if not cfg.data.source or not cfg.data.target:
        raise ConfigError("config.data needs 'source' and 'target' paths")

    text_pairs = load_parallel(cfg.data.source, cfg.data.target)
    if cfg.data.lowercase:
        text_pairs = [(s.lower(), t.lower()) for s, t in text_pairs]
    bpe = None
    if cfg.data.bpe_merges:
        bpe = BpeModel.learn((line for pair in text_pairs for line in pair),
                             cfg.data.bpe_merges)
        tokenize = bpe.apply
    else:
        tokenize = str.split
    token_pairs = [(tokenize(s), tokenize(t)) for s, t in text_pairs]
    token_pairs = filter_pairs(token_pairs, cfg.train.max_sentence_len)
    if not token_pairs:
        raise EmptyInputError(
            f"no sentence pair is <= {cfg.train.max_sentence_len} tokens")
    src_vocab = Vocabulary.from_corpus((s for s, _ in token_pairs),
                                       cfg.data.vocab_size)
    tgt_vocab = Vocabulary.from_corpus((t for _, t in token_pairs),
                                       cfg.data.vocab_size)
    pairs = [(src_vocab.encode(s), tgt_vocab.encode(t))
             for s, t in token_pairs]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
    model = build_model(cfg.model, len(src_vocab), len(tgt_vocab), cfg.seed)

    def report(epoch: int, loss: float):
        print(f"epoch {epoch}: loss {loss:.4f}", flush=True)

    train(model, pairs, cfg.train, run_config=cfg, src_vocab=src_vocab,
          tgt_vocab=tgt_vocab, bpe=bpe,
          checkpoint_path=out_dir / "model.catn",
          log_path=out_dir / "loss.csv", progress=report)
    print(f"checkpoint: {out_dir / 'model.catn'}")
    return 0


def cmd_translate(args) -> int:
    model, run_cfg, src_vocab, tgt_vocab, bpe = load_model(args.ckpt)
    outputs = []
    for line in read_lines(args.src):
        ids = _wrap(_line_to_ids(line, run_cfg, bpe, src_vocab))
        out_ids = model.greedy_decode(ids)
        tokens = tgt_vocab.decode(out_ids)
        outputs.append(BpeModel.join(tokens) if bpe is not None
                       else " ".join(tokens))
    text = "\n".join(outputs) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_embed(args) -> int:
    model, run_cfg, src_vocab, _, bpe = load_model(args.ckpt)
    if not model.config.architecture.exposes_embedding:
        raise UnsupportedArchitectureError(
            f"{model.config.architecture.value} keeps no fixed-size sentence "
            "embedding; nothing to extract")
    lines = read_lines(args.src)
    if args.labels is not None:
        labels = read_lines(args.labels)
        if len(labels) != len(lines):
            raise DataError(f"{len(lines)} sentences but {len(labels)} labels")
    else:
        labels = [""] * len(lines)
    items = []
    for i, line in enumerate(lines):
        ids = np.asarray([_wrap(_line_to_ids(line, run_cfg, bpe, src_vocab))],
                         dtype=np.int64)
        vec = model.sentence_embedding(ids, np.ones(ids.shape)).data[0]
        items.append(EmbeddingItem(id=str(i), label=labels[i],
                                   vec=vec.copy()))
    EmbeddingSet(items).save_jsonl(args.out)
    return 0


def cmd_eval_bleu(args) -> int:
    res = bleu_lines(read_lines(args.src), read_lines(args.tgt))
    p = res.precision_values()
    _write_report(args, {
        "bleu": res.score, "brevity_penalty": res.brevity_penalty,
        "p1": p[0], "p2": p[1], "p3": p[2], "p4": p[3],
        "candidate_length": float(res.candidate_length),
        "reference_length": float(res.reference_length)})
    return 0


def cmd_eval_para(args) -> int:
    emb = EmbeddingSet.load_jsonl(args.src)
    metrics = {
        "cl": cluster_classification(emb, holdout=args.holdout,
                                     seed=args.seed),
        "nn": nn_retrieval(emb, args.metric),
        "idb": idb(emb),
    }
    _write_report(args, metrics)
    return 0


def cmd_eval_probe(args) -> int:
    res = probe_classify(EmbeddingSet.load_jsonl(args.src),
                         EmbeddingSet.load_jsonl(args.tgt))
    _write_report(args, {"accuracy": res.accuracy, "baseline": res.baseline})
    return 0


def cmd_eval_sim(args) -> int:
    pairs = []
    try:
        with open(args.src, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    pairs.append((np.asarray(obj["a"], dtype=np.float64),
                                  np.asarray(obj["b"], dtype=np.float64),
                                  float(obj["gold"])))
                except (json.JSONDecodeError, KeyError, TypeError,
                        ValueError) as exc:
                    raise DataError(f"{args.src}:{lineno}: bad similarity "
                                    f"pair: {exc}") from exc
    except FileNotFoundError as exc:
        raise DataError(f"similarity file not found: {args.src}") from exc
    pearson_r, spearman_r = similarity_eval(pairs)
    _write_report(args, {"pearson": pearson_r, "spearman": spearman_r})
    return 0


def cmd_analyze_attention(args) -> int:
    model, run_cfg, src_vocab, tgt_vocab, bpe = load_model(args.ckpt)
    arch: Architecture = model.config.architecture
    if not arch.inner_attention:
        raise UnsupportedArchitectureError(
            f"{arch.value} computes no encoder attention to analyze")
    pairs = load_parallel(args.src, args.tgt)
    src_rows = [_line_to_ids(s, run_cfg, bpe, src_vocab) for s, _ in pairs]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    hist, included = position_histogram(model, src_rows, bins=args.bins)
    with open(out_dir / "histogram.csv", "w", encoding="utf-8") as fh:
        fh.write("head,bin,weight\n")
        for head in range(hist.shape[0]):
            for k in range(hist.shape[1]):
                fh.write(f"{head},{k},{float(hist[head, k])!r}\n")
    print(f"histogram over {included} sentence(s): "
          f"{out_dir / 'histogram.csv'}")

    if arch.decoder_attention or arch.transformer:
        src0 = _wrap(src_rows[0])
        tgt0 = _wrap(_line_to_ids(pairs[0][1], run_cfg, bpe, tgt_vocab))
        entries, _ = alignment_export(model, src0, tgt0)
        with open(out_dir / "alignment.json", "w", encoding="utf-8") as fh:
            json.dump(entries, fh, indent=2)
            fh.write("\n")
        print(f"alignment for the first pair: {out_dir / 'alignment.json'}")
    else:
        print("no decoder attention over the sentence matrix; "
              "alignment export skipped")
    return 0


# ---------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, UnsupportedArchitectureError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (DataError, EmptyInputError, ShapeError, DivergenceError,
            DegenerateDistributionError, UndefinedCorrelationError,
            ZeroDivisionError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except CatnmtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
