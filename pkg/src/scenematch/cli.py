"""Command-line surface: parse, train, embed, eval, bench.

Config resolution order is defaults -> --config file -> explicit flags, and
the effective values are echoed to stderr so runs are reproducible from
their logs. Results go to stdout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .encoders import Vocab, encode_image, read_region_file
from .graphnet import encode_caption
from .model import init_model
from .numcore import no_grad
from .retrieval import (
    EmbeddingRecord,
    bench_latency,
    build_index,
    evaluate_retrieval,
    read_embedding_cache,
    write_bench_report,
    write_embedding_cache,
)
from .sgparse import ConlluParseError, extract_scene_graph, graphs_from_json, graphs_to_json, parse_conllu
from .training import PairDataset, load_checkpoint, save_checkpoint, train
from .utils import rng_stream

RERANK_BETA_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def _echo(msg: str) -> None:
    print(msg, file=sys.stderr)


def _effective_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        cfg = TrainConfig.load(args.config, base=cfg)
    overrides = {}
    for name in ("seed", "dim", "epochs", "batch_size", "base_lr"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    cfg = cfg.replace(**overrides)
    _echo("effective config:")
    for line in cfg.to_key_values().strip().splitlines():
        _echo("  " + line)
    return cfg


def _load_caption_graphs(graphs_path: str, ids_path: str | None):
    graphs = graphs_from_json(Path(graphs_path).read_text(encoding="utf-8"))
    if ids_path:
        ids = Path(ids_path).read_text(encoding="utf-8").splitlines()
        if len(ids) != len(graphs):
            raise ValueError(f"{ids_path} lists {len(ids)} ids for {len(graphs)} graphs")
    else:
        ids = [str(i) for i in range(len(graphs))]
    return ids, graphs


def _load_pairs(path: str) -> list[tuple[str, str]]:
    pairs = []
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path} line {line_no}: expected image_id<TAB>caption_id")
        pairs.append((parts[0], parts[1]))
    return pairs


def _vocab_from_graphs(graphs) -> Vocab:
    tokens = set()
    for g in graphs:
        for _, phrase in g.objects + g.attributes:
            tokens.update(phrase.split())
        for _, rel, _ in g.oo_edges:
            tokens.update(rel.split())
    return Vocab.build(tokens)


# ------------------------------------------------------------------ commands


def cmd_parse(args) -> int:
    text = Path(args.infile).read_text(encoding="utf-8")
    sentences = parse_conllu(text)
    graphs = [extract_scene_graph(s) for s in sentences]
    Path(args.out).write_text(graphs_to_json(graphs) + "\n", encoding="utf-8")
    _echo(f"parsed {len(graphs)} sentences -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    image_ids, region_sets = read_region_file(args.regions)
    caption_ids, graphs = _load_caption_graphs(args.captions, args.ids)
    pairs = _load_pairs(args.pairs)

    for i, g in enumerate(graphs):
        if not g.objects:
            raise ValueError(f"caption {caption_ids[i]!r} has no objects; cannot train on it")

    if args.vocab:
        vocab = Vocab.load(args.vocab)
    else:
        vocab = _vocab_from_graphs(graphs)
        vocab.save(args.out + ".vocab")
        _echo(f"built vocabulary of {len(vocab)} tokens -> {args.out}.vocab")

    dataset = PairDataset(
        images={i: np.asarray(r, dtype=np.float64) for i, r in zip(image_ids, region_sets)},
        graphs=dict(zip(caption_ids, graphs)),
        pairs=pairs,
    )
    params = init_model(cfg, vocab, rng_stream(cfg.seed, "init"))
    history = train(dataset, params, cfg, log_path=args.out + ".log")
    save_checkpoint(params, cfg, args.out)
    cfg.save(args.out + ".cfg")
    if history:
        _echo(f"trained {len(history)} steps; loss {history[0]['loss']:.4f} -> {history[-1]['loss']:.4f}")
    else:
        _echo("trained 0 steps (epochs=0); checkpoint holds the initial parameters")
    _echo(f"checkpoint -> {args.out}")
    return 0


def _load_model(args):
    ckpt = args.ckpt
    cfg_path = args.config or (ckpt + ".cfg")
    cfg = TrainConfig.load(cfg_path)
    vocab_path = args.vocab or (ckpt + ".vocab")
    vocab = Vocab.load(vocab_path)
    return load_checkpoint(ckpt, cfg, vocab), cfg


def cmd_embed(args) -> int:
    if bool(args.regions) == bool(args.graphs):
        raise ValueError("pass exactly one of --regions or --graphs")
    params, _ = _load_model(args)
    records: list[EmbeddingRecord] = []
    with no_grad():
        if args.regions:
            image_ids, region_sets = read_region_file(args.regions)
            for img_id, regions in zip(image_ids, region_sets):
                vec = encode_image(np.asarray(regions, dtype=np.float64), params.visual)
                records.append(EmbeddingRecord(img_id, vec.data.astype(np.float32), "image"))
            write_embedding_cache(args.out, records)
            _echo(f"embedded {len(records)} images -> {args.out}")
        else:
            caption_ids, graphs = _load_caption_graphs(args.graphs, args.ids)
            entity_records: list[EmbeddingRecord] = []
            for cap_id, g in zip(caption_ids, graphs):
                if not g.objects:
                    raise ValueError(
                        f"caption {cap_id!r} parsed to zero objects; no text is stored "
                        "in graph JSON to fall back to"
                    )
                enc = encode_caption(g, params.concept, params.scene)
                records.append(
                    EmbeddingRecord(cap_id, enc.embedding.data.astype(np.float32), "caption")
                )
                for obj_id, ent in enc.entities:
                    entity_records.append(
                        EmbeddingRecord(f"{cap_id}#e{obj_id}", ent.data.astype(np.float32), "entity")
                    )
            write_embedding_cache(args.out, records)
            ent_path = args.entities_out or (args.out + ".entities")
            write_embedding_cache(ent_path, entity_records)
            _echo(f"embedded {len(records)} captions (+{len(entity_records)} entities) -> {args.out}")
    return 0


def _print_metrics(label: str, metrics: dict) -> None:
    i2t = [100.0 * r for r in metrics["i2t"]]
    t2i = [100.0 * r for r in metrics["t2i"]]
    print(
        f"{label} i2t R@1/5/10 = {i2t[0]:.1f}/{i2t[1]:.1f}/{i2t[2]:.1f}  "
        f"t2i R@1/5/10 = {t2i[0]:.1f}/{t2i[1]:.1f}/{t2i[2]:.1f}  "
        f"RSUM = {metrics['rsum']:.1f}"
    )


def cmd_eval(args) -> int:
    images = build_index(read_embedding_cache(args.image_index))
    captions = build_index(read_embedding_cache(args.caption_index))
    entities = build_index(read_embedding_cache(args.entity_index)) if args.entity_index else None
    pairs = _load_pairs(args.pairs)

    base = evaluate_retrieval(images, captions, pairs)
    _print_metrics("base   ", base)
    if args.beta is not None and args.beta < 1.0:
        reranked = evaluate_retrieval(images, captions, pairs, entity_index=entities, beta=args.beta)
        _print_metrics(f"beta={args.beta:.2f}", reranked)
    if args.beta_grid:
        for beta in RERANK_BETA_GRID:
            metrics = (
                base
                if beta == 1.0
                else evaluate_retrieval(images, captions, pairs, entity_index=entities, beta=beta)
            )
            _print_metrics(f"beta={beta:.2f}", metrics)
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    rows = bench_latency(sizes, trials=args.trials, dim=args.dim or 64, seed=args.seed or 0)
    write_bench_report(rows, args.out)
    for row in rows:
        print(
            f"size={row['size']:>8}  encode_ms={row['encode_ms']:8.3f}  "
            f"matmul_ms={row['matmul_ms']:9.4f}  trials={row['trials']}"
        )
    _echo(f"report -> {args.out} (+ CSV mirror)")
    return 0


# ------------------------------------------------------------------ wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenematch",
        description="Scene-graph dual-encoder image-text matching pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None, help="root RNG seed (default 0)")
        p.add_argument("--dim", type=int, default=None, help="joint embedding dim (default 256)")
        p.add_argument("--config", default=None, help="key=value config file mirroring TrainConfig")

    p = sub.add_parser("parse", help="compile CoNLL-U captions into scene-graph JSON")
    p.add_argument("--in", dest="infile", required=True, help="CoNLL-U input file")
    p.add_argument("--out", required=True, help="output JSON array path")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("train", help="train the dual encoder")
    add_common(p)
    p.add_argument("--regions", required=True, help="binary region-feature file")
    p.add_argument("--captions", required=True, help="scene-graph JSON array")
    p.add_argument("--ids", default=None, help="caption id manifest (default: array index)")
    p.add_argument("--pairs", required=True, help="image_id<TAB>caption_id manifest")
    p.add_argument("--vocab", default=None, help="vocabulary file (default: build and save)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--base-lr", dest="base_lr", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="write an embedding cache from a checkpoint")
    add_common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", default=None, help="vocabulary file (default: <ckpt>.vocab)")
    p.add_argument("--regions", default=None, help="region file for image embeddings")
    p.add_argument("--graphs", default=None, help="scene-graph JSON for caption+entity embeddings")
    p.add_argument("--ids", default=None, help="caption id manifest (default: array index)")
    p.add_argument("--out", required=True, help="embedding cache output path")
    p.add_argument("--entities-out", default=None, help="entity cache path (default: <out>.entities)")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="recall metrics from embedding caches")
    p.add_argument("--image-index", required=True)
    p.add_argument("--caption-index", required=True)
    p.add_argument("--entity-index", default=None)
    p.add_argument("--pairs", required=True)
    p.add_argument("--beta", type=float, default=None, help="rerank blend weight in [0,1]")
    p.add_argument("--beta-grid", action="store_true", help="report the whole rerank grid")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="dual-encoder latency benchmark")
    add_common(p)
    p.add_argument("--sizes", required=True, help="comma-separated index sizes")
    p.add_argument("--trials", type=int, default=9)
    p.add_argument("--out", required=True, help="JSONL report path (CSV mirror alongside)")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConlluParseError as e:
        _echo(f"error: malformed CoNLL-U: {e}")
        return 2
    except (ValueError, OSError, FloatingPointError) as e:
        _echo(f"error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
