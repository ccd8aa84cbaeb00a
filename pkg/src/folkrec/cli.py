"""Command-line surface: ingest, graph, train, recommend, evaluate, study.

Config precedence is flags > config file > defaults; every run writes a
manifest recording the resolved values, input checksums and outputs, so a
run can be reproduced from its manifest alone. Timestamps live only in
the manifest, never in report bodies. Output files are written via a
temp-and-rename step after all computation succeeds, so failures leave no
partial files behind.

The environment variable FOLKREC_DATA_DIR, when set, is the base
directory for relative input paths.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from .config import read_kv
from .corpus import (DatasetFormatConfig, ParseError, ValidationError, build,
                     fixed_split_from_corpus, leave_post_out, load_snapshot,
                     p_core, parse_triples, snapshot_text)
from .evaluation import (EvalConfig, RECOMMENDER_CHOICES, build_recommender,
                         evaluate_with_base, per_post_jsonl, report_csv,
                         report_markdown, run_dimension_study,
                         run_multi_reference_study, run_reference_tag_study,
                         study_csv, study_markdown)
from .foldcons import FoldConsReranker, PcmConfig, debug_rows, prune
from .graph import build_dice_graph, edge_list_text
from .recommenders import FactorModel, PitfRecommender, pitf_train

DATA_DIR_ENV = "FOLKREC_DATA_DIR"


class CliError(Exception):
    """User-facing error; message goes to stderr, exit code 1."""


def _resolve_input(path: str) -> Path:
    p = Path(path)
    if not p.is_absolute():
        base = os.environ.get(DATA_DIR_ENV)
        if base and (Path(base) / p).exists() and not p.exists():
            return Path(base) / p
    return p


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_all(outputs: dict[Path, str | bytes]) -> list[str]:
    """Atomically write every (path -> content) pair; all content is
    already computed, so a failure cannot leave a partial file."""
    written = []
    for path, content in outputs.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        try:
            if isinstance(content, bytes):
                tmp.write_bytes(content)
            else:
                tmp.write_text(content, encoding="utf-8")
            tmp.replace(path)
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise
        written.append(str(path))
    return written


def _write_manifest(path: Path, subcommand: str, argv: list[str], config: dict,
                    inputs: dict[str, str], outputs: list[str], seed: int | None,
                    corpus_checksum: str | None) -> None:
    manifest = {
        "manifest_version": 1,
        "subcommand": subcommand,
        "argv": argv,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "corpus_checksum": corpus_checksum,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write_all({path: json.dumps(manifest, indent=2, sort_keys=True) + "\n"})


def _format_config(args, file_kv: dict[str, str]) -> DatasetFormatConfig:
    def pick(flag, key, default, cast):
        if flag is not None:
            return flag
        if key in file_kv:
            return cast(file_kv[key])
        return default
    return DatasetFormatConfig(
        user_col=pick(args.user_col, "user_col", 0, int),
        item_col=pick(args.item_col, "item_col", 1, int),
        tag_col=pick(args.tag_col, "tag_col", 2, int),
        delimiter=pick(args.delimiter, "delimiter", "\t", str),
        has_header=bool(pick(True if args.header else None, "has_header", False,
                             lambda v: v.lower() in ("1", "true", "yes"))),
        lowercase_tags=not args.no_lowercase,
    )


def _add_format_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--user-col", type=int, default=None, help="0-based user column")
    p.add_argument("--item-col", type=int, default=None, help="0-based item column")
    p.add_argument("--tag-col", type=int, default=None, help="0-based tag column")
    p.add_argument("--delimiter", default=None, help="field delimiter (default tab)")
    p.add_argument("--header", action="store_true", help="skip the first row")
    p.add_argument("--no-lowercase", action="store_true", help="keep tag case")


def _add_config_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key=value config file")


def _add_recommender_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--recommender", choices=RECOMMENDER_CHOICES, default="strec")
    p.add_argument("--alpha", type=float, default=None, help="item-frequency weight of strec")
    p.add_argument("--proximity", choices=("direct", "path"), default=None)
    p.add_argument("--depth", type=int, default=None, help="max path length in path mode")
    p.add_argument("--min-proximity", type=float, default=None)
    p.add_argument("--factors", type=int, default=None, help="latent dimension of pitf")
    p.add_argument("--lr", type=float, default=None, help="pitf learning rate")
    p.add_argument("--reg", type=float, default=None, help="pitf regularization")
    p.add_argument("--iterations", type=int, default=None, help="pitf training iterations")
    p.add_argument("--init-stddev", type=float, default=None)


def _add_rerank_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rerank", choices=("none", "foldcons", "adapted"), default="none")
    p.add_argument("--pcm-dims", choices=("item", "user", "both"), default=None)
    p.add_argument("--pcm-raw", action="store_true", help="skip the /2 normalization")
    p.add_argument("--refs", type=int, default=None, help="number of reference tags")
    p.add_argument("--ref-position", type=int, default=None,
                   help="re-rank against the tag at this 1-based rank")
    p.add_argument("--profile", choices=("user", "item", "both"), default=None,
                   help="profiles gating the adapted variant")
    p.add_argument("--no-prune", action="store_true", help="skip candidate pruning")


def _pick(flag, kv: dict[str, str], key: str, default, cast):
    if flag is not None:
        return flag
    if key in kv:
        value = kv[key]
        if cast is bool:
            return value.strip().lower() in ("1", "true", "yes", "on")
        return cast(value)
    return default


def _recommender_params(args, kv: dict[str, str], seed: int) -> dict:
    if args.recommender == "strec":
        return {
            "alpha": _pick(args.alpha, kv, "alpha", 0.05, float),
            "proximity": _pick(args.proximity, kv, "proximity", "direct", str),
            "path_depth": _pick(args.depth, kv, "path_depth", 2, int),
            "min_proximity": _pick(args.min_proximity, kv, "min_proximity", 0.0, float),
        }
    if args.recommender == "pitf":
        return {
            "k": _pick(args.factors, kv, "k", 64, int),
            "learning_rate": _pick(args.lr, kv, "learning_rate", 0.05, float),
            "regularization": _pick(args.reg, kv, "regularization", 5e-5, float),
            "iterations": _pick(args.iterations, kv, "iterations", 100, int),
            "init_stddev": _pick(args.init_stddev, kv, "init_stddev", 0.01, float),
            "seed": seed,
        }
    return {}


def _pcm_config(args, kv: dict[str, str]) -> PcmConfig:
    if args.pcm_raw:
        normalize = False
    else:
        normalize = _pick(None, kv, "pcm_normalize", True, bool)
    return PcmConfig(
        dimensions=_pick(args.pcm_dims, kv, "pcm_dims", "both", str),
        normalize=normalize,
        refs=_pick(args.refs, kv, "refs", 1, int),
    )


def _eval_config(args, kv: dict[str, str]) -> EvalConfig:
    seed = args.seed
    return EvalConfig(
        k_min=_pick(args.k_min, kv, "k_min", 5, int),
        k_max=_pick(args.k_max, kv, "k_max", 10, int),
        pool=_pick(args.pool, kv, "pool", None, int),
        seed=seed,
        recommender=args.recommender,
        recommender_params=_recommender_params(args, kv, seed),
        rerank=args.rerank,
        pcm=_pcm_config(args, kv),
        ref_position=args.ref_position,
        prune=not args.no_prune,
        profile=args.profile,
        per_post=getattr(args, "per_post", False),
        workers=args.workers if args.workers is not None else (os.cpu_count() or 1),
    )


def _load_corpus(path: str):
    p = _resolve_input(path)
    if not p.exists():
        raise CliError(f"corpus snapshot not found: {p}")
    return load_snapshot(p), p


def _make_split(args, corpus, vocab, kv):
    if args.split == "fixed":
        if not args.test_file:
            raise CliError("--split fixed requires --test-file")
        test_path = _resolve_input(args.test_file)
        if not test_path.exists():
            raise CliError(f"test file not found: {test_path}")
        fmt = _format_config(args, kv)
        return fixed_split_from_corpus(corpus, vocab, test_path, fmt), test_path
    return leave_post_out(corpus, args.seed), None


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args, argv) -> int:
    kv = read_kv(_resolve_input(args.config)) if args.config else {}
    fmt = _format_config(args, kv)
    input_path = _resolve_input(args.input)
    if not input_path.exists():
        raise CliError(f"input file not found: {input_path}")
    parsed = parse_triples(input_path, fmt)
    triples = p_core(parsed.triples, args.p) if args.p > 1 else parsed.triples
    corpus = build(triples)
    out = Path(args.out)
    _write_all({out: snapshot_text(corpus, parsed.vocab)})
    stats = corpus.stats()
    print(f"users={stats['users']} items={stats['items']} tags={stats['tags']} "
          f"posts={stats['posts']} triples={stats['triples']} "
          f"collapsed_duplicates={parsed.collapsed_duplicates}")
    config = {"input": str(input_path), "out": str(out), "p": args.p,
              "user_col": fmt.user_col, "item_col": fmt.item_col, "tag_col": fmt.tag_col,
              "delimiter": fmt.delimiter, "has_header": fmt.has_header,
              "lowercase_tags": fmt.lowercase_tags, "stats": stats,
              "collapsed_duplicates": parsed.collapsed_duplicates}
    _write_manifest(Path(args.manifest or str(out) + ".manifest.json"), "ingest", argv,
                    config, {str(input_path): _sha256(input_path)}, [str(out)],
                    None, _sha256(out))
    return 0


def cmd_graph(args, argv) -> int:
    (corpus, vocab), corpus_path = _load_corpus(args.corpus)
    g = build_dice_graph(corpus, args.min_proximity or 0.0)
    out = Path(args.out)
    names = None if args.ids else vocab.users
    _write_all({out: edge_list_text(g, names)})
    edges = g.edge_count()
    print(f"users={len(g.vertices)} edges={edges}")
    config = {"corpus": str(corpus_path), "out": str(out),
              "min_proximity": args.min_proximity or 0.0, "ids": bool(args.ids),
              "edges": edges}
    _write_manifest(Path(args.manifest or str(out) + ".manifest.json"), "graph", argv,
                    config, {str(corpus_path): _sha256(corpus_path)}, [str(out)],
                    None, _sha256(corpus_path))
    return 0


def cmd_train(args, argv) -> int:
    kv = read_kv(_resolve_input(args.config)) if args.config else {}
    (corpus, _vocab), corpus_path = _load_corpus(args.corpus)
    params = _recommender_params(
        argparse.Namespace(recommender="pitf", factors=args.factors, lr=args.lr,
                           reg=args.reg, iterations=args.iterations,
                           init_stddev=args.init_stddev, alpha=None, proximity=None,
                           depth=None, min_proximity=None),
        kv, args.seed)
    cfg = PitfRecommender(**params).train_config()
    model = pitf_train(corpus, cfg)
    out = Path(args.out)
    _write_all({out: model.to_bytes()})
    print(f"model users={model.n_users} items={model.n_items} tags={model.n_tags} k={model.k}")
    config = {"corpus": str(corpus_path), "out": str(out), **params}
    _write_manifest(Path(args.manifest or str(out) + ".manifest.json"), "train", argv,
                    config, {str(corpus_path): _sha256(corpus_path)}, [str(out)],
                    args.seed, _sha256(corpus_path))
    return 0


def cmd_recommend(args, argv) -> int:
    kv = read_kv(_resolve_input(args.config)) if args.config else {}
    (corpus, vocab), corpus_path = _load_corpus(args.corpus)
    params = _recommender_params(args, kv, args.seed)
    cfg = EvalConfig(k_min=args.k, k_max=args.k, pool=None, seed=args.seed,
                     recommender=args.recommender, recommender_params=params,
                     rerank=args.rerank, pcm=_pcm_config(args, kv),
                     ref_position=args.ref_position, prune=not args.no_prune,
                     profile=args.profile)
    rec = build_recommender(cfg)
    if args.recommender == "pitf" and args.model:
        model_path = _resolve_input(args.model)
        if not model_path.exists():
            raise CliError(f"model file not found: {model_path}")
        rec.with_model(FactorModel.load(model_path))
    else:
        rec.fit(corpus)

    user = vocab.user_id(args.user)
    item = vocab.item_id(args.item)
    outputs: dict[Path, str] = {}
    rows: list[tuple[str, float]] = []
    if user is None or item is None:
        missing = "user" if user is None else "item"
        print(f"warning: unknown {missing}, no recommendations", file=sys.stderr)
    else:
        reranking = args.rerank != "none" or args.ref_position is not None
        pool = args.pool if args.pool else (5 * args.k if reranking else args.k)
        d = rec.top_k(user, item, pool)
        final = d.top(args.k)
        if reranking and d:
            rr = FoldConsReranker(dimensions=cfg.pcm.dimensions, normalize=cfg.pcm.normalize,
                                  refs=cfg.pcm.refs, ref_position=args.ref_position,
                                  adapted=(args.rerank == "adapted"),
                                  profile=cfg.resolved_profile,
                                  prune_candidates=cfg.prune).fit(corpus)
            final = rr.rerank_post(d, args.k, user=user, item=item).final
            if args.debug_rerank:
                work = prune(d, args.k, cfg.pcm.max_multiplier) if cfg.prune else d
                lines = [f"{vocab.tags[t]}\t{raw:.6f}\t{p:.6f}\t{boosted:.6f}"
                         for t, raw, p, boosted in debug_rows(corpus, work, cfg.pcm)]
                outputs[Path(args.debug_rerank)] = "\n".join(lines) + ("\n" if lines else "")
        rows = [(vocab.tags[t], s) for t, s in final]
    for name, score in rows:
        print(f"{name}\t{score:.6f}")
    if outputs:
        _write_all(outputs)
    config = cfg.snapshot()
    config.update({"corpus": str(corpus_path), "user": args.user, "item": args.item,
                   "k": args.k, "model": args.model})
    _write_manifest(Path(args.manifest or "recommend.manifest.json"), "recommend", argv,
                    config, {str(corpus_path): _sha256(corpus_path)},
                    [str(p) for p in outputs], args.seed, _sha256(corpus_path))
    return 0


def cmd_evaluate(args, argv) -> int:
    kv = read_kv(_resolve_input(args.config)) if args.config else {}
    cfg = _eval_config(args, kv)  # validates k range / pool before any work
    (corpus, vocab), corpus_path = _load_corpus(args.corpus)
    split, test_path = _make_split(args, corpus, vocab, kv)
    base, reranked = evaluate_with_base(split, cfg)
    out_dir = Path(args.out_dir)
    label = cfg.recommender + ("++" if reranked is not None else "")
    outputs: dict[Path, str] = {}
    if reranked is not None:
        outputs[out_dir / "report.csv"] = report_csv(reranked, base, label, cfg.recommender)
        outputs[out_dir / "report.md"] = report_markdown(reranked, base, label, cfg.recommender)
        final_report = reranked
    else:
        outputs[out_dir / "report.csv"] = report_csv(base, None, label)
        outputs[out_dir / "report.md"] = report_markdown(base, None, label)
        final_report = base
    if cfg.per_post:
        outputs[out_dir / "per_post.jsonl"] = per_post_jsonl(final_report)
    written = _write_all(outputs)
    for k in cfg.k_values:
        print(f"f1@{k} = {final_report.mean_f1[k]:.6f}")
    inputs = {str(corpus_path): _sha256(corpus_path)}
    if test_path is not None:
        inputs[str(test_path)] = _sha256(test_path)
    config = cfg.snapshot()
    config.update({"corpus": str(corpus_path), "split": args.split,
                   "test_file": str(test_path) if test_path else None,
                   "out_dir": str(out_dir)})
    _write_manifest(out_dir / "manifest.json", "evaluate", argv, config, inputs,
                    written, cfg.seed, _sha256(corpus_path))
    return 0


def cmd_study(args, argv) -> int:
    kv = read_kv(_resolve_input(args.config)) if args.config else {}
    cfg = _eval_config(args, kv)
    (corpus, vocab), corpus_path = _load_corpus(args.corpus)
    split, test_path = _make_split(args, corpus, vocab, kv)
    runner = {"reference": run_reference_tag_study,
              "multiref": run_multi_reference_study,
              "dimension": run_dimension_study}[args.study]
    study = runner(split, cfg)
    out_dir = Path(args.out_dir)
    written = _write_all({out_dir / "study.csv": study_csv(study),
                          out_dir / "study.md": study_markdown(study)})
    for label in study.labels:
        g = study.gains[label]
        print(f"{label}: gain = {'n/a' if g is None else f'{g:.2f}%'}")
    inputs = {str(corpus_path): _sha256(corpus_path)}
    if test_path is not None:
        inputs[str(test_path)] = _sha256(test_path)
    config = cfg.snapshot()
    config.update({"corpus": str(corpus_path), "split": args.split, "study": args.study,
                   "test_file": str(test_path) if test_path else None,
                   "out_dir": str(out_dir)})
    _write_manifest(out_dir / "manifest.json", "study", argv, config, inputs,
                    written, cfg.seed, _sha256(corpus_path))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="folkrec",
        description="Tag recommendation over folksonomies with consistency re-ranking.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a raw tagging dump into a corpus snapshot")
    p.add_argument("input", help="delimiter-separated tagging dump")
    p.add_argument("--out", required=True, help="corpus snapshot to write")
    p.add_argument("--p", type=int, default=1, help="post-core level (1 keeps everything)")
    _add_format_flags(p)
    _add_config_flag(p)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("graph", help="export the Dice proximity edge list")
    p.add_argument("corpus", help="corpus snapshot")
    p.add_argument("--out", required=True, help="edge list file to write")
    p.add_argument("--min-proximity", type=float, default=None)
    p.add_argument("--ids", action="store_true", help="emit integer ids instead of names")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("train", help="train the factorization model")
    p.add_argument("corpus", help="corpus snapshot")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--factors", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--reg", type=float, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--init-stddev", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_config_flag(p)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recommend", help="print the top-k tags for one post")
    p.add_argument("corpus", help="corpus snapshot")
    p.add_argument("--user", required=True)
    p.add_argument("--item", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--pool", type=int, default=None,
                   help="candidates requested before re-ranking")
    p.add_argument("--model", default=None, help="pre-trained factor model (pitf)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--debug-rerank", default=None,
                   help="dump (tag, raw, pcm, boosted) rows to this file")
    _add_recommender_flags(p)
    _add_rerank_flags(p)
    _add_config_flag(p)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("evaluate", help="run the F1@K protocol on a split")
    p.add_argument("corpus", help="corpus snapshot (training side)")
    p.add_argument("--split", choices=("lpo", "fixed"), default="lpo")
    p.add_argument("--test-file", default=None, help="raw test file for --split fixed")
    p.add_argument("--k-min", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--pool", type=int, default=None,
                   help="candidates requested before re-ranking")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--per-post", action="store_true", help="write per-post records")
    p.add_argument("--out-dir", default=".")
    _add_recommender_flags(p)
    _add_rerank_flags(p)
    _add_format_flags(p)
    _add_config_flag(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("study", help="run one ablation study at k=5")
    p.add_argument("corpus", help="corpus snapshot (training side)")
    p.add_argument("--study", choices=("reference", "multiref", "dimension"), required=True)
    p.add_argument("--split", choices=("lpo", "fixed"), default="lpo")
    p.add_argument("--test-file", default=None)
    p.add_argument("--k-min", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--pool", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    _add_recommender_flags(p)
    _add_rerank_flags(p)
    _add_format_flags(p)
    _add_config_flag(p)
    p.set_defaults(func=cmd_study)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except (CliError, ParseError, ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
