"""Command-line pipeline: stats, train, generate, evaluate, carbon."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch

from . import __version__
from .checkpoint import CheckpointError, restore_network, save_checkpoint
from .corpus import (CorpusError, InputType, build_vocabulary, corpus_stats,
                     encode_document, kfold_partitions, load_dataset,
                     preprocess, split)
from .decode import decode_beam
from .embedding import (CacheError, CacheProvider, HashProvider,
                        LearnedProvider, read_cache)
from .energy import EnergyParams, carbon_footprint
from .metrics import evaluate_corpus, format_report
from .model import ModelConfig
from .train import train as run_training


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _load_config_file(args: argparse.Namespace) -> None:
    """Apply config-file values for options still at their defaults."""
    if not getattr(args, "config", None):
        return
    with open(args.config, "r", encoding="utf-8") as fh:
        values = json.load(fh)
    defaults = {a.dest: a.default for a in args.parser_ref._actions}
    for key, value in values.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            continue
        if getattr(args, dest) == defaults.get(dest):
            setattr(args, dest, value)


def _run_meta(args: argparse.Namespace) -> dict:
    meta = {k: v for k, v in vars(args).items()
            if k not in ("func", "parser_ref")}
    meta["version"] = __version__
    return meta


def _write_meta(out_dir: Path, args: argparse.Namespace) -> None:
    (out_dir / "run.json").write_text(
        json.dumps(_run_meta(args), indent=2, default=str) + "\n",
        encoding="utf-8")


def _model_config(args: argparse.Namespace, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        hidden_size=args.hidden_size,
        emb_dim=args.emb_dim,
        batch_size=args.batch_size,
        max_grad_norm=args.max_grad_norm,
        lambda_coverage=args.lambda_coverage,
        beam_size=args.beam_size,
        max_decode_len=args.max_decode_len,
        phase1_iters=args.phase1_iters,
        phase2_iters=args.phase2_iters,
    )


def _make_provider(spec: str, vocab, docs, input_type, emb_dim: int):
    if spec == "learned":
        return LearnedProvider(vocab, dim=emb_dim)
    if spec.startswith("cache:"):
        cache = read_cache(spec[len("cache:"):])
        provider = CacheProvider(cache)
        from .corpus import compose_input
        for doc in docs:
            provider.register_tokens((doc.id, input_type),
                                     compose_input(doc, input_type))
        return provider
    raise ValueError(f"unknown provider {spec!r}; expected 'learned' or 'cache:PATH'")


def _parse_mode(mode: str) -> tuple[str, int]:
    if mode.startswith("kfold:"):
        k = int(mode.split(":", 1)[1])
        if k < 2:
            raise ValueError("kfold mode needs K >= 2")
        return "kfold", k
    if mode in ("holdout", "case1", "case2"):
        return mode, 0
    raise ValueError(f"unknown mode {mode!r}")


def _encode_docs(docs, input_type, vocab):
    return [encode_document(d, input_type, vocab) for d in docs]


def _train_one(docs, val_docs, args, out_dir: Path, tag: str = "") -> None:
    input_type = InputType.parse(args.input_type)
    from .corpus import compose_input
    seqs = [compose_input(d, input_type) for d in docs]
    targets = [preprocess(d.highlights) for d in docs]
    vocab = build_vocabulary(seqs + targets, max_size=args.vocab_size)
    provider = _make_provider(args.provider, vocab, docs + list(val_docs or []),
                              input_type, args.emb_dim)
    config = _model_config(args, len(vocab))
    if provider.dim != config.emb_dim:
        config = ModelConfig(**{**config.as_dict(), "emb_dim": provider.dim})
    encodings = _encode_docs(docs, input_type, vocab)
    val_encodings = _encode_docs(val_docs, input_type, vocab) if val_docs else None
    suffix = f"_{tag}" if tag else ""
    ckpt = out_dir / f"checkpoint{suffix}.bin"
    result = run_training(
        encodings, config, provider, vocab, seed=args.seed,
        val_encodings=val_encodings,
        checkpoint_path=ckpt,
        checkpoint_every=args.checkpoint_every or config.phase1_iters + config.phase2_iters,
        log_path=out_dir / f"train_log{suffix}.jsonl")
    if not ckpt.exists():
        save_checkpoint(ckpt, result.net)
    final = result.log[-1]
    print(f"trained{' ' + tag if tag else ''}: iters={final['iter']} "
          f"loss={final['loss']:.4f} -> {ckpt}")


def cmd_stats(args) -> int:
    try:
        docs = load_dataset(args.dataset, strict=args.strict)
    except OSError as exc:
        return _fail(f"cannot read dataset: {exc}")
    if not docs:
        return _fail("dataset contains no usable records")
    input_type = InputType.parse(args.input_type)
    stats = corpus_stats(docs, input_type)
    tr, va, te = split(docs, seed=args.seed)
    table = (
        f"{'docs':>8} {'train':>8} {'val':>8} {'test':>8} "
        f"{'avg src':>9} {'avg hl':>8} {'%comp>=1.5':>11}\n"
        f"{stats.n_docs:>8} {len(tr):>8} {len(va):>8} {len(te):>8} "
        f"{stats.avg_source_words:>9.1f} {stats.avg_highlight_words:>8.1f} "
        f"{stats.frac_compression_ge_1_5 * 100:>10.1f}%"
    )
    print(table)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "stats.txt").write_text(table + "\n", encoding="utf-8")
        payload = stats.as_dict()
        payload.update({"n_train": len(tr), "n_val": len(va), "n_test": len(te),
                        "dropped": docs.dropped})
        (out_dir / "stats.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        _write_meta(out_dir, args)
    return 0


def cmd_train(args) -> int:
    try:
        docs = load_dataset(args.dataset)
    except OSError as exc:
        return _fail(f"cannot read dataset: {exc}")
    if not docs:
        return _fail("dataset contains no usable records")
    mode, k = _parse_mode(args.mode)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_meta(out_dir, args)
    torch.manual_seed(args.seed)
    if mode == "holdout" or mode == "case2":
        tr, va, _ = split(docs, seed=args.seed)
        _train_one(tr, va, args, out_dir)
    elif mode == "kfold":
        for i, (tr, _) in enumerate(kfold_partitions(docs, k, seed=args.seed)):
            _train_one(tr, None, args, out_dir, tag=f"fold{i}")
    elif mode == "case1":
        subjects = sorted({d.subject or "unlabeled" for d in docs})
        for subject in subjects:
            cluster = [d for d in docs if (d.subject or "unlabeled") == subject]
            if len(cluster) < 3:
                print(f"skipping cluster {subject!r}: too small")
                continue
            tr, va, _ = split(cluster, seed=args.seed)
            _train_one(tr, va, args, out_dir, tag=subject)
    return 0


def cmd_generate(args) -> int:
    try:
        docs = load_dataset(args.dataset)
    except OSError as exc:
        return _fail(f"cannot read dataset: {exc}")
    net = None
    input_type = InputType.parse(args.input_type)
    from .checkpoint import load_checkpoint
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.provider_kind == "learned":
        net = restore_network(args.checkpoint)
    else:
        provider = _make_provider(args.provider, ckpt.vocab, docs, input_type,
                                  ckpt.config.emb_dim)
        net = restore_network(args.checkpoint, provider=provider)
    if args.split == "all":
        selected = list(docs)
    else:
        tr, va, te = split(docs, seed=args.seed)
        selected = {"train": tr, "val": va, "test": te}[args.split]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_meta(out_dir, args)
    out_path = out_dir / "generated.jsonl"
    with open(out_path, "w", encoding="utf-8") as fh:
        for doc in selected:
            encoding = encode_document(doc, input_type, net.vocab)
            tokens = decode_beam(net, encoding)
            fh.write(json.dumps({"id": doc.id, "tokens": tokens}) + "\n")
    print(f"wrote {len(selected)} generated highlights -> {out_path}")
    return 0


def cmd_evaluate(args) -> int:
    try:
        docs = load_dataset(args.dataset)
    except OSError as exc:
        return _fail(f"cannot read dataset: {exc}")
    by_id = {d.id: d for d in docs}
    mode, _ = _parse_mode(args.mode)
    eval_provider = HashProvider(dim=args.eval_dim)
    rows: list[tuple[str, object]] = []

    def pairs_from(path):
        pairs, subjects = [], []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                doc = by_id.get(rec["id"])
                if doc is None:
                    raise ValueError(f"generated id {rec['id']!r} not in dataset")
                pairs.append((rec["tokens"], preprocess(doc.highlights)))
                subjects.append(doc.subject or "unlabeled")
        if not pairs:
            raise ValueError(f"{path}: no generated records")
        return pairs, subjects

    if mode == "kfold" or len(args.generated) > 1:
        reports = []
        for i, path in enumerate(args.generated):
            pairs, _ = pairs_from(path)
            rep = evaluate_corpus(pairs, eval_provider)
            reports.append(rep)
            rows.append((f"fold{i}", rep))
        mean_pairs = [p for path in args.generated
                      for p in pairs_from(path)[0]]
        rows.append(("mean", evaluate_corpus(mean_pairs, eval_provider)))
    else:
        pairs, subjects = pairs_from(args.generated[0])
        rows.append(("all", evaluate_corpus(pairs, eval_provider)))
        if mode in ("case1", "case2"):
            for subject in sorted(set(subjects)):
                sub = [p for p, s in zip(pairs, subjects) if s == subject]
                rows.append((subject, evaluate_corpus(sub, eval_provider)))

    lines = []
    for i, (label, rep) in enumerate(rows):
        text = format_report(rep, label)
        lines.append(text if i == 0 else text.splitlines()[1])
    table = "\n".join(lines)
    print(table)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
        (out_dir / "report.json").write_text(json.dumps(
            {label: rep.as_dict() for label, rep in rows}, indent=2) + "\n",
            encoding="utf-8")
        _write_meta(out_dir, args)
    return 0


def cmd_carbon(args) -> int:
    if args.params_file:
        with open(args.params_file, "r", encoding="utf-8") as fh:
            params = EnergyParams(**json.load(fh))
    else:
        params = EnergyParams(
            t_hours=args.hours, n_cores=args.cores, core_watts=args.cpu_watts,
            core_usage=args.cpu_usage, n_gpus=args.gpus,
            gpu_watts=args.gpu_watts, gpu_usage=args.gpu_usage,
            mem_gb=args.mem_gb, pue=args.pue, carbon_intensity=args.ci)
    report = carbon_footprint(params)
    for key, value in report.as_dict().items():
        print(f"{key}: {value:.6g}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "carbon.json").write_text(
            json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
        _write_meta(out_dir, args)
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file whose keys mirror the flags")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vocab-size", type=int, default=50000)
    p.add_argument("--hidden-size", type=int, default=256)
    p.add_argument("--emb-dim", type=int, default=128)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-grad-norm", type=float, default=1.2)
    p.add_argument("--lambda-coverage", type=float, default=1.0)
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--max-decode-len", type=int, default=100)
    p.add_argument("--phase1-iters", type=int, default=20000)
    p.add_argument("--phase2-iters", type=int, default=1000)
    p.add_argument("--checkpoint-every", type=int, default=0)


INPUT_TYPES = [it.value for it in InputType]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="highlights",
        description="Research-highlight generation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("--dataset", required=True)
    p.add_argument("--input-type", choices=INPUT_TYPES, default="abstract")
    p.add_argument("--strict", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_stats, parser_ref=p)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--input-type", choices=INPUT_TYPES, default="abstract")
    p.add_argument("--provider", default="learned",
                   help="'learned' or 'cache:PATH'")
    p.add_argument("--mode", default="holdout",
                   help="holdout | kfold:K | case1 | case2")
    _add_model_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train, parser_ref=p)

    p = sub.add_parser("generate", help="decode highlights with a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-type", choices=INPUT_TYPES, default="abstract")
    p.add_argument("--provider", default="learned")
    p.add_argument("--split", choices=["train", "val", "test", "all"],
                   default="test")
    _add_common(p)
    p.set_defaults(func=cmd_generate, parser_ref=p)

    p = sub.add_parser("evaluate", help="score generated highlights")
    p.add_argument("--dataset", required=True)
    p.add_argument("--generated", action="append", required=True,
                   help="generated.jsonl (repeat for k-fold)")
    p.add_argument("--mode", default="holdout")
    p.add_argument("--eval-dim", type=int, default=32,
                   help="hash-embedding dimension for BERTScore")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate, parser_ref=p)

    p = sub.add_parser("carbon", help="carbon-footprint report")
    p.add_argument("--params-file", help="JSON file of EnergyParams fields")
    p.add_argument("--hours", type=float, default=0.0)
    p.add_argument("--cores", type=int, default=0)
    p.add_argument("--cpu-watts", type=float, default=0.0)
    p.add_argument("--cpu-usage", type=float, default=1.0)
    p.add_argument("--gpus", type=int, default=0)
    p.add_argument("--gpu-watts", type=float, default=0.0)
    p.add_argument("--gpu-usage", type=float, default=1.0)
    p.add_argument("--mem-gb", type=float, default=0.0)
    p.add_argument("--pue", type=float, default=1.10)
    p.add_argument("--ci", type=float, default=475.0)
    _add_common(p)
    p.set_defaults(func=cmd_carbon, parser_ref=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _load_config_file(args)
        return args.func(args)
    except (ValueError, OSError, CorpusError, CheckpointError, CacheError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
